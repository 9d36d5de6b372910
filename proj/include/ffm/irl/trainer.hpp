#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ffm/dataset.hpp"
#include "ffm/error.hpp"
#include "ffm/irl/heatmaps.hpp"
#include "ffm/irl/losses.hpp"
#include "ffm/irl/replay_buffer.hpp"
#include "ffm/nn/adam.hpp"
#include "ffm/nn/checkpoint.hpp"
#include "ffm/nn/model.hpp"
#include "ffm/pyramid.hpp"

namespace ffm::irl {

struct TrainConfig {
  double gamma = 0.8;
  double tau = 0.01;  // policy temperature for rollouts; the soft value uses temperature 1
  double omega = 0.1;
  double kappa = 2.0;
  double lambda = 4.0;
  double lr = 1e-4;
  std::size_t buffer_capacity = 8000;
  double target_ema = 0.01;
  int target_period = 4;
  std::size_t batch_size = 16;
  std::size_t iterations = 20000;
  std::size_t max_epochs = 0;  // 0: bounded by `iterations` only
  std::uint64_t seed = 0;
  ValueTerm value_term = ValueTerm::kInitial;
  double termination_weight = 1.0;
  // Keep forward activations between the loss and gradient passes when the batch fits in this
  // many bytes; otherwise each state is evaluated a second time.
  std::size_t graph_memory_budget = std::size_t{1} << 30;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw UsageError("gamma must lie in (0, 1)");
    if (!(tau > 0)) throw UsageError("tau must be positive");
    if (!(omega >= 0)) throw UsageError("omega must be nonnegative");
    if (!(lr > 0)) throw UsageError("lr must be positive");
    if (!(target_ema > 0 && target_ema <= 1)) throw UsageError("target_ema must lie in (0, 1]");
    if (target_period < 1) throw UsageError("target_period must be at least 1");
    if (batch_size == 0 || buffer_capacity == 0) throw UsageError("batch_size and buffer_capacity must be positive");
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"tau", c.tau},
          {"omega", c.omega},
          {"kappa", c.kappa},
          {"lambda", c.lambda},
          {"lr", c.lr},
          {"buffer_capacity", c.buffer_capacity},
          {"target_ema", c.target_ema},
          {"target_period", c.target_period},
          {"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"value_term", to_string(c.value_term)},
          {"termination_weight", c.termination_weight},
          {"graph_memory_budget", c.graph_memory_budget}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) it->get_to(field);
  };
  get("gamma", c.gamma);
  get("tau", c.tau);
  get("omega", c.omega);
  get("kappa", c.kappa);
  get("lambda", c.lambda);
  get("lr", c.lr);
  get("buffer_capacity", c.buffer_capacity);
  get("target_ema", c.target_ema);
  get("target_period", c.target_period);
  get("batch_size", c.batch_size);
  get("iterations", c.iterations);
  get("max_epochs", c.max_epochs);
  get("seed", c.seed);
  if (auto it = j.find("value_term"); it != j.end()) c.value_term = parse_value_term(it->get<std::string>());
  get("termination_weight", c.termination_weight);
  get("graph_memory_budget", c.graph_memory_budget);
}

/// Expert step: from the prefix fixations[0..t] the expert moved to fixations[t+1].
struct Transition {
  std::size_t trial = 0;
  int t = 0;
  int action = 0;
  bool initial = false;
  bool terminal = false;    // last action of the scanpath; no successor value
  bool stop_after = false;  // the expert chose to stop after this action

  friend bool operator==(const Transition&, const Transition&) = default;
};

inline std::vector<Transition> expert_transitions(const std::vector<SearchTrial>& trials, const ActionGrid& grid) {
  std::vector<Transition> out;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& fx = trials[i].scanpath.fixations;
    for (std::size_t t = 0; t + 1 < fx.size(); ++t) {
      Transition tr;
      tr.trial = i;
      tr.t = static_cast<int>(t);
      try {
        tr.action = fixation_to_action(fx[t + 1], grid);
      } catch (const std::out_of_range& e) {
        throw DataError("trial " + std::to_string(i) + " (" + trials[i].image_id + "): " + e.what());
      }
      tr.initial = t == 0;
      tr.terminal = t + 2 == fx.size();
      tr.stop_after = tr.terminal && trials[i].scanpath.terminated;
      out.push_back(tr);
    }
  }
  return out;
}

/// Number of stop / continue examples the termination head sees over a dataset.
inline std::pair<std::size_t, std::size_t> termination_counts(const std::vector<SearchTrial>& trials) {
  std::size_t stop = 0, cont = 0;
  for (const auto& t : trials) {
    const std::size_t n = t.scanpath.size();
    if (n < 2) continue;
    cont += n - 2;
    if (t.scanpath.terminated) ++stop;
  }
  return {stop, cont};
}

/// Stable text key of a state: image, task and the fixation prefix.
inline std::string state_key(const SearchTrial& trial, std::size_t prefix_len) {
  std::string key = trial.image_id;
  key += '\x1f';
  key += trial.task;
  char buf[64];
  for (std::size_t i = 0; i < prefix_len; ++i) {
    const auto& f = trial.scanpath.fixations[i];
    key += '\x1f';
    key.append(buf, std::to_chars(buf, buf + sizeof buf, f.x).ptr);
    key += ',';
    key.append(buf, std::to_chars(buf, buf + sizeof buf, f.y).ptr);
  }
  return key;
}

struct TrainingData {
  std::vector<SearchTrial> trials;
  std::shared_ptr<const PyramidSource> pyramids;
  ObjectTable objects;  // optional detection targets; images without entries skip the detection loss
};

struct LogRow {
  std::uint64_t step = 0;
  double l_irl = 0;
  double l_det = 0;
  double l_term = 0;
  double total = 0;
  double alpha = 0;
  double sigma = 0;
};

inline std::string csv_header() { return "step,L_irl,L_det,L_term,total,alpha,sigma"; }

inline std::string csv_row(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<unsigned long long>(r.step),
                r.l_irl, r.l_det, r.l_term, r.total, r.alpha, r.sigma);
  return buf;
}

/// Expert transitions in reshuffled passes.
class TransitionStream {
 public:
  TransitionStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return order_[pos_++];
  }

  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle() {
    pos_ = 0;
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(nn::uniform01(rng_) * static_cast<double>(i));
      std::swap(order_[i - 1], order_[j]);
    }
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
};

/// Inverse soft-Q training of the fixation policy with auxiliary detection and termination heads.
class Trainer {
 public:
  using Model = nn::Model<float>;
  using Params = nn::ParamStore<float>;

  Trainer(nn::ModelConfig model_cfg, TrainConfig cfg, TrainingData data)
      : cfg_(cfg),
        model_(std::move(model_cfg)),
        data_(std::move(data)),
        grid_(model_.config().grid()),
        params_(model_.init(cfg.seed)),
        target_(params_),
        adam_(params_, {.lr = cfg.lr}),
        buffer_(cfg.buffer_capacity),
        rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
    cfg_.validate();
    if (!data_.pyramids) throw UsageError("no pyramid source");
    pyramids_ = std::make_shared<CachedPyramidSource>(data_.pyramids);
    std::set<std::string> seen;
    for (auto& t : data_.trials) {
      model_.config().task_index(t.task);
      seen.insert(t.task);
    }
    std::string missing;
    for (const auto& t : model_.config().tasks) {
      if (!seen.count(t)) missing += (missing.empty() ? "" : ", ") + t;
    }
    if (!missing.empty()) throw DataError("no training scanpaths for task(s): " + missing);
    transitions_ = expert_transitions(data_.trials, grid_);
    if (transitions_.empty()) throw DataError("training set has no expert transitions");
    stream_.emplace(transitions_.size(), cfg.seed);
    in_buffer_.assign(transitions_.size(), 0);
    const auto [n_stop, n_cont] = termination_counts(data_.trials);
    class_weights_ = termination_class_weights(n_stop, n_cont);
  }

  const TrainConfig& config() const { return cfg_; }
  const Model& model() const { return model_; }
  const Params& params() const { return params_; }
  const Params& target_params() const { return target_; }
  std::uint64_t step() const { return step_; }
  std::size_t epoch() const { return stream_->epoch(); }
  std::size_t buffer_size() const { return buffer_.size(); }
  const std::vector<Transition>& transitions() const { return transitions_; }

  /// Replaces the online (and target) parameters, e.g. to resume from a checkpoint.
  void set_params(const Params& p, std::uint64_t step) {
    params_ = p;
    target_ = p;
    adam_ = nn::Adam<float>(params_, {.lr = cfg_.lr});
    step_ = step;
    target_values_.clear();
  }

  bool done() const {
    if (step_ >= cfg_.iterations) return true;
    return cfg_.max_epochs > 0 && stream_->epoch() >= cfg_.max_epochs;
  }

  /// One optimizer iteration.
  LogRow iterate() {
    refill();
    const auto batch = buffer_.sample(cfg_.batch_size, rng_);
    auto grads = params_.zeros_like();
    LogRow row = compute(batch, grads);
    row.step = ++step_;
    if (!std::isfinite(row.total) || !grads.first_non_finite().empty()) fail_non_finite(row, grads);
    adam_.step(params_, grads);
    if (auto bad = params_.first_non_finite(); !bad.empty()) {
      throw NumericError("non-finite parameter '" + bad + "' after step " + std::to_string(step_));
    }
    if (step_ % static_cast<std::uint64_t>(cfg_.target_period) == 0) {
      nn::ema_update(target_, params_, cfg_.target_ema);
      target_values_.clear();
    }
    const auto r = model_.retina(params_);
    row.alpha = r.alpha;
    row.sigma = r.sigma;
    return row;
  }

  /// Runs until done(); every row is passed to `on_row` when given.
  std::vector<LogRow> run(const std::function<void(const LogRow&)>& on_row = {}) {
    std::vector<LogRow> rows;
    while (!done()) {
      rows.push_back(iterate());
      if (on_row) on_row(rows.back());
    }
    return rows;
  }

 private:
  struct StateEval {
    std::string key;
    const SearchTrial* trial = nullptr;
    std::size_t prefix = 0;
    bool need_grad = false;
    bool need_detection = false;
    nn::ModelOutput<float> out;
    std::optional<nn::Graph<float>> graph;
    nn::OutputGrad<float> grad;
  };

  std::span<const Fixation> prefix(const SearchTrial& t, std::size_t n) const {
    return std::span(t.scanpath.fixations.data(), n);
  }

  void refill() {
    for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
      const std::size_t id = stream_->next();
      if (in_buffer_[id]) continue;
      if (buffer_.size() == buffer_.capacity()) in_buffer_[buffer_[0]] = 0;
      buffer_.push(id);
      in_buffer_[id] = 1;
    }
  }

  const Heatmaps* heatmaps(const std::string& image_id) {
    auto it = data_.objects.find(image_id);
    if (it == data_.objects.end()) return nullptr;
    auto hit = gt_cache_.find(image_id);
    if (hit == gt_cache_.end()) {
      hit = gt_cache_.emplace(image_id, render_gt_heatmaps(it->second, grid_, model_.config().num_classes)).first;
    }
    return &hit->second;
  }

  float target_value(const SearchTrial& trial, std::size_t prefix_len) {
    const auto key = state_key(trial, prefix_len);
    if (auto it = target_values_.find(key); it != target_values_.end()) return it->second;
    const auto pyr = pyramids_->get(trial.image_id);
    const auto out = model_.forward(target_, *pyr, prefix(trial, prefix_len), model_.config().task_index(trial.task),
                                    nullptr, {.record = false, .detection = false, .termination = false});
    const float v = soft_value<float>(out.q_values);
    target_values_.emplace(key, v);
    return v;
  }

  std::size_t graph_bytes() const {
    const auto& c = model_.config();
    const std::size_t plane = static_cast<std::size_t>(c.base_h) * c.base_w;
    return (fov::kLevels + 8) * c.ffm_channels * plane * sizeof(float) + 6 * fov::kLevels * plane * sizeof(double);
  }

  LogRow compute(const std::vector<std::size_t>& batch, Params& grads) {
    const std::size_t n = batch.size();
    std::vector<StateEval> states;
    std::unordered_map<std::string, std::size_t> index;
    auto state = [&](const SearchTrial& tr, std::size_t len, bool grad) -> std::size_t {
      auto key = state_key(tr, len);
      auto [it, fresh] = index.emplace(key, states.size());
      if (fresh) {
        StateEval s;
        s.key = std::move(key);
        s.trial = &tr;
        s.prefix = len;
        states.push_back(std::move(s));
      }
      states[it->second].need_grad |= grad;
      return it->second;
    };

    std::vector<std::size_t> s_idx(n), s0_idx(n);
    std::vector<std::optional<std::size_t>> stop_idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& tr = transitions_[batch[i]];
      const auto& trial = data_.trials[tr.trial];
      s_idx[i] = state(trial, tr.t + 1, true);
      if (heatmaps(trial.image_id)) states[s_idx[i]].need_detection = true;
      if (cfg_.value_term == ValueTerm::kInitial) s0_idx[i] = state(trial, 1, true);
      if (tr.stop_after) stop_idx[i] = state(trial, tr.t + 2, false);
    }

    const bool keep_graphs = graph_bytes() * states.size() <= cfg_.graph_memory_budget;
    for (auto& s : states) {
      const auto pyr = pyramids_->get(s.trial->image_id);
      nn::Graph<float> g;
      const bool record = keep_graphs && s.need_grad;
      s.out = model_.forward(params_, *pyr, prefix(*s.trial, s.prefix), model_.config().task_index(s.trial->task),
                             record ? &g : nullptr,
                             {.record = record, .detection = s.need_detection, .termination = false});
      if (record) s.graph = std::move(g);
    }

    // Inverse soft-Q objective.
    IqBatch<float> iq;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& tr = transitions_[batch[i]];
      const auto& trial = data_.trials[tr.trial];
      iq.q.push_back(states[s_idx[i]].out.q_values);
      iq.actions.push_back(tr.action);
      iq.terminal.push_back(tr.terminal);
      iq.next_value.push_back(tr.terminal ? 0.0f : target_value(trial, tr.t + 2));
      if (cfg_.value_term == ValueTerm::kInitial) iq.initial_q.push_back(states[s0_idx[i]].out.q_values);
    }
    const auto iq_res = iq_loss(iq, cfg_.gamma, cfg_.value_term);
    auto add_q_grad = [&](StateEval& s, const std::vector<float>& g) {
      if (s.grad.q.empty()) s.grad.q.assign(g.size(), 0.0f);
      for (std::size_t k = 0; k < g.size(); ++k) s.grad.q[k] += g[k];
    };
    for (std::size_t i = 0; i < n; ++i) {
      add_q_grad(states[s_idx[i]], iq_res.grad_q[i]);
      if (cfg_.value_term == ValueTerm::kInitial) add_q_grad(states[s0_idx[i]], iq_res.grad_initial_q[i]);
    }

    // Object-center detection, averaged over batch items whose image has annotations.
    double l_det = 0;
    std::size_t det_items = 0;
    for (std::size_t i = 0; i < n; ++i) det_items += heatmaps(states[s_idx[i]].trial->image_id) != nullptr;
    for (std::size_t i = 0; i < n && det_items > 0; ++i) {
      auto& s = states[s_idx[i]];
      const auto* gt = heatmaps(s.trial->image_id);
      if (!gt) continue;
      const auto fl = focal_loss(s.out.center, gt->maps, gt->centers, {cfg_.kappa, cfg_.lambda});
      l_det += fl.loss / static_cast<double>(det_items);
      if (s.grad.center.empty()) s.grad.center = Tensor<float>(fl.grad.shape());
      const float scale = static_cast<float>(cfg_.omega / static_cast<double>(det_items));
      for (std::size_t k = 0; k < fl.grad.size(); ++k) s.grad.center[k] += scale * fl.grad[k];
    }

    // Termination: continue examples at states with at least one new fixation, stop examples
    // after the expert's final fixation. Q-values enter as constants.
    std::vector<nn::TerminationCache<float>> caches;
    std::vector<double> probs;
    std::vector<int> labels;
    auto add_example = [&](const StateEval& s, int label) {
      nn::TerminationCache<float> c;
      probs.push_back(model_.termination_forward(params_, s.out.q_values, static_cast<int>(s.prefix), &c));
      caches.push_back(std::move(c));
      labels.push_back(label);
    };
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = states[s_idx[i]];
      if (s.prefix >= 2) add_example(s, 0);
      if (stop_idx[i]) add_example(states[*stop_idx[i]], 1);
    }
    const auto term = termination_loss(probs, labels, class_weights_);
    for (std::size_t k = 0; k < caches.size(); ++k) {
      model_.termination_backward(params_, caches[k], static_cast<float>(cfg_.termination_weight * term.grad_logit[k]),
                                  grads);
    }

    for (auto& s : states) {
      if (!s.need_grad || (s.grad.q.empty() && s.grad.center.empty())) continue;
      if (!s.graph) {
        const auto pyr = pyramids_->get(s.trial->image_id);
        nn::Graph<float> g;
        model_.forward(params_, *pyr, prefix(*s.trial, s.prefix), model_.config().task_index(s.trial->task), &g,
                       {.record = true, .detection = !s.grad.center.empty(), .termination = false});
        s.graph = std::move(g);
      }
      model_.backward(params_, *s.graph, s.grad, grads);
      s.graph.reset();
    }

    LogRow row;
    row.l_irl = iq_res.loss;
    row.l_det = l_det;
    row.l_term = term.loss;
    row.total = combined_loss(row.l_irl, row.l_det, cfg_.omega, row.l_term, cfg_.termination_weight);
    return row;
  }

  [[noreturn]] void fail_non_finite(const LogRow& row, const Params& grads) const {
    std::string where = params_.first_non_finite();
    if (where.empty()) {
      where = grads.first_non_finite();
      if (!where.empty()) where = "gradient of " + where;
    }
    if (where.empty()) {
      where = !std::isfinite(row.l_irl) ? "L_irl" : !std::isfinite(row.l_det) ? "L_det" : "L_term";
    }
    throw NumericError("non-finite loss at step " + std::to_string(row.step) + "; first non-finite tensor: " + where);
  }

  TrainConfig cfg_;
  Model model_;
  TrainingData data_;
  ActionGrid grid_;
  Params params_;
  Params target_;
  nn::Adam<float> adam_;
  ReplayBuffer<std::size_t> buffer_;
  std::mt19937_64 rng_;
  std::shared_ptr<CachedPyramidSource> pyramids_;
  std::vector<Transition> transitions_;
  std::optional<TransitionStream> stream_;
  std::vector<char> in_buffer_;
  ClassWeights class_weights_;
  std::map<std::string, Heatmaps> gt_cache_;
  std::unordered_map<std::string, float> target_values_;
  std::uint64_t step_ = 0;
};

/// Writes the CSV training log.
inline void write_log(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
}

}  // namespace ffm::irl

#pragma once

// Foveated-feature-map network.
//
//   C_i --1x1 conv--> 128 ch --bilinear--> 160x256 --(W_i from fixations)--> M = sum W_i P_i
//   M --3 x [conv3x3 s1, LN, ReLU, conv3x3 s2, LN, ReLU]--> 20x32 trunk features
//   trunk --conv3x3, ReLU, conv3x3--> 18 attention maps (Q-values of the active task)
//   trunk --conv3x3, ReLU, conv3x3, sigmoid--> 80 object-center maps
//   concat(Q, n/10) --641->128 ReLU->1 sigmoid--> termination probability

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ffm/error.hpp"
#include "ffm/foveation.hpp"
#include "ffm/nn/ops.hpp"
#include "ffm/nn/params.hpp"
#include "ffm/pyramid.hpp"
#include "ffm/resample.hpp"
#include "ffm/types.hpp"

namespace ffm::nn {

struct ModelConfig {
  std::array<std::size_t, fov::kLevels> pyramid_channels{3, 3, 3, 3, 3};
  std::size_t ffm_channels = 128;
  std::size_t head_channels = 64;
  std::size_t num_classes = 80;
  std::size_t termination_hidden = 128;
  int trunk_blocks = 3;
  std::vector<std::string> tasks = default_tasks();
  int base_h = 160;  // FFM grid = pyramid level 1
  int base_w = 256;
  double ppd = 4.57;  // pixels per degree on the FFM grid
  double init_alpha = 2.5;
  double init_sigma = 0.3;
  double time_scale = 10.0;

  int image_h() const { return base_h * 2; }
  int image_w() const { return base_w * 2; }
  int grid_h() const {
    std::size_t h = static_cast<std::size_t>(base_h);
    for (int b = 0; b < trunk_blocks; ++b) h = conv_out(h, 3, 2, 1);
    return static_cast<int>(h);
  }
  int grid_w() const {
    std::size_t w = static_cast<std::size_t>(base_w);
    for (int b = 0; b < trunk_blocks; ++b) w = conv_out(w, 3, 2, 1);
    return static_cast<int>(w);
  }
  ActionGrid grid() const { return ActionGrid(grid_h(), grid_w(), image_h(), image_w()); }
  int num_actions() const { return grid_h() * grid_w(); }
  fov::MapGeometry geometry() const { return {base_h, base_w, image_h(), image_w()}; }

  void validate() const {
    if (ffm_channels == 0 || head_channels == 0 || num_classes == 0 || termination_hidden == 0 || tasks.empty()) {
      throw UsageError("model config: channel counts and task list must be nonzero");
    }
    for (auto c : pyramid_channels) {
      if (c == 0) throw UsageError("model config: pyramid channel counts must be nonzero");
    }
    if (trunk_blocks < 1 || base_h <= 0 || base_w <= 0) throw UsageError("model config: bad trunk geometry");
    if (!(ppd > 0) || !(init_alpha > 0) || !(init_sigma > 0) || !(time_scale > 0)) {
      throw UsageError("model config: retina constants must be positive");
    }
    (void)grid();  // throws when the grid does not tile the image
  }

  int task_index(const std::string& name) const {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i] == name) return static_cast<int>(i);
    }
    std::string valid;
    for (const auto& t : tasks) valid += (valid.empty() ? "" : ", ") + t;
    throw DataError("unknown task '" + name + "'; valid tasks: " + valid);
  }
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["pyramid_channels"] = c.pyramid_channels;
  j["ffm_channels"] = c.ffm_channels;
  j["head_channels"] = c.head_channels;
  j["num_classes"] = c.num_classes;
  j["termination_hidden"] = c.termination_hidden;
  j["trunk_blocks"] = c.trunk_blocks;
  j["tasks"] = c.tasks;
  j["base_h"] = c.base_h;
  j["base_w"] = c.base_w;
  j["ppd"] = c.ppd;
  j["init_alpha"] = c.init_alpha;
  j["init_sigma"] = c.init_sigma;
  j["time_scale"] = c.time_scale;
  return j;
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) it->get_to(field);
  };
  get("pyramid_channels", c.pyramid_channels);
  get("ffm_channels", c.ffm_channels);
  get("head_channels", c.head_channels);
  get("num_classes", c.num_classes);
  get("termination_hidden", c.termination_hidden);
  get("trunk_blocks", c.trunk_blocks);
  get("tasks", c.tasks);
  get("base_h", c.base_h);
  get("base_w", c.base_w);
  get("ppd", c.ppd);
  get("init_alpha", c.init_alpha);
  get("init_sigma", c.init_sigma);
  get("time_scale", c.time_scale);
}

template <typename T>
struct ModelOutput {
  Tensor<T> attention;       // (tasks, grid_h, grid_w)
  Tensor<T> center;          // (classes, grid_h, grid_w), sigmoid outputs; empty when not requested
  std::vector<T> q_values;   // attention map of the active task, flattened
  T termination_prob = T{0.5};
};

template <typename T>
struct TerminationCache {
  std::vector<T> input;
  std::vector<T> hidden;  // post-ReLU
  T prob = T{0.5};
};

/// Activations recorded by forward() for a single reverse pass.
template <typename T>
struct Graph {
  struct Stage {
    Tensor<T> input;
    NormCache<T> norm;
    Tensor<T> act;  // post-ReLU
  };

  bool recorded = false;
  bool consumed = false;
  bool has_detection = false;
  int task = 0;
  const FeaturePyramid* pyramid = nullptr;
  fov::RetinaParams retina;
  fov::ResolutionMap rmap;
  fov::WeightMaps wmaps;
  std::vector<Tensor<T>> upsampled;
  std::array<Shape, fov::kLevels> projected_shape;
  std::vector<Stage> trunk;
  Tensor<T> fix_hidden;
  Tensor<T> det_hidden;
  Tensor<T> center;
};

template <typename T>
struct OutputGrad {
  std::vector<T> q;  // dL/dq_values; empty means zero
  Tensor<T> center;  // dL/dcenter_maps (post-sigmoid); empty means zero
};

template <typename T>
struct ForwardOptions {
  bool record = true;      // keep activations for backward()
  bool detection = true;   // evaluate the object-center head
  bool termination = true;
  // When set, ReLU on/off patterns and blend bins are copied from this earlier pass, so the
  // output is the smooth piece the reverse pass differentiates (used by derivative checks).
  const Graph<T>* pattern = nullptr;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }

  static std::string conv_name(const std::string& prefix) { return prefix; }

  /// Deterministic fan-in-scaled uniform initialization; biases zero, LayerNorm identity.
  ParamStore<T> init(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParamStore<T> p;
    const std::size_t c = cfg_.ffm_channels, hc = cfg_.head_channels;
    auto uniform = [&](Shape shape, std::size_t fan_in) {
      Tensor<T> t(std::move(shape));
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : t.vec()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
      return t;
    };
    for (int l = 0; l < fov::kLevels; ++l) {
      const auto cin = cfg_.pyramid_channels[l];
      const std::string n = "proj" + std::to_string(l + 1);
      p.add(n + ".weight", uniform({c, cin, 1, 1}, cin));
      p.add(n + ".bias", Tensor<T>({c}));
    }
    for (int b = 0; b < cfg_.trunk_blocks; ++b) {
      for (int k = 1; k <= 2; ++k) {
        const std::string n = "trunk" + std::to_string(b + 1) + ".conv" + std::to_string(k);
        p.add(n + ".weight", uniform({c, c, 3, 3}, c * 9));
        p.add(n + ".bias", Tensor<T>({c}));
        const std::string ln = "trunk" + std::to_string(b + 1) + ".norm" + std::to_string(k);
        p.add(ln + ".gamma", Tensor<T>({c}, T{1}));
        p.add(ln + ".beta", Tensor<T>({c}));
      }
    }
    p.add("fix.conv1.weight", uniform({hc, c, 3, 3}, c * 9));
    p.add("fix.conv1.bias", Tensor<T>({hc}));
    p.add("fix.conv2.weight", uniform({cfg_.tasks.size(), hc, 3, 3}, hc * 9));
    p.add("fix.conv2.bias", Tensor<T>({cfg_.tasks.size()}));
    p.add("det.conv1.weight", uniform({hc, c, 3, 3}, c * 9));
    p.add("det.conv1.bias", Tensor<T>({hc}));
    p.add("det.conv2.weight", uniform({cfg_.num_classes, hc, 3, 3}, hc * 9));
    p.add("det.conv2.bias", Tensor<T>({cfg_.num_classes}));
    const std::size_t in = static_cast<std::size_t>(cfg_.num_actions()) + 1;
    p.add("term.fc1.weight", uniform({cfg_.termination_hidden, in}, in));
    p.add("term.fc1.bias", Tensor<T>({cfg_.termination_hidden}));
    p.add("term.fc2.weight", uniform({1, cfg_.termination_hidden}, cfg_.termination_hidden));
    p.add("term.fc2.bias", Tensor<T>({1}));
    p.add("retina.alpha", Tensor<T>({1}, static_cast<T>(softplus_inverse(cfg_.init_alpha))));
    p.add("retina.sigma", Tensor<T>({1}, static_cast<T>(softplus_inverse(cfg_.init_sigma))));
    return p;
  }

  fov::RetinaParams retina(const ParamStore<T>& p) const {
    fov::RetinaParams r;
    r.alpha = softplus(static_cast<double>(p["retina.alpha"][0]));
    r.sigma = softplus(static_cast<double>(p["retina.sigma"][0]));
    r.ppd = cfg_.ppd;
    return r;
  }

  void check_pyramid(const FeaturePyramid& pyr) const {
    if (pyr.levels.size() != fov::kLevels) throw DataError("pyramid must have 5 levels");
    for (int l = 0; l < fov::kLevels; ++l) {
      const auto& t = pyr.levels[l];
      if (t.rank() != 3 || t.dim(0) != cfg_.pyramid_channels[l]) {
        throw DataError("pyramid level C" + std::to_string(l + 1) + " has shape " + shape_string(t.shape()) +
                        ", expected " + std::to_string(cfg_.pyramid_channels[l]) + " channels");
      }
    }
    if (pyr.levels[0].dim(1) != static_cast<std::size_t>(cfg_.base_h) ||
        pyr.levels[0].dim(2) != static_cast<std::size_t>(cfg_.base_w)) {
      throw DataError("pyramid level C1 is " + shape_string(pyr.levels[0].shape()) + ", expected spatial " +
                      std::to_string(cfg_.base_h) + "x" + std::to_string(cfg_.base_w));
    }
  }

  /// Runs the network for one state (image pyramid + fixation history + task).
  ModelOutput<T> forward(const ParamStore<T>& p, const FeaturePyramid& pyr, std::span<const Fixation> fixations,
                         int task, Graph<T>* graph = nullptr, ForwardOptions<T> opt = {}) const {
    if (task < 0 || task >= static_cast<int>(cfg_.tasks.size())) {
      throw DataError("task index " + std::to_string(task) + " out of range");
    }
    check_pyramid(pyr);
    const bool record = graph != nullptr && opt.record;
    const std::size_t bh = cfg_.base_h, bw = cfg_.base_w;

    std::vector<Tensor<T>> up;
    up.reserve(fov::kLevels);
    for (int l = 0; l < fov::kLevels; ++l) {
      const std::string n = "proj" + std::to_string(l + 1);
      const Tensor<T> lvl = pyr.levels[l].template cast<T>();
      Tensor<T> proj = conv2d(lvl, p[n + ".weight"], p[n + ".bias"], 1, 0);
      if (record) graph->projected_shape[l] = proj.shape();
      up.push_back(bilinear_resize(proj, bh, bw));
    }

    const auto ret = retina(p);
    auto rmap = fov::resolution_map(fixations, ret, cfg_.geometry());
    const Graph<T>* pat = opt.pattern;
    auto wmaps = pat ? fov::weight_maps_in_bins(rmap, ret.sigma, pat->wmaps) : fov::weight_maps(rmap, ret.sigma);
    Tensor<T> x = fov::blend<T>(up, wmaps.weights);

    if (record) {
      graph->trunk.clear();
      graph->trunk.reserve(static_cast<std::size_t>(cfg_.trunk_blocks) * 2);
    }
    for (int b = 0; b < cfg_.trunk_blocks; ++b) {
      for (int k = 1; k <= 2; ++k) {
        const std::string cn = "trunk" + std::to_string(b + 1) + ".conv" + std::to_string(k);
        const std::string ln = "trunk" + std::to_string(b + 1) + ".norm" + std::to_string(k);
        const int stride = k == 1 ? 1 : 2;
        Tensor<T> y = conv2d(x, p[cn + ".weight"], p[cn + ".bias"], stride, 1);
        typename Graph<T>::Stage st;
        Tensor<T> z = layer_norm(y, p[ln + ".gamma"], p[ln + ".beta"], record ? &st.norm : nullptr);
        if (pat) {
          relu_pattern_inplace(z, pat->trunk[graph_stage(b, k)].act);
        } else {
          relu_inplace(z);
        }
        if (record) {
          st.input = std::move(x);
          st.act = z;
          graph->trunk.push_back(std::move(st));
        }
        x = std::move(z);
      }
    }

    ModelOutput<T> out;
    Tensor<T> fh = conv2d(x, p["fix.conv1.weight"], p["fix.conv1.bias"], 1, 1);
    pat ? relu_pattern_inplace(fh, pat->fix_hidden) : relu_inplace(fh);
    out.attention = conv2d(fh, p["fix.conv2.weight"], p["fix.conv2.bias"], 1, 1);
    const std::size_t plane = out.attention.dim(1) * out.attention.dim(2);
    out.q_values.assign(out.attention.channel(task), out.attention.channel(task) + plane);

    Tensor<T> dh;
    if (opt.detection) {
      dh = conv2d(x, p["det.conv1.weight"], p["det.conv1.bias"], 1, 1);
      pat ? relu_pattern_inplace(dh, pat->det_hidden) : relu_inplace(dh);
      out.center = conv2d(dh, p["det.conv2.weight"], p["det.conv2.bias"], 1, 1);
      for (auto& v : out.center.vec()) v = sigmoid(v);
    }
    if (opt.termination) {
      out.termination_prob = termination_forward(p, out.q_values, static_cast<int>(fixations.size()));
    }

    if (record) {
      graph->recorded = true;
      graph->consumed = false;
      graph->has_detection = opt.detection;
      graph->task = task;
      graph->pyramid = &pyr;
      graph->retina = ret;
      graph->rmap = std::move(rmap);
      graph->wmaps = std::move(wmaps);
      graph->upsampled = std::move(up);
      graph->fix_hidden = std::move(fh);
      if (opt.detection) {
        graph->det_hidden = std::move(dh);
        graph->center = out.center;
      }
    }
    return out;
  }

  /// Reverse pass; accumulates parameter gradients into `grads` (same layout as the params).
  void backward(const ParamStore<T>& p, Graph<T>& g, const OutputGrad<T>& og, ParamStore<T>& grads) const {
    if (!g.recorded) throw ContractError("backward on a graph that was not recorded");
    if (g.consumed) throw ContractError("computation graph already consumed by backward");
    g.consumed = true;

    const auto& last = g.trunk.back().act;
    Tensor<T> g_trunk(last.shape());

    if (!og.q.empty()) {
      Tensor<T> g_att({cfg_.tasks.size(), last.dim(1), last.dim(2)});
      std::copy(og.q.begin(), og.q.end(), g_att.channel(g.task));
      Tensor<T> g_fh = conv2d_backward(g.fix_hidden, p["fix.conv2.weight"], 1, 1, g_att, grads["fix.conv2.weight"],
                                       grads["fix.conv2.bias"], true);
      relu_backward_inplace(g.fix_hidden, g_fh);
      Tensor<T> gx = conv2d_backward(last, p["fix.conv1.weight"], 1, 1, g_fh, grads["fix.conv1.weight"],
                                     grads["fix.conv1.bias"], true);
      add_into(g_trunk, gx);
    }
    if (!og.center.empty()) {
      if (!g.has_detection) throw ContractError("detection gradient given but the head was not evaluated");
      Tensor<T> g_logit(og.center.shape());
      for (std::size_t i = 0; i < g_logit.size(); ++i) {
        const T s = g.center[i];
        g_logit[i] = og.center[i] * s * (T{1} - s);
      }
      Tensor<T> g_dh = conv2d_backward(g.det_hidden, p["det.conv2.weight"], 1, 1, g_logit, grads["det.conv2.weight"],
                                       grads["det.conv2.bias"], true);
      relu_backward_inplace(g.det_hidden, g_dh);
      Tensor<T> gx = conv2d_backward(last, p["det.conv1.weight"], 1, 1, g_dh, grads["det.conv1.weight"],
                                     grads["det.conv1.bias"], true);
      add_into(g_trunk, gx);
    }

    Tensor<T> gx = std::move(g_trunk);
    for (int s = static_cast<int>(g.trunk.size()) - 1; s >= 0; --s) {
      const auto& st = g.trunk[s];
      const int b = s / 2 + 1, k = s % 2 + 1;
      const std::string cn = "trunk" + std::to_string(b) + ".conv" + std::to_string(k);
      const std::string ln = "trunk" + std::to_string(b) + ".norm" + std::to_string(k);
      relu_backward_inplace(st.act, gx);
      Tensor<T> gy = layer_norm_backward(st.norm, p[ln + ".gamma"], gx, grads[ln + ".gamma"], grads[ln + ".beta"]);
      gx = conv2d_backward(st.input, p[cn + ".weight"], k == 1 ? 1 : 2, 1, gy, grads[cn + ".weight"],
                           grads[cn + ".bias"], true);
    }

    std::vector<Tensor<T>> g_up;
    const Tensor<double> g_w = fov::blend_backward<T>(g.upsampled, g.wmaps.weights, gx, g_up);
    for (int l = 0; l < fov::kLevels; ++l) {
      const std::string n = "proj" + std::to_string(l + 1);
      const auto& ps = g.projected_shape[l];
      Tensor<T> g_proj = bilinear_resize_backward(g_up[l], ps[1], ps[2]);
      const Tensor<T> lvl = g.pyramid->levels[l].template cast<T>();
      conv2d_backward(lvl, p[n + ".weight"], 1, 0, g_proj, grads[n + ".weight"], grads[n + ".bias"], false);
    }

    const auto rg = fov::weight_maps_backward(g.rmap, g.wmaps, g_w, g.retina);
    grads["retina.alpha"][0] += static_cast<T>(rg.alpha * sigmoid(static_cast<double>(p["retina.alpha"][0])));
    grads["retina.sigma"][0] += static_cast<T>(rg.sigma * sigmoid(static_cast<double>(p["retina.sigma"][0])));
  }

  /// P(stop | Q-values, number of fixations so far).
  T termination_forward(const ParamStore<T>& p, std::span<const T> q, int n_prev,
                        TerminationCache<T>* cache = nullptr, const TerminationCache<T>* pattern = nullptr) const {
    const auto& w1 = p["term.fc1.weight"];
    const auto& b1 = p["term.fc1.bias"];
    const auto& w2 = p["term.fc2.weight"];
    const std::size_t in = w1.dim(1), hidden = w1.dim(0);
    if (q.size() + 1 != in) throw ContractError("termination input has the wrong length");
    std::vector<T> x(q.begin(), q.end());
    x.push_back(static_cast<T>(n_prev / cfg_.time_scale));
    std::vector<T> h(hidden);
    CMapR<T> wm(w1.data(), static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(in));
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data(), static_cast<Eigen::Index>(in));
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> hv(h.data(), static_cast<Eigen::Index>(hidden));
    hv.noalias() = wm * xv;
    T logit = p["term.fc2.bias"][0];
    for (std::size_t j = 0; j < hidden; ++j) {
      h[j] += b1[j];
      if (pattern ? !(pattern->hidden[j] > T{0}) : !(h[j] > T{0})) h[j] = T{0};
      logit += w2[j] * h[j];
    }
    const T prob = sigmoid(logit);
    if (cache) {
      cache->input = std::move(x);
      cache->hidden = std::move(h);
      cache->prob = prob;
    }
    return prob;
  }

  /// Reverse pass of the termination classifier given dL/dlogit. Q-values are treated as inputs.
  void termination_backward(const ParamStore<T>& p, const TerminationCache<T>& c, T grad_logit,
                            ParamStore<T>& grads) const {
    const auto& w2 = p["term.fc2.weight"];
    auto& gw1 = grads["term.fc1.weight"];
    auto& gb1 = grads["term.fc1.bias"];
    auto& gw2 = grads["term.fc2.weight"];
    const std::size_t in = c.input.size(), hidden = c.hidden.size();
    grads["term.fc2.bias"][0] += grad_logit;
    for (std::size_t j = 0; j < hidden; ++j) {
      gw2[j] += grad_logit * c.hidden[j];
      if (!(c.hidden[j] > T{0})) continue;
      const T gh = grad_logit * w2[j];
      gb1[j] += gh;
      T* row = gw1.data() + j * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += gh * c.input[i];
    }
  }

 private:
  static std::size_t graph_stage(int block, int conv) { return static_cast<std::size_t>(block * 2 + conv - 1); }

  static void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  ModelConfig cfg_;
};

/// JSON summary of the architecture: parameter names, shapes and counts.
template <typename T>
nlohmann::ordered_json describe(const Model<T>& model, const ParamStore<T>& params) {
  nlohmann::ordered_json j;
  j["config"] = to_json(model.config());
  j["ffm_grid"] = {model.config().base_h, model.config().base_w};
  j["action_grid"] = {model.config().grid_h(), model.config().grid_w()};
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : params) {
    arr.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"count", e.value.size()}});
  }
  j["parameters"] = std::move(arr);
  j["parameter_count"] = params.parameter_count();
  return j;
}

}  // namespace ffm::nn

#pragma once

// The `ffm` command-line tool: foveate, make-toy, train, rollout, evaluate, make-density.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ffm/container.hpp"
#include "ffm/dataset.hpp"
#include "ffm/env.hpp"
#include "ffm/error.hpp"
#include "ffm/irl/trainer.hpp"
#include "ffm/metrics/density.hpp"
#include "ffm/metrics/plots.hpp"
#include "ffm/metrics/report.hpp"
#include "ffm/nn/checkpoint.hpp"
#include "ffm/nn/model.hpp"
#include "ffm/parallel.hpp"
#include "ffm/png_io.hpp"
#include "ffm/pyramid.hpp"
#include "ffm/synthetic.hpp"

namespace ffm::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4 };

/// "x,y;x,y" (semicolons or whitespace between pairs).
inline std::vector<Fixation> parse_fixations(const std::string& text) {
  std::vector<Fixation> out;
  std::string norm = text;
  for (char& c : norm) {
    if (c == ';') c = ' ';
  }
  std::istringstream is(norm);
  std::string pair;
  while (is >> pair) {
    const auto comma = pair.find(',');
    if (comma == std::string::npos || pair.find(',', comma + 1) != std::string::npos) {
      throw UsageError("bad fixation '" + pair + "': expected x,y");
    }
    try {
      std::size_t nx = 0, ny = 0;
      const std::string xs = pair.substr(0, comma), ys = pair.substr(comma + 1);
      const double x = std::stod(xs, &nx), y = std::stod(ys, &ny);
      if (nx != xs.size() || ny != ys.size()) throw std::invalid_argument(pair);
      out.push_back({x, y});
    } catch (const std::logic_error&) {
      throw UsageError("bad fixation '" + pair + "': expected x,y");
    }
  }
  if (out.empty()) throw UsageError("no fixations given");
  return out;
}

inline json read_config(const std::optional<fs::path>& path) {
  if (!path) return json::object();
  std::ifstream in(*path);
  if (!in) throw UsageError("cannot read config " + path->string());
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw UsageError("config " + path->string() + " must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw UsageError("config " + path->string() + ": " + e.what());
  }
}

template <typename T>
T config_section(const json& cfg, const char* key, T value) {
  if (auto it = cfg.find(key); it != cfg.end()) {
    try {
      from_json(*it, value);
    } catch (const json::exception& e) {
      throw UsageError(std::string("config section '") + key + "': " + e.what());
    }
  }
  return value;
}

template <typename T>
void override_with(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}

inline void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace ffm::cli

namespace ffm::env {

inline void to_json(nlohmann::json& j, const RolloutConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"max_new_fixations", c.max_new_fixations},
       {"tau", c.tau},
       {"seed", c.seed},
       {"termination_threshold", c.termination_threshold},
       {"target_present", c.target_present}};
}

inline void from_json(const nlohmann::json& j, RolloutConfig& c) {
  if (auto it = j.find("mode"); it != j.end()) c.mode = parse_mode(it->get<std::string>());
  c.max_new_fixations = j.value("max_new_fixations", c.max_new_fixations);
  c.tau = j.value("tau", c.tau);
  c.seed = j.value("seed", c.seed);
  c.termination_threshold = j.value("termination_threshold", c.termination_threshold);
  c.target_present = j.value("target_present", c.target_present);
}

}  // namespace ffm::env

namespace ffm::metrics {

inline void to_json(nlohmann::json& j, const DensityOptions& o) {
  j = {{"epsilon", o.epsilon}, {"blur_sigma", o.blur_sigma}};
}

inline void from_json(const nlohmann::json& j, DensityOptions& o) {
  o.epsilon = j.value("epsilon", o.epsilon);
  o.blur_sigma = j.value("blur_sigma", o.blur_sigma);
}

}  // namespace ffm::metrics

namespace ffm::cli {

/// Where image features come from: PNGs through a Gaussian pyramid, or exported FFMP files.
struct SourceFlags {
  std::optional<fs::path> images;
  std::optional<fs::path> pyramids;

  void add(CLI::App* app) {
    auto* a = app->add_option("--images", images, "Directory of <stem>.png images (Gaussian pyramid features)")
                  ->check(CLI::ExistingDirectory);
    auto* b = app->add_option("--pyramids", pyramids, "Directory of <stem>.ffmp exported pyramids")
                  ->check(CLI::ExistingDirectory);
    a->excludes(b);
  }

  bool given() const { return images || pyramids; }

  /// Uncached source; the trainer keeps its own cache.
  std::shared_ptr<const PyramidSource> make_raw() const {
    std::shared_ptr<const PyramidSource> inner;
    if (images) {
      inner = std::make_shared<GaussianPyramidSource>(*images);
    } else if (pyramids) {
      inner = std::make_shared<FfmpPyramidSource>(*pyramids);
    } else {
      throw UsageError("one of --images or --pyramids is required");
    }
    return inner;
  }

  std::shared_ptr<const PyramidSource> make(std::size_t capacity) const {
    return std::make_shared<CachedPyramidSource>(make_raw(), capacity);
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------------------------
// foveate

struct FoveateArgs {
  fs::path image, out;
  std::optional<fs::path> weights;
  std::string fixations;
  double alpha = 2.5, sigma = 0.3, ppd = 4.57;
  std::uint64_t seed = 0;
};

inline void cmd_foveate(const FoveateArgs& a, Context& ctx) {
  const auto fixations = parse_fixations(a.fixations);
  fov::RetinaParams params{a.alpha, a.sigma, a.ppd};
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Tensor<float> img = read_image(a.image);
  for (const auto& f : fixations) {
    if (!(f.x >= 0 && f.x < img.dim(2) && f.y >= 0 && f.y < img.dim(1))) {
      throw UsageError("fixation (" + std::to_string(f.x) + "," + std::to_string(f.y) + ") lies outside the " +
                       std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) + " image");
    }
  }
  fov::WeightMaps wm;
  const Tensor<float> fov_img = foveate_image(img, fixations, params, &wm);
  write_png(a.out, tensor_to_raster(fov_img));
  ctx.out << "wrote " << a.out.string() << '\n';
  if (a.weights) {
    const std::vector<NamedTensor> t{{"weights", wm.weights.cast<float>()}};
    write_tensor_container(*a.weights, t);
    ctx.out << "wrote " << a.weights->string() << '\n';
  }
}

// ---------------------------------------------------------------------------------------------
// make-toy

struct ToyArgs {
  fs::path out;
  int images = 3;
  std::uint64_t seed = 1;
};

/// Model and training settings that fit the toy dataset in a few minutes on one core.
inline ordered_json toy_config(const synthetic::ToyDataset& ds) {
  nn::ModelConfig mc;
  mc.ffm_channels = 8;
  mc.head_channels = 8;
  mc.num_classes = 3;
  mc.termination_hidden = 32;
  mc.tasks = ds.tasks;
  irl::TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 4;
  tc.iterations = 1000;
  tc.value_term = irl::ValueTerm::kExpert;
  return {{"model", nn::to_json(mc)}, {"train", irl::to_json(tc)}};
}

inline void cmd_make_toy(const ToyArgs& a, Context& ctx) {
  if (a.images < 1) throw UsageError("--images must be at least 1");
  synthetic::ToyOptions opt;
  opt.images = a.images;
  opt.seed = a.seed;
  const auto ds = synthetic::make_toy_dataset(opt);
  ensure_dir(a.out / "images");
  for (const auto& img : ds.images) write_png(a.out / "images" / img.image_id, tensor_to_raster(img.pixels));
  write_text(a.out / "trials.json", dump_trials(ds.trials));
  ordered_json objects = ordered_json::array();
  for (const auto& [image, boxes] : ds.objects) {
    for (const auto& b : boxes) {
      objects.push_back({{"image", image}, {"category", b.category + 1}, {"bbox", {b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h}}});
    }
  }
  write_json(a.out / "objects.json", objects);
  write_json(a.out / "config.json", toy_config(ds));
  ctx.out << "wrote " << ds.images.size() << " images and " << ds.trials.size() << " trials to " << a.out.string()
          << '\n';
}

// ---------------------------------------------------------------------------------------------
// train

struct TrainArgs {
  fs::path trials, out;
  std::optional<fs::path> objects, config, resume;
  SourceFlags source;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations, batch_size, channels, max_epochs;
  std::optional<double> lr;
  std::optional<std::string> value_term;
  std::string split = "train";
  std::size_t log_every = 100;
  bool describe = false;
};

inline std::vector<SearchTrial> select_split(std::vector<SearchTrial> trials, const std::string& split) {
  if (split == "all") return trials;
  const auto s = parse_split(split);
  if (!s) throw UsageError("--split must be train, valid, test or all (got '" + split + "')");
  std::erase_if(trials, [&](const SearchTrial& t) { return t.split != *s; });
  return trials;
}

/// Channel counts of the first image's pyramid, so exported backbones need no manual config.
inline void infer_pyramid_channels(nn::ModelConfig& mc, const PyramidSource& src, const std::string& image_id) {
  const auto pyr = src.load(image_id);
  if (pyr.levels.size() != fov::kLevels) throw DataError("pyramid of " + image_id + " must have 5 levels");
  for (int l = 0; l < fov::kLevels; ++l) mc.pyramid_channels[l] = pyr.levels[l].dim(0);
  mc.base_h = static_cast<int>(pyr.levels[0].dim(1));
  mc.base_w = static_cast<int>(pyr.levels[0].dim(2));
}

inline void cmd_train(const TrainArgs& a, Context& ctx) {
  const json cfg = read_config(a.config);
  auto mc = config_section(cfg, "model", nn::ModelConfig{});
  auto tc = config_section(cfg, "train", irl::TrainConfig{});
  override_with(tc.seed, a.seed);
  override_with(tc.iterations, a.iterations);
  override_with(tc.batch_size, a.batch_size);
  override_with(tc.max_epochs, a.max_epochs);
  override_with(tc.lr, a.lr);
  if (a.value_term) tc.value_term = irl::parse_value_term(*a.value_term);
  if (a.channels) mc.ffm_channels = *a.channels;
  tc.validate();

  if (a.describe) {
    mc.validate();
    nn::Model<float> model(mc);
    ctx.out << nn::describe(model, model.init(tc.seed)).dump(2) << '\n';
    return;
  }
  if (!a.source.given()) throw UsageError("one of --images or --pyramids is required");

  LoadOptions lo;
  lo.tasks = mc.tasks;
  auto trials = select_split(load_trials(a.trials, lo), a.split);
  if (trials.empty()) throw DataError(a.trials.string() + ": no trials in split '" + a.split + "'");
  const auto source = a.source.make_raw();
  if (a.source.pyramids) infer_pyramid_channels(mc, *source, trials.front().image_id);
  mc.validate();
  ObjectTable objects;
  if (a.objects) objects = load_objects(*a.objects, static_cast<int>(mc.num_classes));

  ensure_dir(a.out);
  ordered_json effective{{"model", nn::to_json(mc)},
                         {"train", irl::to_json(tc)},
                         {"data",
                          {{"trials", a.trials.string()},
                           {"objects", a.objects ? a.objects->string() : ""},
                           {"images", a.source.images ? a.source.images->string() : ""},
                           {"pyramids", a.source.pyramids ? a.source.pyramids->string() : ""},
                           {"split", a.split}}}};
  write_json(a.out / "effective_config.json", effective);

  irl::Trainer trainer(mc, tc, {std::move(trials), source, std::move(objects)});
  if (a.resume) {
    auto loaded = nn::load_checkpoint<float>(*a.resume, mc);
    trainer.set_params(loaded.params, loaded.step);
  }
  std::vector<irl::LogRow> rows;
  ctx.out << irl::csv_header() << '\n';
  while (!trainer.done()) {
    rows.push_back(trainer.iterate());
    if (a.log_every > 0 && (rows.back().step % a.log_every == 0 || trainer.done())) {
      ctx.out << irl::csv_row(rows.back()) << '\n' << std::flush;
    }
  }
  irl::write_log(a.out / "train_log.csv", rows);
  nn::save_checkpoint(a.out / "model.ffmw", mc, trainer.params(), trainer.step());
  ctx.out << "wrote " << (a.out / "model.ffmw").string() << " after " << trainer.step() << " iterations\n";
}

// ---------------------------------------------------------------------------------------------
// rollout

struct RolloutArgs {
  fs::path checkpoint, trials, out;
  std::optional<fs::path> config;
  SourceFlags source;
  std::optional<std::string> mode;
  std::optional<int> max_fixations;
  std::optional<double> tau, threshold;
  std::optional<std::uint64_t> seed;
  bool target_present = false;
  unsigned jobs = 1;
};

/// One trial per (image, task), in order of first appearance.
inline std::vector<SearchTrial> unique_image_tasks(const std::vector<SearchTrial>& trials) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<SearchTrial> out;
  for (const auto& t : trials) {
    if (seen.insert({t.image_id, t.task}).second) out.push_back(t);
  }
  return out;
}

inline std::vector<SearchTrial> rollout_all(const nn::Model<float>& model, const nn::ParamStore<float>& params,
                                            const PyramidSource& source, const std::vector<SearchTrial>& items,
                                            const env::RolloutConfig& rc, unsigned jobs) {
  std::vector<SearchTrial> preds(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    env::RolloutConfig c = rc;
    c.seed = rc.seed + i;
    const auto pyr = source.load(items[i].image_id);
    SearchTrial p = items[i];
    p.subject = 0;
    p.predicted = true;
    p.scanpath = env::rollout(model, params, pyr, items[i], c);
    preds[i] = std::move(p);
  });
  return preds;
}

inline void cmd_rollout(const RolloutArgs& a, Context& ctx) {
  const json cfg = read_config(a.config);
  auto rc = config_section(cfg, "rollout", env::RolloutConfig{});
  if (a.mode) rc.mode = env::parse_mode(*a.mode);
  override_with(rc.tau, a.tau);
  override_with(rc.termination_threshold, a.threshold);
  override_with(rc.seed, a.seed);
  if (a.target_present) rc = env::RolloutConfig::present(rc);
  override_with(rc.max_new_fixations, a.max_fixations);
  const int cap = rc.target_present ? env::kPresentCap : env::kAbsentCap;
  if (rc.max_new_fixations > cap) {
    throw UsageError("max_new_fixations " + std::to_string(rc.max_new_fixations) + " exceeds the protocol cap " +
                     std::to_string(cap));
  }
  rc.validate();

  const auto loaded = nn::load_checkpoint<float>(a.checkpoint);
  const nn::Model<float> model(loaded.config);
  LoadOptions lo;
  lo.tasks = loaded.config.tasks;
  const auto items = unique_image_tasks(load_trials(a.trials, lo));
  const auto preds = rollout_all(model, loaded.params, *a.source.make(2 * std::max(1u, a.jobs)), items, rc, a.jobs);
  write_text(a.out, dump_trials(preds));
  ordered_json effective{{"rollout", json(rc)}, {"checkpoint", a.checkpoint.string()}, {"trials", a.trials.string()}};
  auto echo = a.out;
  echo += ".config.json";
  write_json(echo, effective);
  ctx.out << "wrote " << preds.size() << " predicted scanpaths to " << a.out.string() << '\n';
}

// ---------------------------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  fs::path predictions, gt, out;
  std::optional<fs::path> label_maps, baseline, checkpoint, config;
  SourceFlags source;
  std::optional<double> tau, bandwidth;
  std::size_t plots = 4;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

inline void cmd_evaluate(const EvaluateArgs& a, Context& ctx) {
  const json cfg = read_config(a.config);
  auto rc = config_section(cfg, "rollout", env::RolloutConfig{});
  override_with(rc.tau, a.tau);
  metrics::EvalOptions eo;
  if (auto it = cfg.find("metrics"); it != cfg.end()) {
    eo.bandwidth = it->value("bandwidth", eo.bandwidth);
    if (auto s = it->find("scoring"); s != it->end()) eo.scoring = s->get<metrics::AlignmentScoring>();
  }
  override_with(eo.bandwidth, a.bandwidth);
  eo.jobs = a.jobs;
  if (!(eo.bandwidth > 0)) throw UsageError("bandwidth must be positive");

  LoadOptions any;
  any.tasks.clear();
  const auto preds = load_trials(a.predictions, any);
  const auto gts = load_trials(a.gt, any);

  std::map<std::string, std::shared_ptr<const Raster>> label_cache;
  metrics::LabelMapFn labels;
  if (a.label_maps) {
    if (!fs::is_directory(*a.label_maps)) {
      ctx.err << "warning: label map directory " << a.label_maps->string() << " not found; SemSS skipped\n";
    } else {
      for (const auto& t : gts) {
        if (label_cache.count(t.image_id)) continue;
        const auto path = *a.label_maps / (image_stem(t.image_id) + ".png");
        label_cache[t.image_id] = fs::exists(path) ? std::make_shared<const Raster>(read_label_map(path)) : nullptr;
      }
      labels = [&label_cache](const std::string& id) { return label_cache.at(id); };
    }
  }

  std::optional<metrics::DensityBaseline> baseline;
  if (a.baseline) baseline = metrics::density_from_tensors(read_tensor_container(*a.baseline));

  std::optional<nn::LoadedModel<float>> loaded;
  std::optional<nn::Model<float>> model;
  std::shared_ptr<const PyramidSource> source;
  metrics::PolicyFn policy;
  if (a.checkpoint) {
    if (!a.source.given()) throw UsageError("--checkpoint needs --images or --pyramids");
    loaded = nn::load_checkpoint<float>(*a.checkpoint);
    model.emplace(loaded->config);
    source = a.source.make(2 * std::max(1u, a.jobs));
    policy = [&](const SearchTrial& t, std::span<const Fixation> prefix) {
      const auto pyr = source->load(t.image_id);
      const auto out = model->forward(loaded->params, pyr, prefix, loaded->config.task_index(t.task), nullptr,
                                      {.record = false, .detection = false, .termination = false});
      const auto pi = irl::policy_dist<float>(out.q_values, rc.tau);
      return std::vector<double>(pi.begin(), pi.end());
    };
  }

  const auto rep = metrics::evaluate(preds, gts, labels, policy, baseline ? &*baseline : nullptr, eo);
  for (const auto& w : rep.warnings) ctx.err << "warning: " << w << '\n';
  ensure_dir(a.out);
  write_json(a.out / "report.json", metrics::report_to_json(rep));
  write_text(a.out / "report.csv", metrics::report_to_csv(rep));

  if (a.plots > 0) {
    ensure_dir(a.out / "plots");
    std::multimap<metrics::TrialKey, const SearchTrial*> index;
    for (const auto& p : preds) index.emplace(metrics::TrialKey{p.image_id, p.task}, &p);
    const std::size_t n = std::min(a.plots, gts.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& gt = gts[i];
      const auto& pred = metrics::match_prediction(index, gt);
      const std::string stem = image_stem(gt.image_id) + "_" + gt.task + "_s" + std::to_string(gt.subject);
      std::string href;
      if (a.source.images) href = fs::absolute(*a.source.images / (image_stem(gt.image_id) + ".png")).string();
      write_text(a.out / "plots" / (stem + ".svg"),
                 metrics::scanpath_svg(pred.scanpath, &gt.scanpath, {}, href, gt.image_id + " / " + gt.task));
      std::vector<double> prio;
      if (policy) {
        prio = policy(gt, std::span<const Fixation>(gt.scanpath.fixations.data(), 1));
      } else if (baseline) {
        prio.assign(baseline->at(gt.task).vec().begin(), baseline->at(gt.task).vec().end());
      }
      if (!prio.empty()) write_png(a.out / "plots" / (stem + "_priority.png"), metrics::priority_raster(prio));
    }
    if (!policy && !baseline) ctx.err << "warning: no model or baseline given; priority maps skipped\n";
  }

  ordered_json effective{{"metrics", {{"bandwidth", eo.bandwidth}, {"scoring", json(eo.scoring)}}},
                         {"rollout", json(rc)},
                         {"predictions", a.predictions.string()},
                         {"gt", a.gt.string()}};
  write_json(a.out / "effective_config.json", effective);
  const auto j = metrics::report_to_json(rep);
  ctx.out << j["aggregate"].dump(2) << '\n';
}

// ---------------------------------------------------------------------------------------------
// make-density

struct DensityArgs {
  fs::path trials, out;
  std::optional<fs::path> config;
  std::optional<double> epsilon, blur_sigma;
  std::vector<std::string> tasks;
  std::string split = "train";
  std::optional<std::uint64_t> seed;
};

inline void cmd_make_density(const DensityArgs& a, Context& ctx) {
  const json cfg = read_config(a.config);
  auto opt = config_section(cfg, "density", metrics::DensityOptions{});
  override_with(opt.epsilon, a.epsilon);
  override_with(opt.blur_sigma, a.blur_sigma);
  LoadOptions any;
  any.tasks.clear();
  const auto trials = select_split(load_trials(a.trials, any), a.split);
  std::vector<std::string> tasks = a.tasks;
  if (tasks.empty()) {
    std::set<std::string> seen;
    for (const auto& t : trials) seen.insert(t.task);
    tasks.assign(seen.begin(), seen.end());
  }
  if (tasks.empty()) throw DataError(a.trials.string() + ": no trials in split '" + a.split + "'");
  const auto d = metrics::density_baseline(trials, tasks, {}, opt);
  write_tensor_container(a.out, metrics::density_to_tensors(d));
  ctx.out << "wrote " << d.maps.size() << " density maps to " << a.out.string() << '\n';
}

// ---------------------------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Context ctx{out, err};
  CLI::App app{"Scanpath prediction with foveated feature maps and inverse reinforcement learning", "ffm"};
  app.require_subcommand(1);

  FoveateArgs fa;
  auto* fov_cmd = app.add_subcommand("foveate", "Render an image as seen from a fixation sequence");
  fov_cmd->add_option("--image", fa.image, "Input PNG")->required()->check(CLI::ExistingFile);
  fov_cmd->add_option("--fixations", fa.fixations, "Fixations as x,y;x,y in image pixels")->required();
  fov_cmd->add_option("--out", fa.out, "Output PNG")->required();
  fov_cmd->add_option("--weights", fa.weights, "Also write the weight maps as FFMP");
  fov_cmd->add_option("--alpha", fa.alpha, "Retina half-resolution eccentricity (degrees)");
  fov_cmd->add_option("--sigma", fa.sigma, "Pyramid-level bandwidth");
  fov_cmd->add_option("--ppd", fa.ppd, "Pixels per degree at half the image resolution");
  fov_cmd->add_option("--seed", fa.seed, "Accepted for uniformity; foveation is deterministic");

  ToyArgs ya;
  auto* toy_cmd = app.add_subcommand("make-toy", "Write the synthetic colored-disc search dataset");
  toy_cmd->add_option("--out", ya.out, "Output directory")->required();
  toy_cmd->add_option("--images", ya.images, "Number of images");
  toy_cmd->add_option("--seed", ya.seed, "Layout seed");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the policy by inverse reinforcement learning");
  train_cmd->add_option("--trials", ta.trials, "Scanpath JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--objects", ta.objects, "Object boxes JSON for the detection head")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "Output directory");
  train_cmd->add_option("--config", ta.config, "JSON config with model/train sections")->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", ta.resume, "Start from this checkpoint")->check(CLI::ExistingFile);
  ta.source.add(train_cmd);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--iterations", ta.iterations);
  train_cmd->add_option("--max-epochs", ta.max_epochs);
  train_cmd->add_option("--batch-size", ta.batch_size);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--channels", ta.channels, "Foveated feature map channels");
  train_cmd->add_option("--value-term", ta.value_term, "initial | expert | none");
  train_cmd->add_option("--split", ta.split, "train | valid | test | all");
  train_cmd->add_option("--log-every", ta.log_every, "Print every n-th log row (0 = silent)");
  train_cmd->add_flag("--describe", ta.describe, "Print the architecture summary and exit");

  RolloutArgs ra;
  auto* roll_cmd = app.add_subcommand("rollout", "Predict one scanpath per image and task");
  roll_cmd->add_option("--checkpoint", ra.checkpoint, "FFMW checkpoint")->required()->check(CLI::ExistingFile);
  roll_cmd->add_option("--trials", ra.trials, "Scanpath JSON naming the images and tasks")->required()->check(
      CLI::ExistingFile);
  roll_cmd->add_option("--out", ra.out, "Predictions JSON")->required();
  roll_cmd->add_option("--config", ra.config, "JSON config with a rollout section")->check(CLI::ExistingFile);
  ra.source.add(roll_cmd);
  roll_cmd->add_option("--mode", ra.mode, "greedy | sample");
  roll_cmd->add_option("--max-fixations", ra.max_fixations, "Cap on new fixations (at most the protocol cap)");
  roll_cmd->add_option("--tau", ra.tau, "Policy temperature for sampling");
  roll_cmd->add_option("--threshold", ra.threshold, "Termination probability threshold");
  roll_cmd->add_option("--seed", ra.seed);
  roll_cmd->add_flag("--target-present", ra.target_present, "Stop on the target box; cap 6");
  roll_cmd->add_option("--jobs", ra.jobs, "Worker threads");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predicted scanpaths against ground truth");
  eval_cmd->add_option("--predictions", ea.predictions, "Predictions JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gt", ea.gt, "Ground-truth scanpath JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ea.out, "Report directory")->required();
  eval_cmd->add_option("--label-maps", ea.label_maps, "Directory of <stem>.png label maps");
  eval_cmd->add_option("--baseline", ea.baseline, "Density baseline FFMP")->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Model for cIG/cNSS")->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", ea.config, "JSON config with metrics/rollout sections")->check(CLI::ExistingFile);
  ea.source.add(eval_cmd);
  eval_cmd->add_option("--tau", ea.tau, "Policy temperature for cIG/cNSS");
  eval_cmd->add_option("--bandwidth", ea.bandwidth, "Mean-shift bandwidth in pixels");
  eval_cmd->add_option("--plots", ea.plots, "Write overlays for the first n trials");
  eval_cmd->add_option("--seed", ea.seed, "Accepted for uniformity; evaluation is deterministic");
  eval_cmd->add_option("--jobs", ea.jobs, "Worker threads");

  DensityArgs da;
  auto* dens_cmd = app.add_subcommand("make-density", "Per-task fixation density baselines");
  dens_cmd->add_option("--trials", da.trials, "Training scanpath JSON")->required()->check(CLI::ExistingFile);
  dens_cmd->add_option("--out", da.out, "Output FFMP")->required();
  dens_cmd->add_option("--config", da.config, "JSON config with a density section")->check(CLI::ExistingFile);
  dens_cmd->add_option("--epsilon", da.epsilon);
  dens_cmd->add_option("--blur-sigma", da.blur_sigma, "Blur in cells");
  dens_cmd->add_option("--tasks", da.tasks, "Tasks to emit (default: those in the data)")->delimiter(',');
  dens_cmd->add_option("--split", da.split, "train | valid | test | all");
  dens_cmd->add_option("--seed", da.seed, "Accepted for uniformity; density maps are deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*fov_cmd) {
      cmd_foveate(fa, ctx);
    } else if (*toy_cmd) {
      cmd_make_toy(ya, ctx);
    } else if (*train_cmd) {
      if (!ta.describe && (ta.trials.empty() || ta.out.empty())) throw UsageError("train needs --trials and --out");
      cmd_train(ta, ctx);
    } else if (*roll_cmd) {
      cmd_rollout(ra, ctx);
    } else if (*eval_cmd) {
      cmd_evaluate(ea, ctx);
    } else if (*dens_cmd) {
      cmd_make_density(da, ctx);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::out_of_range& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}

}  // namespace ffm::cli

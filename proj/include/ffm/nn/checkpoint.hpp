#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ffm/container.hpp"
#include "ffm/error.hpp"
#include "ffm/nn/model.hpp"
#include "ffm/nn/params.hpp"

namespace ffm::nn {

/// Model configuration is kept next to the weights in `<checkpoint>.json`.
inline std::filesystem::path config_sidecar(const std::filesystem::path& ckpt) {
  auto p = ckpt;
  p += ".json";
  return p;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ParamStore<T>& params,
                     std::uint64_t step) {
  Checkpoint ckpt;
  ckpt.tensors = params.to_named_tensors();
  ckpt.step = step;
  write_checkpoint_file(path, ckpt);
  std::ofstream out(config_sidecar(path));
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot write " + config_sidecar(path).string());
  out << to_json(cfg).dump(2) << '\n';
}

inline ModelConfig load_model_config(const std::filesystem::path& ckpt) {
  const auto side = config_sidecar(ckpt);
  std::ifstream in(side);
  if (!in) throw DataError("missing model config " + side.string());
  ModelConfig cfg;
  try {
    from_json(nlohmann::json::parse(in), cfg);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(side.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

template <typename T>
struct LoadedModel {
  ModelConfig config;
  ParamStore<T> params;
  std::uint64_t step = 0;
};

/// Loads weights into a freshly shaped store; names and shapes must match the config exactly.
template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  if (!std::filesystem::exists(path)) throw DataError("missing checkpoint " + path.string());
  const auto ckpt = read_checkpoint_file(path);
  Model<T> model(cfg);
  LoadedModel<T> out{cfg, model.init(0), ckpt.step};
  out.params.assign_from(ckpt.tensors);
  if (auto bad = out.params.first_non_finite(); !bad.empty()) {
    throw DataError("checkpoint tensor '" + bad + "' has non-finite values");
  }
  return out;
}

template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path) {
  return load_checkpoint<T>(path, load_model_config(path));
}

}  // namespace ffm::nn

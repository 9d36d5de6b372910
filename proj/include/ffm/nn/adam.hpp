#pragma once

#include <cmath>
#include <cstdint>

#include "ffm/error.hpp"
#include "ffm/nn/params.hpp"

namespace ffm::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments live alongside the parameters they track.
template <typename T>
class Adam {
 public:
  Adam(const ParamStore<T>& params, AdamConfig cfg = {})
      : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::uint64_t steps() const { return t_; }

  void step(ParamStore<T>& params, const ParamStore<T>& grads) {
    if (params.size() != grads.size() || params.size() != m_.size()) {
      throw ContractError("adam: parameter and gradient stores are not aligned");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params.entry(k).value;
      const auto& g = grads.entry(k).value;
      auto& m = m_.entry(k).value;
      auto& v = v_.entry(k).value;
      if (g.size() != p.size()) throw ContractError("adam: shape mismatch for " + params.entry(k).name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p[i] -= static_cast<T>(cfg_.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  ParamStore<T> m_, v_;
  std::uint64_t t_ = 0;
};

/// target <- rate * online + (1 - rate) * target
template <typename T>
void ema_update(ParamStore<T>& target, const ParamStore<T>& online, double rate) {
  for (std::size_t k = 0; k < target.size(); ++k) {
    auto& t = target.entry(k).value;
    const auto& o = online.entry(k).value;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rate * o[i] + (1.0 - rate) * t[i]);
  }
}

}  // namespace ffm::nn

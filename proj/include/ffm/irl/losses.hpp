#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ffm/error.hpp"
#include "ffm/tensor.hpp"

namespace ffm::irl {

/// log sum_a exp(q_a), max-shifted.
template <typename T>
T soft_value(std::span<const T> q) {
  if (q.empty()) throw ContractError("soft_value of an empty row");
  const T m = *std::max_element(q.begin(), q.end());
  T s = 0;
  for (T v : q) s += std::exp(v - m);
  return m + std::log(s);
}

/// softmax(q / tau).
template <typename T>
std::vector<T> policy_dist(std::span<const T> q, double tau = 0.01) {
  if (!(tau > 0)) throw std::invalid_argument("tau must be positive");
  if (q.empty()) throw ContractError("policy_dist of an empty row");
  const T m = *std::max_element(q.begin(), q.end());
  std::vector<T> p(q.size());
  T s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    p[i] = std::exp(static_cast<T>((q[i] - m) / tau));
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

/// log softmax(q / tau), exact in the tails.
template <typename T>
std::vector<T> log_policy(std::span<const T> q, double tau = 0.01) {
  std::vector<T> z(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) z[i] = static_cast<T>(q[i] / tau);
  const T lse = soft_value<T>(z);
  for (auto& v : z) v -= lse;
  return z;
}

/// How the value term of the inverse soft-Q objective is estimated.
enum class ValueTerm {
  kInitial,  // (1 - gamma) * mean V(s0) over initial states
  kExpert,   // mean over expert transitions of V(s) - gamma * V(s')
  kNone,     // no value term (unbounded below under a Q shift)
};

inline std::string to_string(ValueTerm v) {
  switch (v) {
    case ValueTerm::kInitial: return "initial";
    case ValueTerm::kExpert: return "expert";
    case ValueTerm::kNone: return "none";
  }
  return "initial";
}

inline ValueTerm parse_value_term(const std::string& s) {
  if (s == "initial") return ValueTerm::kInitial;
  if (s == "expert") return ValueTerm::kExpert;
  if (s == "none") return ValueTerm::kNone;
  throw UsageError("value_term must be initial, expert or none (got '" + s + "')");
}

/// One batch of the inverse soft-Q objective. Rows are online Q-values; `next_value` is the
/// target network's soft value at s' and is ignored for terminal transitions.
template <typename T>
struct IqBatch {
  std::vector<std::vector<T>> q;
  std::vector<int> actions;
  std::vector<T> next_value;
  std::vector<char> terminal;
  std::vector<std::vector<T>> initial_q;  // online Q-values at initial states (kInitial only)
};

template <typename T>
struct IqResult {
  T loss = 0;
  std::vector<std::vector<T>> grad_q;
  std::vector<std::vector<T>> grad_initial_q;
};

/// L = -mean[Q(s,a) - gamma V'(s')] + value term, with V'(s') = 0 after the expert's last action.
template <typename T>
IqResult<T> iq_loss(const IqBatch<T>& b, double gamma, ValueTerm mode = ValueTerm::kInitial) {
  const std::size_t n = b.q.size();
  if (n == 0) throw ContractError("iq_loss: empty batch");
  if (b.actions.size() != n || b.next_value.size() != n || b.terminal.size() != n) {
    throw ContractError("iq_loss: batch fields have different lengths");
  }
  if (mode == ValueTerm::kInitial && b.initial_q.empty()) throw ContractError("iq_loss: no initial states");
  IqResult<T> r;
  r.grad_q.resize(n);
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = b.q[i];
    const int a = b.actions[i];
    if (a < 0 || static_cast<std::size_t>(a) >= q.size()) throw ContractError("iq_loss: action out of range");
    const T next = b.terminal[i] ? T{0} : static_cast<T>(gamma) * b.next_value[i];
    r.loss -= (q[a] - next) * inv_n;
    r.grad_q[i].assign(q.size(), T{0});
    r.grad_q[i][a] -= inv_n;
    if (mode == ValueTerm::kExpert) {
      r.loss += (soft_value<T>(q) - next) * inv_n;
      const auto pi = policy_dist<T>(q, 1.0);
      for (std::size_t k = 0; k < q.size(); ++k) r.grad_q[i][k] += pi[k] * inv_n;
    }
  }
  if (mode == ValueTerm::kInitial) {
    const T w = static_cast<T>(1.0 - gamma) / static_cast<T>(b.initial_q.size());
    r.grad_initial_q.resize(b.initial_q.size());
    for (std::size_t j = 0; j < b.initial_q.size(); ++j) {
      r.loss += w * soft_value<T>(b.initial_q[j]);
      const auto pi = policy_dist<T>(b.initial_q[j], 1.0);
      r.grad_initial_q[j].resize(pi.size());
      for (std::size_t k = 0; k < pi.size(); ++k) r.grad_initial_q[j][k] = w * pi[k];
    }
  }
  return r;
}

/// r(s, a) = Q(s, a) - gamma V'(s'); a terminal transition has no successor term.
template <typename T>
T recover_reward(std::span<const T> q, int action, T next_value, bool terminal, double gamma) {
  return q[static_cast<std::size_t>(action)] - (terminal ? T{0} : static_cast<T>(gamma) * next_value);
}

inline constexpr double kProbClamp = 1e-4;

struct FocalConfig {
  double kappa = 2.0;
  double lambda = 4.0;
};

template <typename T>
struct LossAndGrad {
  T loss = 0;
  Tensor<T> grad;  // with respect to the prediction
};

/// Pixel-wise focal loss on center maps, normalized by max(N, 1) with N the number of centers.
/// Predictions are clamped to [1e-4, 1 - 1e-4]; clamped entries get zero gradient.
template <typename T>
LossAndGrad<T> focal_loss(const Tensor<T>& pred, const Tensor<T>& gt, std::size_t num_centers, FocalConfig cfg = {}) {
  if (pred.shape() != gt.shape()) {
    throw ContractError("focal_loss: shapes " + shape_string(pred.shape()) + " and " + shape_string(gt.shape()));
  }
  LossAndGrad<T> out;
  out.grad = Tensor<T>(pred.shape());
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(num_centers, 1));
  const double k = cfg.kappa, l = cfg.lambda;
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const bool inside = raw == p;
    const double y = gt[i];
    double f, df;
    if (y == 1.0) {
      f = -std::pow(1 - p, k) * std::log(p);
      df = k * std::pow(1 - p, k - 1) * std::log(p) - std::pow(1 - p, k) / p;
    } else {
      const double wneg = std::pow(1 - y, l);
      f = -wneg * std::pow(p, k) * std::log(1 - p);
      df = -wneg * (k * std::pow(p, k - 1) * std::log(1 - p) - std::pow(p, k) / (1 - p));
    }
    total += f;
    out.grad[i] = inside ? static_cast<T>(df * norm) : T{0};
  }
  out.loss = static_cast<T>(total * norm);
  return out;
}

/// Per-class weights inversely proportional to frequency, scaled so their mean over the examples is 1.
struct ClassWeights {
  double stop = 1.0;
  double cont = 1.0;
};

inline ClassWeights termination_class_weights(std::size_t n_stop, std::size_t n_continue) {
  if (n_stop == 0 || n_continue == 0) return {};
  const double n = static_cast<double>(n_stop + n_continue);
  return {n / (2.0 * n_stop), n / (2.0 * n_continue)};
}

struct TerminationLoss {
  double loss = 0;
  std::vector<double> grad_logit;
};

/// Class-weighted binary cross-entropy, sum_i w_i BCE_i / sum_i w_i. Gradients are with respect to logits.
inline TerminationLoss termination_loss(std::span<const double> probs, std::span<const int> labels, ClassWeights w) {
  if (probs.size() != labels.size()) throw ContractError("termination_loss: length mismatch");
  TerminationLoss out;
  out.grad_logit.resize(probs.size());
  if (probs.empty()) return out;
  double wsum = 0;
  for (int y : labels) wsum += y ? w.stop : w.cont;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    const double wi = labels[i] ? w.stop : w.cont;
    out.loss += wi * -(labels[i] ? std::log(p) : std::log(1 - p)) / wsum;
    out.grad_logit[i] = wi * (probs[i] - labels[i]) / wsum;
  }
  return out;
}

/// L_irl + omega * L_det + term_weight * L_term.
inline double combined_loss(double l_irl, double l_det, double omega = 0.1, double l_term = 0.0,
                            double term_weight = 1.0) {
  return l_irl + omega * l_det + term_weight * l_term;
}

}  // namespace ffm::irl

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ffm/container.hpp"
#include "ffm/error.hpp"
#include "ffm/tensor.hpp"

namespace ffm::nn {

/// Named learnable tensors in a fixed order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& operator[](const std::string& name) { return entries_[lookup(name)].value; }
  const Tensor<T>& operator[](const std::string& name) const { return entries_[lookup(name)].value; }

  std::size_t size() const { return entries_.size(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  ParamStore zeros_like() const {
    ParamStore z;
    for (const auto& e : entries_) z.add(e.name, Tensor<T>::zeros_like(e.value));
    return z;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.fill(T{0});
  }

  /// Name of the first tensor holding a non-finite value, or empty.
  std::string first_non_finite() const {
    for (const auto& e : entries_) {
      if (!e.value.all_finite()) return e.name;
    }
    return {};
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  std::vector<NamedTensor> to_named_tensors() const {
    std::vector<NamedTensor> out;
    for (const auto& e : entries_) out.push_back({e.name, e.value.template cast<float>()});
    return out;
  }

  /// Overwrites every parameter from `tensors`; names and shapes must match exactly.
  void assign_from(std::span<const NamedTensor> tensors) {
    for (auto& e : entries_) {
      const auto* t = find_tensor(tensors, e.name);
      if (!t) throw DataError("checkpoint is missing tensor '" + e.name + "'");
      if (t->tensor.shape() != e.value.shape()) {
        throw DataError("tensor '" + e.name + "' has shape " + shape_string(t->tensor.shape()) +
                        " in the checkpoint but the model expects " + shape_string(e.value.shape()));
      }
      for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] = static_cast<T>(t->tensor[i]);
    }
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform double in [0, 1) from 53 random bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace ffm::nn

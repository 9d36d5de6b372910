#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ffm/error.hpp"

namespace ffm::irl {

/// Fixed-capacity FIFO ring.
template <typename Item>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw UsageError("replay buffer capacity must be positive");
    items_.reserve(capacity);
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  void push(Item item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i-th item in insertion order (0 = oldest).
  const Item& operator[](std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  /// Uniform draw with replacement.
  template <typename Rng>
  std::vector<Item> sample(std::size_t n, Rng& rng) const {
    if (items_.empty()) throw ContractError("sampling from an empty replay buffer");
    std::vector<Item> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(items_[static_cast<std::size_t>(rng() % items_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Item> items_;
};

}  // namespace ffm::irl

#pragma once

#include "streamrl/common.hpp"
#include "streamrl/rng.hpp"

#include <vector>

namespace streamrl {

// Stored raw: normalization is applied at sample time with current statistics.
struct RawTransition {
  Vec s, a;
  double r = 0.0;
  Vec s_next;
  bool terminal = false;
};

// Ring buffer with FIFO eviction; uniform sampling with replacement.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return store_.size(); }

  void push(RawTransition t) {
    if (store_.size() < capacity_) {
      store_.push_back(std::move(t));
    } else {
      store_[next_] = std::move(t);
      next_ = (next_ + 1) % capacity_;
    }
  }

  struct Batch {
    Mat s, a, s_next;  // rows = samples
    Vec r;
    Vec not_terminal;  // 1 - T
  };

  Batch sample(std::size_t n, Rng& rng) const {
    require(size() > 0, "ReplayBuffer::sample: buffer is empty");
    const auto& first = store_[0];
    Batch b;
    b.s.resize(n, first.s.size());
    b.a.resize(n, first.a.size());
    b.s_next.resize(n, first.s_next.size());
    b.r.resize(n);
    b.not_terminal.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = store_[rng.uniform_index(size())];
      b.s.row(i) = t.s.transpose();
      b.a.row(i) = t.a.transpose();
      b.s_next.row(i) = t.s_next.transpose();
      b.r[i] = t.r;
      b.not_terminal[i] = t.terminal ? 0.0 : 1.0;
    }
    return b;
  }

  const RawTransition& at(std::size_t i) const { return store_[i]; }

 private:
  std::size_t capacity_ = 1000000;
  std::vector<RawTransition> store_;
  std::size_t next_ = 0;  // overwrite cursor once full

  friend struct ReplayBufferIO;
};

}  // namespace streamrl

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mklab {

inline constexpr const char* kVersion = "0.1.0";

// Probability tables must sum to one within this tolerance.
inline constexpr double kProbTolerance = 1e-12;

// Probabilities below this are treated as exact zeros in entropy sums.
inline constexpr double kProbFloor = 1e-300;

// Default cap on log2 of any enumerated state space.
inline constexpr int kDefaultBudgetBits = 26;

class budget_exceeded : public std::runtime_error {
 public:
  explicit budget_exceeded(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Throws if a state space of `bits` bits exceeds the budget.
inline void check_budget(double bits, int budget_bits = kDefaultBudgetBits) {
  if (bits > static_cast<double>(budget_bits)) {
    throw budget_exceeded("state space of 2^" + std::to_string(bits) +
                          " exceeds budget of 2^" + std::to_string(budget_bits));
  }
}

// Mixed-radix indexing for configuration tables: index = sum_i x_i * stride_i,
// with the first variable varying slowest (site order is table order).
class MixedRadix {
 public:
  MixedRadix() = default;
  explicit MixedRadix(std::vector<std::uint32_t> dims) : dims_(std::move(dims)) {
    strides_.resize(dims_.size());
    std::size_t s = 1;
    for (std::size_t i = dims_.size(); i-- > 0;) {
      strides_[i] = s;
      s *= dims_[i];
    }
    total_ = s;
  }

  std::size_t size() const { return total_; }
  std::size_t arity() const { return dims_.size(); }
  const std::vector<std::uint32_t>& dims() const { return dims_; }

  std::size_t index(const std::vector<int>& xs) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) idx += static_cast<std::size_t>(xs[i]) * strides_[i];
    return idx;
  }

  void decode(std::size_t idx, std::vector<int>& out) const {
    out.resize(dims_.size());
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      out[i] = static_cast<int>(idx / strides_[i]);
      idx %= strides_[i];
    }
  }

  int digit(std::size_t idx, std::size_t i) const {
    return static_cast<int>((idx / strides_[i]) % dims_[i]);
  }

  std::size_t stride(std::size_t i) const { return strides_[i]; }

 private:
  std::vector<std::uint32_t> dims_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 1;
};

// Shared thread count used by enumeration loops; set once by the CLI.
int worker_threads();
void set_worker_threads(int n);

// Deterministic chunked reduction: the index range is split into a fixed
// number of chunks independent of the thread count, each chunk is summed
// sequentially, and chunk partials are combined in chunk order. Results are
// bit-identical for any thread count.
double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& term);

// Runs fn(chunk, begin, end) over fixed chunks, possibly on several threads.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace mklab

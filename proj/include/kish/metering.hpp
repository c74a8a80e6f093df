// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <type_traits>
#include <utility>

namespace kish {

/// Gate counts for one metered circuit evaluation.
///
/// mult_gates counts ciphertext-by-ciphertext products only; products with a
/// plaintext scalar are free. max_depth is the largest multiplicative depth of
/// any ciphertext produced inside the scope.
struct EvalMetrics {
  std::uint64_t mult_gates = 0;
  std::uint64_t add_gates = 0;
  std::uint32_t max_depth = 0;
  std::chrono::nanoseconds wall_time{0};

  void merge(const EvalMetrics& other) noexcept;
};

namespace detail {

class MeterFrame;

/// Called by backends for every produced ciphertext.
void record_gate(std::uint64_t mults, std::uint64_t adds, std::uint32_t depth) noexcept;

class ScopeGuard {
 public:
  ScopeGuard();
  ~ScopeGuard();
  ScopeGuard(const ScopeGuard&) = delete;
  ScopeGuard& operator=(const ScopeGuard&) = delete;
  EvalMetrics finish();

 private:
  MeterFrame* frame_;
  MeterFrame* parent_;
  std::chrono::steady_clock::time_point start_;
  bool finished_ = false;
};

}  // namespace detail

template <class R>
struct Metered {
  R result;
  EvalMetrics metrics;
};

template <>
struct Metered<void> {
  EvalMetrics metrics;
};

/// Runs body and reports exactly the gates it executed. Scopes nest; inner
/// counts roll up into the enclosing scope. Work fanned out through
/// parallel_for inside body is attributed to this scope.
template <class F>
auto metered_scope(F&& body) -> Metered<std::invoke_result_t<F>> {
  using R = std::invoke_result_t<F>;
  detail::ScopeGuard guard;
  if constexpr (std::is_void_v<R>) {
    std::forward<F>(body)();
    return Metered<void>{guard.finish()};
  } else {
    R result = std::forward<F>(body)();
    return Metered<R>{std::move(result), guard.finish()};
  }
}

/// Upper bound on worker threads used by parallel_for (0 = hardware concurrency).
void set_thread_limit(unsigned threads) noexcept;
unsigned thread_limit() noexcept;

/// Runs fn(i) for i in [0, count). Gates executed by workers are credited to
/// the caller's metered scope. Nested calls run sequentially on the calling
/// worker. The first exception thrown by fn is rethrown after all workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace kish

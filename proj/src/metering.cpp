// SPDX-License-Identifier: Apache-2.0
#include "kish/metering.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kish {

void EvalMetrics::merge(const EvalMetrics& other) noexcept {
  mult_gates += other.mult_gates;
  add_gates += other.add_gates;
  max_depth = std::max(max_depth, other.max_depth);
}

namespace detail {

class MeterFrame {
 public:
  EvalMetrics counts;
  std::mutex merge_mutex;  // guards counts while parallel workers roll up
};

namespace {
thread_local MeterFrame* t_current = nullptr;
thread_local bool t_in_parallel = false;
}  // namespace

void record_gate(std::uint64_t mults, std::uint64_t adds, std::uint32_t depth) noexcept {
  MeterFrame* frame = t_current;
  if (frame == nullptr) return;
  frame->counts.mult_gates += mults;
  frame->counts.add_gates += adds;
  if (depth > frame->counts.max_depth) frame->counts.max_depth = depth;
}

ScopeGuard::ScopeGuard()
    : frame_(new MeterFrame), parent_(t_current), start_(std::chrono::steady_clock::now()) {
  t_current = frame_;
}

EvalMetrics ScopeGuard::finish() {
  EvalMetrics result = frame_->counts;
  result.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_);
  if (!finished_) {
    finished_ = true;
    t_current = parent_;
    if (parent_ != nullptr) {
      std::lock_guard lock(parent_->merge_mutex);
      parent_->counts.merge(frame_->counts);
    }
    delete frame_;
    frame_ = nullptr;
  }
  return result;
}

ScopeGuard::~ScopeGuard() {
  if (!finished_) finish();
}

}  // namespace detail

namespace {
std::atomic<unsigned> g_thread_limit{0};
}

void set_thread_limit(unsigned threads) noexcept { g_thread_limit.store(threads); }

unsigned thread_limit() noexcept {
  const unsigned limit = g_thread_limit.load();
  if (limit != 0) return limit;
  return std::max(1U, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_limit(), count));
  if (workers <= 1 || detail::t_in_parallel) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  detail::MeterFrame* parent = detail::t_current;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    detail::t_in_parallel = true;
    detail::MeterFrame local;
    detail::MeterFrame* saved = detail::t_current;
    detail::t_current = parent != nullptr ? &local : nullptr;
    try {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(count);
    }
    detail::t_current = saved;
    detail::t_in_parallel = false;
    if (parent != nullptr) {
      std::lock_guard lock(parent->merge_mutex);
      parent->counts.merge(local.counts);
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace kish

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sacc/tensor/tensor.hpp"

namespace sacc {

/**
 * Records differentiable operations executed on the current thread while the
 * tape is alive, then replays their backward closures in reverse order.
 *
 * Tapes nest: constructing a tape makes it current for this thread and the
 * destructor restores the previous one. Operations executed with no active
 * tape, or with no input that requires a gradient, are not recorded.
 */
class GradientTape {
 public:
  using BackwardFn = std::function<void()>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* current();

  /// True when an operation on these inputs must be recorded.
  static bool should_record(std::initializer_list<const Tensor*> inputs);

  /// Appends one operation. `output` must already require grad.
  void record(std::string name, Tensor output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward once, newest first.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  /// Names of operations visited by the last backward(), in visit order.
  const std::vector<std::string>& visit_log() const { return visit_log_; }

 private:
  struct Entry {
    std::string name;
    Tensor output;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  std::vector<std::string> visit_log_;
  GradientTape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Disables recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradientTape* saved_;
};

}  // namespace sacc

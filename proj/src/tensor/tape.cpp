#include "sacc/tensor/tape.hpp"

#include "sacc/errors.hpp"

namespace sacc {

namespace {
thread_local GradientTape* g_current_tape = nullptr;
}

GradientTape::GradientTape() : previous_(g_current_tape) { g_current_tape = this; }

GradientTape::~GradientTape() {
  if (g_current_tape == this) g_current_tape = previous_;
}

GradientTape* GradientTape::current() { return g_current_tape; }

bool GradientTape::should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_current_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

void GradientTape::record(std::string name, Tensor output, BackwardFn backward) {
  if (consumed_) throw StateError("gradient tape already replayed; create a new tape per step");
  if (!output.requires_grad()) throw StateError("recorded output of '" + name + "' must require grad");
  entries_.push_back(Entry{std::move(name), std::move(output), std::move(backward)});
}

void GradientTape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("gradient tape already replayed");
  if (loss.numel() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_to_string(loss.shape()));
  if (!loss.requires_grad()) throw StateError("loss does not depend on any tensor that requires grad");
  consumed_ = true;

  Tensor seed = loss;
  seed.grad()[0] += 1.0;

  visit_log_.clear();
  visit_log_.reserve(entries_.size());
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    visit_log_.push_back(it->name);
    it->backward();
  }
  // Release closures so captured intermediates are freed before the tape dies.
  entries_.clear();
}

NoGradGuard::NoGradGuard() : saved_(g_current_tape) { g_current_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_current_tape = saved_; }

}  // namespace sacc

#pragma once

#include <map>
#include <string>
#include <vector>

#include "sacc/tensor/parameter_store.hpp"

namespace sacc {

/// SGD with heavy-ball momentum: v <- momentum*v + grad; p <- p - lr*v.
class Sgd {
 public:
  Sgd(double lr, double momentum = 0.9) : lr_(lr), momentum_(momentum) {}

  /// Updates every unfrozen parameter of `store`. Throws StateError when an
  /// unfrozen parameter carries no gradient buffer.
  void step(ParameterStore& store);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

/// Adam (Kingma & Ba) with bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace sacc

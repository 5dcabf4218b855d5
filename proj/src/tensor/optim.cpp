#include "sacc/tensor/optim.hpp"

#include <cmath>

#include "sacc/errors.hpp"

namespace sacc {

namespace {

void require_grad(const Parameter& p) {
  if (!p.value.has_grad()) throw StateError("unfrozen parameter '" + p.name + "' has no gradient");
}

}  // namespace

void Sgd::step(ParameterStore& store) {
  for (auto& p : store.parameters()) {
    if (store.is_parameter_frozen(p)) continue;
    require_grad(p);
    auto& vel = velocity_[p.name];
    if (vel.size() != p.value.numel()) vel.assign(p.value.numel(), 0.0);
    auto w = p.value.data();
    auto g = std::as_const(p.value).grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      vel[i] = momentum_ * vel[i] + g[i];
      w[i] -= lr_ * vel[i];
    }
  }
}

void Adam::step(ParameterStore& store) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto& p : store.parameters()) {
    if (store.is_parameter_frozen(p)) continue;
    require_grad(p);
    auto& m = m_[p.name];
    auto& v = v_[p.name];
    if (m.size() != p.value.numel()) {
      m.assign(p.value.numel(), 0.0);
      v.assign(p.value.numel(), 0.0);
    }
    auto w = p.value.data();
    auto g = std::as_const(p.value).grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace sacc

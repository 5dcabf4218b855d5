#pragma once

// Central finite-difference oracle used by the gradient tests. It perturbs the
// raw storage of the given tensors and never touches the tape, so it stays
// independent of the backward implementations it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sacc/tensor/tape.hpp"
#include "sacc/tensor/tensor.hpp"

namespace sacc::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Numerical d(loss)/d(t[i]) by central differences with step h.
inline double numeric_partial(const std::function<double()>& loss, Tensor& t, std::size_t i, double h) {
  double& slot = t.data()[i];
  const double saved = slot;
  slot = saved + h;
  const double up = loss();
  slot = saved - h;
  const double down = loss();
  slot = saved;
  return (up - down) / (2.0 * h);
}

/// Runs `forward` under a tape, back-propagates, then compares the analytic
/// gradient of every tensor in `wrt` against central differences at up to
/// `samples` random coordinates per tensor (all coordinates when smaller).
inline GradCheckResult check_gradients(const std::function<Tensor()>& forward, std::vector<Tensor> wrt,
                                       std::size_t samples = 20, double h = 1e-5, unsigned seed = 7) {
  for (auto& t : wrt) t.set_requires_grad(true);
  {
    GradientTape tape;
    Tensor loss = forward();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

  auto scalar_loss = [&]() {
    NoGradGuard guard;
    return forward().item();
  };
  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor& t = wrt[k];
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(samples, coords.size()));
    for (std::size_t i : coords) {
      const double numeric = numeric_partial(scalar_loss, t, i, h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[k][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace sacc::testing

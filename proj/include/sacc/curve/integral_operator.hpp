#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sacc/tensor/tensor.hpp"

namespace sacc {

/**
 * Fixed P×(P-1) summation matrix mapping a non-negative coefficient vector of
 * length P-1 to an unnormalized curve of length P.
 *
 * With A the (P-1)×(P-1) upper-triangular matrix of ones (a_ij = 1 iff i <= j)
 * and B the P×(P-1) strictly-lower-triangular matrix of ones (b_ij = 1 iff
 * i > j), the integration order selects:
 *
 *   order 0  [0; I]   coefficients are the curve itself (no constraint)
 *   order 1  B        coefficients are first differences (monotone)
 *   order 2  B·A      coefficients are minus second differences (monotone, concave)
 *   order 3  B·A·A    coefficients are third differences (adds ∇³g >= 0)
 *
 * Row 0 is always zero, so every curve starts at 0.
 */
class IntegralOperator {
 public:
  IntegralOperator(std::size_t levels, int order);

  std::size_t levels() const { return levels_; }
  std::size_t coefficients() const { return levels_ - 1; }
  int order() const { return order_; }

  double at(std::size_t row, std::size_t col) const { return matrix_[row * (levels_ - 1) + col]; }
  /// Row-major P×(P-1) entries.
  const std::vector<double>& matrix() const { return matrix_; }

  /// D·v for a single coefficient vector of length P-1.
  std::vector<double> apply(std::span<const double> coefficients) const;

  /// Dᵀ as a constant (P-1)×P tensor, for batched row-vector products.
  const Tensor& transposed() const { return transposed_; }

 private:
  std::size_t levels_;
  int order_;
  std::vector<double> matrix_;
  Tensor transposed_;
};

/// Builds the operator for `levels` >= 2 and order in {0,1,2,3}; other orders raise ConfigError.
IntegralOperator build_integral_operator(std::size_t levels, int order);

}  // namespace sacc

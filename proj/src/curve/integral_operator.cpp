#include "sacc/curve/integral_operator.hpp"

#include <Eigen/Core>

#include "sacc/errors.hpp"

namespace sacc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMat upper_ones(std::size_t n) {
  RowMat a = RowMat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  }
  return a;
}

RowMat strict_lower_ones(std::size_t rows, std::size_t cols) {
  RowMat b = RowMat::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols && j < i; ++j) b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  }
  return b;
}

}  // namespace

IntegralOperator::IntegralOperator(std::size_t levels, int order) : levels_(levels), order_(order) {
  if (levels < 2) throw ConfigError("integral operator needs at least 2 levels");
  const std::size_t n = levels - 1;
  RowMat d;
  switch (order) {
    case 0:
      d = RowMat::Zero(static_cast<Eigen::Index>(levels), static_cast<Eigen::Index>(n));
      d.bottomRows(static_cast<Eigen::Index>(n)).setIdentity();
      break;
    case 1:
      d = strict_lower_ones(levels, n);
      break;
    case 2:
      d = strict_lower_ones(levels, n) * upper_ones(n);
      break;
    case 3: {
      const RowMat a = upper_ones(n);
      d = strict_lower_ones(levels, n) * a * a;
      break;
    }
    default:
      throw ConfigError("unsupported integration order " + std::to_string(order) + " (expected 0..3)");
  }
  matrix_.assign(d.data(), d.data() + d.size());
  RowMat dt = d.transpose();
  transposed_ = Tensor(Shape{n, levels}, std::vector<double>(dt.data(), dt.data() + dt.size()));
}

std::vector<double> IntegralOperator::apply(std::span<const double> coefficients) const {
  const std::size_t n = levels_ - 1;
  if (coefficients.size() != n) {
    throw DimensionError("integral operator expects " + std::to_string(n) + " coefficients, got " +
                         std::to_string(coefficients.size()));
  }
  std::vector<double> out(levels_, 0.0);
  for (std::size_t r = 0; r < levels_; ++r) {
    const double* row = matrix_.data() + r * n;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * coefficients[c];
    out[r] = acc;
  }
  return out;
}

IntegralOperator build_integral_operator(std::size_t levels, int order) { return IntegralOperator(levels, order); }

}  // namespace sacc

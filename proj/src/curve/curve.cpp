#include "sacc/curve/curve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sacc/errors.hpp"
#include "sacc/tensor/ops.hpp"
#include "sacc/tensor/tape.hpp"

namespace sacc {

namespace {

void identity_row(std::span<double> row) {
  const double top = static_cast<double>(row.size() - 1);
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<double>(i) / top;
}

// Index of the entry that defines ||c||∞ for this order.
std::size_t norm_index(std::span<const double> c, int order) {
  if (order >= 1) return c.size() - 1;
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (std::abs(c[i]) > std::abs(c[best])) best = i;
  }
  return best;
}

void check_coefficients(std::span<const double> v, int order) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ContractViolation("curve coefficients must be finite");
    if (order >= 1 && x < 0.0) throw ContractViolation("curve coefficients must be non-negative for order >= 1");
  }
}

void check_image_against(const ImageBatch& image, std::size_t levels, std::size_t channels) {
  if (image.levels != levels) {
    throw DimensionError("image bit depth " + std::to_string(image.levels) + " does not match curve with " +
                         std::to_string(levels) + " levels");
  }
  if (image.channels != channels) {
    throw DimensionError("image has " + std::to_string(image.channels) + " channels, curve set has " +
                         std::to_string(channels));
  }
}

}  // namespace

ConcaveCurveSet ConcaveCurveSet::identity(std::size_t levels, std::size_t channels) {
  ConcaveCurveSet set;
  set.levels = levels;
  set.lut.assign(channels, std::vector<double>(levels));
  set.degenerate.assign(channels, false);
  for (auto& row : set.lut) identity_row(row);
  return set;
}

ConcaveCurveSet build_curve(const SecondDerivativePrediction& v, const IntegralOperator& op) {
  if (v.channels.empty()) throw DimensionError("prediction has no channels");
  ConcaveCurveSet set;
  set.levels = op.levels();
  for (const auto& coeffs : v.channels) {
    check_coefficients(coeffs, op.order());
    std::vector<double> c = op.apply(coeffs);
    const double norm = std::abs(c[norm_index(c, op.order())]);
    if (norm < kDegenerateNorm) {
      identity_row(c);
      set.degenerate.push_back(true);
    } else {
      for (double& x : c) x /= norm;
      set.degenerate.push_back(false);
    }
    set.lut.push_back(std::move(c));
  }
  return set;
}

ImageBatch apply_curve(const ImageBatch& image, const ConcaveCurveSet& curves, ApplyOptions opt) {
  return apply_curves(image, std::vector<ConcaveCurveSet>(image.count, curves), opt);
}

ImageBatch apply_curves(const ImageBatch& images, const std::vector<ConcaveCurveSet>& curves, ApplyOptions opt) {
  if (curves.size() != images.count) {
    throw DimensionError(std::to_string(curves.size()) + " curve sets for " + std::to_string(images.count) + " images");
  }
  ImageBatch out = images;
  const std::size_t sz = images.image_size();
  const double top = static_cast<double>(images.levels - 1);
  for (std::size_t n = 0; n < images.count; ++n) {
    const ConcaveCurveSet& set = curves[n];
    check_image_against(images, set.levels, set.channels());
    for (std::size_t i = n * sz; i < (n + 1) * sz; ++i) {
      const double g = set.lut[i % images.channels][images.level_of(i)];
      out.values[i] = opt.requantize ? std::round(g * top) / top : g;
    }
  }
  return out;
}

EnhancedClip apply_curve_video(const VideoClip& clip, const ConcaveCurveSet& curves, ApplyOptions opt) {
  if (clip.frames.values.size() != clip.frames.count * clip.frames.image_size()) {
    throw DimensionError("video frames do not share one geometry");
  }
  EnhancedClip result;
  result.clip.frames = apply_curve(clip.frames, curves, opt);
  result.frame_curves.assign(clip.length(), curves);
  return result;
}

ImageBatch apply_gamma(const ImageBatch& image, const GammaBaseline& baseline) {
  if (baseline.exponent.size() != image.channels) {
    throw DimensionError("gamma baseline has " + std::to_string(baseline.exponent.size()) +
                         " exponents for an image with " + std::to_string(image.channels) + " channels");
  }
  for (double g : baseline.exponent) {
    if (!(g > 0.0)) throw ConfigError("gamma exponent must be positive");
  }
  ImageBatch out = image;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = std::pow(image.values[i], baseline.exponent[i % image.channels]);
  }
  return out;
}

bool CurveDiagnostics::valid(double tol, bool require_concave) const {
  for (const auto& ch : channels) {
    if (std::abs(ch.first_value) > tol || std::abs(ch.last_value - 1.0) > tol) return false;
    if (ch.min_first_difference < -tol) return false;
    if (require_concave && ch.max_second_difference > tol) return false;
  }
  return true;
}

CurveDiagnostics curve_concavity_report(const ConcaveCurveSet& curves) {
  CurveDiagnostics report;
  for (std::size_t ch = 0; ch < curves.channels(); ++ch) {
    const auto& g = curves.lut[ch];
    ChannelDiagnostics d;
    d.first_value = g.front();
    d.last_value = g.back();
    d.degenerate = ch < curves.degenerate.size() && curves.degenerate[ch];
    d.min_first_difference = g.size() > 1 ? g[1] - g[0] : 0.0;
    d.max_second_difference = g.size() > 2 ? -std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t i = 0; i + 1 < g.size(); ++i) d.min_first_difference = std::min(d.min_first_difference, g[i + 1] - g[i]);
    for (std::size_t i = 0; i + 2 < g.size(); ++i) {
      d.max_second_difference = std::max(d.max_second_difference, g[i + 2] - 2.0 * g[i + 1] + g[i]);
    }
    report.channels.push_back(d);
  }
  return report;
}

Tensor build_curve_tensor(const Tensor& v, const IntegralOperator& op) {
  if (v.rank() != 3 || v.dim(2) != op.coefficients()) {
    throw DimensionError("curve coefficients must be N×C×" + std::to_string(op.coefficients()) + ", got " +
                         shape_to_string(v.shape()));
  }
  const std::size_t n = v.dim(0), channels = v.dim(1), levels = op.levels();
  const int order = op.order();
  Tensor raw = ops::matmul(ops::reshape(v, Shape{n * channels, op.coefficients()}), op.transposed());

  const bool record = GradientTape::should_record({&raw});
  Tensor out(Shape{n, channels, levels}, 0.0, record);
  auto pivots = std::make_shared<std::vector<std::size_t>>(n * channels);
  auto norms = std::make_shared<std::vector<double>>(n * channels);
  auto c = raw.data();
  auto g = out.data();
  for (std::size_t r = 0; r < n * channels; ++r) {
    auto row = c.subspan(r * levels, levels);
    auto dst = g.subspan(r * levels, levels);
    const std::size_t pivot = norm_index(row, order);
    const double norm = std::abs(row[pivot]);
    (*pivots)[r] = pivot;
    (*norms)[r] = norm;
    if (norm < kDegenerateNorm) {
      identity_row(dst);
    } else {
      for (std::size_t i = 0; i < levels; ++i) dst[i] = row[i] / norm;
    }
  }
  if (record) {
    GradientTape::current()->record("normalize_curve", out, [raw = raw, out, pivots, norms, levels]() mutable {
      auto gout = std::as_const(out).grad();
      auto c = raw.data();
      auto gc = raw.grad();
      for (std::size_t r = 0; r < pivots->size(); ++r) {
        const double norm = (*norms)[r];
        if (norm < kDegenerateNorm) continue;
        const std::size_t base = r * levels;
        double dot = 0.0;
        for (std::size_t i = 0; i < levels; ++i) {
          gc[base + i] += gout[base + i] / norm;
          dot += gout[base + i] * c[base + i];
        }
        const std::size_t p = base + (*pivots)[r];
        const double sign = c[p] < 0.0 ? -1.0 : 1.0;
        gc[p] -= sign * dot / (norm * norm);
      }
    });
  }
  return out;
}

Tensor apply_curve_tensor(const Tensor& curves, const ImageBatch& images) {
  if (curves.rank() != 3 || curves.dim(0) != images.count) {
    throw DimensionError("curve tensor " + shape_to_string(curves.shape()) + " does not match a batch of " +
                         std::to_string(images.count) + " images");
  }
  check_image_against(images, curves.dim(2), curves.dim(1));
  const std::size_t n = images.count, ch = images.channels, hw = images.pixels_per_image(), levels = images.levels;
  auto index = std::make_shared<std::vector<std::size_t>>(n * ch * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t src = (b * hw + p) * ch + c;
        (*index)[(b * ch + c) * hw + p] = (b * ch + c) * levels + images.level_of(src);
      }
    }
  }
  return ops::gather(curves, index, Shape{n, ch, images.height, images.width});
}

}  // namespace sacc

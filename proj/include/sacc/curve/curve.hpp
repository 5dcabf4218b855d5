#pragma once

#include <cstddef>
#include <vector>

#include "sacc/curve/integral_operator.hpp"
#include "sacc/data/image.hpp"
#include "sacc/tensor/tensor.hpp"

namespace sacc {

/// Below this normalizer a channel is treated as degenerate.
inline constexpr double kDegenerateNorm = 1e-12;

/// Per-channel predicted coefficients (minus second derivative for order 2),
/// each of length P-1.
struct SecondDerivativePrediction {
  std::vector<std::vector<double>> channels;
};

/// Per-channel lookup tables g ∈ [0,1]^P.
struct ConcaveCurveSet {
  std::size_t levels = 0;
  std::vector<std::vector<double>> lut;
  std::vector<bool> degenerate;

  std::size_t channels() const { return lut.size(); }
  /// g[i] = i/(P-1) on every channel.
  static ConcaveCurveSet identity(std::size_t levels, std::size_t channels);
};

/// x^γ per channel; every exponent must be positive.
struct GammaBaseline {
  std::vector<double> exponent;
};

/// c = D·v, then g = c / ||c||∞ per channel. For orders >= 1 the norm is c[P-1]
/// because c is non-decreasing and non-negative. A channel whose norm is below
/// kDegenerateNorm becomes the identity curve and is flagged.
/// Raises ContractViolation on negative coefficients when order >= 1.
ConcaveCurveSet build_curve(const SecondDerivativePrediction& v, const IntegralOperator& op);

struct ApplyOptions {
  /// Snap outputs to round(g·(P-1))/(P-1).
  bool requantize = false;
};

/// Maps each value at level p of channel ch to g_ch[p].
ImageBatch apply_curve(const ImageBatch& image, const ConcaveCurveSet& curves, ApplyOptions opt = {});

/// One curve set per image of the batch.
ImageBatch apply_curves(const ImageBatch& images, const std::vector<ConcaveCurveSet>& curves, ApplyOptions opt = {});

struct EnhancedClip {
  VideoClip clip;
  /// Lookup tables used for each frame; all entries are copies of one set.
  std::vector<ConcaveCurveSet> frame_curves;
};

/// Applies one shared curve set to every frame of a clip.
EnhancedClip apply_curve_video(const VideoClip& clip, const ConcaveCurveSet& curves, ApplyOptions opt = {});

ImageBatch apply_gamma(const ImageBatch& image, const GammaBaseline& baseline);

struct ChannelDiagnostics {
  double min_first_difference = 0.0;
  double max_second_difference = 0.0;
  double first_value = 0.0;
  double last_value = 0.0;
  bool degenerate = false;
};

struct CurveDiagnostics {
  std::vector<ChannelDiagnostics> channels;

  /// Endpoints 0 and 1, monotone and (when `require_concave`) concave within `tol`.
  bool valid(double tol = 1e-12, bool require_concave = true) const;
};

CurveDiagnostics curve_concavity_report(const ConcaveCurveSet& curves);

// Differentiable variants used during training.

/// v [N×C×(P-1)] -> g [N×C×P], recorded on the active tape.
Tensor build_curve_tensor(const Tensor& v, const IntegralOperator& op);

/// Lookup of g [N×C×P] at the integer levels of `images` (N×H×W×C) -> [N×C×H×W].
/// The gradient with respect to g is the per-bin scatter-add of the output gradient.
Tensor apply_curve_tensor(const Tensor& curves, const ImageBatch& images);

}  // namespace sacc

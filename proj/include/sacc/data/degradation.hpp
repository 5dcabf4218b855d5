#pragma once

#include <array>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "sacc/curve/curve.hpp"
#include "sacc/data/image.hpp"

namespace sacc {

/// Synthetic low-light degradation x <- clip(bias_ch * x^gamma + N(0, sigma^2), 0, 1).
struct DegradationSpec {
  double gamma = 4.0;
  std::array<double, 3> bias{1.0, 1.0, 1.0};
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;

  /// ConfigError unless gamma >= 1, biases lie in (0,1] and sigma >= 0.
  void validate() const;

  nlohmann::json to_json() const;
  static DegradationSpec from_json(const nlohmann::json& j);
};

/**
 * Darkens every image, then requantizes to the batch bit depth. Noise for
 * image i is drawn from a stream seeded by (spec.seed, stream_offset + i), so
 * a split darkened in pieces matches the split darkened at once.
 */
ImageBatch darken(const ImageBatch& images, const DegradationSpec& spec, std::uint64_t stream_offset = 0);

/// Noise-free inverse lookup g_ch[p] = min(1, (p/(P-1) / bias_ch))^(1/gamma).
ConcaveCurveSet analytic_inverse_curve(const DegradationSpec& spec, std::size_t levels, std::size_t channels = 3);

/// Mixes a master seed with a stream index (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace sacc

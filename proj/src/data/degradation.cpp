#include "sacc/data/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sacc/errors.hpp"

namespace sacc {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void DegradationSpec::validate() const {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) {
    throw ConfigError("darkening exponent must be >= 1, got " + std::to_string(gamma));
  }
  for (double b : bias) {
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("color-bias multipliers must lie in (0,1]");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise sigma must be >= 0");
}

nlohmann::json DegradationSpec::to_json() const {
  return {{"gamma", gamma}, {"bias", bias}, {"noise_sigma", noise_sigma}, {"seed", seed}};
}

DegradationSpec DegradationSpec::from_json(const nlohmann::json& j) {
  DegradationSpec spec;
  try {
    spec.gamma = j.value("gamma", spec.gamma);
    spec.bias = j.value("bias", spec.bias);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed degradation spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

ImageBatch darken(const ImageBatch& images, const DegradationSpec& spec, std::uint64_t stream_offset) {
  spec.validate();
  if (images.channels > spec.bias.size()) throw DimensionError("degradation supports at most 3 channels");
  ImageBatch out = images;
  const std::size_t sz = images.image_size();
  for (std::size_t n = 0; n < images.count; ++n) {
    std::mt19937_64 rng(derive_seed(spec.seed, stream_offset + n));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < sz; ++i) {
      double& v = out.values[n * sz + i];
      const double bias = spec.bias[i % images.channels];
      v = bias * std::pow(v, spec.gamma);
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
      v = std::clamp(v, 0.0, 1.0);
    }
  }
  out.quantize();
  return out;
}

ConcaveCurveSet analytic_inverse_curve(const DegradationSpec& spec, std::size_t levels, std::size_t channels) {
  spec.validate();
  if (levels < 2) throw ConfigError("curve needs at least 2 levels");
  if (channels > spec.bias.size()) throw DimensionError("degradation supports at most 3 channels");
  ConcaveCurveSet set;
  set.levels = levels;
  set.lut.assign(channels, std::vector<double>(levels));
  set.degenerate.assign(channels, false);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < levels; ++p) {
      const double y = static_cast<double>(p) / static_cast<double>(levels - 1);
      set.lut[c][p] = std::pow(std::min(1.0, y / spec.bias[c]), 1.0 / spec.gamma);
    }
  }
  return set;
}

}  // namespace sacc

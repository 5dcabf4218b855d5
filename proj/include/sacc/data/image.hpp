#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sacc/tensor/tensor.hpp"

namespace sacc {

/**
 * N images of identical size, interleaved N×H×W×C, values in [0,1].
 *
 * `levels` is the bit depth P: every value is expected to lie on the grid
 * k/(P-1). Curves index their lookup table by that integer level.
 */
struct ImageBatch {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t levels = 256;
  std::vector<double> values;
  std::vector<std::string> ids;

  ImageBatch() = default;
  ImageBatch(std::size_t n, std::size_t h, std::size_t w, std::size_t c, std::size_t levels = 256);

  std::size_t pixels_per_image() const { return height * width; }
  std::size_t image_size() const { return height * width * channels; }

  double& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) {
    return values[((n * height + y) * width + x) * channels + c];
  }
  double at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return values[((n * height + y) * width + x) * channels + c];
  }

  /// Integer level round(v*(P-1)) of element i.
  std::size_t level_of(std::size_t i) const;

  /// Throws InputError unless sizes agree, P >= 2 and all values lie in [0,1].
  void validate() const;

  /// Snaps every value to the nearest k/(P-1).
  void quantize();

  double mean() const;

  /// N×C×H×W tensor copy.
  Tensor to_tensor() const;
  /// Inverse of to_tensor(); `ids` may be empty.
  static ImageBatch from_tensor(const Tensor& nchw, std::size_t levels, std::vector<std::string> ids = {});

  /// Images at the given positions, in order.
  ImageBatch select(const std::vector<std::size_t>& indices) const;
  ImageBatch image(std::size_t index) const { return select({index}); }

  /// Concatenates batches with identical geometry and depth.
  static ImageBatch concat(const std::vector<ImageBatch>& parts);
};

/// Ordered frames sharing geometry and bit depth (frames.count == length).
struct VideoClip {
  ImageBatch frames;
  std::size_t length() const { return frames.count; }
};

}  // namespace sacc

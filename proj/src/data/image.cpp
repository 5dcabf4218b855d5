#include "sacc/data/image.hpp"

#include <algorithm>
#include <cmath>

#include "sacc/errors.hpp"

namespace sacc {

ImageBatch::ImageBatch(std::size_t n, std::size_t h, std::size_t w, std::size_t c, std::size_t levels_)
    : count(n), height(h), width(w), channels(c), levels(levels_), values(n * h * w * c, 0.0), ids(n) {
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
}

std::size_t ImageBatch::level_of(std::size_t i) const {
  const double scaled = values[i] * static_cast<double>(levels - 1);
  const long lvl = std::lround(scaled);
  if (lvl < 0) return 0;
  if (static_cast<std::size_t>(lvl) >= levels) return levels - 1;
  return static_cast<std::size_t>(lvl);
}

void ImageBatch::validate() const {
  if (levels < 2) throw InputError("bit depth must provide at least 2 levels");
  if (values.size() != count * height * width * channels) {
    throw InputError("image batch value count does not match its geometry");
  }
  if (!ids.empty() && ids.size() != count) throw InputError("image batch has " + std::to_string(ids.size()) +
                                                            " ids for " + std::to_string(count) + " images");
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("image value outside [0,1]");
  }
}

void ImageBatch::quantize() {
  const double top = static_cast<double>(levels - 1);
  for (double& v : values) v = std::round(std::clamp(v, 0.0, 1.0) * top) / top;
}

double ImageBatch::mean() const {
  if (values.empty()) return 0.0;
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

Tensor ImageBatch::to_tensor() const {
  Tensor t(Shape{count, channels, height, width});
  auto d = t.data();
  const std::size_t hw = height * width;
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < channels; ++c) {
        d[(n * channels + c) * hw + p] = values[(n * hw + p) * channels + c];
      }
    }
  }
  return t;
}

ImageBatch ImageBatch::from_tensor(const Tensor& nchw, std::size_t levels_, std::vector<std::string> ids_) {
  if (nchw.rank() != 4) throw DimensionError("expected an N×C×H×W tensor, got " + shape_to_string(nchw.shape()));
  ImageBatch out(nchw.dim(0), nchw.dim(2), nchw.dim(3), nchw.dim(1), levels_);
  if (!ids_.empty()) {
    if (ids_.size() != out.count) throw DimensionError("id count does not match tensor batch size");
    out.ids = std::move(ids_);
  }
  auto d = nchw.data();
  const std::size_t hw = out.height * out.width;
  for (std::size_t n = 0; n < out.count; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < out.channels; ++c) {
        out.values[(n * hw + p) * out.channels + c] = d[(n * out.channels + c) * hw + p];
      }
    }
  }
  return out;
}

ImageBatch ImageBatch::select(const std::vector<std::size_t>& indices) const {
  ImageBatch out(indices.size(), height, width, channels, levels);
  const std::size_t sz = image_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t src = indices[k];
    if (src >= count) throw IndexError("image index " + std::to_string(src) + " out of range");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(src * sz), sz,
                out.values.begin() + static_cast<std::ptrdiff_t>(k * sz));
    out.ids[k] = ids.size() == count ? ids[src] : std::to_string(src);
  }
  return out;
}

ImageBatch ImageBatch::concat(const std::vector<ImageBatch>& parts) {
  if (parts.empty()) throw InputError("cannot concatenate zero batches");
  const ImageBatch& first = parts.front();
  ImageBatch out(0, first.height, first.width, first.channels, first.levels);
  for (const auto& p : parts) {
    if (p.height != first.height || p.width != first.width || p.channels != first.channels ||
        p.levels != first.levels) {
      throw DimensionError("cannot concatenate image batches with different geometry or depth");
    }
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    for (std::size_t i = 0; i < p.count; ++i) out.ids.push_back(p.ids.size() == p.count ? p.ids[i] : std::to_string(i));
    out.count += p.count;
  }
  return out;
}

}  // namespace sacc

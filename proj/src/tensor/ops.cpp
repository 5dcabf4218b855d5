#include "sacc/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sacc/errors.hpp"
#include "sacc/tensor/tape.hpp"

namespace sacc::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Index = Eigen::Index;

ConstMapMat as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMapMat(v.data(), static_cast<Index>(rows), static_cast<Index>(cols));
}

MapMat as_matrix(std::span<double> v, std::size_t rows, std::size_t cols) {
  return MapMat(v.data(), static_cast<Index>(rows), static_cast<Index>(cols));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

void accumulate(Tensor& target, std::span<const double> delta) {
  if (!target.requires_grad()) return;
  auto g = target.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, out_h, out_w;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

void im2col(std::span<const double> x, const ConvGeometry& g, RowMat& cols) {
  cols.setZero(static_cast<Index>(g.patch()), static_cast<Index>(g.n * g.positions()));
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols.row(static_cast<Index>((ch * g.kh + ki) * g.kw + kj)).data();
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* plane = x.data() + (n * g.c + ch) * g.h * g.w;
          double* dst = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              dst[oy * g.out_w + ox] = plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

void col2im(const RowMat& cols, const ConvGeometry& g, std::span<double> dx) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols.row(static_cast<Index>((ch * g.kh + ki) * g.kw + kj)).data();
        for (std::size_t n = 0; n < g.n; ++n) {
          double* plane = dx.data() + (n * g.c + ch) * g.h * g.w;
          const double* src = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)] += src[oy * g.out_w + ox];
            }
          }
        }
      }
    }
  }
}

// Area-coverage weights: row i holds the share of each source sample in output cell i.
RowMat area_weights(std::size_t out, std::size_t in) {
  RowMat weights = RowMat::Zero(static_cast<Index>(out), static_cast<Index>(in));
  const double cell = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double lo = static_cast<double>(i) * cell;
    const double hi = static_cast<double>(i + 1) * cell;
    const auto first = static_cast<std::size_t>(std::floor(lo));
    const auto last = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
    for (std::size_t s = first; s < last; ++s) {
      const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) weights(static_cast<Index>(i), static_cast<Index>(s)) = overlap / cell;
    }
  }
  return weights;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const bool record = GradientTape::should_record({&a, &b});
  Tensor out(Shape{m, n}, 0.0, record);
  as_matrix(out.data(), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  if (record) {
    GradientTape::current()->record("matmul", out, [a = a, b = b, out, m, k, n]() mutable {
      auto gout = as_matrix(std::as_const(out).grad(), m, n);
      if (a.requires_grad()) as_matrix(a.grad(), m, k).noalias() += gout * as_matrix(b.data(), k, n).transpose();
      if (b.requires_grad()) as_matrix(b.grad(), k, n).noalias() += as_matrix(a.data(), m, k).transpose() * gout;
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), outw = weight.dim(0);
  if (weight.dim(1) != in) {
    throw DimensionError("linear: input width " + std::to_string(in) + " does not match weight " +
                         shape_to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outw)) {
    throw DimensionError("linear: bias shape " + shape_to_string(bias.shape()) + " does not match output width");
  }
  const bool record = GradientTape::should_record({&x, &weight, bias.defined() ? &bias : nullptr});
  Tensor out(Shape{n, outw}, 0.0, record);
  auto y = as_matrix(out.data(), n, outw);
  y.noalias() = as_matrix(x.data(), n, in) * as_matrix(weight.data(), outw, in).transpose();
  if (bias.defined()) y.rowwise() += as_matrix(bias.data(), 1, outw).row(0);
  if (record) {
    GradientTape::current()->record("linear", out, [x = x, weight = weight, bias = bias, out, n, in, outw]() mutable {
      auto gout = as_matrix(std::as_const(out).grad(), n, outw);
      if (x.requires_grad()) as_matrix(x.grad(), n, in).noalias() += gout * as_matrix(weight.data(), outw, in);
      if (weight.requires_grad()) {
        as_matrix(weight.grad(), outw, in).noalias() += gout.transpose() * as_matrix(x.data(), n, in);
      }
      if (bias.defined() && bias.requires_grad()) as_matrix(bias.grad(), 1, outw) += gout.colwise().sum();
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  if (opt.stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
                 opt.stride, opt.padding, 0, 0};
  if (weight.dim(1) != g.c) {
    throw DimensionError("conv2d: input channels " + std::to_string(g.c) + " do not match weight " +
                         shape_to_string(weight.shape()));
  }
  const std::size_t padded_h = g.h + 2 * g.pad, padded_w = g.w + 2 * g.pad;
  if (g.kh > padded_h || g.kw > padded_w) {
    throw DimensionError("conv2d: kernel " + shape_to_string(weight.shape()) + " exceeds padded input " +
                         shape_to_string(x.shape()));
  }
  g.out_h = (padded_h - g.kh) / g.stride + 1;
  g.out_w = (padded_w - g.kw) / g.stride + 1;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.f)) {
    throw DimensionError("conv2d: bias shape " + shape_to_string(bias.shape()) + " does not match filter count");
  }

  auto cols = std::make_shared<RowMat>();
  im2col(x.data(), g, *cols);
  RowMat y = as_matrix(weight.data(), g.f, g.patch()) * *cols;  // F × (N·L)

  const bool record = GradientTape::should_record({&x, &weight, bias.defined() ? &bias : nullptr});
  Tensor out(Shape{g.n, g.f, g.out_h, g.out_w}, 0.0, record);
  auto od = out.data();
  const std::size_t L = g.positions();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t f = 0; f < g.f; ++f) {
      const double b = bias.defined() ? bias[f] : 0.0;
      const double* src = y.row(static_cast<Index>(f)).data() + n * L;
      double* dst = od.data() + (n * g.f + f) * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] = src[l] + b;
    }
  }
  if (record) {
    GradientTape::current()->record("conv2d", out, [x = x, weight = weight, bias = bias, out, g, cols]() mutable {
      const std::size_t L = g.positions();
      auto gout = std::as_const(out).grad();
      RowMat dy(static_cast<Index>(g.f), static_cast<Index>(g.n * L));
      for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t f = 0; f < g.f; ++f) {
          const double* src = gout.data() + (n * g.f + f) * L;
          std::copy(src, src + L, dy.row(static_cast<Index>(f)).data() + n * L);
        }
      }
      if (weight.requires_grad()) {
        as_matrix(weight.grad(), g.f, g.patch()).noalias() += dy * cols->transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad();
        for (std::size_t f = 0; f < g.f; ++f) db[f] += dy.row(static_cast<Index>(f)).sum();
      }
      if (x.requires_grad()) {
        RowMat dcols = as_matrix(weight.data(), g.f, g.patch()).transpose() * dy;
        col2im(dcols, g, x.grad());
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool record = GradientTape::should_record({&x});
  Tensor out(x.shape(), 0.0, record);
  auto in = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) od[i] = in[i] > 0.0 ? in[i] : 0.0;
  if (record) {
    GradientTape::current()->record("relu", out, [x = x, out]() mutable {
      auto in = x.data();
      auto gout = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] > 0.0) gx[i] += gout[i];
      }
    });
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t k) {
  require_rank(x, 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k == 0 || h % k != 0 || w % k != 0) {
    throw DimensionError("max_pool2d: window " + std::to_string(k) + " does not tile " + shape_to_string(x.shape()));
  }
  const std::size_t oh = h / k, ow = w / k;
  const bool record = GradientTape::should_record({&x});
  Tensor out(Shape{n, c, oh, ow}, 0.0, record);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  auto in = x.data();
  auto od = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + oy * k * w + ox * k;
        for (std::size_t dy = 0; dy < k; ++dy) {
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t idx = base + (oy * k + dy) * w + ox * k + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        od[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  if (record) {
    GradientTape::current()->record("max_pool2d", out, [x = x, out, argmax]() mutable {
      auto gout = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < gout.size(); ++o) gx[(*argmax)[o]] += gout[o];
    });
  }
  return out;
}

Tensor upsample_nearest2d(const Tensor& x, std::size_t factor) {
  require_rank(x, 4, "upsample_nearest2d");
  if (factor == 0) throw ConfigError("upsample_nearest2d: factor must be positive");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  const bool record = GradientTape::should_record({&x});
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow}, 0.0, record);
  auto in = x.data();
  auto od = out.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        od[(p * oh + oy) * ow + ox] = in[(p * h + oy / factor) * w + ox / factor];
      }
    }
  }
  if (record) {
    GradientTape::current()->record("upsample_nearest2d", out, [x = x, out, planes, h, w, factor]() mutable {
      const std::size_t oh = h * factor, ow = w * factor;
      auto gout = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            gx[(p * h + oy / factor) * w + ox / factor] += gout[(p * oh + oy) * ow + ox];
          }
        }
      }
    });
  }
  return out;
}

Tensor resize_average(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "resize_average");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
    throw DimensionError("resize_average: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " is larger than source " + shape_to_string(x.shape()));
  }
  auto wy = std::make_shared<RowMat>(area_weights(out_h, h));
  auto wx = std::make_shared<RowMat>(area_weights(out_w, w));
  const bool record = GradientTape::should_record({&x});
  Tensor out(Shape{x.dim(0), x.dim(1), out_h, out_w}, 0.0, record);
  for (std::size_t p = 0; p < planes; ++p) {
    auto src = as_matrix(x.data().subspan(p * h * w, h * w), h, w);
    auto dst = as_matrix(out.data().subspan(p * out_h * out_w, out_h * out_w), out_h, out_w);
    dst.noalias() = (*wy * src) * wx->transpose();
  }
  if (record) {
    GradientTape::current()->record("resize_average", out, [x = x, out, wy, wx, planes, h, w, out_h, out_w]() mutable {
      auto gout = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t p = 0; p < planes; ++p) {
        auto go = as_matrix(gout.subspan(p * out_h * out_w, out_h * out_w), out_h, out_w);
        as_matrix(gx.subspan(p * h * w, h * w), h, w).noalias() += (wy->transpose() * go) * *wx;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  const bool record = GradientTape::should_record({&x});
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), record);
  if (record) {
    GradientTape::current()->record("reshape", out, [x = x, out]() mutable { accumulate(x, std::as_const(out).grad()); });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ, " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const bool record = GradientTape::should_record({&a, &b});
  Tensor out(a.shape(), 0.0, record);
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a[i] + b[i];
  if (record) {
    GradientTape::current()->record("add", out, [a = a, b = b, out]() mutable {
      accumulate(a, std::as_const(out).grad());
      accumulate(b, std::as_const(out).grad());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ, " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const bool record = GradientTape::should_record({&a, &b});
  Tensor out(a.shape(), 0.0, record);
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a[i] * b[i];
  if (record) {
    GradientTape::current()->record("mul", out, [a = a, b = b, out]() mutable {
      auto gout = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  const bool record = GradientTape::should_record({&x});
  Tensor out(x.shape(), 0.0, record);
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = x[i] * factor;
  if (record) {
    GradientTape::current()->record("scale", out, [x = x, out, factor]() mutable {
      auto gout = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * factor;
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool record = GradientTape::should_record({&x});
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total, record);
  if (record) {
    GradientTape::current()->record("sum", out, [x = x, out]() mutable {
      const double g = std::as_const(out).grad()[0];
      for (double& v : x.grad()) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape) {
  if (!index || shape_numel(out_shape) != index->size()) {
    throw DimensionError("gather: index count does not match output shape " + shape_to_string(out_shape));
  }
  const std::size_t limit = x.numel();
  const bool record = GradientTape::should_record({&x});
  Tensor out(std::move(out_shape), 0.0, record);
  auto in = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= limit) throw IndexError("gather: source index " + std::to_string(src) + " out of range");
    od[i] = in[src];
  }
  if (record) {
    GradientTape::current()->record("gather", out, [x = x, out, index]() mutable {
      auto gout = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gout.size(); ++i) gx[(*index)[i]] += gout[i];
    });
  }
  return out;
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> prob(n * k);
  auto z = logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = z.data() + r * k;
    const double peak = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      prob[r * k + j] = std::exp(row[j] - peak);
      total += prob[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) prob[r * k + j] /= total;
  }
  return prob;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  for (std::int64_t label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0," +
                       std::to_string(k) + ")");
    }
  }
  auto z = logits.data();
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = z.data() + r * k;
    const double peak = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(row[j] - peak);
    loss += peak + std::log(total) - row[labels[r]];
  }
  loss /= static_cast<double>(n);

  const bool record = GradientTape::should_record({&logits});
  Tensor out = Tensor::scalar(loss, record);
  if (record) {
    std::vector<std::int64_t> kept(labels.begin(), labels.end());
    GradientTape::current()->record("softmax_cross_entropy", out, [logits = logits, out, kept, n, k]() mutable {
      const double g = std::as_const(out).grad()[0] / static_cast<double>(n);
      std::vector<double> prob = softmax_rows(logits);
      auto gl = logits.grad();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          const double target = static_cast<std::int64_t>(j) == kept[r] ? 1.0 : 0.0;
          gl[r * k + j] += g * (prob[r * k + j] - target);
        }
      }
    });
  }
  return out;
}

}  // namespace sacc::ops

#include "sacc/tensor/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "sacc/errors.hpp"

namespace sacc {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : storage_(std::make_shared<TensorStorage>()) {
  check_shape(shape);
  storage_->data.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<TensorStorage>()) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  storage_->shape = std::move(shape);
  storage_->data.assign(values.begin(), values.end());
  set_requires_grad(requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{1}, value, requires_grad); }

const Shape& Tensor::shape() const {
  if (!storage_) throw StateError("undefined tensor");
  return storage_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for shape " + shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return storage_ ? storage_->data.size() : 0; }

std::span<double> Tensor::data() {
  if (!storage_) throw StateError("undefined tensor");
  return storage_->data;
}

std::span<const double> Tensor::data() const {
  if (!storage_) throw StateError("undefined tensor");
  return storage_->data;
}

std::span<double> Tensor::grad() {
  if (!has_grad()) throw StateError("tensor has no gradient buffer");
  return storage_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient buffer");
  return storage_->grad;
}

bool Tensor::has_grad() const { return storage_ && storage_->grad.size() == storage_->data.size(); }

bool Tensor::requires_grad() const { return storage_ && storage_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!storage_) throw StateError("undefined tensor");
  storage_->requires_grad = on;
  if (on) {
    storage_->grad.assign(storage_->data.size(), 0.0);
  } else {
    storage_->grad.clear();
    storage_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() requires a single-element tensor, got " + shape_to_string(shape()));
  return storage_->data[0];
}

Tensor Tensor::clone() const {
  if (!storage_) return {};
  return Tensor(storage_->shape, std::vector<double>(storage_->data.begin(), storage_->data.end()));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(this->shape()) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), std::vector<double>(storage_->data.begin(), storage_->data.end()));
}

}  // namespace sacc

#pragma once

#include <cstddef>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace sacc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Cache-line aligned allocation. Eigen's vectorized kernels pick their code
/// path from the buffer alignment, so a fixed alignment keeps results
/// bit-identical from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// Storage shared by every Tensor handle that refers to the same array.
struct TensorStorage {
  Shape shape;
  AlignedBuffer data;
  AlignedBuffer grad;
  bool requires_grad = false;
};

/**
 * Dense row-major array of doubles.
 *
 * Copies of a Tensor share storage (handle semantics, like most autograd
 * engines); use clone() for a deep copy. When requires_grad is set a gradient
 * buffer of identical shape is allocated and accumulated into by
 * GradientTape::backward.
 */
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  bool has_grad() const;

  bool requires_grad() const;
  /// Enables or disables gradient tracking; enabling allocates a zeroed buffer.
  void set_requires_grad(bool on);
  void zero_grad();

  double item() const;
  double& operator[](std::size_t i) { return data()[i]; }
  double operator[](std::size_t i) const { return data()[i]; }

  /// Deep copy of the values without gradient tracking.
  Tensor clone() const;
  /// Same values under a new shape; the result shares nothing with the source.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }
  TensorStorage* storage() const { return storage_.get(); }

 private:
  std::shared_ptr<TensorStorage> storage_;
};

}  // namespace sacc

#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <initializer_list>
#include <vector>

namespace rfc {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorised kernels pick their code path from the
/// buffer alignment, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// Product of the dimensions; 1 for the rank-0 (scalar) shape.
std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised whenever an operation receives incompatible shapes. The message
/// names the operation and the offending dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major float32 array. A plain value type: copies are deep and a
/// const Tensor can be shared read-only across threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::span<const float> data);
  Tensor(Shape shape, std::initializer_list<float> data)
      : Tensor(std::move(shape), std::span<const float>(data.begin(), data.size())) {}
  Tensor(Shape shape, FloatBuffer data);

  static Tensor scalar(float value) { return Tensor(Shape{}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float> vec() const { return {data_.begin(), data_.end()}; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Value of a single-element tensor.
  float item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  /// Element `index` along the leading axis, with that axis dropped.
  Tensor slice(std::size_t index) const;
  /// Rows `indices` of the leading axis, in that order.
  Tensor take(std::span<const std::size_t> indices) const;
  /// Stacks equally shaped tensors along a new leading axis.
  static Tensor stack(std::span<const Tensor> items);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  FloatBuffer data_;
};

/// Elementwise helpers on plain values (no graph involvement).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, float s);
double sum_squares(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const char* op, const Shape& a, const Shape& b);

}  // namespace rfc

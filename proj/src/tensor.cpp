#include "rfc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace rfc {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::span<const float> data)
    : Tensor(std::move(shape), FloatBuffer(data.begin(), data.end())) {}

Tensor::Tensor(Shape shape, FloatBuffer data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("Tensor::item: tensor " + shape_str(shape_) +
                     " is not a single element");
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " +
                     shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor Tensor::slice(std::size_t index) const {
  if (shape_.empty() || index >= shape_[0]) {
    throw ShapeError("slice: index " + std::to_string(index) +
                     " out of range for " + shape_str(shape_));
  }
  Shape inner(shape_.begin() + 1, shape_.end());
  const std::size_t n = numel(inner);
  FloatBuffer out(data_.begin() + static_cast<std::ptrdiff_t>(index * n),
                         data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  return Tensor(std::move(inner), std::move(out));
}

Tensor Tensor::take(std::span<const std::size_t> indices) const {
  if (shape_.empty()) throw ShapeError("take: tensor has no leading axis");
  Shape shape = shape_;
  shape[0] = indices.size();
  const std::size_t n = numel(Shape(shape_.begin() + 1, shape_.end()));
  FloatBuffer out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_[0]) {
      throw ShapeError("take: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_str(shape_));
    }
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return Tensor(std::move(shape), std::move(out));
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no tensors given");
  const Shape& inner = items[0].shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  FloatBuffer out;
  out.reserve(numel(shape));
  for (const auto& t : items) {
    require_same_shape("stack", inner, t.shape());
    out.insert(out.end(), t.data_.begin(), t.data_.end());
  }
  return Tensor(std::move(shape), std::move(out));
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a.shape(), b.shape());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a.shape(), b.shape());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(const Tensor& a, float s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

double sum_squares(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += static_cast<double>(v) * v;
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape("max_abs_diff", a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return m;
}

}  // namespace rfc

#include "semstego/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "semstego/core/error.hpp"

namespace semstego {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << ")";
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != shape_numel(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(values_.size()) +
                         " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Tensor& operator+=(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "accumulate");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double mean(const Tensor& a) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s / static_cast<double>(a.size());
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double relative_l2_error(const Tensor& a, const Tensor& b) {
  return l2_norm(a - b) / std::max(l2_norm(b), 1e-300);
}

Tensor batch_item(const Tensor& batch, std::size_t index) {
  if (batch.rank() < 1 || index >= batch.dim(0)) {
    throw DimensionError("batch index out of range");
  }
  Shape item_shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_numel(item_shape);
  std::vector<double> values(batch.data() + index * n, batch.data() + (index + 1) * n);
  return Tensor(std::move(item_shape), std::move(values));
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw DimensionError("stack: no items");
  Shape shape = items.front().shape();
  shape.insert(shape.begin(), items.size());
  std::vector<double> values;
  values.reserve(shape_numel(shape));
  for (const Tensor& t : items) {
    require_same_shape(t, items.front(), "stack");
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  Tensor out = t;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

ImageTensor ImageTensor::from_tensor(Tensor pixels, std::optional<std::string> label) {
  if (pixels.rank() != 3) {
    throw DimensionError("image must have shape (C,H,W), got " +
                         shape_to_string(pixels.shape()));
  }
  const std::size_t c = pixels.dim(0);
  if (c != 1 && c != 3) throw DimensionError("image must have 1 or 3 channels");
  if (pixels.dim(1) < 8 || pixels.dim(2) < 8) {
    throw DimensionError("image height and width must be at least 8");
  }
  if (!all_finite(pixels)) throw RangeError("image contains non-finite values");
  return ImageTensor{clamp(pixels, 0.0, 1.0), std::move(label)};
}

ImageTensor ImageTensor::clamped() const { return ImageTensor{clamp(pixels, 0.0, 1.0), label}; }

bool ImageTensor::in_range() const {
  return std::all_of(pixels.values().begin(), pixels.values().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

}  // namespace semstego

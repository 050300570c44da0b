#pragma once

#include <cstddef>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace semstego {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// 64-byte alignment keeps SIMD kernels on one code path, so results do not
// depend on where a buffer happens to land.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

// Dense row-major array of doubles. The last axis is contiguous.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  // Same values, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(double v);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  AlignedBuffer values_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor& operator+=(Tensor& a, const Tensor& b);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double mean(const Tensor& a);
bool all_finite(const Tensor& a);

// ||a - b|| / ||b||, with the denominator floored at 1e-300.
double relative_l2_error(const Tensor& a, const Tensor& b);

// Copies item `index` out of a batch tensor (B, ...) and back.
Tensor batch_item(const Tensor& batch, std::size_t index);
Tensor stack(const std::vector<Tensor>& items);

// Pixel-domain image, shape (C, H, W), values in [0, 1].
struct ImageTensor {
  Tensor pixels;
  std::optional<std::string> label;

  std::size_t channels() const { return pixels.dim(0); }
  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }

  // Enforces C in {1, 3} and H, W >= 8; clamps values into [0, 1].
  static ImageTensor from_tensor(Tensor pixels, std::optional<std::string> label = std::nullopt);
  ImageTensor clamped() const;
  bool in_range() const;
};

// VAE latent, shape (C', H', W').
struct LatentTensor {
  Tensor values;
};

Tensor clamp(const Tensor& t, double lo, double hi);

}  // namespace semstego

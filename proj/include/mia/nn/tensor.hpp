#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mia::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of 64-bit floats.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& vector() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  bool all_finite() const;
  double squared_norm() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Swaps the last two axes of a rank-3 tensor: (B, A, C) -> (B, C, A).
Tensor transpose_last2(const Tensor& input);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
/// Rows [begin, begin + count) of the leading axis.
Tensor slice_leading(const Tensor& input, std::size_t begin, std::size_t count);

}  // namespace mia::nn

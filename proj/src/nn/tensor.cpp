#include "mia/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mia/error.hpp"

namespace mia::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) {
      out += ", ";
    }
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("cannot add " + shape_string(other.shape_) + " to " + shape_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += other.data_[i];
  }
  return *this;
}

Tensor& Tensor::operator*=(double factor) {
  for (double& v : data_) {
    v *= factor;
  }
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::squared_norm() const {
  double total = 0.0;
  for (const double v : data_) {
    total += v * v;
  }
  return total;
}

Tensor transpose_last2(const Tensor& input) {
  if (input.rank() != 3) {
    throw ShapeError("transpose_last2 expects a rank-3 tensor, got " + shape_string(input.shape()));
  }
  const std::size_t batch = input.dim(0);
  const std::size_t rows = input.dim(1);
  const std::size_t cols = input.dim(2);
  Tensor out({batch, cols, rows});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = input.data() + b * rows * cols;
    double* dst = out.data() + b * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
  return out;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) {
    throw ShapeError("stack: no tensors given");
  }
  Shape shape = items.front().shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().size());
  for (const Tensor& item : items) {
    if (item.shape() != items.front().shape()) {
      throw ShapeError("stack: mismatched shapes " + shape_string(item.shape()) + " and " +
                       shape_string(items.front().shape()));
    }
    data.insert(data.end(), item.values().begin(), item.values().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(data));
}

Tensor slice_leading(const Tensor& input, std::size_t begin, std::size_t count) {
  if (input.rank() == 0 || begin + count > input.dim(0)) {
    throw ShapeError("slice_leading: range out of bounds for " + shape_string(input.shape()));
  }
  const std::size_t stride = input.size() / input.dim(0);
  Shape shape = input.shape();
  shape[0] = count;
  std::vector<double> data(input.data() + begin * stride, input.data() + (begin + count) * stride);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace mia::nn

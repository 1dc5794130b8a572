#include "socnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace socnet {

std::string to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (element_count(shape_) != data_.size()) {
    throw ShapeError(fmt::format("shape {} needs {} elements, got {}", to_string(shape_),
                                 element_count(shape_), data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError(fmt::format("axis {} out of range for shape {}", axis, to_string(shape_)));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  if (rank() != 2 || i >= shape_[0] || j >= shape_[1]) {
    throw ShapeError(fmt::format("index ({}, {}) invalid for shape {}", i, j, to_string(shape_)));
  }
  return data_[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const { return const_cast<Tensor&>(*this).at(i, j); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(fmt::format("elementwise shape mismatch: {} vs {}", to_string(a.shape()),
                                 to_string(b.shape())));
  }
  Tensor out(a.shape().empty() ? Tensor() : Tensor(a.shape()));
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  switch (op) {
    case ElementwiseOp::Add:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
      break;
    case ElementwiseOp::Sub:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
      break;
    case ElementwiseOp::Mul:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
      break;
  }
  return out;
}

void axpy(double scale, const Tensor& b, Tensor& a) {
  if (!a.same_shape(b)) {
    throw ShapeError(fmt::format("axpy shape mismatch: {} vs {}", to_string(a.shape()), to_string(b.shape())));
  }
  auto x = b.data();
  auto y = a.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
}

bool all_finite(const Tensor& t) noexcept {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

bool bit_identical(const Tensor& a, const Tensor& b) noexcept {
  if (!a.same_shape(b)) return false;
  return a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace socnet

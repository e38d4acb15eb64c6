// SPDX-License-Identifier: Apache-2.0
#include "fedseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fedseq/error.hpp"
#include "fedseq/rng.hpp"

namespace fedseq {
namespace {

std::size_t element_count(const Shape& shape) {
  require(!shape.empty(), ErrorCode::InvalidArgument, "tensor shape must have rank >= 1");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    require(d > 0, ErrorCode::InvalidArgument, "tensor dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) fail(ErrorCode::NonFinite, std::string(op) + " produced a non-finite value");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::ShapeMismatch,
         std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  const std::size_t n = element_count(shape_);
  require(n == data_.size(), ErrorCode::ShapeMismatch,
          "tensor of shape " + shape_string(shape_) + " needs " + std::to_string(n) + " values, got " +
              std::to_string(data_.size()));
  require(all_finite(), ErrorCode::NonFinite, "tensor values must be finite");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  require(rows.size() > 0, ErrorCode::InvalidArgument, "matrix needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    require(r.size() == cols, ErrorCode::ShapeMismatch, "ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape_.size(), ErrorCode::InvalidArgument, "axis out of range");
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require(rank() == 2, ErrorCode::ShapeMismatch, "expected a matrix, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require(rank() == 2, ErrorCode::ShapeMismatch, "expected a matrix, got " + shape_string(shape_));
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    fail(ErrorCode::ShapeMismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  }
  check_finite(out, "matmul");
  return out;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor elementwise(UnaryOp op, const Tensor& x) {
  Tensor out = x;
  auto values = out.data();
  switch (op) {
    case UnaryOp::Tanh:
      for (double& v : values) v = std::tanh(v);
      break;
    case UnaryOp::Sigmoid:
      for (double& v : values) v = sigmoid(v);
      break;
    case UnaryOp::Relu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      break;
  }
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "elementwise");
  Tensor out = a;
  auto dst = out.data();
  auto src = b.data();
  switch (op) {
    case BinaryOp::Add:
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      break;
    case BinaryOp::Sub:
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
      break;
    case BinaryOp::Mul:
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
      break;
  }
  check_finite(out, "elementwise");
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  require(std::isfinite(factor), ErrorCode::NonFinite, "scale factor must be finite");
  Tensor out = x;
  for (double& v : out.data()) v *= factor;
  check_finite(out, "scale");
  return out;
}

Tensor transpose(const Tensor& m) {
  const std::size_t r = m.rows();
  const std::size_t c = m.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

Tensor uniform_init(Rng& rng, const Shape& shape, double lo, double hi) {
  require(lo < hi, ErrorCode::InvalidArgument, "uniform_init: lo must be < hi");
  Tensor out(shape);
  for (double& v : out.data()) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace fedseq

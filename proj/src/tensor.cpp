#include "charfuse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "charfuse/error.hpp"

namespace charfuse {

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream out;
  out << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << ")";
  return out.str();
}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (numel_of(shape) != static_cast<int64_t>(data.size())) {
    fail(ErrorKind::Shape, "tensor data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_to_string(shape));
  }
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
  Tensor t;
  t.shape = shape;
  t.data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  return t;
}

Tensor Tensor::full(const std::vector<int>& shape, double value) {
  Tensor t;
  t.shape = shape;
  t.data.assign(static_cast<size_t>(numel_of(shape)), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

int64_t Tensor::numel() const { return numel_of(shape); }

int Tensor::rows() const {
  if (shape.empty()) return 0;
  int64_t r = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return static_cast<int>(r);
}

int Tensor::cols() const { return shape.empty() ? 0 : shape.back(); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

}  // namespace charfuse

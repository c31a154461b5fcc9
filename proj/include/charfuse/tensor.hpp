#ifndef CHARFUSE_TENSOR_HPP
#define CHARFUSE_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace charfuse {

// Dense row-major tensor of 64-bit floats. Everything in the model is 1-D
// (biases, gains) or 2-D (rows x cols); higher ranks are not needed.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> shape_, std::vector<double> data_);

  static Tensor zeros(const std::vector<int>& shape);
  static Tensor full(const std::vector<int>& shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);  // shape {1, n}

  int64_t numel() const;

  // 2-D view: rows = product of leading dims, cols = last dim.
  int rows() const;
  int cols() const;

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols() + c];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

int64_t numel_of(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace charfuse

#endif  // CHARFUSE_TENSOR_HPP

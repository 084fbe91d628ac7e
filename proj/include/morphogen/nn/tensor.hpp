#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace morphogen::nn {

/// Dense row-major tensor of doubles. Rank 1 (vector) and rank 2 (matrix)
/// are the only shapes the models need.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-1 tensors report rows() == length, cols() == 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// W x + b for a matrix W[m x n], x[n], b[m].
Tensor affine(const Tensor& W, const Tensor& x, const Tensor& b);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> v);

/// log(sum(exp(v))) over the entries with finite values; -inf when none are.
double log_sum_exp(std::span<const double> v);

}  // namespace morphogen::nn

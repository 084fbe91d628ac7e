#include "morphogen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "morphogen/error.hpp"

namespace morphogen::nn {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor of shape " + shape_string() + " cannot hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape_[i]);
  }
  return out + "]";
}

Tensor affine(const Tensor& W, const Tensor& x, const Tensor& b) {
  if (W.rank() != 2 || x.rank() != 1 || b.rank() != 1 || W.cols() != x.size() ||
      W.rows() != b.size()) {
    throw DimensionError("affine: cannot combine W" + W.shape_string() + " with x" +
                         x.shape_string() + " and b" + b.shape_string());
  }
  Tensor out = b;
  const std::size_t n = W.cols();
  for (std::size_t r = 0; r < W.rows(); ++r) {
    const double* row = W.raw() + r * n;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw DimensionError("softmax of an empty vector");
  const double top = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double log_sum_exp(std::span<const double> v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double total = 0.0;
  for (double x : v) {
    if (std::isfinite(x)) total += std::exp(x - top);
  }
  return top + std::log(total);
}

}  // namespace morphogen::nn

#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphogen/nn/tensor.hpp"

namespace morphogen::nn {

/// A named trainable tensor. Gradients live outside the parameter (see
/// Gradients) so that read-only models can be shared across threads.
struct Parameter {
  std::string name;
  Tensor value;

  bool operator==(const Parameter& other) const = default;
};

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  bool valid() const { return id_ != kInvalid; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Tape;
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  explicit Var(std::uint32_t id) : id_(id) {}
  std::uint32_t id_ = kInvalid;
};

/// d(loss)/d(parameter) for every parameter touched by a backward pass.
class Gradients {
 public:
  /// Gradient for p, or nullptr if p was not reached.
  const Tensor* find(const Parameter& p) const;
  /// Gradient for p; an all-zero tensor of p's shape if p was not reached.
  Tensor get(const Parameter& p) const;

  Tensor& slot(const Parameter& p);
  std::size_t size() const { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

/// Reverse-mode differentiation tape. Operations evaluate eagerly and
/// record enough context to replay their local derivatives in reverse.
/// Values live in one arena, so reuse a tape with clear() inside hot loops.
class Tape {
 public:
  explicit Tape(bool differentiable = true) : differentiable_(differentiable) {}

  void clear();
  bool differentiable() const { return differentiable_; }

  Var constant(std::span<const double> values);
  Var constant(std::initializer_list<double> values);
  Var zeros(std::size_t n);
  /// The whole parameter tensor as a flat vector.
  Var parameter(const Parameter& p);
  /// One row of a rank-2 parameter (embedding lookup).
  Var lookup(const Parameter& table, std::size_t row);

  Var matvec(const Parameter& W, Var x);
  Var affine(const Parameter& W, Var x, const Parameter& b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var sum(std::span<const Var> parts);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softplus(Var a);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts);
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var softmax(Var a);
  /// sum_t weights[t] * items[t]
  Var weighted_sum(Var weights, std::span<const Var> items);
  /// scalar * c for a constant vector c.
  Var scale(Var scalar, std::span<const double> c);
  /// Log-softmax restricted to entries with allowed[i] != 0; the others are -inf.
  Var log_softmax(Var logits, std::span<const double> allowed);
  /// -log softmax(logits)[target], normalising over allowed entries only.
  Var pick_nll(Var logits, std::span<const double> allowed, std::size_t target);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradients of a scalar node with respect to every parameter it reaches.
  Gradients backward(Var loss);

 private:
  enum class Op : std::uint8_t {
    Constant,
    Parameter,
    Lookup,
    MatVec,
    Affine,
    Add,
    Mul,
    Sum,
    Sigmoid,
    Tanh,
    Softplus,
    Concat,
    Slice,
    Softmax,
    WeightedSum,
    Scale,
    LogSoftmax,
    PickNll,
  };

  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    Op op;
    std::uint32_t offset = 0;
    std::uint32_t size = 0;
    std::uint32_t a = kNone;
    std::uint32_t b = kNone;
    std::uint32_t list_begin = 0;
    std::uint32_t list_size = 0;
    std::uint32_t param = kNone;
    std::uint32_t param_b = kNone;
    std::uint32_t aux = 0;
    std::uint32_t aux2 = 0;
  };

  Var push(Node node);
  std::uint32_t alloc(std::size_t n);
  std::uint32_t store_constants(std::span<const double> values);
  std::uint32_t store_list(std::span<const Var> vars);
  std::uint32_t register_param(const Parameter& p);
  const Node& node(Var v) const;
  double* val(std::uint32_t node_id) { return values_.data() + nodes_[node_id].offset; }
  const double* val(std::uint32_t node_id) const { return values_.data() + nodes_[node_id].offset; }

  bool differentiable_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> constants_;
  std::vector<std::uint32_t> lists_;
  std::vector<const Parameter*> params_;
  std::unordered_map<const Parameter*, std::uint32_t> param_index_;
};

}  // namespace morphogen::nn

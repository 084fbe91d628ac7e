#include "morphogen/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "morphogen/error.hpp"

namespace morphogen::nn {

namespace {

double sigmoid_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus_of(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

const Tensor* Gradients::find(const Parameter& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor Gradients::get(const Parameter& p) const {
  if (const Tensor* g = find(p)) return *g;
  return Tensor(p.value.shape());
}

Tensor& Gradients::slot(const Parameter& p) {
  auto it = grads_.find(&p);
  if (it == grads_.end()) it = grads_.emplace(&p, Tensor(p.value.shape())).first;
  return it->second;
}

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  constants_.clear();
  lists_.clear();
  params_.clear();
  param_index_.clear();
}

Var Tape::push(Node node) {
  nodes_.push_back(node);
  return Var(static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::uint32_t Tape::alloc(std::size_t n) {
  const auto offset = static_cast<std::uint32_t>(values_.size());
  values_.resize(values_.size() + n);
  return offset;
}

std::uint32_t Tape::store_constants(std::span<const double> values) {
  const auto offset = static_cast<std::uint32_t>(constants_.size());
  constants_.insert(constants_.end(), values.begin(), values.end());
  return offset;
}

std::uint32_t Tape::store_list(std::span<const Var> vars) {
  const auto offset = static_cast<std::uint32_t>(lists_.size());
  for (Var v : vars) lists_.push_back(v.id());
  return offset;
}

std::uint32_t Tape::register_param(const Parameter& p) {
  auto [it, inserted] = param_index_.emplace(&p, static_cast<std::uint32_t>(params_.size()));
  if (inserted) params_.push_back(&p);
  return it->second;
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id() >= nodes_.size()) throw ModelError("variable does not belong to this tape");
  return nodes_[v.id()];
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = node(v);
  return {values_.data() + n.offset, n.size};
}

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.size != 1) throw DimensionError("expected a scalar, got size " + std::to_string(n.size));
  return values_[n.offset];
}

std::size_t Tape::size(Var v) const { return node(v).size; }

Var Tape::constant(std::span<const double> values) {
  Node n{Op::Constant};
  n.size = static_cast<std::uint32_t>(values.size());
  n.offset = alloc(values.size());
  std::copy(values.begin(), values.end(), values_.begin() + n.offset);
  return push(n);
}

Var Tape::constant(std::initializer_list<double> values) {
  return constant(std::span<const double>(values.begin(), values.size()));
}

Var Tape::zeros(std::size_t n) {
  Node node_{Op::Constant};
  node_.size = static_cast<std::uint32_t>(n);
  node_.offset = alloc(n);
  return push(node_);
}

Var Tape::parameter(const Parameter& p) {
  Node n{Op::Parameter};
  n.param = register_param(p);
  n.size = static_cast<std::uint32_t>(p.value.size());
  n.offset = alloc(n.size);
  std::copy(p.value.data().begin(), p.value.data().end(), values_.begin() + n.offset);
  return push(n);
}

Var Tape::lookup(const Parameter& table, std::size_t row) {
  require(table.value.rank() == 2, "lookup into non-matrix parameter " + table.name);
  if (row >= table.value.rows()) {
    throw ModelError("row " + std::to_string(row) + " out of range for " + table.name +
                     table.value.shape_string());
  }
  Node n{Op::Lookup};
  n.param = register_param(table);
  n.aux = static_cast<std::uint32_t>(row);
  n.size = static_cast<std::uint32_t>(table.value.cols());
  n.offset = alloc(n.size);
  const double* src = table.value.raw() + row * table.value.cols();
  std::copy(src, src + n.size, values_.begin() + n.offset);
  return push(n);
}

Var Tape::matvec(const Parameter& W, Var x) {
  const Node& xn = node(x);
  require(W.value.rank() == 2 && W.value.cols() == xn.size,
          "matvec: " + W.name + W.value.shape_string() + " cannot multiply vector of size " +
              std::to_string(xn.size));
  Node n{Op::MatVec};
  n.param = register_param(W);
  n.a = x.id();
  n.size = static_cast<std::uint32_t>(W.value.rows());
  n.offset = alloc(n.size);
  const std::size_t cols = W.value.cols();
  const double* w = W.value.raw();
  const double* xv = val(x.id());
  double* out = values_.data() + n.offset;
  for (std::size_t r = 0; r < n.size; ++r) {
    const double* row = w + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xv[c];
    out[r] = acc;
  }
  return push(n);
}

Var Tape::affine(const Parameter& W, Var x, const Parameter& b) {
  const Node& xn = node(x);
  require(W.value.rank() == 2 && W.value.cols() == xn.size && b.value.size() == W.value.rows(),
          "affine: " + W.name + W.value.shape_string() + " with x[" + std::to_string(xn.size) +
              "] and " + b.name + b.value.shape_string());
  Node n{Op::Affine};
  n.param = register_param(W);
  n.param_b = register_param(b);
  n.a = x.id();
  n.size = static_cast<std::uint32_t>(W.value.rows());
  n.offset = alloc(n.size);
  const std::size_t cols = W.value.cols();
  const double* w = W.value.raw();
  const double* bias = b.value.raw();
  const double* xv = val(x.id());
  double* out = values_.data() + n.offset;
  for (std::size_t r = 0; r < n.size; ++r) {
    const double* row = w + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xv[c];
    out[r] = acc + bias[r];
  }
  return push(n);
}

Var Tape::add(Var a, Var b) {
  const std::uint32_t size = node(a).size;
  require(size == node(b).size, "add: sizes " + std::to_string(size) + " and " +
                                    std::to_string(node(b).size) + " differ");
  Node n{Op::Add};
  n.a = a.id();
  n.b = b.id();
  n.size = size;
  n.offset = alloc(size);
  const double* av = val(a.id());
  const double* bv = val(b.id());
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < size; ++i) out[i] = av[i] + bv[i];
  return push(n);
}

Var Tape::mul(Var a, Var b) {
  const std::uint32_t size = node(a).size;
  require(size == node(b).size, "mul: sizes " + std::to_string(size) + " and " +
                                    std::to_string(node(b).size) + " differ");
  Node n{Op::Mul};
  n.a = a.id();
  n.b = b.id();
  n.size = size;
  n.offset = alloc(size);
  const double* av = val(a.id());
  const double* bv = val(b.id());
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < size; ++i) out[i] = av[i] * bv[i];
  return push(n);
}

Var Tape::sum(std::span<const Var> parts) {
  require(!parts.empty(), "sum of no operands");
  const std::uint32_t size = node(parts[0]).size;
  for (Var p : parts) require(node(p).size == size, "sum: operand sizes differ");
  Node n{Op::Sum};
  n.list_begin = store_list(parts);
  n.list_size = static_cast<std::uint32_t>(parts.size());
  n.size = size;
  n.offset = alloc(size);
  double* out = values_.data() + n.offset;
  for (Var p : parts) {
    const double* pv = val(p.id());
    for (std::size_t i = 0; i < size; ++i) out[i] += pv[i];
  }
  return push(n);
}

Var Tape::sigmoid(Var a) {
  Node n{Op::Sigmoid};
  n.a = a.id();
  n.size = node(a).size;
  n.offset = alloc(n.size);
  const double* av = val(a.id());
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < n.size; ++i) out[i] = sigmoid_of(av[i]);
  return push(n);
}

Var Tape::tanh(Var a) {
  Node n{Op::Tanh};
  n.a = a.id();
  n.size = node(a).size;
  n.offset = alloc(n.size);
  const double* av = val(a.id());
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < n.size; ++i) out[i] = std::tanh(av[i]);
  return push(n);
}

Var Tape::softplus(Var a) {
  Node n{Op::Softplus};
  n.a = a.id();
  n.size = node(a).size;
  n.offset = alloc(n.size);
  const double* av = val(a.id());
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < n.size; ++i) out[i] = softplus_of(av[i]);
  return push(n);
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat of no operands");
  std::size_t size = 0;
  for (Var p : parts) size += node(p).size;
  Node n{Op::Concat};
  n.list_begin = store_list(parts);
  n.list_size = static_cast<std::uint32_t>(parts.size());
  n.size = static_cast<std::uint32_t>(size);
  n.offset = alloc(size);
  double* out = values_.data() + n.offset;
  for (Var p : parts) {
    const Node& pn = nodes_[p.id()];
    std::copy_n(values_.data() + pn.offset, pn.size, out);
    out += pn.size;
  }
  return push(n);
}

Var Tape::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  require(offset + length <= node(a).size, "slice out of range");
  Node n{Op::Slice};
  n.a = a.id();
  n.aux = static_cast<std::uint32_t>(offset);
  n.size = static_cast<std::uint32_t>(length);
  n.offset = alloc(length);
  std::copy_n(val(a.id()) + offset, length, values_.data() + n.offset);
  return push(n);
}

Var Tape::softmax(Var a) {
  require(node(a).size > 0, "softmax of an empty vector");
  Node n{Op::Softmax};
  n.a = a.id();
  n.size = node(a).size;
  n.offset = alloc(n.size);
  const auto probs = nn::softmax(value(a));
  std::copy(probs.begin(), probs.end(), values_.begin() + n.offset);
  return push(n);
}

Var Tape::weighted_sum(Var weights, std::span<const Var> items) {
  require(node(weights).size == items.size() && !items.empty(),
          "weighted_sum: weight count does not match item count");
  const std::uint32_t size = node(items[0]).size;
  for (Var it : items) require(node(it).size == size, "weighted_sum: item sizes differ");
  Node n{Op::WeightedSum};
  n.a = weights.id();
  n.list_begin = store_list(items);
  n.list_size = static_cast<std::uint32_t>(items.size());
  n.size = size;
  n.offset = alloc(size);
  const double* w = val(weights.id());
  double* out = values_.data() + n.offset;
  for (std::size_t t = 0; t < items.size(); ++t) {
    const double* iv = val(items[t].id());
    for (std::size_t i = 0; i < size; ++i) out[i] += w[t] * iv[i];
  }
  return push(n);
}

Var Tape::scale(Var scalar, std::span<const double> c) {
  require(node(scalar).size == 1, "scale: multiplier must be a scalar");
  Node n{Op::Scale};
  n.a = scalar.id();
  n.aux = store_constants(c);
  n.size = static_cast<std::uint32_t>(c.size());
  n.offset = alloc(n.size);
  const double s = values_[nodes_[scalar.id()].offset];
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = s * c[i];
  return push(n);
}

Var Tape::log_softmax(Var logits, std::span<const double> allowed) {
  const std::uint32_t size = node(logits).size;
  require(allowed.size() == size, "log_softmax: mask size differs from logits");
  Node n{Op::LogSoftmax};
  n.a = logits.id();
  n.aux = store_constants(allowed);
  n.size = size;
  n.offset = alloc(size);
  const double* z = val(logits.id());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size; ++i)
    if (allowed[i] != 0.0) top = std::max(top, z[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i)
    if (allowed[i] != 0.0) total += std::exp(z[i] - top);
  const double lse = top + std::log(total);
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < size; ++i)
    out[i] = allowed[i] != 0.0 ? z[i] - lse : -std::numeric_limits<double>::infinity();
  return push(n);
}

Var Tape::pick_nll(Var logits, std::span<const double> allowed, std::size_t target) {
  const std::uint32_t size = node(logits).size;
  require(allowed.size() == size, "pick_nll: mask size differs from logits");
  if (target >= size || allowed[target] == 0.0) {
    throw ModelError("pick_nll: target " + std::to_string(target) + " is not an allowed output");
  }
  Node n{Op::PickNll};
  n.a = logits.id();
  n.aux = store_constants(allowed);
  n.aux2 = static_cast<std::uint32_t>(target);
  n.size = 1;
  n.offset = alloc(1);
  const double* z = val(logits.id());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size; ++i)
    if (allowed[i] != 0.0) top = std::max(top, z[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i)
    if (allowed[i] != 0.0) total += std::exp(z[i] - top);
  values_[n.offset] = top + std::log(total) - z[target];
  return push(n);
}

Gradients Tape::backward(Var loss) {
  if (!differentiable_) throw ModelError("backward on a tape recorded without differentiation");
  if (node(loss).size != 1) {
    throw DimensionError("backward: loss must be a scalar, got size " +
                         std::to_string(node(loss).size));
  }
  std::vector<double> grads(values_.size(), 0.0);
  std::vector<Tensor*> param_grads(params_.size(), nullptr);
  Gradients result;
  for (std::size_t i = 0; i < params_.size(); ++i) param_grads[i] = &result.slot(*params_[i]);

  grads[nodes_[loss.id()].offset] = 1.0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    const double* g = grads.data() + n.offset;
    const double* y = values_.data() + n.offset;
    auto ga = [&]() { return grads.data() + nodes_[n.a].offset; };
    auto va = [&]() { return values_.data() + nodes_[n.a].offset; };

    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Parameter: {
        double* pg = param_grads[n.param]->raw();
        for (std::size_t i = 0; i < n.size; ++i) pg[i] += g[i];
        break;
      }
      case Op::Lookup: {
        double* pg = param_grads[n.param]->raw() + static_cast<std::size_t>(n.aux) * n.size;
        for (std::size_t i = 0; i < n.size; ++i) pg[i] += g[i];
        break;
      }
      case Op::MatVec:
      case Op::Affine: {
        const Tensor& W = params_[n.param]->value;
        const std::size_t cols = W.cols();
        const double* w = W.raw();
        double* gw = param_grads[n.param]->raw();
        const double* x = va();
        double* gx = ga();
        for (std::size_t r = 0; r < n.size; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const double* row = w + r * cols;
          double* grow = gw + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            grow[c] += gr * x[c];
            gx[c] += gr * row[c];
          }
        }
        if (n.op == Op::Affine) {
          double* gb = param_grads[n.param_b]->raw();
          for (std::size_t r = 0; r < n.size; ++r) gb[r] += g[r];
        }
        break;
      }
      case Op::Add: {
        double* g1 = ga();
        double* g2 = grads.data() + nodes_[n.b].offset;
        for (std::size_t i = 0; i < n.size; ++i) {
          g1[i] += g[i];
          g2[i] += g[i];
        }
        break;
      }
      case Op::Mul: {
        double* g1 = ga();
        double* g2 = grads.data() + nodes_[n.b].offset;
        const double* v1 = va();
        const double* v2 = values_.data() + nodes_[n.b].offset;
        for (std::size_t i = 0; i < n.size; ++i) {
          g1[i] += g[i] * v2[i];
          g2[i] += g[i] * v1[i];
        }
        break;
      }
      case Op::Sum: {
        for (std::size_t k = 0; k < n.list_size; ++k) {
          double* gp = grads.data() + nodes_[lists_[n.list_begin + k]].offset;
          for (std::size_t i = 0; i < n.size; ++i) gp[i] += g[i];
        }
        break;
      }
      case Op::Sigmoid: {
        double* g1 = ga();
        for (std::size_t i = 0; i < n.size; ++i) g1[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Tanh: {
        double* g1 = ga();
        for (std::size_t i = 0; i < n.size; ++i) g1[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::Softplus: {
        double* g1 = ga();
        const double* x = va();
        for (std::size_t i = 0; i < n.size; ++i) g1[i] += g[i] * sigmoid_of(x[i]);
        break;
      }
      case Op::Concat: {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n.list_size; ++k) {
          const Node& part = nodes_[lists_[n.list_begin + k]];
          double* gp = grads.data() + part.offset;
          for (std::size_t i = 0; i < part.size; ++i) gp[i] += g[pos + i];
          pos += part.size;
        }
        break;
      }
      case Op::Slice: {
        double* g1 = ga() + n.aux;
        for (std::size_t i = 0; i < n.size; ++i) g1[i] += g[i];
        break;
      }
      case Op::Softmax: {
        double* g1 = ga();
        double dot = 0.0;
        for (std::size_t i = 0; i < n.size; ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < n.size; ++i) g1[i] += y[i] * (g[i] - dot);
        break;
      }
      case Op::WeightedSum: {
        double* gw = ga();
        const double* w = va();
        for (std::size_t t = 0; t < n.list_size; ++t) {
          const Node& item = nodes_[lists_[n.list_begin + t]];
          const double* iv = values_.data() + item.offset;
          double* gi = grads.data() + item.offset;
          double dot = 0.0;
          for (std::size_t i = 0; i < n.size; ++i) {
            dot += g[i] * iv[i];
            gi[i] += w[t] * g[i];
          }
          gw[t] += dot;
        }
        break;
      }
      case Op::Scale: {
        const double* c = constants_.data() + n.aux;
        double acc = 0.0;
        for (std::size_t i = 0; i < n.size; ++i) acc += g[i] * c[i];
        ga()[0] += acc;
        break;
      }
      case Op::LogSoftmax: {
        const double* allowed = constants_.data() + n.aux;
        double* g1 = ga();
        double total = 0.0;
        for (std::size_t i = 0; i < n.size; ++i)
          if (allowed[i] != 0.0) total += g[i];
        for (std::size_t i = 0; i < n.size; ++i)
          if (allowed[i] != 0.0) g1[i] += g[i] - std::exp(y[i]) * total;
        break;
      }
      case Op::PickNll: {
        const Node& zn = nodes_[n.a];
        const double* allowed = constants_.data() + n.aux;
        const double* z = values_.data() + zn.offset;
        double* g1 = grads.data() + zn.offset;
        const double lse = y[0] + z[n.aux2];
        for (std::size_t i = 0; i < zn.size; ++i) {
          if (allowed[i] == 0.0) continue;
          g1[i] += g[0] * std::exp(z[i] - lse);
        }
        g1[n.aux2] -= g[0];
        break;
      }
    }
  }
  return result;
}

}  // namespace morphogen::nn

#pragma once

// Plain-loop re-implementations of the model's forward computations, used as
// oracles for the tape-based code. Nothing here touches nn::Tape. The scalar
// type is a parameter so that finite differences can be taken in extended
// precision.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "morphogen/model.hpp"

namespace ref {

template <class T>
using VecT = std::vector<T>;
using Vec = VecT<double>;

template <class T>
T sigmoid(T z) { return T(1) / (T(1) + std::exp(-z)); }

template <class T>
VecT<T> matvec(const morphogen::nn::Tensor& W, const VecT<T>& x) {
  VecT<T> y(W.rows(), T(0));
  for (std::size_t r = 0; r < W.rows(); ++r)
    for (std::size_t c = 0; c < W.cols(); ++c) y[r] += W.at(r, c) * x[c];
  return y;
}

template <class T>
VecT<T> concat(std::initializer_list<VecT<T>> parts) {
  VecT<T> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

template <class T = double>
VecT<T> row(const morphogen::nn::Tensor& M, std::size_t r) {
  return VecT<T>(M.raw() + r * M.cols(), M.raw() + (r + 1) * M.cols());
}

template <class T>
struct StateT {
  VecT<T> h, c;
};
using State = StateT<double>;

template <class T>
StateT<T> lstm(const morphogen::LstmParams& p, const VecT<T>& x, const StateT<T>& prev) {
  const std::size_t n = p.hidden_size();
  VecT<T> z = matvec(p.W_x.value, x);
  const VecT<T> zh = matvec(p.W_h.value, prev.h);
  StateT<T> s{VecT<T>(n), VecT<T>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const T i = sigmoid<T>(z[k] + zh[k] + p.b.value[k]);
    const T f = sigmoid<T>(z[n + k] + zh[n + k] + p.b.value[n + k]);
    const T o = sigmoid<T>(z[2 * n + k] + zh[2 * n + k] + p.b.value[2 * n + k]);
    const T g = std::tanh(z[3 * n + k] + zh[3 * n + k] + p.b.value[3 * n + k]);
    s.c[k] = f * prev.c[k] + i * g;
    s.h[k] = o * std::tanh(s.c[k]);
  }
  return s;
}

/// Masked log-softmax over the output logits (BOS and EPS excluded).
template <class T>
VecT<T> masked_log_softmax(VecT<T> logits) {
  const T ninf = -std::numeric_limits<T>::infinity();
  logits[morphogen::CharVocab::kBos] = ninf;
  logits[morphogen::CharVocab::kEps] = ninf;
  const T m = *std::max_element(logits.begin(), logits.end());
  T s = 0;
  for (T v : logits)
    if (v != ninf) s += std::exp(v - m);
  for (T& v : logits)
    if (v != ninf) v = v - m - std::log(s);
  return logits;
}

/// Decoder that replays the model one step at a time.
template <class T = double>
class Decoder {
  using V = VecT<T>;

 public:
  Decoder(const morphogen::ModelParams& m, std::span<const int> x) : m_(m), x_(x.begin(), x.end()) {
    using morphogen::Variant;
    const std::size_t n = m.config.hidden;
    const Variant v = m.config.variant;
    state_ = {V(n, T(0)), V(n, T(0))};
    if (v == Variant::NoEncoder) return;
    const std::size_t len = x_.size();
    std::vector<StateT<T>> fwd, bwd(len);
    StateT<T> s = state_;
    for (std::size_t t = 0; t < len; ++t) fwd.push_back(s = lstm(m.encoder->fwd, emb(x_[t]), s));
    s = state_;
    for (std::size_t t = len; t-- > 0;) bwd[t] = s = lstm(m.encoder->bwd, emb(x_[t]), s);
    if (v == Variant::Attention) {
      for (std::size_t t = 0; t < len; ++t) hidden_.push_back(concat<T>({fwd[t].h, bwd[t].h}));
      return;
    }
    e_ = matvec(m.decoder.trans_W.value, concat<T>({fwd.back().h, bwd.front().h}));
    for (std::size_t k = 0; k < n; ++k) e_[k] += m.decoder.trans_b.value[k];
    if (v == Variant::PlainEncDec) state_.h = e_;
  }

  /// Log-distribution of the next symbol given the previous output.
  V step(int y_prev) {
    using morphogen::Variant;
    const int x_t = t_ < x_.size() ? x_[t_] : morphogen::CharVocab::kEps;
    V input;
    switch (m_.config.variant) {
      case Variant::Full: input = concat<T>({e_, emb(y_prev), emb(x_t)}); break;
      case Variant::PlainEncDec: input = emb(y_prev); break;
      case Variant::NoEncoder: input = concat<T>({emb(y_prev), emb(x_t)}); break;
      case Variant::Attention: input = concat<T>({context(), emb(y_prev)}); break;
    }
    state_ = lstm(m_.decoder.lstm, input, state_);
    V logits = matvec(m_.decoder.out_W.value, state_.h);
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += m_.decoder.out_b.value[k];
    ++t_;
    return masked_log_softmax(logits);
  }

 private:
  V emb(int id) const { return row<T>(m_.encoder->embedding.value, static_cast<std::size_t>(id)); }

  V context() const {
    const auto& d = m_.decoder;
    const V q = matvec(d.att_dec.value, state_.h);
    V scores;
    for (const V& h : hidden_) {
      const V k = matvec(d.att_enc.value, h);
      T s = 0;
      for (std::size_t i = 0; i < k.size(); ++i) s += d.att_v.value[i] * std::tanh(k[i] + q[i]);
      scores.push_back(s);
    }
    const T m = *std::max_element(scores.begin(), scores.end());
    T z = 0;
    for (T& s : scores) z += (s = std::exp(s - m));
    V ctx(hidden_.front().size(), T(0));
    for (std::size_t t = 0; t < hidden_.size(); ++t)
      for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] += scores[t] / z * hidden_[t][i];
    return ctx;
  }

  const morphogen::ModelParams& m_;
  std::vector<int> x_;
  V e_;
  std::vector<V> hidden_;
  StateT<T> state_;
  std::size_t t_ = 0;
};

/// Teacher-forced -log p(y EOS | x).
template <class T = double>
T loss(const morphogen::ModelParams& m, std::span<const int> x, std::span<const int> y) {
  Decoder<T> dec(m, x);
  T total = 0;
  int prev = morphogen::CharVocab::kBos;
  for (std::size_t t = 0; t <= y.size(); ++t) {
    const int target = t < y.size() ? y[t] : morphogen::CharVocab::kEos;
    total -= dec.step(prev)[target];
    prev = target;
  }
  return total;
}

/// Central-difference gradient check of the tape gradients against the
/// reference loss evaluated in extended precision. Same relative error as
/// nn::gradient_check.
inline double extended_gradient_check(morphogen::ModelParams& m, std::span<const int> x,
                                      std::span<const int> y, double h) {
  morphogen::nn::Tape tape;
  const auto grads = tape.backward(morphogen::nll_loss(tape, m, x, y));
  double worst = 0.0;
  for (morphogen::nn::Parameter* p : m.parameters()) {
    const morphogen::nn::Tensor g = grads.get(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const long double up = loss<long double>(m, x, y);
      const long double step_up = static_cast<long double>(p->value[i]) - saved;
      p->value[i] = saved - h;
      const long double down = loss<long double>(m, x, y);
      const long double step_down = saved - static_cast<long double>(p->value[i]);
      p->value[i] = saved;
      const double numeric = static_cast<double>((up - down) / (step_up + step_down));
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(g[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ref

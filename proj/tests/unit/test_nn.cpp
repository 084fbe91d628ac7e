#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "morphogen/error.hpp"
#include "morphogen/nn/adadelta.hpp"
#include "morphogen/nn/gradient_check.hpp"
#include "morphogen/nn/tape.hpp"
#include "morphogen/nn/tensor.hpp"

using namespace morphogen;
using namespace morphogen::nn;

namespace {

Parameter random_param(const std::string& name, std::vector<std::size_t> shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return {name, t};
}

}  // namespace

TEST(Affine, IdentityWeights) {
  const auto y = affine(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({3, 4}), Tensor::vector({0, 0}));
  EXPECT_EQ(y, Tensor::vector({3, 4}));
}

TEST(Affine, ZeroWeightsGiveBias) {
  const auto y = affine(Tensor::matrix(2, 2, {0, 0, 0, 0}), Tensor::vector({3, 4}), Tensor::vector({1, 2}));
  EXPECT_EQ(y, Tensor::vector({1, 2}));
}

TEST(Affine, HandMultiply) {
  const auto y = affine(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::vector({1, 1}), Tensor::vector({0, 1}));
  EXPECT_EQ(y, Tensor::vector({3, 8}));
}

TEST(Affine, ShapeMismatchNamesBothShapes) {
  try {
    affine(Tensor::matrix(2, 3, std::vector<double>(6, 0.0)), Tensor::vector({1, 2}), Tensor::vector({0, 0}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
}

TEST(Affine, TapeMatchesTensorAffine) {
  std::mt19937_64 rng(3);
  const Parameter W = random_param("W", {3, 4}, rng);
  const Parameter b = random_param("b", {3}, rng);
  const std::vector<double> x = {0.5, -1.0, 2.0, 0.25};
  Tape tape;
  const auto v = tape.value(tape.affine(W, tape.constant(x), b));
  const auto expected = affine(W.value, Tensor::vector(x), b.value);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(v[i], expected[i]);
}

TEST(Softmax, UniformForEqualEntries) {
  const auto p = softmax(std::vector<double>{0, 0, 0});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoAgainstZero) {
  const auto p = softmax(std::vector<double>{std::log(2.0), 0.0});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  const std::vector<double> v = {0.3, -1.2, 4.0, 2.5};
  auto shifted = v;
  for (double& x : shifted) x += 123.456;
  const auto a = softmax(v);
  const auto b = softmax(shifted);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
}

TEST(Softmax, SumsToOneOnWideRandomVectors) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 17);
    for (double& x : v) x = u(rng);
    const auto p = softmax(v);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Softmax, EmptyThrows) { EXPECT_THROW(softmax(std::vector<double>{}), Error); }

TEST(Backward, LinearLossGradientIsInput) {
  // loss = sum(w * x)
  Parameter w{"w", Tensor::vector({0.3, -0.7, 1.1})};
  const std::vector<double> x = {2.0, -1.0, 0.5};
  const Parameter ones{"ones", Tensor::matrix(1, 3, {1, 1, 1})};
  Tape tape;
  const Var loss = tape.matvec(ones, tape.mul(tape.parameter(w), tape.constant(x)));
  const Tensor g = tape.backward(loss).get(w);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], x[i]);
}

TEST(Backward, UnreachedParameterGetsZero) {
  Parameter used{"used", Tensor::matrix(1, 2, {1.0, 2.0})};
  Parameter unused{"unused", Tensor::vector({5.0, 6.0})};
  Tape tape;
  const Var loss = tape.matvec(used, tape.constant({1.0, 1.0}));
  const auto grads = tape.backward(loss);
  EXPECT_EQ(grads.find(unused), nullptr);
  EXPECT_EQ(grads.get(unused), Tensor({2}, 0.0));
}

TEST(Backward, NonScalarLossThrows) {
  Parameter p{"p", Tensor::vector({1.0, 2.0})};
  Tape tape;
  const Var v = tape.tanh(tape.parameter(p));
  EXPECT_THROW(tape.backward(v), Error);
}

TEST(Backward, NonDifferentiableTapeThrows) {
  Parameter p{"p", Tensor::matrix(1, 1, {1.0})};
  Tape tape(false);
  const Var v = tape.matvec(p, tape.constant({2.0}));
  EXPECT_THROW(tape.backward(v), Error);
}

TEST(Backward, ComposedGraphMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Parameter W = random_param("W", {4, 3}, rng);
  Parameter b = random_param("b", {4}, rng);
  Parameter V = random_param("V", {5, 4}, rng);
  Parameter table = random_param("table", {6, 3}, rng);
  Parameter s = random_param("s", {1}, rng);
  const std::vector<double> allowed = {1, 0, 1, 1, 1};
  const std::vector<double> bias = {0.1, 0.2, -0.3, 0.4, 0.5};
  const Parameter pick{"pick", Tensor::matrix(1, 5, {0, 0, 0.5, 0, -0.25})};
  auto build = [&](Tape& t) {
    const Var x = t.lookup(table, 2);
    const Var h1 = t.tanh(t.affine(W, x, b));
    const Var h2 = t.sigmoid(t.affine(W, t.lookup(table, 4), b));
    const Var items[] = {h1, h2, t.mul(h1, h2)};
    const Var w = t.softmax(t.concat({t.slice(h1, 0, 1), t.slice(h2, 1, 1), t.slice(h1, 3, 1)}));
    const Var mix = t.weighted_sum(w, items);
    Var logits = t.matvec(V, mix);
    logits = t.add(logits, t.scale(t.softplus(t.parameter(s)), bias));
    const Var a = t.pick_nll(logits, allowed, 3);
    const Var ls = t.log_softmax(logits, allowed);
    const Var parts[] = {a, t.matvec(pick, ls)};
    return t.sum(parts);
  };
  Parameter* params[] = {&W, &b, &V, &table, &s};
  const auto r = gradient_check(params, build, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-6) << r.worst_parameter << "[" << r.worst_index << "]";
  EXPECT_EQ(r.entries_checked, 12u + 4u + 20u + 18u + 1u);
}

TEST(Backward, ReplayIsDeterministic) {
  std::mt19937_64 rng(9);
  Parameter W = random_param("W", {3, 3}, rng);
  auto run = [&] {
    Tape t;
    Var h = t.constant({0.1, 0.2, 0.3});
    for (int i = 0; i < 5; ++i) h = t.tanh(t.matvec(W, h));
    const Parameter ones{"ones", Tensor::matrix(1, 3, {1, 1, 1})};
    const Var loss = t.matvec(ones, h);
    const double value = t.scalar(loss);
    return std::pair{value, t.backward(loss).get(W)};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tape, ClearAllowsReuse) {
  Parameter p{"p", Tensor::matrix(1, 2, {1.0, -1.0})};
  Tape tape;
  const double first = tape.scalar(tape.matvec(p, tape.constant({3.0, 1.0})));
  tape.clear();
  EXPECT_EQ(tape.node_count(), 0u);
  const double second = tape.scalar(tape.matvec(p, tape.constant({3.0, 1.0})));
  EXPECT_EQ(first, second);
}

TEST(LogSoftmax, MaskedEntriesAreMinusInfinity) {
  Tape tape;
  const std::vector<double> allowed = {0, 1, 1, 0};
  const auto v = tape.value(tape.log_softmax(tape.constant({5.0, 1.0, 2.0, 9.0}), allowed));
  EXPECT_TRUE(std::isinf(v[0]) && v[0] < 0);
  EXPECT_TRUE(std::isinf(v[3]) && v[3] < 0);
  EXPECT_NEAR(std::exp(v[1]) + std::exp(v[2]), 1.0, 1e-15);
  EXPECT_NEAR(v[2] - v[1], 1.0, 1e-15);
}

TEST(AdaDelta, ZeroGradientLeavesParametersUnchanged) {
  Tensor x = Tensor::vector({0.5, -2.0, 3.0});
  const Tensor before = x;
  AdaDeltaState state;
  adadelta_step(x, Tensor({3}, 0.0), state, {}, "x");
  EXPECT_EQ(x, before);
}

TEST(AdaDelta, FirstStepOnScalar) {
  // E[g^2] = 0.05, dx = -sqrt(1e-6 / (0.05 + 1e-6)) * 1
  const double expected = -std::sqrt(1e-6 / (0.05 + 1e-6));
  Tensor x = Tensor::vector({0.0});
  AdaDeltaState state;
  adadelta_step(x, Tensor::vector({1.0}), state, {0.95, 1e-6, 0.0}, "x");
  EXPECT_NEAR(x[0], expected, 1e-15);
  EXPECT_NEAR(x[0], -4.4721e-3, 5e-8);
}

TEST(AdaDelta, SuccessiveIdenticalStepsFollowTheRecurrence) {
  const double rho = 0.95, eps = 1e-6;
  double eg = 0, edx = 0, xo = 0;
  Tensor x = Tensor::vector({0.0});
  AdaDeltaState state;
  std::vector<double> steps;
  for (int i = 0; i < 2; ++i) {
    eg = rho * eg + (1 - rho) * 1.0;
    const double dx = -std::sqrt((edx + eps) / (eg + eps));
    edx = rho * edx + (1 - rho) * dx * dx;
    xo += dx;
    const double before = x[0];
    adadelta_step(x, Tensor::vector({1.0}), state, {rho, eps, 0.0}, "x");
    EXPECT_NEAR(x[0], xo, 1e-15);
    steps.push_back(x[0] - before);
  }
  // E[dx^2] grows faster than E[g^2] at first, so the second step is
  // slightly larger: -sqrt((1e-6 + 0.05 * dx1^2 + 1e-6) / 0.097501).
  EXPECT_NEAR(steps[0], -4.47209e-3, 1e-8);
  EXPECT_NEAR(steps[1], -4.52906e-3, 1e-8);
}

TEST(AdaDelta, L2TermIsAddedToGradient) {
  Tensor a = Tensor::vector({2.0});
  Tensor b = Tensor::vector({2.0});
  AdaDeltaState sa, sb;
  adadelta_step(a, Tensor::vector({0.5}), sa, {0.95, 1e-6, 0.1}, "a");
  adadelta_step(b, Tensor::vector({0.5 + 0.1 * 2.0}), sb, {0.95, 1e-6, 0.0}, "b");
  EXPECT_EQ(a, b);
}

TEST(AdaDelta, NonFiniteGradientNamesParameter) {
  Tensor x = Tensor::vector({1.0, 2.0});
  AdaDeltaState state;
  try {
    adadelta_step(x, Tensor::vector({1.0, std::nan("")}), state, {}, "decoder.W_h");
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.W_h"), std::string::npos);
  }
}

TEST(AdaDelta, AccumulatorsStayNonNegative) {
  Parameter p{"p", Tensor::vector({1.0, -1.0})};
  AdaDelta opt({0.9, 1e-6, 1e-3});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 20; ++i) {
    Gradients grads;
    grads.slot(p) = Tensor::vector({g(rng), g(rng)});
    Parameter* ps[] = {&p};
    opt.step(ps, grads);
  }
  const auto* st = opt.state(p);
  ASSERT_NE(st, nullptr);
  for (double v : st->mean_sq_grad.data()) EXPECT_GE(v, 0.0);
  for (double v : st->mean_sq_delta.data()) EXPECT_GE(v, 0.0);
  EXPECT_EQ(st->mean_sq_grad.shape(), p.value.shape());
}

TEST(GradientCheck, RestoresParameterValues) {
  std::mt19937_64 rng(2);
  Parameter W = random_param("W", {2, 2}, rng);
  const Tensor before = W.value;
  const Parameter readout{"r", Tensor::matrix(1, 2, {1, 1})};
  Parameter* ps[] = {&W};
  gradient_check(ps, [&](Tape& t) { return t.matvec(readout, t.tanh(t.matvec(W, t.constant({1.0, 2.0})))); },
                 1e-4);
  EXPECT_EQ(W.value, before);
}

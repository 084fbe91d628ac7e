#include "morphogen/lstm.hpp"

#include "morphogen/error.hpp"

namespace morphogen {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

LstmParams LstmParams::init(const std::string& prefix, std::size_t input_size,
                            std::size_t hidden_size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  auto random_tensor = [&](std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = uniform(rng);
    return t;
  };
  LstmParams p;
  p.W_x = Parameter{prefix + ".W_x", random_tensor({4 * hidden_size, input_size})};
  p.W_h = Parameter{prefix + ".W_h", random_tensor({4 * hidden_size, hidden_size})};
  p.b = Parameter{prefix + ".b", random_tensor({4 * hidden_size})};
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) p.b.value[i] = 1.0;
  return p;
}

LstmState zero_state(Tape& tape, std::size_t hidden_size) {
  return {tape.zeros(hidden_size), tape.zeros(hidden_size)};
}

LstmState lstm_step(Tape& tape, const LstmParams& params, Var x, const LstmState& prev) {
  const std::size_t n = params.hidden_size();
  if (tape.size(x) != params.input_size()) {
    throw DimensionError("lstm_step: input of size " + std::to_string(tape.size(x)) +
                         " given to a cell expecting " + std::to_string(params.input_size()));
  }
  if (tape.size(prev.h) != n || tape.size(prev.c) != n) {
    throw DimensionError("lstm_step: state size does not match hidden size " + std::to_string(n));
  }
  const Var pre = tape.add(tape.affine(params.W_x, x, params.b), tape.matvec(params.W_h, prev.h));
  const Var input_gate = tape.sigmoid(tape.slice(pre, 0, n));
  const Var forget_gate = tape.sigmoid(tape.slice(pre, n, n));
  const Var output_gate = tape.sigmoid(tape.slice(pre, 2 * n, n));
  const Var candidate = tape.tanh(tape.slice(pre, 3 * n, n));
  const Var cell = tape.add(tape.mul(forget_gate, prev.c), tape.mul(input_gate, candidate));
  return {tape.mul(output_gate, tape.tanh(cell)), cell};
}

std::vector<LstmState> run_sequence(Tape& tape, const LstmParams& params, std::span<const Var> xs,
                                    const LstmState& init) {
  if (xs.empty()) throw DimensionError("run_sequence: empty input sequence");
  std::vector<LstmState> states;
  states.reserve(xs.size());
  LstmState state = init;
  for (Var x : xs) {
    state = lstm_step(tape, params, x, state);
    states.push_back(state);
  }
  return states;
}

BiEncoding encode_bidirectional(Tape& tape, const LstmParams& fwd, const LstmParams& bwd,
                                std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("encode_bidirectional: empty input sequence");
  const auto forward = run_sequence(tape, fwd, xs, zero_state(tape, fwd.hidden_size()));
  std::vector<Var> reversed(xs.rbegin(), xs.rend());
  const auto backward = run_sequence(tape, bwd, reversed, zero_state(tape, bwd.hidden_size()));

  const std::size_t T = xs.size();
  BiEncoding out;
  out.e_raw = tape.concat({forward.back().h, backward.back().h});
  out.hidden_seq.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.hidden_seq.push_back(tape.concat({forward[t].h, backward[T - 1 - t].h}));
  }
  return out;
}

}  // namespace morphogen

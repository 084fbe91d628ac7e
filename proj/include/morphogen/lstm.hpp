#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "morphogen/nn/tape.hpp"

namespace morphogen {

/// Weights of a single-layer LSTM without peepholes. Gate rows are stacked
/// in the order input, forget, output, candidate.
struct LstmParams {
  nn::Parameter W_x;  // [4n x l]
  nn::Parameter W_h;  // [4n x n]
  nn::Parameter b;    // [4n]

  std::size_t input_size() const { return W_x.value.cols(); }
  std::size_t hidden_size() const { return W_h.value.cols(); }
  bool empty() const { return W_x.value.empty(); }

  /// Uniform [-0.1, 0.1] weights, forget-gate bias 1.
  static LstmParams init(const std::string& prefix, std::size_t input_size, std::size_t hidden_size,
                         std::mt19937_64& rng);

  bool operator==(const LstmParams&) const = default;
};

struct LstmState {
  nn::Var h;
  nn::Var c;
};

LstmState zero_state(nn::Tape& tape, std::size_t hidden_size);

LstmState lstm_step(nn::Tape& tape, const LstmParams& params, nn::Var x, const LstmState& prev);

/// states[t] = lstm_step(xs[t], states[t-1]) with states[-1] = init.
std::vector<LstmState> run_sequence(nn::Tape& tape, const LstmParams& params,
                                    std::span<const nn::Var> xs, const LstmState& init);

struct BiEncoding {
  nn::Var e_raw;                   // [fwd final h ; bwd final h], size 2n
  std::vector<nn::Var> hidden_seq;  // hidden_seq[t] = [fwd h_t ; bwd h_t]
};

/// Runs `fwd` left to right and `bwd` right to left from zero states.
BiEncoding encode_bidirectional(nn::Tape& tape, const LstmParams& fwd, const LstmParams& bwd,
                                std::span<const nn::Var> xs);

}  // namespace morphogen

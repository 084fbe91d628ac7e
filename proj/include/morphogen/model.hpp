#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphogen/data.hpp"
#include "morphogen/lstm.hpp"
#include "morphogen/nn/gradient_check.hpp"
#include "morphogen/nn/tape.hpp"
#include "morphogen/vocab.hpp"

namespace morphogen {

/// Decoder wiring.
///  Full:        decoder input [e ; y_{t-1} ; x_t] at every step
///  PlainEncDec: decoder input y_{t-1}; e initialises the decoder hidden state
///  Attention:   decoder input [context_t ; y_{t-1}] with additive attention
///  NoEncoder:   decoder input [y_{t-1} ; x_t]
enum class Variant { Full, PlainEncDec, Attention, NoEncoder };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t hidden = 100;
  /// 0 means "size of the character vocabulary".
  std::size_t embed_dim = 0;
  Variant variant = Variant::Full;

  bool operator==(const ModelConfig&) const = default;
};

/// Character embeddings and the bidirectional encoder. Joint models share
/// one instance between the per-tag decoders.
struct EncoderParams {
  nn::Parameter embedding;  // [|vocab| x d]
  LstmParams fwd;           // empty for NoEncoder
  LstmParams bwd;

  std::vector<nn::Parameter*> parameters();
  bool operator==(const EncoderParams&) const = default;
};

struct DecoderParams {
  nn::Parameter trans_W;  // [n x 2n]   Full, PlainEncDec
  nn::Parameter trans_b;  // [n]
  LstmParams lstm;
  nn::Parameter out_W;    // [|vocab| x n]
  nn::Parameter out_b;    // [|vocab|]
  nn::Parameter att_enc;  // [n x 2n]   Attention only
  nn::Parameter att_dec;  // [n x n]
  nn::Parameter att_v;    // [1 x n]

  std::vector<nn::Parameter*> parameters();
  bool operator==(const DecoderParams&) const = default;
};

struct ModelParams {
  CharVocab vocab;
  ModelConfig config;  // embed_dim always resolved
  std::shared_ptr<EncoderParams> encoder;
  DecoderParams decoder;

  /// Fresh model with seeded uniform [-0.1, 0.1] initialisation.
  static ModelParams create(const CharVocab& vocab, ModelConfig config, std::uint64_t seed);
  /// Fresh decoder on top of an existing (shared) encoder.
  static ModelParams with_encoder(std::shared_ptr<EncoderParams> encoder, const CharVocab& vocab,
                                  ModelConfig config, std::uint64_t seed);

  /// Encoder parameters first, then decoder parameters. Empty tensors skipped.
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  /// Deep copy, including the encoder.
  ModelParams clone() const;

  /// Value equality (encoders compared by content).
  bool operator==(const ModelParams& other) const;
};

std::size_t decoder_input_size(const ModelConfig& config, std::size_t vocab_size);

/// Embedding row of `char_id` (a copy).
nn::Tensor embed(const ModelParams& model, int char_id);

/// Output mask: 1 for ids that may be emitted, 0 for BOS and EPS.
std::vector<double> output_mask(std::size_t vocab_size);

struct EncodedInput {
  std::vector<int> x_ids;
  nn::Var e;                         // transformed encoding (Full, PlainEncDec)
  std::vector<nn::Var> hidden_seq;   // Attention only
  std::vector<nn::Var> attention_keys;
};

EncodedInput encode_input(nn::Tape& tape, const ModelParams& model, std::span<const int> x_ids);

/// e = W_trans e_raw + b_trans
nn::Var transform_encoding(nn::Tape& tape, const ModelParams& model, nn::Var e_raw);

/// Additive attention over the encoder states given the previous decoder state.
nn::Var attention_context(nn::Tape& tape, const ModelParams& model, const EncodedInput& input,
                          nn::Var s_prev);

LstmState initial_decoder_state(nn::Tape& tape, const ModelParams& model, const EncodedInput& input);

/// The x-side symbol the decoder reads at step t: x_t, or EPS past the end.
int decoder_input_symbol(std::span<const int> x_ids, std::size_t t);

struct DecoderStep {
  LstmState state;
  nn::Var logits;
};

/// One decoder step (t is 0-based). Logits are unmasked; apply
/// log_softmax with output_mask() for the distribution.
DecoderStep decoder_step(nn::Tape& tape, const ModelParams& model, const EncodedInput& input,
                         const LstmState& prev, int y_prev, std::size_t t);

/// Per-step additive bias lambda * bias[t] on the logits, used for language
/// model interpolation. bias[t] has one entry per vocabulary id.
struct LogitBias {
  nn::Var lambda;
  std::span<const std::vector<double>> bias;
};

/// Teacher-forced -log p(y | x): one term per output character plus EOS.
nn::Var nll_loss(nn::Tape& tape, const ModelParams& model, std::span<const int> x_ids,
                 std::span<const int> y_ids, const LogitBias* bias = nullptr);

/// Convenience: encodes the example with the model's vocabulary.
double nll_loss(const ModelParams& model, const Example& example);

/// Finite-difference check of the loss of one example over all parameters.
nn::GradientCheckResult gradient_check(ModelParams& model, const Example& example, double h);

}  // namespace morphogen

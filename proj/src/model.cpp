#include "morphogen/model.hpp"

#include <random>

#include "morphogen/error.hpp"

namespace morphogen {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Parameter random_parameter(std::string name, std::vector<std::size_t> shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = uniform(rng);
  return {std::move(name), std::move(t)};
}

bool uses_encoder(Variant v) { return v != Variant::NoEncoder; }
bool uses_transform(Variant v) { return v == Variant::Full || v == Variant::PlainEncDec; }

void append_nonempty(std::vector<Parameter*>& out, Parameter& p) {
  if (!p.value.empty()) out.push_back(&p);
}

ModelConfig resolve(ModelConfig config, const CharVocab& vocab) {
  if (config.hidden == 0) throw ModelError("hidden size must be positive");
  if (config.embed_dim == 0) config.embed_dim = vocab.size();
  return config;
}

std::shared_ptr<EncoderParams> make_encoder(const CharVocab& vocab, const ModelConfig& config,
                                            std::mt19937_64& rng) {
  auto enc = std::make_shared<EncoderParams>();
  enc->embedding = random_parameter("embedding", {vocab.size(), config.embed_dim}, rng);
  if (uses_encoder(config.variant)) {
    enc->fwd = LstmParams::init("encoder.fwd", config.embed_dim, config.hidden, rng);
    enc->bwd = LstmParams::init("encoder.bwd", config.embed_dim, config.hidden, rng);
  }
  return enc;
}

DecoderParams make_decoder(const CharVocab& vocab, const ModelConfig& config, std::mt19937_64& rng) {
  const std::size_t n = config.hidden;
  DecoderParams dec;
  if (uses_transform(config.variant)) {
    dec.trans_W = random_parameter("transform.W", {n, 2 * n}, rng);
    dec.trans_b = random_parameter("transform.b", {n}, rng);
  }
  dec.lstm = LstmParams::init("decoder", decoder_input_size(config, vocab.size()), n, rng);
  dec.out_W = random_parameter("output.W", {vocab.size(), n}, rng);
  dec.out_b = random_parameter("output.b", {vocab.size()}, rng);
  if (config.variant == Variant::Attention) {
    dec.att_enc = random_parameter("attention.W_enc", {n, 2 * n}, rng);
    dec.att_dec = random_parameter("attention.W_dec", {n, n}, rng);
    dec.att_v = random_parameter("attention.v", {1, n}, rng);
  }
  return dec;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::PlainEncDec: return "plain-encdec";
    case Variant::Attention: return "attention";
    case Variant::NoEncoder: return "no-encoder";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Full, Variant::PlainEncDec, Variant::Attention, Variant::NoEncoder}) {
    if (to_string(v) == name) return v;
  }
  throw ModelError("unknown model variant '" + std::string(name) + "'");
}

std::vector<Parameter*> EncoderParams::parameters() {
  std::vector<Parameter*> out;
  append_nonempty(out, embedding);
  for (LstmParams* l : {&fwd, &bwd}) {
    append_nonempty(out, l->W_x);
    append_nonempty(out, l->W_h);
    append_nonempty(out, l->b);
  }
  return out;
}

std::vector<Parameter*> DecoderParams::parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : {&trans_W, &trans_b, &lstm.W_x, &lstm.W_h, &lstm.b, &out_W, &out_b, &att_enc,
                       &att_dec, &att_v}) {
    append_nonempty(out, *p);
  }
  return out;
}

std::size_t decoder_input_size(const ModelConfig& config, std::size_t vocab_size) {
  const std::size_t d = config.embed_dim == 0 ? vocab_size : config.embed_dim;
  switch (config.variant) {
    case Variant::Full: return config.hidden + 2 * d;
    case Variant::PlainEncDec: return d;
    case Variant::Attention: return 2 * config.hidden + d;
    case Variant::NoEncoder: return 2 * d;
  }
  return 0;
}

ModelParams ModelParams::create(const CharVocab& vocab, ModelConfig config, std::uint64_t seed) {
  config = resolve(config, vocab);
  std::mt19937_64 rng(seed);
  ModelParams m;
  m.vocab = vocab;
  m.config = config;
  m.encoder = make_encoder(vocab, config, rng);
  m.decoder = make_decoder(vocab, config, rng);
  return m;
}

ModelParams ModelParams::with_encoder(std::shared_ptr<EncoderParams> encoder, const CharVocab& vocab,
                                      ModelConfig config, std::uint64_t seed) {
  config = resolve(config, vocab);
  if (!encoder || encoder->embedding.value.rows() != vocab.size() ||
      encoder->embedding.value.cols() != config.embed_dim) {
    throw ModelError("shared encoder does not match vocabulary or embedding size");
  }
  std::mt19937_64 rng(seed);
  ModelParams m;
  m.vocab = vocab;
  m.config = config;
  m.encoder = std::move(encoder);
  m.decoder = make_decoder(vocab, config, rng);
  return m;
}

std::vector<Parameter*> ModelParams::parameters() {
  auto out = encoder->parameters();
  for (Parameter* p : decoder.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ModelParams::parameters() const {
  auto mutable_params = const_cast<ModelParams*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  copy.encoder = std::make_shared<EncoderParams>(*encoder);
  return copy;
}

bool ModelParams::operator==(const ModelParams& other) const {
  return vocab == other.vocab && config == other.config && encoder && other.encoder &&
         *encoder == *other.encoder && decoder == other.decoder;
}

Tensor embed(const ModelParams& model, int char_id) {
  const Tensor& table = model.encoder->embedding.value;
  if (char_id < 0 || static_cast<std::size_t>(char_id) >= table.rows()) {
    throw ModelError("character id " + std::to_string(char_id) + " outside vocabulary of size " +
                     std::to_string(table.rows()));
  }
  const auto row = table.data().subspan(static_cast<std::size_t>(char_id) * table.cols(), table.cols());
  return Tensor::vector({row.begin(), row.end()});
}

std::vector<double> output_mask(std::size_t vocab_size) {
  std::vector<double> mask(vocab_size, 1.0);
  mask[CharVocab::kBos] = 0.0;
  mask[CharVocab::kEps] = 0.0;
  return mask;
}

Var transform_encoding(Tape& tape, const ModelParams& model, Var e_raw) {
  return tape.affine(model.decoder.trans_W, e_raw, model.decoder.trans_b);
}

EncodedInput encode_input(Tape& tape, const ModelParams& model, std::span<const int> x_ids) {
  if (x_ids.empty()) throw ModelError("cannot encode an empty lemma");
  EncodedInput out;
  out.x_ids.assign(x_ids.begin(), x_ids.end());
  const Variant variant = model.config.variant;
  if (!uses_encoder(variant)) return out;

  std::vector<Var> xs;
  xs.reserve(x_ids.size());
  for (int id : x_ids) xs.push_back(tape.lookup(model.encoder->embedding, static_cast<std::size_t>(id)));
  BiEncoding enc = encode_bidirectional(tape, model.encoder->fwd, model.encoder->bwd, xs);
  if (uses_transform(variant)) out.e = transform_encoding(tape, model, enc.e_raw);
  if (variant == Variant::Attention) {
    out.hidden_seq = std::move(enc.hidden_seq);
    out.attention_keys.reserve(out.hidden_seq.size());
    for (Var h : out.hidden_seq) out.attention_keys.push_back(tape.matvec(model.decoder.att_enc, h));
  }
  return out;
}

Var attention_context(Tape& tape, const ModelParams& model, const EncodedInput& input, Var s_prev) {
  if (model.config.variant != Variant::Attention) {
    throw ModelError("attention_context called on a " + std::string(to_string(model.config.variant)) +
                     " model");
  }
  const Var query = tape.matvec(model.decoder.att_dec, s_prev);
  std::vector<Var> scores;
  scores.reserve(input.attention_keys.size());
  for (Var key : input.attention_keys) {
    scores.push_back(tape.matvec(model.decoder.att_v, tape.tanh(tape.add(key, query))));
  }
  const Var weights = tape.softmax(tape.concat(scores));
  return tape.weighted_sum(weights, input.hidden_seq);
}

LstmState initial_decoder_state(Tape& tape, const ModelParams& model, const EncodedInput& input) {
  const std::size_t n = model.config.hidden;
  if (model.config.variant == Variant::PlainEncDec) return {input.e, tape.zeros(n)};
  return zero_state(tape, n);
}

int decoder_input_symbol(std::span<const int> x_ids, std::size_t t) {
  return t < x_ids.size() ? x_ids[t] : CharVocab::kEps;
}

DecoderStep decoder_step(Tape& tape, const ModelParams& model, const EncodedInput& input,
                         const LstmState& prev, int y_prev, std::size_t t) {
  const std::size_t V = model.vocab.size();
  if (y_prev < 0 || static_cast<std::size_t>(y_prev) >= V) {
    throw ModelError("previous output id " + std::to_string(y_prev) + " out of range");
  }
  const Parameter& table = model.encoder->embedding;
  const Var y_emb = tape.lookup(table, static_cast<std::size_t>(y_prev));
  Var dec_input;
  switch (model.config.variant) {
    case Variant::Full: {
      const Var x_emb = tape.lookup(table, static_cast<std::size_t>(decoder_input_symbol(input.x_ids, t)));
      dec_input = tape.concat({input.e, y_emb, x_emb});
      break;
    }
    case Variant::PlainEncDec:
      dec_input = y_emb;
      break;
    case Variant::Attention:
      dec_input = tape.concat({attention_context(tape, model, input, prev.h), y_emb});
      break;
    case Variant::NoEncoder: {
      const Var x_emb = tape.lookup(table, static_cast<std::size_t>(decoder_input_symbol(input.x_ids, t)));
      dec_input = tape.concat({y_emb, x_emb});
      break;
    }
  }
  DecoderStep step;
  step.state = lstm_step(tape, model.decoder.lstm, dec_input, prev);
  step.logits = tape.affine(model.decoder.out_W, step.state.h, model.decoder.out_b);
  return step;
}

Var nll_loss(Tape& tape, const ModelParams& model, std::span<const int> x_ids,
             std::span<const int> y_ids, const LogitBias* bias) {
  if (bias && bias->bias.size() < y_ids.size() + 1) {
    throw ModelError("logit bias covers fewer steps than the target sequence");
  }
  const EncodedInput input = encode_input(tape, model, x_ids);
  const std::vector<double> mask = output_mask(model.vocab.size());
  LstmState state = initial_decoder_state(tape, model, input);
  std::vector<Var> terms;
  terms.reserve(y_ids.size() + 1);
  int y_prev = CharVocab::kBos;
  for (std::size_t t = 0; t <= y_ids.size(); ++t) {
    const DecoderStep step = decoder_step(tape, model, input, state, y_prev, t);
    Var logits = step.logits;
    if (bias) logits = tape.add(logits, tape.scale(bias->lambda, bias->bias[t]));
    const int target = t < y_ids.size() ? y_ids[t] : CharVocab::kEos;
    terms.push_back(tape.pick_nll(logits, mask, static_cast<std::size_t>(target)));
    state = step.state;
    y_prev = target;
  }
  return tape.sum(terms);
}

double nll_loss(const ModelParams& model, const Example& example) {
  Tape tape(false);
  const auto x = model.vocab.encode(example.lemma);
  const auto y = model.vocab.encode(example.inflected);
  return tape.scalar(nll_loss(tape, model, x, y));
}

nn::GradientCheckResult gradient_check(ModelParams& model, const Example& example, double h) {
  const auto x = model.vocab.encode(example.lemma);
  const auto y = model.vocab.encode(example.inflected);
  const auto params = model.parameters();
  return nn::gradient_check(params, [&](Tape& tape) { return nll_loss(tape, model, x, y); }, h);
}

}  // namespace morphogen

#include "morphogen/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>

#include "morphogen/error.hpp"
#include "morphogen/nn/adadelta.hpp"

namespace morphogen {

namespace {

struct Encoded {
  std::vector<int> x;
  std::vector<int> y;
};

std::vector<Encoded> encode_all(const CharVocab& vocab, std::span<const Example> examples) {
  std::vector<Encoded> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({vocab.encode(ex.lemma), vocab.encode(ex.inflected)});
  return out;
}

nn::AdaDeltaConfig optimizer_config(const TrainConfig& config) {
  return {config.rho, config.adadelta_epsilon, config.l2};
}

std::mt19937_64 shuffle_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

void log_epoch(const TrainConfig& config, const EpochRecord& rec) {
  if (config.log) {
    const EpochRecord one[] = {rec};
    write_training_log(*config.log, one);
  }
}

/// Keeps the earliest epoch with the best dev accuracy, or the last epoch
/// when there is nothing to select on.
template <class Snapshot>
class BestEpoch {
 public:
  explicit BestEpoch(bool have_dev) : have_dev_(have_dev) {}

  template <class MakeSnapshot>
  void offer(const EpochRecord& rec, MakeSnapshot&& make) {
    if (!best_ || !have_dev_ || rec.dev_accuracy > best_accuracy_) {
      best_accuracy_ = rec.dev_accuracy;
      best_epoch_ = rec.epoch;
      best_ = make();
    }
  }

  std::size_t epoch() const { return best_epoch_; }
  Snapshot take() { return std::move(*best_); }

 private:
  bool have_dev_;
  double best_accuracy_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::optional<Snapshot> best_;
};

std::vector<Example> require_tag(const TrainData& data, const std::string& tag) {
  auto train = examples_with_tag(data.train, tag);
  if (train.empty()) throw DataError("no training examples for tag '" + tag + "'");
  return train;
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden == 0) throw ModelError("hidden size must be positive");
  if (epochs == 0) throw ModelError("number of epochs must be positive");
  if (ensemble_k == 0) throw ModelError("ensemble size must be positive");
  if (beam_width == 0) throw ModelError("beam width must be positive");
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw ModelError("l2 coefficient must be finite and non-negative");
  if (!(rho > 0.0 && rho < 1.0)) throw ModelError("AdaDelta rho must lie in (0, 1)");
  if (!(adadelta_epsilon > 0.0)) throw ModelError("AdaDelta epsilon must be positive");
  if (!std::isfinite(lambda_init)) throw ModelError("initial lambda must be finite");
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double greedy_accuracy(std::span<const Expert> experts, std::span<const Example> examples,
                       std::size_t max_len_slack, const WittenBellLM* lm) {
  if (examples.empty()) return 0.0;
  if (experts.empty()) throw ModelError("no models to evaluate");
  const CharVocab& vocab = experts.front().model->vocab;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const auto x = vocab.encode(ex.lemma);
    DecodeOptions options{default_max_len(x.size(), max_len_slack), lm};
    const auto result = greedy_decode(experts, x, options);
    if (!result.truncated && vocab.decode(result.ids) == ex.inflected) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainedModel train_factored(const TrainData& data, const std::string& tag, const TrainConfig& config) {
  config.validate();
  const auto train = require_tag(data, tag);
  const auto dev = examples_with_tag(data.dev, tag);
  const CharVocab vocab = build_vocab(data.train);
  ModelParams model = ModelParams::create(vocab, config.model_config(), config.seed);

  const auto encoded = encode_all(vocab, train);
  const auto params = model.parameters();
  nn::AdaDelta optimizer(optimizer_config(config));
  auto rng = shuffle_rng(config.seed);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainedModel out;
  BestEpoch<ModelParams> best(!dev.empty());
  nn::Tape tape;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      tape.clear();
      const nn::Var loss = nll_loss(tape, model, encoded[i].x, encoded[i].y);
      total += tape.scalar(loss);
      optimizer.step(params, tape.backward(loss));
    }
    const Expert expert{&model, 0.0};
    EpochRecord rec{epoch, total / static_cast<double>(encoded.size()),
                    greedy_accuracy(std::span(&expert, 1), dev, config.max_len_slack)};
    log_epoch(config, rec);
    out.history.push_back(rec);
    best.offer(rec, [&] { return model.clone(); });
  }
  out.best_epoch = best.epoch();
  out.model = best.take();
  return out;
}

namespace {

std::map<std::string, ModelParams> snapshot_joint(const std::map<std::string, ModelParams>& models) {
  std::map<std::string, ModelParams> copy;
  std::shared_ptr<EncoderParams> encoder;
  for (const auto& [tag, model] : models) {
    if (!encoder) encoder = std::make_shared<EncoderParams>(*model.encoder);
    ModelParams m{model.vocab, model.config, encoder, model.decoder};
    copy.emplace(tag, std::move(m));
  }
  return copy;
}

}  // namespace

JointModel train_joint(const TrainData& data, const TrainConfig& config) {
  config.validate();
  const auto tags = tags_of(data.train);
  if (tags.empty()) throw DataError("joint training needs at least one tag");
  const CharVocab vocab = build_vocab(data.train);

  std::map<std::string, ModelParams> models;
  auto encoder = ModelParams::create(vocab, config.model_config(), config.seed).encoder;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::uint64_t seed = config.seed * 1000003ULL + i + 1;
    models.emplace(tags[i], ModelParams::with_encoder(encoder, vocab, config.model_config(), seed));
  }

  struct Item {
    Encoded seq;
    ModelParams* model;
  };
  std::vector<Item> items;
  items.reserve(data.train.size());
  for (const auto& ex : data.train) {
    ModelParams& m = models.at(ex.tag);
    items.push_back({{vocab.encode(ex.lemma), vocab.encode(ex.inflected)}, &m});
  }
  std::map<std::string, std::vector<nn::Parameter*>> params_by_tag;
  for (auto& [tag, m] : models) params_by_tag[tag] = m.parameters();

  std::map<std::string, std::vector<Example>> dev_by_tag;
  for (const auto& ex : data.dev) {
    if (models.count(ex.tag)) dev_by_tag[ex.tag].push_back(ex);
  }

  nn::AdaDelta optimizer(optimizer_config(config));
  auto rng = shuffle_rng(config.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  JointModel out;
  BestEpoch<std::map<std::string, ModelParams>> best(!dev_by_tag.empty());
  nn::Tape tape;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      const Item& item = items[i];
      tape.clear();
      const nn::Var loss = nll_loss(tape, *item.model, item.seq.x, item.seq.y);
      total += tape.scalar(loss);
      const auto& tag = data.train[i].tag;
      optimizer.step(params_by_tag.at(tag), tape.backward(loss));
    }
    double macro = 0.0;
    for (const auto& [tag, dev] : dev_by_tag) {
      const Expert expert{&models.at(tag), 0.0};
      macro += greedy_accuracy(std::span(&expert, 1), dev, config.max_len_slack);
    }
    if (!dev_by_tag.empty()) macro /= static_cast<double>(dev_by_tag.size());
    EpochRecord rec{epoch, total / static_cast<double>(items.size()), macro};
    log_epoch(config, rec);
    out.history.push_back(rec);
    best.offer(rec, [&] { return snapshot_joint(models); });
  }
  out.best_epoch = best.epoch();
  out.models = best.take();
  return out;
}

TrainedModel train_interpolated(const TrainData& data, const std::string& tag, const WittenBellLM& lm,
                                const TrainConfig& config) {
  config.validate();
  const auto train = require_tag(data, tag);
  const auto dev = examples_with_tag(data.dev, tag);
  const CharVocab vocab = build_vocab(data.train);
  for (char32_t c : lm.alphabet()) {
    if (!vocab.contains(c)) {
      throw ModelError("language model alphabet has characters outside the model vocabulary");
    }
  }
  ModelParams model = ModelParams::create(vocab, config.model_config(), config.seed);
  nn::Parameter lambda_hat{"lambda_hat", nn::Tensor({1}, config.lambda_init)};

  const auto encoded = encode_all(vocab, train);
  // LM bias of every teacher-forced step, fixed for the whole run.
  std::vector<std::vector<std::vector<double>>> biases(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const auto& y = encoded[i].y;
    for (std::size_t t = 0; t <= y.size(); ++t) {
      biases[i].push_back(lm_log_bias(lm, vocab, std::span(y).first(t)));
    }
  }

  const auto params = model.parameters();
  nn::AdaDelta optimizer(optimizer_config(config));
  nn::AdaDelta lambda_optimizer({config.rho, config.adadelta_epsilon, 0.0});
  nn::Parameter* const lambda_params[] = {&lambda_hat};
  auto rng = shuffle_rng(config.seed);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainedModel out;
  BestEpoch<std::pair<ModelParams, double>> best(!dev.empty());
  nn::Tape tape;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      tape.clear();
      const LogitBias bias{tape.softplus(tape.parameter(lambda_hat)), biases[i]};
      const nn::Var loss = nll_loss(tape, model, encoded[i].x, encoded[i].y, &bias);
      total += tape.scalar(loss);
      const auto grads = tape.backward(loss);
      optimizer.step(params, grads);
      if (config.learn_lambda) lambda_optimizer.step(lambda_params, grads);
    }
    const double lambda = softplus(lambda_hat.value[0]);
    const Expert expert{&model, lambda};
    EpochRecord rec{epoch, total / static_cast<double>(encoded.size()),
                    greedy_accuracy(std::span(&expert, 1), dev, config.max_len_slack, &lm)};
    log_epoch(config, rec);
    out.history.push_back(rec);
    best.offer(rec, [&] { return std::pair{model.clone(), lambda}; });
  }
  out.best_epoch = best.epoch();
  auto [m, lambda] = best.take();
  out.model = std::move(m);
  out.lambda = lambda;
  return out;
}

std::vector<std::uint64_t> ensemble_seeds(const TrainConfig& config) {
  std::vector<std::uint64_t> seeds = config.seeds;
  if (seeds.empty()) {
    for (std::size_t i = 0; i < config.ensemble_k; ++i) seeds.push_back(config.seed + i);
  } else if (seeds.size() != config.ensemble_k) {
    throw ModelError("ensemble size " + std::to_string(config.ensemble_k) + " but " +
                     std::to_string(seeds.size()) + " seeds given");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ModelError("ensemble member seeds must be distinct");
  }
  return seeds;
}

void write_training_log(std::ostream& out, std::span<const EpochRecord> history) {
  char buf[96];
  for (const auto& rec : history) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.4f\n", rec.epoch, rec.train_loss, rec.dev_accuracy);
    out << buf;
  }
}

}  // namespace morphogen

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "morphogen/checkpoint.hpp"
#include "morphogen/error.hpp"
#include "morphogen/nn/adadelta.hpp"
#include "morphogen/nn/gradient_check.hpp"
#include "morphogen/trainer.hpp"

using namespace morphogen;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = 8;
  c.epochs = 3;
  c.ensemble_k = 1;
  c.max_len_slack = 4;
  return c;
}

TrainData synth_data(std::size_t tables, std::uint64_t seed) {
  const auto split = split_tables(group_tables(synth_language(SynthSpec::finnish_like(), tables, seed)),
                                  SplitRatios{0.8, 0.2, 0.0}, seed);
  return {flatten(split.train), flatten(split.dev)};
}

std::string serialized(const ModelParams& m) {
  std::ostringstream out;
  const ModelEntry e[] = {{"T", m, std::nullopt}};
  write_model_set(out, e);
  return out.str();
}

std::vector<std::u32string> forms_of(std::span<const Example> examples) {
  std::vector<std::u32string> words;
  for (const auto& ex : examples) words.push_back(ex.inflected);
  return words;
}

}  // namespace

TEST(Softplus, ValuesAndRange) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(50.0), 50.0, 1e-12);
  EXPECT_GT(softplus(-50.0), 0.0);
  EXPECT_GE(softplus(-800.0), 0.0);
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.hidden, 100u);
  EXPECT_EQ(c.epochs, 30u);
  EXPECT_EQ(c.ensemble_k, 5u);
  EXPECT_EQ(c.l2, 1e-5);
  c.hidden = 0;
  EXPECT_THROW(c.validate(), ModelError);
  c = TrainConfig{};
  c.l2 = -1;
  EXPECT_THROW(c.validate(), ModelError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ModelError);
}

TEST(Factored, ConvergesOnRepeatedPair) {
  TrainData data;
  for (int i = 0; i < 50; ++i) data.train.push_back({U"talo", "T", U"talossa"});
  data.dev.push_back({U"talo", "T", U"talossa"});
  TrainConfig c = small_config();
  c.hidden = 16;
  c.epochs = 30;
  const auto trained = train_factored(data, "T", c);
  ASSERT_EQ(trained.history.size(), 30u);
  EXPECT_LT(trained.history.back().train_loss, 0.01);
  EXPECT_EQ(trained.history[trained.best_epoch - 1].dev_accuracy, 1.0);
  const Expert e{&trained.model, 0.0};
  EXPECT_EQ(greedy_accuracy(std::span(&e, 1), data.dev, c.max_len_slack), 1.0);
}

TEST(Factored, BitIdenticalUnderFixedSeed) {
  const auto data = synth_data(20, 3);
  const auto c = small_config();
  const auto a = train_factored(data, "case=ine", c);
  const auto b = train_factored(data, "case=ine", c);
  EXPECT_EQ(serialized(a.model), serialized(b.model));
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
  auto other = c;
  other.seed = 2;
  EXPECT_NE(serialized(train_factored(data, "case=ine", other).model), serialized(a.model));
}

TEST(Factored, SelectsBestDevEpoch) {
  const auto data = synth_data(30, 5);
  auto c = small_config();
  c.epochs = 8;
  const auto trained = train_factored(data, "case=ela", c);
  ASSERT_GE(trained.best_epoch, 1u);
  const double best = trained.history[trained.best_epoch - 1].dev_accuracy;
  for (std::size_t i = 0; i < trained.history.size(); ++i) {
    EXPECT_LE(trained.history[i].dev_accuracy, best);
    if (i + 1 < trained.best_epoch) EXPECT_LT(trained.history[i].dev_accuracy, best);
  }
  const Expert e{&trained.model, 0.0};
  EXPECT_EQ(greedy_accuracy(std::span(&e, 1), examples_with_tag(data.dev, "case=ela"), c.max_len_slack), best);
}

TEST(Factored, LastEpochWithoutDev) {
  auto data = synth_data(10, 5);
  data.dev.clear();
  auto c = small_config();
  c.epochs = 2;
  EXPECT_EQ(train_factored(data, "case=ine", c).best_epoch, 2u);
}

TEST(Factored, UnknownTagRejected) {
  EXPECT_THROW(train_factored(synth_data(10, 1), "case=nom", small_config()), DataError);
}

TEST(Factored, LogLines) {
  std::ostringstream log;
  auto c = small_config();
  c.epochs = 2;
  c.log = &log;
  const auto trained = train_factored(synth_data(10, 1), "case=ine", c);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2);
    EXPECT_EQ(line.substr(0, line.find('\t')), std::to_string(n));
  }
  EXPECT_EQ(n, 2u);
  std::ostringstream again;
  write_training_log(again, trained.history);
  EXPECT_EQ(again.str(), log.str());
}

TEST(Joint, SharedEncoder) {
  const auto data = synth_data(20, 7);
  auto c = small_config();
  c.epochs = 2;
  auto joint = train_joint(data, c);
  ASSERT_EQ(joint.models.size(), 4u);
  const EncoderParams* enc = joint.models.begin()->second.encoder.get();
  for (const auto& [tag, m] : joint.models) EXPECT_EQ(m.encoder.get(), enc);

  // A step on one tag moves the loss seen by another.
  ModelParams& a = joint.models.at("case=abl");
  const ModelParams& b = joint.models.at("case=ine");
  const Example probe{U"talo", "case=ine", U"talossa"};
  const double before = nll_loss(b, probe);
  nn::Tape tape;
  const auto x = a.vocab.encode(U"kylä");
  const auto y = a.vocab.encode(U"kylältä");
  const nn::Var loss = nll_loss(tape, a, x, y);
  nn::AdaDelta opt({0.95, 1e-6, 0.0});
  opt.step(a.parameters(), tape.backward(loss));
  EXPECT_NE(nll_loss(b, probe), before);
}

TEST(Joint, DeterministicAndSelected) {
  const auto data = synth_data(20, 8);
  auto c = small_config();
  c.epochs = 3;
  const auto a = train_joint(data, c);
  const auto b = train_joint(data, c);
  for (const auto& [tag, m] : a.models) EXPECT_EQ(serialized(m), serialized(b.models.at(tag)));
  const double best = a.history[a.best_epoch - 1].dev_accuracy;
  for (const auto& rec : a.history) EXPECT_LE(rec.dev_accuracy, best);
}

TEST(Joint, TwoTagTaskLearned) {
  auto full = synth_data(120, 11);
  TrainData data;
  for (const auto& ex : full.train)
    if (ex.tag == "case=ine" || ex.tag == "case=ade") data.train.push_back(ex);
  for (const auto& ex : full.dev)
    if (ex.tag == "case=ine" || ex.tag == "case=ade") data.dev.push_back(ex);
  auto c = small_config();
  c.hidden = 24;
  c.epochs = 15;
  const auto joint = train_joint(data, c);
  for (const auto& [tag, m] : joint.models) {
    const Expert e{&m, 0.0};
    EXPECT_GE(greedy_accuracy(std::span(&e, 1), examples_with_tag(data.dev, tag), c.max_len_slack), 0.95) << tag;
  }
}

TEST(Interpolated, FrozenNearZeroLambdaMatchesFactored) {
  const auto data = synth_data(20, 4);
  const auto lm = WittenBellLM::train(forms_of(data.train), 3);
  auto c = small_config();
  c.epochs = 4;
  const auto factored = train_factored(data, "case=ade", c);
  c.lambda_init = -60.0;
  c.learn_lambda = false;
  const auto interp = train_interpolated(data, "case=ade", lm, c);
  ASSERT_EQ(interp.history.size(), factored.history.size());
  for (std::size_t i = 0; i < interp.history.size(); ++i) {
    EXPECT_NEAR(interp.history[i].train_loss, factored.history[i].train_loss, 1e-6);
  }
  EXPECT_GE(interp.lambda, 0.0);
  EXPECT_LT(interp.lambda, 1e-20);
}

TEST(Interpolated, LearnedLambdaNonNegative) {
  const auto data = synth_data(20, 4);
  const auto lm = WittenBellLM::train(forms_of(data.train), 3);
  auto c = small_config();
  c.lambda_init = -2.0;
  const auto interp = train_interpolated(data, "case=ine", lm, c);
  EXPECT_GE(interp.lambda, 0.0);
  EXPECT_NE(interp.lambda, softplus(-2.0));
}

TEST(Interpolated, LambdaGradientMatchesDifferences) {
  const auto data = synth_data(10, 2);
  const auto lm = WittenBellLM::train(forms_of(data.train), 3);
  ModelParams m = ModelParams::create(build_vocab(data.train), {6, 0, Variant::Full}, 3);
  const auto x = m.vocab.encode(data.train[0].lemma);
  const auto y = m.vocab.encode(data.train[0].inflected);
  std::vector<std::vector<double>> bias;
  for (std::size_t t = 0; t <= y.size(); ++t) bias.push_back(lm_log_bias(lm, m.vocab, std::span(y).first(t)));
  for (double init : {-1.0, 0.0, 0.7}) {
    nn::Parameter lambda_hat{"lambda_hat", nn::Tensor({1}, init)};
    nn::Parameter* const params[] = {&lambda_hat};
    const auto result = nn::gradient_check(
        params,
        [&](nn::Tape& tape) {
          const LogitBias b{tape.softplus(tape.parameter(lambda_hat)), bias};
          return nll_loss(tape, m, x, y, &b);
        },
        1e-5);
    EXPECT_LT(result.max_relative_error, 1e-6) << init;
  }
}

TEST(Interpolated, AlphabetMismatchRejected) {
  const auto data = synth_data(10, 2);
  const std::vector<std::u32string> words = {U"zebra"};
  const auto lm = WittenBellLM::train(words, 2);
  EXPECT_THROW(train_interpolated(data, "case=ine", lm, small_config()), ModelError);
}

TEST(Ensemble, Seeds) {
  TrainConfig c;
  c.seed = 10;
  EXPECT_EQ(ensemble_seeds(c), (std::vector<std::uint64_t>{10, 11, 12, 13, 14}));
  c.seeds = {3, 3, 4, 5, 6};
  EXPECT_THROW(ensemble_seeds(c), ModelError);
  c.seeds = {1, 2};
  EXPECT_THROW(ensemble_seeds(c), ModelError);
  c.ensemble_k = 2;
  EXPECT_EQ(ensemble_seeds(c), (std::vector<std::uint64_t>{1, 2}));
}

TEST(Ensemble, MembersInSeedOrder) {
  const auto data = synth_data(10, 6);
  auto c = small_config();
  c.epochs = 2;
  c.ensemble_k = 3;
  c.seed = 20;
  const auto members = train_ensemble(
      [&](std::uint64_t seed) {
        auto one = c;
        one.seed = seed;
        return train_factored(data, "case=ine", one);
      },
      c);
  ASSERT_EQ(members.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    auto one = c;
    one.seed = 20 + i;
    EXPECT_EQ(serialized(members[i].model), serialized(train_factored(data, "case=ine", one).model));
  }
  EXPECT_NE(serialized(members[0].model), serialized(members[1].model));
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "morphogen/charlm.hpp"
#include "morphogen/cli.hpp"
#include "morphogen/eval.hpp"
#include "morphogen/text.hpp"

using namespace morphogen;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("morphogen_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("MORPHOGEN_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("MORPHOGEN_SEED");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void synth(std::size_t tables = 20) {
    const auto r = run({"synth-data", "--tables", std::to_string(tables), "--seed", "3", "--out-dir", dir_.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  std::vector<std::string> small_train(const std::string& out) const {
    return {"train", "--mode", "factored", "--tag", "case=ine", "--data", path("train.tsv"), "--dev",
            path("dev.tsv"), "--out", out, "--hidden", "6", "--epochs", "2", "--ensemble-k", "1"};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainWritesCheckpoint) {
  synth();
  const auto r = run(small_train(path("m.ckpt")));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto entries = load_model_set(path("m.ckpt"));
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].tag, "case=ine");
  EXPECT_EQ(entries[0].model.config.hidden, 6u);
}

TEST_F(CliTest, TrainMatchesLibraryCall) {
  synth();
  ASSERT_EQ(run(small_train(path("m.ckpt"))).code, 0);
  TrainConfig c;
  c.hidden = 6;
  c.epochs = 2;
  c.ensemble_k = 1;
  const TrainData data{parse_dataset(fs::path(path("train.tsv"))), parse_dataset(fs::path(path("dev.tsv")))};
  const std::vector<ModelEntry> direct = {{"case=ine", train_factored(data, "case=ine", c).model, std::nullopt}};
  save_model_set(path("direct.ckpt"), direct);
  EXPECT_EQ(slurp(path("m.ckpt")), slurp(path("direct.ckpt")));
}

TEST_F(CliTest, SeedFromEnvironment) {
  synth();
  auto args = small_train(path("env.ckpt"));
  setenv("MORPHOGEN_SEED", "7", 1);
  ASSERT_EQ(run(args).code, 0);
  unsetenv("MORPHOGEN_SEED");
  args = small_train(path("flag.ckpt"));
  args.insert(args.end(), {"--seed", "7"});
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(slurp(path("env.ckpt")), slurp(path("flag.ckpt")));
  args = small_train(path("default.ckpt"));
  ASSERT_EQ(run(args).code, 0);
  EXPECT_NE(slurp(path("env.ckpt")), slurp(path("default.ckpt")));

  setenv("MORPHOGEN_SEED", "seven", 1);
  EXPECT_EQ(run(small_train(path("bad.ckpt"))).code, 1);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  const auto r = run({"evaluate", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"no-such-command"}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* cmd : {"train", "lm-train", "predict", "beam", "rerank-train", "evaluate", "analyze-length",
                          "analyze-harmony", "export-embeddings", "synth-data"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
}

TEST_F(CliTest, MissingCheckpointIsDataError) {
  synth();
  const auto r = run({"evaluate", "--model", path("absent.ckpt"), "--test", path("test.tsv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cannot open checkpoint"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvaluateMatchesLibrary) {
  synth();
  ASSERT_EQ(run(small_train(path("m.ckpt"))).code, 0);
  {
    std::ofstream f(path("one_tag.tsv"));
    write_dataset(f, examples_with_tag(parse_dataset(fs::path(path("test.tsv"))), "case=ine"));
  }
  const auto r = run({"evaluate", "--model", path("m.ckpt"), "--test", path("one_tag.tsv"), "--predictions-out",
                      path("pred.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto entries = load_model_set(path("m.ckpt"));
  const auto test = parse_dataset(fs::path(path("one_tag.tsv")));
  std::ostringstream expected;
  write_report(expected, evaluate_accuracy(experts_by_tag(entries), test, {}));
  EXPECT_EQ(r.out, expected.str());
  EXPECT_EQ(parse_dataset(fs::path(path("pred.tsv"))).size(), test.size());

  const auto bins = run({"analyze-length", "--predictions", path("pred.tsv"), "--gold", path("one_tag.tsv")});
  ASSERT_EQ(bins.code, 0) << bins.err;
  EXPECT_EQ(bins.out.rfind("length\taccuracy\tcorrect\ttotal\n", 0), 0u);

  const auto other_tag = run({"evaluate", "--model", path("m.ckpt"), "--test", path("test.tsv")});
  EXPECT_EQ(other_tag.code, 2);
}

TEST_F(CliTest, PredictBeamRerankPipeline) {
  synth();
  ASSERT_EQ(run(small_train(path("m.ckpt"))).code, 0);
  {
    std::ofstream words(path("words.txt"));
    for (const auto& ex : parse_dataset(fs::path(path("train.tsv")))) words << text::encode_utf8(ex.inflected) << '\n';
    std::ofstream queries(path("queries.tsv"));
    for (const auto& ex : examples_with_tag(parse_dataset(fs::path(path("dev.tsv"))), "case=ine"))
      queries << text::encode_utf8(ex.lemma) << '\t' << ex.tag << '\n';
  }
  ASSERT_EQ(run({"lm-train", "--words", path("words.txt"), "--order", "3", "--out", path("lm.txt")}).code, 0);
  const auto lm = WittenBellLM::load(fs::path(path("lm.txt")));
  EXPECT_EQ(lm.order(), 3u);

  const auto pred = run({"predict", "--model", path("m.ckpt"), "--input", path("queries.tsv")});
  ASSERT_EQ(pred.code, 0) << pred.err;
  EXPECT_FALSE(pred.out.empty());

  ASSERT_EQ(run({"beam", "--model", path("m.ckpt"), "--input", path("queries.tsv"), "--beam-width", "4", "--out",
                 path("nbest.tsv")})
                .code,
            0);
  EXPECT_FALSE(slurp(path("nbest.tsv")).empty());
  const auto rt = run({"rerank-train", "--nbest", path("nbest.tsv"), "--gold", path("dev.tsv"), "--lm",
                       path("lm.txt"), "--out", path("rerank.txt")});
  ASSERT_EQ(rt.code, 0) << rt.err;
  EXPECT_NE(rt.out.find("pairwise accuracy"), std::string::npos);
  EXPECT_NO_THROW(RerankModel::load(fs::path(path("rerank.txt"))));

  const auto reranked = run({"predict", "--model", path("m.ckpt"), "--input", path("queries.tsv"), "--beam-width",
                             "4", "--lm", path("lm.txt"), "--reranker", path("rerank.txt")});
  ASSERT_EQ(reranked.code, 0) << reranked.err;
}

TEST_F(CliTest, HarmonyAndExport) {
  {
    std::ofstream f(path("words.txt"));
    f << "fasisteissa\nfasisteissä\n";
  }
  const auto h = run({"analyze-harmony", "--input", path("words.txt")});
  ASSERT_EQ(h.code, 0) << h.err;
  EXPECT_NE(h.out.find("fasisteissa\tharmonic"), std::string::npos);
  EXPECT_NE(h.out.find("fasisteissä\tdisharmonic"), std::string::npos);
  EXPECT_NE(h.out.find("fraction harmonic\t0.5000"), std::string::npos);

  synth();
  ASSERT_EQ(run(small_train(path("m.ckpt"))).code, 0);
  ASSERT_EQ(run({"export-embeddings", "--model", path("m.ckpt"), "--chars", "aouäöyei", "--out", path("emb.tsv")}).code,
            0);
  std::ifstream emb(path("emb.tsv"));
  std::size_t lines = 0;
  for (std::string line; std::getline(emb, line);) ++lines;
  EXPECT_EQ(lines, 8u);
  EXPECT_EQ(run({"export-embeddings", "--model", path("m.ckpt"), "--chars", "z", "--out", path("z.tsv")}).code, 2);
}

TEST_F(CliTest, SynthDataSplits) {
  synth(50);
  EXPECT_EQ(group_tables(parse_dataset(fs::path(path("train.tsv")))).size(), 40u);
  EXPECT_EQ(group_tables(parse_dataset(fs::path(path("dev.tsv")))).size(), 5u);
  EXPECT_EQ(group_tables(parse_dataset(fs::path(path("test.tsv")))).size(), 5u);
}

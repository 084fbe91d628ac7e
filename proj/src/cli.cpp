#include "morphogen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "morphogen/charlm.hpp"
#include "morphogen/checkpoint.hpp"
#include "morphogen/error.hpp"
#include "morphogen/eval.hpp"
#include "morphogen/reranker.hpp"
#include "morphogen/search.hpp"
#include "morphogen/text.hpp"
#include "morphogen/trainer.hpp"

namespace morphogen {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Query {
  std::u32string lemma;
  std::string tag;
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

/// Tab-separated rows, skipping blank and '#' lines.
std::vector<std::vector<std::string>> read_rows(const std::string& path) {
  auto in = open_input(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(split_tabs(line));
  }
  return rows;
}

/// `lemma TAB tag [TAB ...]` lines.
std::vector<Query> read_queries(const std::string& path) {
  std::vector<Query> out;
  std::size_t n = 0;
  for (const auto& row : read_rows(path)) {
    ++n;
    if (row.size() < 2) throw DataError(path + ": row " + std::to_string(n) + " needs a lemma and a tag");
    out.push_back({text::decode_nfc(row[0]), row[1]});
  }
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MORPHOGEN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw UsageError("MORPHOGEN_SEED must be an unsigned integer");
    return v;
  }
  return 1;
}

struct TrainFlags {
  std::size_t hidden = 100;
  std::size_t embed_dim = 0;
  std::size_t epochs = 30;
  double l2 = 1e-5;
  std::optional<std::uint64_t> seed;
  std::size_t ensemble_k = 5;
  std::size_t beam_width = 20;
  std::size_t max_len_slack = 10;
  double lambda_init = 0.0;
  std::string variant = "full";

  void add_to(CLI::App& app) {
    app.add_option("--hidden", hidden, "LSTM hidden size")->capture_default_str();
    app.add_option("--embed-dim", embed_dim, "Character embedding size (0: vocabulary size)")
        ->capture_default_str();
    app.add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app.add_option("--l2", l2, "L2 regularisation constant")->capture_default_str();
    app.add_option("--seed", seed, "Random seed (default: $MORPHOGEN_SEED or 1)");
    app.add_option("--ensemble-k", ensemble_k, "Models per ensemble")->capture_default_str();
    app.add_option("--beam-width", beam_width, "Beam width")->capture_default_str();
    app.add_option("--max-len-slack", max_len_slack, "Decoding budget beyond the input length")
        ->capture_default_str();
    app.add_option("--lambda-init", lambda_init, "Initial unconstrained LM weight")->capture_default_str();
    app.add_option("--variant", variant, "full, plain-encdec, attention or no-encoder")->capture_default_str();
  }

  TrainConfig config() const {
    TrainConfig c;
    c.hidden = hidden;
    c.embed_dim = embed_dim;
    c.epochs = epochs;
    c.l2 = l2;
    c.seed = resolve_seed(seed);
    c.ensemble_k = ensemble_k;
    c.beam_width = beam_width;
    c.max_len_slack = max_len_slack;
    c.lambda_init = lambda_init;
    try {
      c.variant = parse_variant(variant);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct DecodeFlags {
  std::string model;
  std::string lm;
  std::string reranker;
  std::size_t beam_width = 0;
  std::size_t max_len_slack = 10;

  void add_to(CLI::App& app, bool beam_default) {
    app.add_option("--model", model, "Checkpoint")->required();
    app.add_option("--lm", lm, "Character language model (needed for interpolated models and reranking)");
    app.add_option("--max-len-slack", max_len_slack, "Decoding budget beyond the input length")
        ->capture_default_str();
    if (beam_default) {
      beam_width = 20;
      app.add_option("--beam-width", beam_width, "Beam width")->capture_default_str();
    } else {
      app.add_option("--beam-width", beam_width, "Beam width (0: greedy)")->capture_default_str();
      app.add_option("--reranker", reranker, "Reranker weights (needs --beam-width and --lm)");
    }
  }
};

/// Models, LM and reranker loaded for decoding; experts point into entries.
struct Loaded {
  std::vector<ModelEntry> entries;
  std::optional<WittenBellLM> lm;
  std::optional<RerankModel> reranker;
  ExpertsByTag experts;

  explicit Loaded(const DecodeFlags& flags) {
    entries = load_model_set(flags.model);
    if (!flags.lm.empty()) lm = WittenBellLM::load(std::filesystem::path(flags.lm));
    if (!flags.reranker.empty()) reranker = RerankModel::load(std::filesystem::path(flags.reranker));
    experts = experts_by_tag(entries);
  }

  const std::vector<Expert>& for_tag(const std::string& tag) const {
    auto it = experts.find(tag);
    if (it == experts.end()) throw ModelError("no model for tag '" + tag + "'");
    return it->second;
  }

  PredictConfig predict_config(const DecodeFlags& flags) const {
    return {flags.beam_width, flags.max_len_slack, lm ? &*lm : nullptr, reranker ? &*reranker : nullptr};
  }
};

std::string fmt_double(double v, const char* format = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-level morphological inflection generation", "morphogen"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // train
  auto* train = app.add_subcommand("train", "Train inflection models and write a checkpoint");
  std::string mode = "factored";
  std::string train_data, dev_data, train_out, train_lm, train_log;
  std::vector<std::string> train_tags;
  TrainFlags train_flags;
  train->add_option("--mode", mode, "factored, joint or interpolated")
      ->check(CLI::IsMember({"factored", "joint", "interpolated"}))
      ->capture_default_str();
  train->add_option("--data", train_data, "Training data (lemma TAB tag TAB form)")->required();
  train->add_option("--dev", dev_data, "Development data for epoch selection");
  train->add_option("--tag", train_tags, "Tags to train (default: all)");
  train->add_option("--out", train_out, "Checkpoint to write")->required();
  train->add_option("--lm", train_lm, "Character language model (interpolated mode)");
  train->add_option("--log", train_log, "Write per-epoch training logs here");
  train_flags.add_to(*train);

  // lm-train
  auto* lm_train = app.add_subcommand("lm-train", "Train a Witten-Bell character language model");
  std::string lm_words, lm_out, lm_vocab_data;
  std::size_t lm_order = 5;
  lm_train->add_option("--words", lm_words, "Word list, one word per line")->required();
  lm_train->add_option("--order", lm_order, "N-gram order")->capture_default_str();
  lm_train->add_option("--vocab-data", lm_vocab_data, "Keep only words spelled with this data's characters");
  lm_train->add_option("--out", lm_out, "Model file to write")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Inflect lemma TAB tag lines");
  DecodeFlags predict_flags;
  std::string predict_input;
  predict_flags.add_to(*predict_cmd, false);
  predict_cmd->add_option("--input", predict_input, "Queries, lemma TAB tag per line")->required();

  // beam
  auto* beam = app.add_subcommand("beam", "Write n-best lists");
  DecodeFlags beam_flags;
  std::string beam_input, beam_out;
  beam_flags.add_to(*beam, true);
  beam->add_option("--input", beam_input, "Queries, lemma TAB tag per line")->required();
  beam->add_option("--out", beam_out, "N-best file to write")->required();

  // rerank-train
  auto* rerank_train = app.add_subcommand("rerank-train", "Train a reranker with pairwise ranking optimisation");
  std::string rt_nbest, rt_gold, rt_lm, rt_out;
  std::optional<std::uint64_t> rt_seed;
  rerank_train->add_option("--nbest", rt_nbest, "N-best file")->required();
  rerank_train->add_option("--gold", rt_gold, "Gold data (lemma TAB tag TAB form)")->required();
  rerank_train->add_option("--lm", rt_lm, "Character language model")->required();
  rerank_train->add_option("--out", rt_out, "Reranker weights to write")->required();
  rerank_train->add_option("--seed", rt_seed, "Pair sampling seed (default: $MORPHOGEN_SEED or 1)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Exact-match accuracy on test data");
  DecodeFlags eval_flags;
  std::string eval_test, eval_predictions;
  eval_flags.add_to(*evaluate, false);
  evaluate->add_option("--test", eval_test, "Test data (lemma TAB tag TAB form)")->required();
  evaluate->add_option("--predictions-out", eval_predictions, "Also write lemma TAB tag TAB prediction");

  // analyze-length
  auto* analyze_length = app.add_subcommand("analyze-length", "Accuracy by gold form length");
  std::string al_predictions, al_gold;
  analyze_length->add_option("--predictions", al_predictions, "Predictions; last column is the form")->required();
  analyze_length->add_option("--gold", al_gold, "Gold data in the same order")->required();

  // analyze-harmony
  auto* analyze_harmony = app.add_subcommand("analyze-harmony", "Vowel harmony of words");
  std::string ah_input;
  analyze_harmony->add_option("--input", ah_input, "Words; the last column of each line is checked")->required();

  // export-embeddings
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write character vectors");
  std::string ex_model, ex_chars, ex_out, ex_tag;
  export_cmd->add_option("--model", ex_model, "Checkpoint")->required();
  export_cmd->add_option("--chars", ex_chars, "Characters to export")->required();
  export_cmd->add_option("--tag", ex_tag, "Model to export from (default: the first)");
  export_cmd->add_option("--out", ex_out, "Output file")->required();

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic vowel-harmony language");
  std::size_t synth_tables = 500;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_dir;
  synth->add_option("--tables", synth_tables, "Number of inflection tables")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed (default: $MORPHOGEN_SEED or 1)");
  synth->add_option("--out-dir", synth_dir, "Directory for train.tsv, dev.tsv and test.tsv")->required();

  // table-report
  auto* table_report = app.add_subcommand("table-report", "Train and evaluate every dataset under a directory");
  std::string tr_dir;
  TrainFlags tr_flags;
  table_report->add_option("--data-dir", tr_dir, "Directory of dataset subdirectories")->required();
  tr_flags.add_to(*table_report);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*train) {
      TrainConfig config = train_flags.config();
      const TrainData data{parse_dataset(train_data),
                           dev_data.empty() ? std::vector<Example>{} : parse_dataset(dev_data)};
      std::ofstream log_file;
      if (!train_log.empty()) log_file = open_output(train_log);
      std::vector<std::string> tags = train_tags.empty() ? tags_of(data.train) : train_tags;
      std::optional<WittenBellLM> lm;
      if (mode == "interpolated") {
        if (train_lm.empty()) throw UsageError("--mode interpolated needs --lm");
        lm = WittenBellLM::load(std::filesystem::path(train_lm));
      }
      std::vector<ModelEntry> entries;
      const auto log_to = [&](std::string_view title, std::span<const EpochRecord> history) {
        if (log_file.is_open()) {
          log_file << "# " << title << '\n';
          write_training_log(log_file, history);
        }
      };
      if (mode == "joint") {
        const auto members = train_ensemble(
            [&](std::uint64_t seed) {
              TrainConfig c = config;
              c.seed = seed;
              return train_joint(data, c);
            },
            config);
        for (const auto& m : members) {
          log_to("joint", m.history);
          for (const auto& [tag, model] : m.models) {
            if (train_tags.empty() || std::count(tags.begin(), tags.end(), tag)) {
              entries.push_back({tag, model, std::nullopt});
            }
          }
        }
      } else {
        for (const auto& tag : tags) {
          const auto members = train_ensemble(
              [&](std::uint64_t seed) {
                TrainConfig c = config;
                c.seed = seed;
                return lm ? train_interpolated(data, tag, *lm, c) : train_factored(data, tag, c);
              },
              config);
          for (const auto& m : members) {
            log_to(tag, m.history);
            entries.push_back({tag, m.model, lm ? std::optional<double>(m.lambda) : std::nullopt});
          }
        }
      }
      save_model_set(train_out, entries);
      out << "wrote " << entries.size() << " models to " << train_out << '\n';
    } else if (*lm_train) {
      auto words = read_wordlist(lm_words);
      if (!lm_vocab_data.empty()) words = filter_wordlist(words, build_vocab(parse_dataset(lm_vocab_data)));
      const WittenBellLM lm = WittenBellLM::train(words, lm_order);
      lm.save(std::filesystem::path(lm_out));
      out << "trained order-" << lm_order << " model on " << words.size() << " words\n";
    } else if (*predict_cmd) {
      const Loaded loaded(predict_flags);
      const PredictConfig config = loaded.predict_config(predict_flags);
      for (const auto& q : read_queries(predict_input)) {
        out << text::encode_utf8(q.lemma) << '\t' << q.tag << '\t'
            << text::encode_utf8(predict(loaded.for_tag(q.tag), q.lemma, config)) << '\n';
      }
    } else if (*beam) {
      const Loaded loaded(beam_flags);
      if (beam_flags.beam_width == 0) throw UsageError("--beam-width must be positive");
      std::vector<NBestEntry> entries;
      for (const auto& q : read_queries(beam_input)) {
        const auto& experts = loaded.for_tag(q.tag);
        const CharVocab& vocab = experts.front().model->vocab;
        const auto x = vocab.encode(q.lemma);
        const DecodeOptions options{default_max_len(x.size(), beam_flags.max_len_slack),
                                    loaded.lm ? &*loaded.lm : nullptr};
        for (const auto& hyp : beam_decode(experts, x, beam_flags.beam_width, options)) {
          entries.push_back({q.lemma, q.tag, vocab.decode(hyp.ids), hyp.log_prob});
        }
      }
      auto file = open_output(beam_out);
      write_nbest(file, entries);
    } else if (*rerank_train) {
      auto nbest_in = open_input(rt_nbest);
      const auto entries = read_nbest(nbest_in);
      std::map<std::pair<std::u32string, std::string>, std::u32string> gold;
      for (const auto& ex : parse_dataset(rt_gold)) gold[{ex.lemma, ex.tag}] = ex.inflected;
      std::vector<RerankGroup> groups;
      for (const auto& g : group_nbest(entries)) {
        auto it = gold.find({g.source, g.tag});
        if (it == gold.end()) {
          throw DataError("no gold form for " + text::encode_utf8(g.source) + " / " + g.tag);
        }
        groups.push_back({g.source, it->second, g.candidates, g.model_logprobs});
      }
      const WittenBellLM lm = WittenBellLM::load(std::filesystem::path(rt_lm));
      ProConfig pro;
      pro.seed = resolve_seed(rt_seed);
      const RerankModel model = pro_train(groups, lm, pro);
      model.save(std::filesystem::path(rt_out));
      std::vector<FeatureGroup> features;
      for (const auto& g : groups) features.push_back(featurize(g, lm));
      out << "pairwise accuracy " << fmt_double(pairwise_accuracy(features, model, pro), "%.4f") << '\n';
    } else if (*evaluate) {
      const Loaded loaded(eval_flags);
      const auto test = parse_dataset(eval_test);
      const EvalReport report = evaluate_accuracy(loaded.experts, test, loaded.predict_config(eval_flags));
      write_report(out, report);
      if (!eval_predictions.empty()) {
        auto file = open_output(eval_predictions);
        for (std::size_t i = 0; i < test.size(); ++i) {
          file << text::encode_utf8(test[i].lemma) << '\t' << test[i].tag << '\t'
               << text::encode_utf8(report.predictions[i]) << '\n';
        }
      }
    } else if (*analyze_length) {
      std::vector<std::u32string> predictions;
      for (const auto& row : read_rows(al_predictions)) predictions.push_back(text::decode_nfc(row.back()));
      std::vector<std::u32string> golds;
      for (const auto& ex : parse_dataset(al_gold)) golds.push_back(ex.inflected);
      out << "length\taccuracy\tcorrect\ttotal\n";
      for (const auto& bin : accuracy_by_length(predictions, golds)) {
        out << bin.label() << '\t' << fmt_double(bin.accuracy(), "%.4f") << '\t' << bin.correct << '\t'
            << bin.total << '\n';
      }
    } else if (*analyze_harmony) {
      std::vector<std::u32string> words;
      for (const auto& row : read_rows(ah_input)) words.push_back(text::decode_nfc(row.back()));
      const HarmonyResult result = vowel_harmony_check(words);
      for (std::size_t i = 0; i < words.size(); ++i) {
        out << text::encode_utf8(words[i]) << '\t' << (result.harmonic[i] ? "harmonic" : "disharmonic") << '\n';
      }
      out << "fraction harmonic\t" << fmt_double(result.fraction_harmonic, "%.4f") << '\n';
    } else if (*export_cmd) {
      const auto entries = load_model_set(ex_model);
      const ModelEntry* chosen = &entries.front();
      if (!ex_tag.empty()) {
        auto it = std::find_if(entries.begin(), entries.end(), [&](const ModelEntry& e) { return e.tag == ex_tag; });
        if (it == entries.end()) throw ModelError("no model for tag '" + ex_tag + "'");
        chosen = &*it;
      }
      export_embeddings(chosen->model, text::decode_nfc(ex_chars), std::filesystem::path(ex_out));
    } else if (*synth) {
      const auto examples = synth_language(SynthSpec::finnish_like(), synth_tables, resolve_seed(synth_seed));
      const auto split = split_tables(group_tables(examples), {}, resolve_seed(synth_seed));
      std::filesystem::create_directories(synth_dir);
      const std::filesystem::path dir(synth_dir);
      save_dataset(dir / "train.tsv", flatten(split.train));
      save_dataset(dir / "dev.tsv", flatten(split.dev));
      save_dataset(dir / "test.tsv", flatten(split.test));
      out << split.train.size() << " / " << split.dev.size() << " / " << split.test.size()
          << " tables written to " << synth_dir << '\n';
    } else if (*table_report) {
      const auto datasets = load_datasets(tr_dir);
      if (datasets.empty()) throw DataError("no datasets with train.tsv, dev.tsv and test.tsv under " + tr_dir);
      write_table_report(out, run_table_report(datasets, tr_flags.config()));
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace morphogen

#include "morphogen/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <ostream>
#include <set>
#include <thread>

#include "morphogen/error.hpp"
#include "morphogen/text.hpp"

namespace morphogen {

ExpertsByTag experts_by_tag(std::span<const ModelEntry> entries) {
  ExpertsByTag out;
  for (const auto& entry : entries) out[entry.tag].push_back({&entry.model, entry.lambda.value_or(0.0)});
  return out;
}

std::u32string predict(std::span<const Expert> experts, std::u32string_view lemma, const PredictConfig& config) {
  if (experts.empty()) throw ModelError("no models to decode with");
  const CharVocab& vocab = experts.front().model->vocab;
  const auto x = vocab.encode(lemma);
  const DecodeOptions options{default_max_len(x.size(), config.max_len_slack), config.lm};
  if (config.beam_width == 0) {
    if (config.reranker) throw ModelError("reranking needs beam search");
    return vocab.decode(greedy_decode(experts, x, options).ids);
  }
  const auto beam = beam_decode(experts, x, config.beam_width, options);
  if (!config.reranker) return vocab.decode(beam.front().ids);
  if (!config.lm) throw ModelError("reranking needs a language model");
  std::vector<std::u32string> candidates;
  std::vector<double> logprobs;
  for (const auto& hyp : beam) {
    candidates.push_back(vocab.decode(hyp.ids));
    logprobs.push_back(hyp.log_prob);
  }
  return candidates[rerank(candidates, logprobs, *config.reranker, *config.lm, lemma)];
}

std::string LengthBin::label() const {
  static constexpr const char* kLabels[] = {"<5", "[5,10)", "[10,15)", ">=15"};
  return kLabels[index];
}

std::size_t length_bin(std::size_t length) { return std::min<std::size_t>(length / 5, 3); }

std::vector<LengthBin> accuracy_by_length(std::span<const std::u32string> predictions,
                                          std::span<const std::u32string> golds) {
  if (predictions.size() != golds.size()) {
    throw DataError(std::to_string(predictions.size()) + " predictions for " + std::to_string(golds.size()) +
                    " gold forms");
  }
  std::vector<LengthBin> bins(4);
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i].index = i;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    LengthBin& bin = bins[length_bin(golds[i].size())];
    ++bin.total;
    if (predictions[i] == golds[i]) ++bin.correct;
  }
  std::erase_if(bins, [](const LengthBin& b) { return b.total == 0; });
  return bins;
}

EvalReport evaluate_accuracy(const ExpertsByTag& models, std::span<const Example> test,
                             const PredictConfig& config) {
  for (const auto& ex : test) {
    auto it = models.find(ex.tag);
    if (it == models.end() || it->second.empty()) throw ModelError("no model for tag '" + ex.tag + "'");
  }

  EvalReport report;
  report.predictions.resize(test.size());
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(1, test.size()));
  std::vector<std::future<void>> running;
  for (std::size_t w = 0; w < workers; ++w) {
    running.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < test.size(); i += workers) {
        report.predictions[i] = predict(models.at(test[i].tag), test[i].lemma, config);
      }
    }));
  }
  for (auto& f : running) f.get();

  std::map<std::string, TagAccuracy> by_tag;
  std::vector<std::u32string> golds;
  golds.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    TagAccuracy& acc = by_tag[test[i].tag];
    acc.tag = test[i].tag;
    ++acc.total;
    if (report.predictions[i] == test[i].inflected) ++acc.correct;
    golds.push_back(test[i].inflected);
  }
  for (auto& [tag, acc] : by_tag) {
    report.correct += acc.correct;
    report.total += acc.total;
    report.macro_accuracy += acc.accuracy();
    report.per_tag.push_back(acc);
  }
  if (!by_tag.empty()) report.macro_accuracy /= static_cast<double>(by_tag.size());
  report.length_bins = accuracy_by_length(report.predictions, golds);
  return report;
}

void write_report(std::ostream& out, const EvalReport& report) {
  char buf[160];
  out << "tag\taccuracy\tcorrect\ttotal\n";
  for (const auto& acc : report.per_tag) {
    std::snprintf(buf, sizeof buf, "%s\t%.4f\t%zu\t%zu\n", acc.tag.c_str(), acc.accuracy(), acc.correct,
                  acc.total);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "macro\t%.4f\t%zu\t%zu\n", report.macro_accuracy, report.correct,
                report.total);
  out << buf;
}

bool is_harmonic(std::u32string_view word) {
  static constexpr std::u32string_view kFront = U"äöy";
  static constexpr std::u32string_view kBack = U"aou";
  bool front = false;
  bool back = false;
  for (char32_t c : word) {
    front = front || kFront.find(c) != std::u32string_view::npos;
    back = back || kBack.find(c) != std::u32string_view::npos;
  }
  return !(front && back);
}

HarmonyResult vowel_harmony_check(std::span<const std::u32string> words) {
  HarmonyResult out;
  std::size_t good = 0;
  for (const auto& w : words) {
    out.harmonic.push_back(is_harmonic(w));
    if (out.harmonic.back()) ++good;
  }
  if (!words.empty()) out.fraction_harmonic = static_cast<double>(good) / static_cast<double>(words.size());
  return out;
}

void export_embeddings(const ModelParams& model, std::u32string_view chars, std::ostream& out) {
  for (char32_t c : chars) {
    if (!model.vocab.contains(c)) throw DataError("character '" + text::encode_utf8(c) + "' is not in the vocabulary");
  }
  char buf[32];
  for (char32_t c : chars) {
    out << text::encode_utf8(c);
    const nn::Tensor row = embed(model, model.vocab.id(c));
    for (double v : row.data()) {
      std::snprintf(buf, sizeof buf, "\t%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

void export_embeddings(const ModelParams& model, std::u32string_view chars, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  export_embeddings(model, chars, out);
}

std::vector<Dataset> load_datasets(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError(root.string() + " is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    const auto& p = entry.path();
    if (entry.is_directory() && std::filesystem::exists(p / "train.tsv") &&
        std::filesystem::exists(p / "dev.tsv") && std::filesystem::exists(p / "test.tsv")) {
      dirs.push_back(p);
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Dataset> out;
  for (const auto& dir : dirs) {
    out.push_back({dir.filename().string(), parse_dataset(dir / "train.tsv"), parse_dataset(dir / "dev.tsv"),
                   parse_dataset(dir / "test.tsv")});
  }
  return out;
}

namespace {

std::vector<ModelEntry> train_factored_set(const Dataset& ds, const TrainConfig& config) {
  std::vector<ModelEntry> entries;
  const TrainData data{ds.train, ds.dev};
  for (const auto& tag : tags_of(ds.train)) {
    auto members = train_ensemble(
        [&](std::uint64_t seed) {
          TrainConfig c = config;
          c.seed = seed;
          c.log = nullptr;
          return train_factored(data, tag, c).model;
        },
        config);
    for (auto& m : members) entries.push_back({tag, std::move(m), std::nullopt});
  }
  return entries;
}

std::vector<ModelEntry> train_joint_set(const Dataset& ds, const TrainConfig& config) {
  const TrainData data{ds.train, ds.dev};
  auto members = train_ensemble(
      [&](std::uint64_t seed) {
        TrainConfig c = config;
        c.seed = seed;
        c.log = nullptr;
        return train_joint(data, c).models;
      },
      config);
  std::vector<ModelEntry> entries;
  for (auto& member : members) {
    for (auto& [tag, m] : member) entries.push_back({tag, std::move(m), std::nullopt});
  }
  return entries;
}

}  // namespace

TableReport run_table_report(std::span<const Dataset> datasets, const TrainConfig& config, std::size_t lm_order) {
  TableReport report;
  report.systems = {"factored", "joint", "factored+rerank"};
  for (const auto& ds : datasets) {
    TableRow row{ds.name, {}};
    const auto factored = train_factored_set(ds, config);
    const auto factored_experts = experts_by_tag(factored);
    row.accuracy["factored"] = evaluate_accuracy(factored_experts, ds.test, {}).macro_accuracy;

    const auto joint = train_joint_set(ds, config);
    row.accuracy["joint"] = evaluate_accuracy(experts_by_tag(joint), ds.test, {}).macro_accuracy;

    std::vector<std::u32string> words;
    for (const auto& ex : ds.train) words.push_back(ex.inflected);
    const WittenBellLM lm = WittenBellLM::train(filter_wordlist(words, factored.front().model.vocab), lm_order);
    std::vector<RerankGroup> groups;
    for (const auto& ex : ds.dev) {
      const auto& experts = factored_experts.at(ex.tag);
      const CharVocab& vocab = experts.front().model->vocab;
      const auto x = vocab.encode(ex.lemma);
      RerankGroup g{ex.lemma, ex.inflected, {}, {}};
      for (const auto& hyp : beam_decode(experts, x, config.beam_width,
                                         {default_max_len(x.size(), config.max_len_slack), nullptr})) {
        g.candidates.push_back(vocab.decode(hyp.ids));
        g.model_logprobs.push_back(hyp.log_prob);
      }
      groups.push_back(std::move(g));
    }
    const RerankModel reranker = pro_train(groups, lm, ProConfig{});
    const PredictConfig reranked{config.beam_width, config.max_len_slack, &lm, &reranker};
    row.accuracy["factored+rerank"] = evaluate_accuracy(factored_experts, ds.test, reranked).macro_accuracy;
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_table_report(std::ostream& out, const TableReport& report) {
  char buf[32];
  out << "dataset";
  for (const auto& s : report.systems) out << '\t' << s;
  out << '\n';
  std::map<std::string, double> sums;
  for (const auto& row : report.rows) {
    out << row.dataset;
    for (const auto& s : report.systems) {
      const double acc = row.accuracy.at(s);
      sums[s] += acc;
      std::snprintf(buf, sizeof buf, "\t%.2f", 100.0 * acc);
      out << buf;
    }
    out << '\n';
  }
  if (report.rows.empty()) return;
  out << "Avg.";
  for (const auto& s : report.systems) {
    std::snprintf(buf, sizeof buf, "\t%.2f", 100.0 * sums[s] / static_cast<double>(report.rows.size()));
    out << buf;
  }
  out << '\n';
}

}  // namespace morphogen

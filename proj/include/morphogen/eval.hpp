#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphogen/charlm.hpp"
#include "morphogen/checkpoint.hpp"
#include "morphogen/data.hpp"
#include "morphogen/reranker.hpp"
#include "morphogen/search.hpp"
#include "morphogen/trainer.hpp"

namespace morphogen {

/// Ensemble members per tag.
using ExpertsByTag = std::map<std::string, std::vector<Expert>>;

/// Groups checkpoint entries by tag; entries without lambda get lambda 0.
ExpertsByTag experts_by_tag(std::span<const ModelEntry> entries);

struct PredictConfig {
  /// 0 selects greedy decoding.
  std::size_t beam_width = 0;
  std::size_t max_len_slack = 10;
  const WittenBellLM* lm = nullptr;
  /// Reranks the beam's n-best list; needs beam_width > 0 and an LM.
  const RerankModel* reranker = nullptr;
};

std::u32string predict(std::span<const Expert> experts, std::u32string_view lemma, const PredictConfig& config);

struct TagAccuracy {
  std::string tag;
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct LengthBin {
  std::size_t index = 0;  // 0: <5, 1: [5,10), 2: [10,15), 3: >=15
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return static_cast<double>(correct) / static_cast<double>(total); }
  std::string label() const;
};

struct EvalReport {
  std::vector<TagAccuracy> per_tag;  // sorted by tag
  std::size_t correct = 0;
  std::size_t total = 0;
  double macro_accuracy = 0.0;
  /// One prediction per test example, in input order.
  std::vector<std::u32string> predictions;
  std::vector<LengthBin> length_bins;

  double micro_accuracy() const {
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  }
};

/// Decodes every test example with the models of its tag (in parallel) and
/// scores exact matches. Throws ModelError when a tag has no models.
EvalReport evaluate_accuracy(const ExpertsByTag& models, std::span<const Example> test,
                             const PredictConfig& config);

void write_report(std::ostream& out, const EvalReport& report);

/// Bin index of a gold form of `length` characters.
std::size_t length_bin(std::size_t length);

/// Exact-match accuracy per gold-length bin; empty bins are left out.
std::vector<LengthBin> accuracy_by_length(std::span<const std::u32string> predictions,
                                          std::span<const std::u32string> golds);

struct HarmonyResult {
  double fraction_harmonic = 1.0;  // 1 for an empty list
  std::vector<bool> harmonic;
};

/// Front vowels äöy, back vowels aou; a word is harmonic unless it has both.
bool is_harmonic(std::u32string_view word);
HarmonyResult vowel_harmony_check(std::span<const std::u32string> words);

/// `char TAB v1 TAB v2 ...` per requested character, full precision.
void export_embeddings(const ModelParams& model, std::u32string_view chars, std::ostream& out);
void export_embeddings(const ModelParams& model, std::u32string_view chars, const std::filesystem::path& path);

struct Dataset {
  std::string name;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

/// Reads `train.tsv`, `dev.tsv` and `test.tsv` from every subdirectory of
/// `root` that has all three, in name order.
std::vector<Dataset> load_datasets(const std::filesystem::path& root);

struct TableRow {
  std::string dataset;
  std::map<std::string, double> accuracy;  // system -> macro test accuracy
};

struct TableReport {
  std::vector<std::string> systems;
  std::vector<TableRow> rows;
};

/// Trains and evaluates the factored and joint systems, and the factored
/// system reranked with a language model built from the training forms, on
/// every dataset.
TableReport run_table_report(std::span<const Dataset> datasets, const TrainConfig& config,
                             std::size_t lm_order = 5);

/// One row per dataset plus an `Avg.` row, accuracies in percent.
void write_table_report(std::ostream& out, const TableReport& report);

}  // namespace morphogen

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphogen/charlm.hpp"

namespace morphogen {

inline constexpr std::size_t kNumFeatures = 8;

/// Fixed feature order of the reranker.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "lm_logprob",  "model_logprob", "length_diff",   "levenshtein",
    "same_suffix", "same_prefix",   "y_subseq_of_x", "x_subseq_of_y",
};

using FeatureVector = std::array<double, kNumFeatures>;

/// Common prefix/suffix length at which the same_prefix/same_suffix
/// predicates fire.
inline constexpr std::size_t kAffixThreshold = 2;

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
/// True if `needle` is a (not necessarily contiguous) subsequence of `haystack`.
bool is_subsequence(std::u32string_view needle, std::u32string_view haystack);
std::size_t common_prefix_length(std::u32string_view a, std::u32string_view b);
std::size_t common_suffix_length(std::u32string_view a, std::u32string_view b);

/// Features of candidate y for root x.
FeatureVector extract_features(std::u32string_view x, std::u32string_view y, double model_logprob,
                               const WittenBellLM& lm);

struct RerankModel {
  FeatureVector weights{};

  double score(const FeatureVector& f) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static RerankModel load(std::istream& in);
  static RerankModel load(const std::filesystem::path& path);

  bool operator==(const RerankModel&) const = default;
};

/// Candidates of one beam with their features and a quality score (higher
/// is better).
struct FeatureGroup {
  std::vector<FeatureVector> features;
  std::vector<double> quality;
};

/// A beam with its gold answer.
struct RerankGroup {
  std::u32string source;
  std::u32string gold;
  std::vector<std::u32string> candidates;
  std::vector<double> model_logprobs;
};

/// Features for every candidate; quality = -levenshtein(candidate, gold).
FeatureGroup featurize(const RerankGroup& group, const WittenBellLM& lm);

struct ProConfig {
  /// Candidate pairs drawn per group when there are more than this many.
  std::size_t samples_per_group = 5000;
  /// Pairs kept per group (largest quality gaps first).
  std::size_t pairs_per_group = 50;
  double min_quality_gap = 1.0;
  /// Ridge coefficient on the mean logistic loss.
  double l2 = 1e-4;
  std::size_t max_iterations = 100;
  std::uint64_t seed = 1;
};

/// Training pairs as feature differences (better minus worse).
std::vector<FeatureVector> sample_pro_pairs(std::span<const FeatureGroup> groups, const ProConfig& config);

/// Pairwise ranking optimisation: logistic regression on sampled pair
/// differences. Throws ModelError when no usable pair exists.
RerankModel pro_train(std::span<const FeatureGroup> groups, const ProConfig& config);
RerankModel pro_train(std::span<const RerankGroup> groups, const WittenBellLM& lm, const ProConfig& config);

/// Fraction of sampled pairs the model orders correctly.
double pairwise_accuracy(std::span<const FeatureGroup> groups, const RerankModel& model,
                         const ProConfig& config);

/// Index of the highest-scoring candidate; ties keep the earlier one.
std::size_t rerank(std::span<const FeatureVector> candidates, const RerankModel& model);
std::size_t rerank(std::span<const std::u32string> candidates, std::span<const double> model_logprobs,
                   const RerankModel& model, const WittenBellLM& lm, std::u32string_view x);

}  // namespace morphogen

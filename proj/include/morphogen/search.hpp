#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "morphogen/charlm.hpp"
#include "morphogen/model.hpp"

namespace morphogen {

/// One ensemble member. A positive lambda interpolates the member's
/// next-character distribution with the language model: p ∝ p_model * p_LM^lambda.
struct Expert {
  const ModelParams* model = nullptr;
  double lambda = 0.0;
};

struct DecodeOptions {
  /// Maximum number of decoder steps, EOS included.
  std::size_t max_len = 0;
  /// Required when any expert has lambda > 0.
  const WittenBellLM* lm = nullptr;
};

/// Default step budget for an input of `input_length` characters.
inline std::size_t default_max_len(std::size_t input_length, std::size_t slack = 10) {
  return input_length + slack;
}

/// Product of experts: p(i) ∝ prod_j p_j(i)^(1/k).
std::vector<double> ensemble_next_dist(std::span<const std::vector<double>> dists);

/// p(i) ∝ model(i) * lm(i)^lambda, renormalised.
std::vector<double> interpolated_next_dist(std::span<const double> model_dist,
                                           std::span<const double> lm_dist, double lambda);

/// log p_LM(c | history) for every vocabulary id: EOS maps to the end-of-word
/// symbol, UNK and characters outside the LM alphabet to the uniform floor,
/// BOS and EPS to 0 (they are masked at the output layer).
std::vector<double> lm_log_bias(const WittenBellLM& lm, const CharVocab& vocab,
                                std::span<const int> history_ids);

struct DecodeResult {
  std::vector<int> ids;  // without EOS
  double log_prob = 0.0;
  bool truncated = false;  // max_len reached without EOS
};

/// Argmax decoding; ties go to the lowest id.
DecodeResult greedy_decode(std::span<const Expert> experts, std::span<const int> x_ids,
                           const DecodeOptions& options);

/// Beam search without length normalisation. Returns up to `width` results
/// sorted by log-probability, ties broken by lexicographic ids.
std::vector<DecodeResult> beam_decode(std::span<const Expert> experts, std::span<const int> x_ids,
                                      std::size_t width, const DecodeOptions& options);

/// One line of an n-best file.
struct NBestEntry {
  std::u32string source;
  std::string tag;
  std::u32string candidate;
  double model_logprob = 0.0;

  bool operator==(const NBestEntry&) const = default;
};

/// Candidates of one (source, tag) in beam order.
struct NBestGroup {
  std::u32string source;
  std::string tag;
  std::vector<std::u32string> candidates;
  std::vector<double> model_logprobs;
};

/// `source TAB tag TAB candidate TAB model_logprob` per line.
void write_nbest(std::ostream& out, std::span<const NBestEntry> entries);
std::vector<NBestEntry> read_nbest(std::istream& in);
/// Groups consecutive entries sharing (source, tag).
std::vector<NBestGroup> group_nbest(std::span<const NBestEntry> entries);

}  // namespace morphogen

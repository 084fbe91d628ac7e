#include "morphogen/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>

#include "morphogen/error.hpp"
#include "morphogen/text.hpp"

namespace morphogen {

using nn::Tape;
using nn::Var;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void normalise_log(std::vector<double>& logp) {
  const double lse = nn::log_sum_exp(logp);
  for (double& v : logp) v = std::isfinite(v) ? v - lse : kNegInf;
}

std::vector<double> to_probs(const std::vector<double>& logp) {
  std::vector<double> p(logp.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::isfinite(logp[i]) ? std::exp(logp[i]) : 0.0;
  return p;
}

std::vector<double> to_logs(std::span<const double> p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.0 ? std::log(p[i]) : kNegInf;
  return out;
}

/// Incremental next-character scoring over an ensemble. Each expert records
/// onto its own inference tape; hypotheses hold per-expert decoder states.
class EnsembleScorer {
 public:
  EnsembleScorer(std::span<const Expert> experts, std::span<const int> x_ids, const DecodeOptions& options)
      : experts_(experts.begin(), experts.end()), lm_(options.lm) {
    if (experts_.empty()) throw ModelError("decoding needs at least one model");
    const CharVocab& vocab = experts_[0].model->vocab;
    for (const Expert& e : experts_) {
      if (!e.model) throw ModelError("null model in ensemble");
      if (!(e.model->vocab == vocab)) throw ModelError("ensemble members use different vocabularies");
      if (e.lambda < 0.0 || !std::isfinite(e.lambda)) throw ModelError("interpolation weight must be >= 0");
      if (e.lambda > 0.0 && !lm_) throw ModelError("interpolated model requires a language model");
    }
    mask_ = output_mask(vocab.size());
    tapes_.reserve(experts_.size());
    for (const Expert& e : experts_) {
      tapes_.emplace_back(false);
      inputs_.push_back(encode_input(tapes_.back(), *e.model, x_ids));
    }
  }

  const CharVocab& vocab() const { return experts_[0].model->vocab; }

  std::vector<LstmState> initial_states() {
    std::vector<LstmState> states;
    for (std::size_t j = 0; j < experts_.size(); ++j)
      states.push_back(initial_decoder_state(tapes_[j], *experts_[j].model, inputs_[j]));
    return states;
  }

  /// Log distribution over ids after `history`, and the advanced states.
  std::vector<double> next(const std::vector<int>& history, const std::vector<LstmState>& states,
                           std::vector<LstmState>& next_states) {
    const std::size_t t = history.size();
    const int y_prev = history.empty() ? CharVocab::kBos : history.back();
    next_states.resize(experts_.size());
    std::vector<std::vector<double>> member_logs;
    member_logs.reserve(experts_.size());
    std::vector<double> bias;
    for (std::size_t j = 0; j < experts_.size(); ++j) {
      Tape& tape = tapes_[j];
      const DecoderStep step = decoder_step(tape, *experts_[j].model, inputs_[j], states[j], y_prev, t);
      next_states[j] = step.state;
      Var logits = step.logits;
      if (experts_[j].lambda > 0.0) {
        if (bias.empty()) bias = lm_log_bias(*lm_, vocab(), history);
        logits = tape.add(logits, tape.scale(tape.constant({experts_[j].lambda}), bias));
      }
      const auto logp = tape.value(tape.log_softmax(logits, mask_));
      member_logs.emplace_back(logp.begin(), logp.end());
    }
    if (member_logs.size() == 1) return std::move(member_logs[0]);

    const double k = static_cast<double>(member_logs.size());
    std::vector<double> combined(member_logs[0].size(), 0.0);
    for (const auto& logs : member_logs)
      for (std::size_t i = 0; i < combined.size(); ++i) combined[i] += logs[i];
    for (double& v : combined) v /= k;
    normalise_log(combined);
    return combined;
  }

 private:
  std::vector<Expert> experts_;
  const WittenBellLM* lm_;
  std::vector<double> mask_;
  std::vector<Tape> tapes_;
  std::vector<EncodedInput> inputs_;
};

std::size_t resolve_max_len(const DecodeOptions& options, std::size_t input_length) {
  return options.max_len == 0 ? default_max_len(input_length) : options.max_len;
}

bool better(double score_a, const std::vector<int>& ids_a, double score_b, const std::vector<int>& ids_b) {
  if (score_a != score_b) return score_a > score_b;
  return ids_a < ids_b;
}

}  // namespace

std::vector<double> ensemble_next_dist(std::span<const std::vector<double>> dists) {
  if (dists.empty()) throw ModelError("ensemble of zero distributions");
  const std::size_t n = dists[0].size();
  for (const auto& d : dists)
    if (d.size() != n) throw DimensionError("ensemble members disagree on distribution size");
  if (dists.size() == 1) return dists[0];
  std::vector<double> logp(n, 0.0);
  for (const auto& d : dists) {
    const auto l = to_logs(d);
    for (std::size_t i = 0; i < n; ++i) logp[i] += l[i];
  }
  for (double& v : logp) v /= static_cast<double>(dists.size());
  normalise_log(logp);
  return to_probs(logp);
}

std::vector<double> interpolated_next_dist(std::span<const double> model_dist,
                                           std::span<const double> lm_dist, double lambda) {
  if (lambda < 0.0) throw ModelError("interpolation weight must be non-negative");
  if (model_dist.size() != lm_dist.size()) throw DimensionError("model and LM distributions differ in size");
  if (lambda == 0.0) return {model_dist.begin(), model_dist.end()};
  std::vector<double> logp = to_logs(model_dist);
  const auto lm_logs = to_logs(lm_dist);
  for (std::size_t i = 0; i < logp.size(); ++i) logp[i] += lambda * lm_logs[i];
  normalise_log(logp);
  return to_probs(logp);
}

std::vector<double> lm_log_bias(const WittenBellLM& lm, const CharVocab& vocab,
                                std::span<const int> history_ids) {
  std::u32string prefix;
  prefix.reserve(history_ids.size());
  for (int id : history_ids) prefix.push_back(vocab.is_data(id) ? vocab.symbol(id) : U'�');
  const std::u32string context = lm.context_for(prefix);
  const auto dist = lm.distribution(context);
  const double floor = std::log(1.0 / static_cast<double>(lm.outcomes()));

  std::vector<double> bias(vocab.size(), 0.0);
  bias[CharVocab::kEos] = std::log(dist.back());
  bias[CharVocab::kUnk] = floor;
  const std::u32string& alphabet = lm.alphabet();
  for (std::size_t i = 0; i < vocab.chars().size(); ++i) {
    const char32_t c = vocab.chars()[i];
    auto it = std::lower_bound(alphabet.begin(), alphabet.end(), c);
    bias[CharVocab::kNumSpecial + i] =
        (it != alphabet.end() && *it == c) ? std::log(dist[static_cast<std::size_t>(it - alphabet.begin())])
                                           : floor;
  }
  return bias;
}

DecodeResult greedy_decode(std::span<const Expert> experts, std::span<const int> x_ids,
                           const DecodeOptions& options) {
  EnsembleScorer scorer(experts, x_ids, options);
  const std::size_t max_len = resolve_max_len(options, x_ids.size());
  if (max_len < 1) throw ModelError("max_len must be at least 1");
  DecodeResult result;
  std::vector<LstmState> states = scorer.initial_states();
  std::vector<LstmState> next_states;
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto logp = scorer.next(result.ids, states, next_states);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logp.size(); ++i)
      if (logp[i] > logp[best]) best = i;
    result.log_prob += logp[best];
    if (static_cast<int>(best) == CharVocab::kEos) return result;
    result.ids.push_back(static_cast<int>(best));
    states.swap(next_states);
  }
  result.truncated = true;
  return result;
}

std::vector<DecodeResult> beam_decode(std::span<const Expert> experts, std::span<const int> x_ids,
                                      std::size_t width, const DecodeOptions& options) {
  if (width == 0) throw ModelError("beam width must be at least 1");
  EnsembleScorer scorer(experts, x_ids, options);
  const std::size_t max_len = resolve_max_len(options, x_ids.size());
  if (max_len < 1) throw ModelError("max_len must be at least 1");

  struct Hyp {
    std::vector<int> ids;
    double log_prob = 0.0;
    std::vector<LstmState> states;
  };
  struct Expansion {
    std::size_t parent;
    int id;
    double score;
    std::vector<int> ids;
  };

  std::vector<Hyp> live{{{}, 0.0, scorer.initial_states()}};
  std::vector<DecodeResult> pool;
  auto sort_pool = [&] {
    std::sort(pool.begin(), pool.end(), [](const DecodeResult& a, const DecodeResult& b) {
      return better(a.log_prob, a.ids, b.log_prob, b.ids);
    });
  };

  std::size_t step = 0;
  for (; step < max_len && !live.empty(); ++step) {
    std::vector<std::vector<LstmState>> advanced(live.size());
    std::vector<Expansion> expansions;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto logp = scorer.next(live[h].ids, live[h].states, advanced[h]);
      for (std::size_t i = 0; i < logp.size(); ++i) {
        if (!std::isfinite(logp[i])) continue;
        Expansion e{h, static_cast<int>(i), live[h].log_prob + logp[i], live[h].ids};
        e.ids.push_back(e.id);
        expansions.push_back(std::move(e));
      }
    }
    const std::size_t keep = std::min(width, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep),
                      expansions.end(), [](const Expansion& a, const Expansion& b) {
                        return better(a.score, a.ids, b.score, b.ids);
                      });
    expansions.resize(keep);

    std::vector<Hyp> next_live;
    for (Expansion& e : expansions) {
      if (e.id == CharVocab::kEos) {
        e.ids.pop_back();
        pool.push_back({std::move(e.ids), e.score, false});
      } else {
        next_live.push_back({std::move(e.ids), e.score, advanced[e.parent]});
      }
    }
    live = std::move(next_live);

    if (pool.size() >= width && !live.empty()) {
      sort_pool();
      // Scores only decrease, so live hypotheses can no longer enter the top `width`.
      if (live.front().log_prob < pool[width - 1].log_prob) {
        live.clear();
      }
    }
  }
  for (Hyp& h : live) pool.push_back({std::move(h.ids), h.log_prob, true});
  sort_pool();
  if (pool.size() > width) pool.resize(width);
  return pool;
}

void write_nbest(std::ostream& out, std::span<const NBestEntry> entries) {
  char buffer[64];
  for (const NBestEntry& e : entries) {
    std::snprintf(buffer, sizeof buffer, "%.17g", e.model_logprob);
    out << text::encode_utf8(e.source) << '\t' << e.tag << '\t' << text::encode_utf8(e.candidate) << '\t'
        << buffer << '\n';
  }
}

std::vector<NBestEntry> read_nbest(std::istream& in) {
  std::vector<NBestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 4) {
      throw DataError("n-best line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    NBestEntry e;
    e.source = text::decode_nfc(fields[0]);
    e.tag = fields[1];
    e.candidate = text::decode_nfc(fields[2]);
    try {
      std::size_t used = 0;
      e.model_logprob = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw DataError("n-best line " + std::to_string(line_no) + ": bad log-probability");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<NBestGroup> group_nbest(std::span<const NBestEntry> entries) {
  std::vector<NBestGroup> groups;
  for (const NBestEntry& e : entries) {
    if (groups.empty() || groups.back().source != e.source || groups.back().tag != e.tag) {
      groups.push_back({e.source, e.tag, {}, {}});
    }
    groups.back().candidates.push_back(e.candidate);
    groups.back().model_logprobs.push_back(e.model_logprob);
  }
  return groups;
}

}  // namespace morphogen

#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "reference.hpp"

namespace testing_support {

struct Scored {
  std::vector<int> ids;
  double log_prob;
  bool truncated;
};

/// Scores one complete output under the reference decoder: chars then EOS,
/// or exactly max_len chars without EOS when truncated.
inline double reference_score(const morphogen::ModelParams& m, std::span<const int> x,
                              const std::vector<int>& ids, bool truncated) {
  ref::Decoder<double> dec(m, x);
  double total = 0.0;
  int prev = morphogen::CharVocab::kBos;
  for (int id : ids) {
    total += dec.step(prev)[id];
    prev = id;
  }
  if (!truncated) total += dec.step(prev)[morphogen::CharVocab::kEos];
  return total;
}

/// Every output reachable within max_len steps, best first.
inline std::vector<Scored> enumerate_all(const morphogen::ModelParams& m, std::span<const int> x,
                                         std::size_t max_len) {
  std::vector<int> symbols = {morphogen::CharVocab::kUnk};
  for (int id = morphogen::CharVocab::kNumSpecial; id < static_cast<int>(m.vocab.size()); ++id)
    symbols.push_back(id);
  std::vector<Scored> out;
  std::vector<std::vector<int>> frontier = {{}};
  for (std::size_t len = 0; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& ids : frontier) {
      const bool truncated = len == max_len;
      out.push_back({ids, reference_score(m, x, ids, truncated), truncated});
      if (!truncated) {
        for (int s : symbols) {
          auto longer = ids;
          longer.push_back(s);
          next.push_back(std::move(longer));
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    return a.log_prob != b.log_prob ? a.log_prob > b.log_prob : a.ids < b.ids;
  });
  return out;
}

}  // namespace testing_support

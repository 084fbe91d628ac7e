#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "morphogen/vocab.hpp"

namespace morphogen {

/// Character n-gram model with Witten-Bell interpolated smoothing:
///
///   P(w | h) = (c(h, w) + T(h) * P(w | h')) / (c(h) + T(h))
///
/// where h' drops the oldest character of h, T(h) counts the distinct
/// successors of h, and the recursion bottoms out in the uniform
/// distribution over the alphabet plus the end-of-word symbol. Histories
/// never observed back off completely.
class WittenBellLM {
 public:
  /// Word-boundary symbols. Words are padded with order-1 start symbols and
  /// terminated by one end symbol.
  static constexpr char32_t kStart = U'␂';
  static constexpr char32_t kEnd = U'␃';

  WittenBellLM(std::size_t order, std::u32string_view alphabet);

  /// Counts n-grams of every order up to `order` over the distinct words.
  /// `extra_alphabet` adds characters to the alphabet without counts.
  static WittenBellLM train(std::span<const std::u32string> words, std::size_t order,
                            std::u32string_view extra_alphabet = {});

  std::size_t order() const { return order_; }
  /// Sorted data characters (the end symbol is implicit).
  const std::u32string& alphabet() const { return alphabet_; }
  /// Number of predictable outcomes: alphabet plus end symbol.
  std::size_t outcomes() const { return alphabet_.size() + 1; }
  bool in_alphabet(char32_t c) const;

  void add_count(std::u32string_view history, char32_t next, std::uint64_t count);
  std::uint64_t count(std::u32string_view history, char32_t next) const;
  std::uint64_t total(std::u32string_view history) const;
  std::uint64_t distinct(std::u32string_view history) const;

  /// P(next | history) for a raw context (already padded if needed); only the
  /// last order-1 characters are used. Characters outside the alphabet get
  /// the uniform floor 1/outcomes().
  double prob(std::u32string_view history, char32_t next) const;

  /// Probabilities of alphabet()[0..] followed by kEnd given a raw context.
  std::vector<double> distribution(std::u32string_view history) const;

  /// The raw context for predicting the character after `prefix` within a word.
  std::u32string context_for(std::u32string_view prefix) const;

  double next_char_prob(std::u32string_view prefix, char32_t next) const {
    return prob(context_for(prefix), next);
  }

  /// Natural-log probability of the word including its end transition.
  double score_word(std::u32string_view word) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static WittenBellLM load(std::istream& in);
  static WittenBellLM load(const std::filesystem::path& path);

  bool operator==(const WittenBellLM& other) const;

 private:
  struct Context {
    std::map<char32_t, std::uint64_t> next;
    std::uint64_t total = 0;

    bool operator==(const Context&) const = default;
  };

  const Context* find(std::u32string_view history) const;

  std::size_t order_;
  std::u32string alphabet_;
  std::unordered_map<std::u32string, Context> contexts_;
};

/// Words whose every character is a data character of `vocab`, in order.
std::vector<std::u32string> filter_wordlist(std::span<const std::u32string> words,
                                            const CharVocab& vocab);

}  // namespace morphogen

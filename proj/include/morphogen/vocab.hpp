#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace morphogen {

/// Character <-> id map. Ids 0..3 are reserved for BOS, EOS, EPS (null
/// decoder input) and UNK; data characters follow in codepoint order.
class CharVocab {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kEps = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecial = 4;

  CharVocab() = default;
  /// Duplicates are dropped and the characters sorted.
  explicit CharVocab(std::u32string_view chars);

  std::size_t size() const { return kNumSpecial + chars_.size(); }
  /// Data characters in id order.
  const std::u32string& chars() const { return chars_; }

  std::optional<int> find(char32_t c) const;
  /// Id of c, or kUnk for characters outside the vocabulary.
  int id(char32_t c) const;
  bool contains(char32_t c) const { return find(c).has_value(); }
  /// Character of a data id; throws ModelError for specials or out of range.
  char32_t symbol(int id) const;
  bool is_data(int id) const { return id >= kNumSpecial && id < static_cast<int>(size()); }

  std::vector<int> encode(std::u32string_view text) const;
  /// Data ids map to their characters, UNK to U+FFFD; BOS/EOS/EPS are skipped.
  std::u32string decode(std::span<const int> ids) const;

  /// Printable name for any id ("<bos>", "a", ...).
  std::string label(int id) const;

  bool operator==(const CharVocab& other) const { return chars_ == other.chars_; }

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, int> index_;
};

}  // namespace morphogen

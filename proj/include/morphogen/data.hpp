#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphogen/vocab.hpp"

namespace morphogen {

/// One (lemma, tag, inflected form) record.
struct Example {
  std::u32string lemma;
  std::string tag;
  std::u32string inflected;

  bool operator==(const Example&) const = default;
};

/// All known forms of one lemma, keyed by tag.
struct InflectionTable {
  std::u32string lemma;
  std::map<std::string, std::u32string> forms;

  bool operator==(const InflectionTable&) const = default;
};

struct DatasetSplit {
  std::vector<InflectionTable> train;
  std::vector<InflectionTable> dev;
  std::vector<InflectionTable> test;
};

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

/// Reads `lemma TAB tag TAB inflected` lines. Blank lines and lines starting
/// with '#' are skipped; text is NFC-normalised. Errors carry the line number.
std::vector<Example> parse_dataset(std::istream& in, std::string_view source = "<stream>");
std::vector<Example> parse_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, std::span<const Example> examples);
void save_dataset(const std::filesystem::path& path, std::span<const Example> examples);

/// One word per line, NFC-normalised; blank lines skipped.
std::vector<std::u32string> read_wordlist(const std::filesystem::path& path);

/// Specials plus every character of every lemma and inflected form.
CharVocab build_vocab(std::span<const Example> examples);

/// Sorted distinct tags.
std::vector<std::string> tags_of(std::span<const Example> examples);

std::vector<Example> examples_with_tag(std::span<const Example> examples, std::string_view tag);

/// Groups by lemma (tables sorted by lemma). Two different forms for the
/// same lemma and tag are a DataError.
std::vector<InflectionTable> group_tables(std::span<const Example> examples);

std::vector<Example> flatten(std::span<const InflectionTable> tables);

/// Seeded shuffle, then split at table granularity. Dev and test sizes are
/// round(N * ratio); train takes the rest.
DatasetSplit split_tables(std::vector<InflectionTable> tables, SplitRatios ratios, std::uint64_t seed);

/// Suffix with a front-harmony and a back-harmony variant.
struct SuffixRule {
  std::string tag;
  std::u32string front;
  std::u32string back;
};

/// A toy agglutinative language with Finnish-style vowel harmony: the suffix
/// takes its back variant when the stem holds a back vowel, else the front one.
struct SynthSpec {
  std::u32string consonants;
  std::u32string back_vowels;
  std::u32string front_vowels;
  std::u32string neutral_vowels;
  std::size_t min_stem = 3;
  std::size_t max_stem = 7;
  std::vector<SuffixRule> rules;

  /// 12 characters (k l s t, a o u, ä ö y, e i) and four locative cases.
  static SynthSpec finnish_like();
  void validate() const;
  std::u32string alphabet() const;
};

/// Inflects `stem` with `rule` under the harmony rule of `spec`.
std::u32string harmonize(const SynthSpec& spec, std::u32string_view stem, const SuffixRule& rule);

/// `size` distinct random stems, each inflected for every rule.
std::vector<Example> synth_language(const SynthSpec& spec, std::size_t size, std::uint64_t seed);

}  // namespace morphogen

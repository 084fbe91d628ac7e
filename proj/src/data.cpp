#include "morphogen/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <random>
#include <set>
#include <sstream>

#include "morphogen/error.hpp"
#include "morphogen/text.hpp"

namespace morphogen {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

std::vector<Example> parse_dataset(std::istream& in, std::string_view source) {
  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (is_blank(view) || view.front() == '#') continue;
    const auto where = [&] { return std::string(source) + ":" + std::to_string(line_no); };
    const auto fields = split_tabs(view);
    if (fields.size() != 3) {
      throw DataError(where() + ": expected 3 tab-separated columns, found " +
                      std::to_string(fields.size()));
    }
    Example ex;
    try {
      ex.lemma = text::decode_nfc(fields[0]);
      ex.inflected = text::decode_nfc(fields[2]);
    } catch (const DataError& e) {
      throw DataError(where() + ": " + e.what());
    }
    ex.tag = std::string(fields[1]);
    if (ex.lemma.empty() || ex.tag.empty() || ex.inflected.empty()) {
      throw DataError(where() + ": empty field");
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::vector<Example> parse_dataset(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_dataset(in, path.string());
}

void write_dataset(std::ostream& out, std::span<const Example> examples) {
  for (const Example& ex : examples) {
    out << text::encode_utf8(ex.lemma) << '\t' << ex.tag << '\t' << text::encode_utf8(ex.inflected)
        << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, examples);
}

std::vector<std::u32string> read_wordlist(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::u32string> words;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (is_blank(view)) continue;
    try {
      words.push_back(text::decode_nfc(view));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return words;
}

CharVocab build_vocab(std::span<const Example> examples) {
  if (examples.empty()) throw DataError("cannot build a vocabulary from no examples");
  std::u32string chars;
  for (const Example& ex : examples) {
    chars += ex.lemma;
    chars += ex.inflected;
  }
  return CharVocab(chars);
}

std::vector<std::string> tags_of(std::span<const Example> examples) {
  std::set<std::string> tags;
  for (const Example& ex : examples) tags.insert(ex.tag);
  return {tags.begin(), tags.end()};
}

std::vector<Example> examples_with_tag(std::span<const Example> examples, std::string_view tag) {
  std::vector<Example> out;
  for (const Example& ex : examples)
    if (ex.tag == tag) out.push_back(ex);
  return out;
}

std::vector<InflectionTable> group_tables(std::span<const Example> examples) {
  std::map<std::u32string, InflectionTable> by_lemma;
  for (const Example& ex : examples) {
    InflectionTable& table = by_lemma[ex.lemma];
    table.lemma = ex.lemma;
    auto [it, inserted] = table.forms.emplace(ex.tag, ex.inflected);
    if (!inserted && it->second != ex.inflected) {
      throw DataError("lemma " + text::encode_utf8(ex.lemma) + " has two forms for tag " + ex.tag);
    }
  }
  std::vector<InflectionTable> tables;
  tables.reserve(by_lemma.size());
  for (auto& [lemma, table] : by_lemma) tables.push_back(std::move(table));
  return tables;
}

std::vector<Example> flatten(std::span<const InflectionTable> tables) {
  std::vector<Example> out;
  for (const InflectionTable& table : tables)
    for (const auto& [tag, form] : table.forms) out.push_back({table.lemma, tag, form});
  return out;
}

DatasetSplit split_tables(std::vector<InflectionTable> tables, SplitRatios ratios,
                          std::uint64_t seed) {
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw DataError("split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = tables.size();
  const auto n_dev = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.dev));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
  if (n_dev + n_test > n || (ratios.dev > 0 && n_dev == 0) || (ratios.test > 0 && n_test == 0) ||
      (ratios.train > 0 && n_dev + n_test == n)) {
    throw DataError("too few inflection tables (" + std::to_string(n) + ") for the requested split");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(tables.begin(), tables.end(), rng);

  DatasetSplit split;
  auto take = [&](std::size_t from, std::size_t count) {
    return std::vector<InflectionTable>(std::make_move_iterator(tables.begin() + from),
                                        std::make_move_iterator(tables.begin() + from + count));
  };
  const std::size_t n_train = n - n_dev - n_test;
  split.dev = take(n_train, n_dev);
  split.test = take(n_train + n_dev, n_test);
  split.train = take(0, n_train);
  return split;
}

SynthSpec SynthSpec::finnish_like() {
  SynthSpec spec;
  spec.consonants = U"klst";
  spec.back_vowels = U"aou";
  spec.front_vowels = U"äöy";
  spec.neutral_vowels = U"ei";
  spec.rules = {
      {"case=ine", U"ssä", U"ssa"},
      {"case=ela", U"stä", U"sta"},
      {"case=ade", U"llä", U"lla"},
      {"case=abl", U"ltä", U"lta"},
  };
  return spec;
}

std::u32string SynthSpec::alphabet() const {
  return consonants + back_vowels + front_vowels + neutral_vowels;
}

void SynthSpec::validate() const {
  if (consonants.empty() || back_vowels.empty() || front_vowels.empty()) {
    throw DataError("synthetic language needs consonants, back vowels and front vowels");
  }
  if (min_stem < 1 || max_stem < min_stem) throw DataError("invalid stem length range");
  if (rules.empty()) throw DataError("synthetic language needs at least one suffix rule");
  const std::u32string all = alphabet();
  std::set<char32_t> seen;
  for (char32_t c : all) {
    if (!seen.insert(c).second) throw DataError("character listed twice in the synthetic alphabet");
  }
  std::set<std::string> tags;
  for (const SuffixRule& rule : rules) {
    if (rule.tag.empty() || !tags.insert(rule.tag).second) throw DataError("duplicate or empty tag");
    for (char32_t c : rule.front + rule.back) {
      if (!seen.count(c)) throw DataError("suffix for " + rule.tag + " uses a character outside the alphabet");
    }
  }
}

std::u32string harmonize(const SynthSpec& spec, std::u32string_view stem, const SuffixRule& rule) {
  const bool back = std::any_of(stem.begin(), stem.end(), [&](char32_t c) {
    return spec.back_vowels.find(c) != std::u32string::npos;
  });
  return std::u32string(stem) + (back ? rule.back : rule.front);
}

std::vector<Example> synth_language(const SynthSpec& spec, std::size_t size, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::u32string& pool) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };
  const std::u32string back_pool = spec.back_vowels + spec.neutral_vowels;
  const std::u32string front_pool = spec.front_vowels + spec.neutral_vowels;

  std::set<std::u32string> seen;
  std::vector<std::u32string> stems;
  std::size_t attempts = 0;
  while (stems.size() < size) {
    if (++attempts > 100 * size + 1000) {
      throw DataError("synthetic language cannot produce " + std::to_string(size) + " distinct stems");
    }
    const std::size_t length =
        std::uniform_int_distribution<std::size_t>(spec.min_stem, spec.max_stem)(rng);
    const bool back_class = std::bernoulli_distribution(0.5)(rng);
    const std::u32string& vowels = back_class ? back_pool : front_pool;
    bool consonant = std::bernoulli_distribution(0.6)(rng);
    std::u32string stem;
    for (std::size_t i = 0; i < length; ++i) {
      stem.push_back(consonant ? pick(spec.consonants) : pick(vowels));
      consonant = !consonant;
    }
    if (back_class && stem.find_first_of(spec.back_vowels) == std::u32string::npos) continue;
    if (seen.insert(stem).second) stems.push_back(stem);
  }

  std::vector<Example> examples;
  examples.reserve(size * spec.rules.size());
  for (const std::u32string& stem : stems)
    for (const SuffixRule& rule : spec.rules) examples.push_back({stem, rule.tag, harmonize(spec, stem, rule)});
  return examples;
}

}  // namespace morphogen

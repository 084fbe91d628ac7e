#include "morphogen/charlm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include "morphogen/error.hpp"
#include "morphogen/text.hpp"

namespace morphogen {

WittenBellLM::WittenBellLM(std::size_t order, std::u32string_view alphabet) : order_(order) {
  if (order_ < 1) throw ModelError("language model order must be at least 1");
  alphabet_.assign(alphabet.begin(), alphabet.end());
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  if (in_alphabet(kStart) || in_alphabet(kEnd)) throw ModelError("alphabet contains a boundary symbol");
}

WittenBellLM WittenBellLM::train(std::span<const std::u32string> words, std::size_t order,
                                 std::u32string_view extra_alphabet) {
  const std::set<std::u32string> types(words.begin(), words.end());
  if (types.empty()) throw DataError("cannot train a language model on an empty word list");
  std::u32string alphabet(extra_alphabet);
  for (const auto& w : types) alphabet += w;
  WittenBellLM lm(order, alphabet);

  const std::u32string padding(order - 1, kStart);
  for (const auto& word : types) {
    const std::u32string padded = padding + word + kEnd;
    for (std::size_t i = order - 1; i < padded.size(); ++i) {
      for (std::size_t k = 0; k < order; ++k) {
        lm.add_count(std::u32string_view(padded).substr(i - k, k), padded[i], 1);
      }
    }
  }
  return lm;
}

bool WittenBellLM::in_alphabet(char32_t c) const {
  return std::binary_search(alphabet_.begin(), alphabet_.end(), c);
}

void WittenBellLM::add_count(std::u32string_view history, char32_t next, std::uint64_t count) {
  if (history.size() >= order_) {
    throw ModelError("history of length " + std::to_string(history.size()) + " exceeds order " +
                     std::to_string(order_));
  }
  if (next != kEnd && !in_alphabet(next)) {
    throw ModelError("character " + text::encode_utf8(next) + " is not in the model alphabet");
  }
  if (count == 0) return;
  Context& ctx = contexts_[std::u32string(history)];
  ctx.next[next] += count;
  ctx.total += count;
}

const WittenBellLM::Context* WittenBellLM::find(std::u32string_view history) const {
  auto it = contexts_.find(std::u32string(history));
  return it == contexts_.end() ? nullptr : &it->second;
}

std::uint64_t WittenBellLM::count(std::u32string_view history, char32_t next) const {
  const Context* ctx = find(history);
  if (!ctx) return 0;
  auto it = ctx->next.find(next);
  return it == ctx->next.end() ? 0 : it->second;
}

std::uint64_t WittenBellLM::total(std::u32string_view history) const {
  const Context* ctx = find(history);
  return ctx ? ctx->total : 0;
}

std::uint64_t WittenBellLM::distinct(std::u32string_view history) const {
  const Context* ctx = find(history);
  return ctx ? ctx->next.size() : 0;
}

double WittenBellLM::prob(std::u32string_view history, char32_t next) const {
  const double uniform = 1.0 / static_cast<double>(outcomes());
  if (next != kEnd && !in_alphabet(next)) return uniform;
  const std::size_t longest = std::min(history.size(), order_ - 1);
  double p = uniform;
  for (std::size_t k = 0; k <= longest; ++k) {
    const Context* ctx = find(history.substr(history.size() - k));
    if (!ctx || ctx->total == 0) continue;
    auto it = ctx->next.find(next);
    const double c = it == ctx->next.end() ? 0.0 : static_cast<double>(it->second);
    const auto T = static_cast<double>(ctx->next.size());
    p = (c + T * p) / (static_cast<double>(ctx->total) + T);
  }
  return p;
}

std::vector<double> WittenBellLM::distribution(std::u32string_view history) const {
  const std::size_t m = outcomes();
  std::vector<double> p(m, 1.0 / static_cast<double>(m));
  const std::size_t longest = std::min(history.size(), order_ - 1);
  std::vector<double> counts(m);
  for (std::size_t k = 0; k <= longest; ++k) {
    const Context* ctx = find(history.substr(history.size() - k));
    if (!ctx || ctx->total == 0) continue;
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const auto& [c, n] : ctx->next) {
      const std::size_t idx =
          c == kEnd ? m - 1
                    : static_cast<std::size_t>(std::lower_bound(alphabet_.begin(), alphabet_.end(), c) -
                                               alphabet_.begin());
      counts[idx] = static_cast<double>(n);
    }
    const auto T = static_cast<double>(ctx->next.size());
    const double denom = static_cast<double>(ctx->total) + T;
    for (std::size_t i = 0; i < m; ++i) p[i] = (counts[i] + T * p[i]) / denom;
  }
  return p;
}

std::u32string WittenBellLM::context_for(std::u32string_view prefix) const {
  const std::size_t keep = order_ - 1;
  if (prefix.size() >= keep) return std::u32string(prefix.substr(prefix.size() - keep));
  return std::u32string(keep - prefix.size(), kStart) + std::u32string(prefix);
}

double WittenBellLM::score_word(std::u32string_view word) const {
  double total_log = 0.0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    total_log += std::log(next_char_prob(word.substr(0, i), word[i]));
  }
  return total_log + std::log(next_char_prob(word, kEnd));
}

void WittenBellLM::save(std::ostream& out) const {
  out << "ngram-order " << order_ << '\n';
  out << "alphabet " << text::encode_utf8(alphabet_) << '\n';
  std::vector<std::tuple<std::size_t, std::u32string, char32_t, std::uint64_t>> rows;
  for (const auto& [history, ctx] : contexts_)
    for (const auto& [c, n] : ctx.next) rows.emplace_back(history.size() + 1, history, c, n);
  std::sort(rows.begin(), rows.end());
  for (const auto& [order, history, c, n] : rows) {
    out << order << '\t' << text::encode_utf8(history) << '\t' << text::encode_utf8(c) << '\t' << n
        << '\n';
  }
}

void WittenBellLM::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save(out);
}

WittenBellLM WittenBellLM::load(std::istream& in) {
  std::string line;
  auto expect_header = [&](std::string_view key) {
    if (!std::getline(in, line) || line.rfind(std::string(key) + " ", 0) != 0) {
      throw DataError("language model file: missing '" + std::string(key) + "' header");
    }
    return line.substr(key.size() + 1);
  };
  std::size_t order = 0;
  try {
    order = std::stoul(expect_header("ngram-order"));
  } catch (const std::logic_error&) {
    throw DataError("language model file: bad ngram-order");
  }
  WittenBellLM lm(order, text::decode_utf8(expect_header("alphabet")));

  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return DataError("language model file line " + std::to_string(line_no) + ": " + why);
    };
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 4) throw fail("expected 4 tab-separated fields");
    const std::u32string history = text::decode_utf8(fields[1]);
    const std::u32string next = text::decode_utf8(fields[2]);
    if (next.size() != 1) throw fail("expected a single predicted character");
    std::size_t n_order = 0;
    std::uint64_t count = 0;
    try {
      n_order = std::stoul(fields[0]);
      count = std::stoull(fields[3]);
    } catch (const std::logic_error&) {
      throw fail("bad number");
    }
    if (n_order != history.size() + 1) throw fail("order does not match history length");
    try {
      lm.add_count(history, next[0], count);
    } catch (const ModelError& e) {
      throw fail(e.what());
    }
  }
  return lm;
}

WittenBellLM WittenBellLM::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return load(in);
}

bool WittenBellLM::operator==(const WittenBellLM& other) const {
  return order_ == other.order_ && alphabet_ == other.alphabet_ && contexts_ == other.contexts_;
}

std::vector<std::u32string> filter_wordlist(std::span<const std::u32string> words,
                                            const CharVocab& vocab) {
  std::vector<std::u32string> kept;
  for (const auto& w : words) {
    if (std::all_of(w.begin(), w.end(), [&](char32_t c) { return vocab.contains(c); })) kept.push_back(w);
  }
  return kept;
}

}  // namespace morphogen

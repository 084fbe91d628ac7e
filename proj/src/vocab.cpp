#include "morphogen/vocab.hpp"

#include <algorithm>

#include "morphogen/error.hpp"
#include "morphogen/text.hpp"

namespace morphogen {

CharVocab::CharVocab(std::u32string_view chars) : chars_(chars) {
  std::sort(chars_.begin(), chars_.end());
  chars_.erase(std::unique(chars_.begin(), chars_.end()), chars_.end());
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    index_.emplace(chars_[i], kNumSpecial + static_cast<int>(i));
  }
}

std::optional<int> CharVocab::find(char32_t c) const {
  auto it = index_.find(c);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int CharVocab::id(char32_t c) const { return find(c).value_or(kUnk); }

char32_t CharVocab::symbol(int id) const {
  if (!is_data(id)) throw ModelError("id " + std::to_string(id) + " is not a data character");
  return chars_[static_cast<std::size_t>(id - kNumSpecial)];
}

std::vector<int> CharVocab::encode(std::u32string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char32_t c : text) ids.push_back(id(c));
  return ids;
}

std::u32string CharVocab::decode(std::span<const int> ids) const {
  std::u32string out;
  for (int id : ids) {
    if (is_data(id)) {
      out.push_back(symbol(id));
    } else if (id == kUnk) {
      out.push_back(U'�');
    }
  }
  return out;
}

std::string CharVocab::label(int id) const {
  switch (id) {
    case kBos: return "<bos>";
    case kEos: return "<eos>";
    case kEps: return "<eps>";
    case kUnk: return "<unk>";
    default: return text::encode_utf8(symbol(id));
  }
}

}  // namespace morphogen

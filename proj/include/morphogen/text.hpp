#pragma once

#include <string>
#include <string_view>

namespace morphogen::text {

/// Strict UTF-8 decoding; throws DataError on malformed input.
std::u32string decode_utf8(std::string_view utf8);

std::string encode_utf8(std::u32string_view text);
std::string encode_utf8(char32_t c);

/// Unicode canonical composition (NFC).
std::u32string nfc(std::u32string_view text);

/// decode_utf8 followed by NFC.
std::u32string decode_nfc(std::string_view utf8);

}  // namespace morphogen::text

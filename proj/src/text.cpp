#include "morphogen/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>

#include <vector>

#include "morphogen/error.hpp"

namespace morphogen::text {

namespace {

icu::UnicodeString from_utf32(std::u32string_view text) {
  return icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()),
                                       static_cast<int32_t>(text.size()));
}

std::u32string to_utf32(const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  std::u32string out(static_cast<std::size_t>(s.countChar32()), U'\0');
  s.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), status);
  if (U_FAILURE(status) && status != U_STRING_NOT_TERMINATED_WARNING) {
    throw DataError(std::string("UTF-32 conversion failed: ") + u_errorName(status));
  }
  return out;
}

}  // namespace

std::u32string decode_utf8(std::string_view utf8) {
  if (utf8.empty()) return {};
  UErrorCode status = U_ZERO_ERROR;
  int32_t length = 0;
  u_strFromUTF8(nullptr, 0, &length, utf8.data(), static_cast<int32_t>(utf8.size()), &status);
  if (status != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(status)) {
    throw DataError("invalid UTF-8 input");
  }
  std::vector<UChar> buffer(static_cast<std::size_t>(length) + 1);
  status = U_ZERO_ERROR;
  u_strFromUTF8(buffer.data(), static_cast<int32_t>(buffer.size()), &length, utf8.data(),
                static_cast<int32_t>(utf8.size()), &status);
  if (U_FAILURE(status)) throw DataError("invalid UTF-8 input");
  return to_utf32(icu::UnicodeString(buffer.data(), length));
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  from_utf32(text).toUTF8String(out);
  return out;
}

std::string encode_utf8(char32_t c) { return encode_utf8(std::u32string_view(&c, 1)); }

std::u32string nfc(std::u32string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw DataError("NFC normalizer unavailable");
  const icu::UnicodeString normalized = normalizer->normalize(from_utf32(text), status);
  if (U_FAILURE(status)) throw DataError(std::string("NFC normalisation failed: ") + u_errorName(status));
  return to_utf32(normalized);
}

std::u32string decode_nfc(std::string_view utf8) { return nfc(decode_utf8(utf8)); }

}  // namespace morphogen::text

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace maskboard {

namespace detail {

// Length of the UTF-8 sequence at `pos` and whether it is a word character.
// ASCII letters/digits and non-ASCII code points are word characters, except
// Latin-1 symbols (U+0080-U+00BF), General Punctuation (U+2000-U+206F) and
// CJK punctuation (U+3000-U+303F). Malformed bytes count as word characters.
inline std::pair<std::size_t, bool> token_char(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    const bool alnum = (b0 >= '0' && b0 <= '9') || (b0 >= 'a' && b0 <= 'z') ||
                       (b0 >= 'A' && b0 <= 'Z');
    return {1, alnum};
  }
  std::size_t width = (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3 : (b0 & 0xF8) == 0xF0 ? 4 : 1;
  if (pos + width > s.size()) return {1, true};
  char32_t cp = width == 2 ? (b0 & 0x1F) : width == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (std::size_t k = 1; k < width; ++k) {
    const auto b = static_cast<unsigned char>(s[pos + k]);
    if ((b & 0xC0) != 0x80) return {1, true};
    cp = (cp << 6U) | (b & 0x3FU);
  }
  if (width == 1) return {1, true};
  const bool punctuation = (cp >= 0x80 && cp <= 0xBF) || (cp >= 0x2000 && cp <= 0x206F) ||
                           (cp >= 0x3000 && cp <= 0x303F);
  return {width, !punctuation};
}

}  // namespace detail

/// Lowercased unigrams; anything that is not a word character separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto [width, word] = detail::token_char(text, pos);
    if (word) {
      for (std::size_t k = 0; k < width; ++k) {
        const char c = text[pos + k];
        current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
      }
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
    pos += width;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline constexpr std::string_view kTokenizerDescription =
    "lowercase ascii; split on non-alphanumeric runs and unicode punctuation; unigrams";

}  // namespace maskboard

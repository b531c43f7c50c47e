#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maskboard/classifier.hpp"
#include "maskboard/error.hpp"

namespace maskboard {

struct Phrase {
  std::size_t index = 0;
  std::size_t start = 0;  // byte offsets into the source text, half-open
  std::size_t end = 0;
  std::string text;
  std::string separator;  // bytes between this phrase and the next one

  friend bool operator==(const Phrase&, const Phrase&) = default;
};

struct SegmenterOptions {
  std::vector<char32_t> delimiters{U'.', U',', U';', U':', U'!', U'?', U'…', U'\n'};

  bool is_delimiter(char32_t cp) const {
    return std::find(delimiters.begin(), delimiters.end(), cp) != delimiters.end();
  }

  std::string describe() const {
    std::string out;
    for (const char32_t cp : delimiters) {
      if (!out.empty()) out.push_back(' ');
      if (cp == U'\n') {
        out += "\\n";
      } else if (cp == U'…') {
        out += "…";
      } else if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
      } else {
        out += "U+" + std::to_string(static_cast<unsigned long>(cp));
      }
    }
    return out;
  }
};

namespace detail {

struct CodePoint {
  char32_t value;
  std::size_t width;
};

// Invalid sequences decode as one opaque byte so segmentation never fails.
inline CodePoint decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t width = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    width = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    width = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    width = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (pos + width > s.size()) return {0xFFFD, 1};
  for (std::size_t k = 1; k < width; ++k) {
    const auto b = static_cast<unsigned char>(s[pos + k]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6U) | (b & 0x3FU);
  }
  return {cp, width};
}

inline bool is_gap_space(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\r' || cp == U'\v' || cp == U'\f' || cp == U'\n';
}

}  // namespace detail

/// Splits text into punctuation-bounded phrases.
///
/// A separator is a maximal run of delimiters and whitespace that contains at
/// least one delimiter, or trailing whitespace at the end of the text. Leading
/// delimiters/whitespace form a phrase with empty text. Concatenating
/// text + separator over the result reproduces the input exactly.
inline std::vector<Phrase> segment_phrases(std::string_view text,
                                           const SegmenterOptions& options = {}) {
  struct Gap {
    std::size_t begin;
    std::size_t end;
  };
  std::vector<Gap> separators;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto cp = detail::decode_utf8(text, pos);
    const bool delim = options.is_delimiter(cp.value);
    if (!delim && !detail::is_gap_space(cp.value)) {
      pos += cp.width;
      continue;
    }
    const std::size_t begin = pos;
    bool has_delimiter = false;
    while (pos < text.size()) {
      cp = detail::decode_utf8(text, pos);
      const bool d = options.is_delimiter(cp.value);
      if (!d && !detail::is_gap_space(cp.value)) break;
      has_delimiter = has_delimiter || d;
      pos += cp.width;
    }
    if (has_delimiter || begin == 0 || pos == text.size()) {
      separators.push_back({begin, pos});
    }
  }

  std::vector<Phrase> phrases;
  std::size_t cursor = 0;
  for (const auto& gap : separators) {
    Phrase p;
    p.index = phrases.size();
    p.start = cursor;
    p.end = gap.begin;
    p.text = std::string(text.substr(cursor, gap.begin - cursor));
    p.separator = std::string(text.substr(gap.begin, gap.end - gap.begin));
    phrases.push_back(std::move(p));
    cursor = gap.end;
  }
  if (cursor < text.size()) {
    Phrase p;
    p.index = phrases.size();
    p.start = cursor;
    p.end = text.size();
    p.text = std::string(text.substr(cursor));
    phrases.push_back(std::move(p));
  }
  return phrases;
}

/// Deletes phrase i's bytes, keeping its separator and every other byte.
inline std::string mask_phrase(std::string_view text, const std::vector<Phrase>& phrases,
                               std::size_t i) {
  if (i >= phrases.size()) {
    throw invalid("phrase index " + std::to_string(i) + " out of range");
  }
  const auto& p = phrases[i];
  if (p.end > text.size() || p.start > p.end) {
    throw invalid("phrase offsets do not fit the text");
  }
  std::string out;
  out.reserve(text.size() - (p.end - p.start));
  out.append(text.substr(0, p.start));
  out.append(text.substr(p.end));
  return out;
}

struct HighlightPolicy {
  std::size_t k = 5;
  double min_influence = 0.05;
};

struct Explanation {
  std::string post_id;
  double base_score = 0.0;
  std::vector<Phrase> phrases;
  std::vector<double> influences;        // one per phrase
  std::vector<std::size_t> highlighted;  // ascending phrase indices
  std::string policy;
};

inline std::string describe_policy(const HighlightPolicy& policy,
                                   const SegmenterOptions& segmenter) {
  return "mask=deletion; influence=base-masked toward positive class; top_k=" +
         std::to_string(policy.k) + "; min_influence=" + nlohmann::json(policy.min_influence).dump() +
         "; delimiters=" + segmenter.describe();
}

/// Up to k phrases with the largest influence >= min_influence; ties go to the
/// smaller index. Phrases with empty text are never selected.
inline std::vector<std::size_t> select_highlights(const Explanation& explanation,
                                                  const HighlightPolicy& policy) {
  if (policy.k < 1) {
    throw invalid("highlight policy needs k >= 1");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < explanation.influences.size(); ++i) {
    const bool blank = i < explanation.phrases.size() && explanation.phrases[i].text.empty();
    if (!blank && explanation.influences[i] >= policy.min_influence) {
      candidates.push_back(i);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return explanation.influences[a] > explanation.influences[b];
  });
  if (candidates.size() > policy.k) candidates.resize(policy.k);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

/// Occlusion explanation: influence[i] = score(text) - score(text without phrase i).
template <TextScorer Scorer>
Explanation explain(const Scorer& classifier, std::string_view text, std::string post_id = {},
                    const HighlightPolicy& policy = {}, const SegmenterOptions& segmenter = {}) {
  Explanation e;
  e.post_id = std::move(post_id);
  e.policy = describe_policy(policy, segmenter);
  e.base_score = classifier.score(text);
  e.phrases = segment_phrases(text, segmenter);
  e.influences.reserve(e.phrases.size());
  for (std::size_t i = 0; i < e.phrases.size(); ++i) {
    if (e.phrases[i].text.empty()) {
      e.influences.push_back(0.0);
      continue;
    }
    e.influences.push_back(e.base_score - classifier.score(mask_phrase(text, e.phrases, i)));
  }
  e.highlighted = select_highlights(e, policy);
  return e;
}

enum class RenderFormat { ansi, html, plain };

inline RenderFormat render_format_from_string(std::string_view s) {
  if (s == "ansi") return RenderFormat::ansi;
  if (s == "html") return RenderFormat::html;
  if (s == "plain" || s == "plain-markers") return RenderFormat::plain;
  throw invalid("unknown render format '" + std::string(s) + "'");
}

inline constexpr std::string_view kAnsiOpen = "\x1b[1;31m";
inline constexpr std::string_view kAnsiClose = "\x1b[0m";
inline constexpr std::string_view kMarkOpen = "«";   // «
inline constexpr std::string_view kMarkClose = "»";  // »

namespace detail {

inline void append_escaped(std::string& out, std::string_view s, RenderFormat format) {
  switch (format) {
    case RenderFormat::ansi:
      out.append(s);
      return;
    case RenderFormat::html:
      for (const char c : s) {
        switch (c) {
          case '&': out += "&amp;"; break;
          case '<': out += "&lt;"; break;
          case '>': out += "&gt;"; break;
          default: out.push_back(c);
        }
      }
      return;
    case RenderFormat::plain:
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' || s.substr(i, 2) == kMarkOpen || s.substr(i, 2) == kMarkClose) {
          out.push_back('\\');
        }
        out.push_back(s[i]);
      }
      return;
  }
}

}  // namespace detail

/// Wraps each highlighted phrase span in format-specific markers. Text is
/// escaped (html entities, or backslashes before literal « » \ in plain mode)
/// so strip_markup() recovers the input exactly.
inline std::string render_highlights(std::string_view text, const Explanation& explanation,
                                     RenderFormat format) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto i : explanation.highlighted) {
    if (i >= explanation.phrases.size()) continue;
    const auto& p = explanation.phrases[i];
    if (p.start < cursor || p.end > text.size()) continue;
    detail::append_escaped(out, text.substr(cursor, p.start - cursor), format);
    switch (format) {
      case RenderFormat::ansi: out += kAnsiOpen; break;
      case RenderFormat::html: out += "<mark>"; break;
      case RenderFormat::plain: out += kMarkOpen; break;
    }
    detail::append_escaped(out, text.substr(p.start, p.end - p.start), format);
    switch (format) {
      case RenderFormat::ansi: out += kAnsiClose; break;
      case RenderFormat::html: out += "</mark>"; break;
      case RenderFormat::plain: out += kMarkClose; break;
    }
    cursor = p.end;
  }
  detail::append_escaped(out, text.substr(std::min(cursor, text.size())), format);
  return out;
}

inline std::string strip_markup(std::string_view rendered, RenderFormat format) {
  std::string out;
  out.reserve(rendered.size());
  std::size_t i = 0;
  auto starts = [&](std::string_view token) { return rendered.substr(i, token.size()) == token; };
  while (i < rendered.size()) {
    switch (format) {
      case RenderFormat::ansi:
        if (starts(kAnsiOpen)) { i += kAnsiOpen.size(); continue; }
        if (starts(kAnsiClose)) { i += kAnsiClose.size(); continue; }
        break;
      case RenderFormat::html:
        if (starts("<mark>")) { i += 6; continue; }
        if (starts("</mark>")) { i += 7; continue; }
        if (starts("&amp;")) { out.push_back('&'); i += 5; continue; }
        if (starts("&lt;")) { out.push_back('<'); i += 4; continue; }
        if (starts("&gt;")) { out.push_back('>'); i += 4; continue; }
        break;
      case RenderFormat::plain:
        if (rendered[i] == '\\' && i + 1 < rendered.size()) {
          out.push_back(rendered[i + 1]);
          i += 2;
          continue;
        }
        if (starts(kMarkOpen) || starts(kMarkClose)) { i += 2; continue; }
        break;
    }
    out.push_back(rendered[i]);
    ++i;
  }
  return out;
}

inline nlohmann::ordered_json explanation_to_json(const Explanation& e) {
  nlohmann::ordered_json j;
  j["post_id"] = e.post_id;
  j["base_score"] = e.base_score;
  nlohmann::ordered_json phrases = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < e.phrases.size(); ++i) {
    phrases.push_back({{"start", e.phrases[i].start},
                       {"end", e.phrases[i].end},
                       {"influence", i < e.influences.size() ? e.influences[i] : 0.0}});
  }
  j["phrases"] = std::move(phrases);
  j["highlighted"] = e.highlighted;
  return j;
}

/// Rebuilds an explanation from its export record and the post text it refers to.
inline Explanation explanation_from_json(const nlohmann::json& j, std::string_view text) {
  Explanation e;
  e.post_id = j.at("post_id").get<std::string>();
  e.base_score = j.at("base_score").get<double>();
  const auto& phrases = j.at("phrases");
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    Phrase p;
    p.index = i;
    p.start = phrases[i].at("start").get<std::size_t>();
    p.end = phrases[i].at("end").get<std::size_t>();
    const std::size_t next =
        i + 1 < phrases.size() ? phrases[i + 1].at("start").get<std::size_t>() : text.size();
    if (p.start > p.end || p.end > next || next > text.size()) {
      throw Error(ErrorCode::integrity, "explanation offsets do not match post " + e.post_id);
    }
    p.text = std::string(text.substr(p.start, p.end - p.start));
    p.separator = std::string(text.substr(p.end, next - p.end));
    e.phrases.push_back(std::move(p));
    e.influences.push_back(phrases[i].at("influence").get<double>());
  }
  e.highlighted = j.at("highlighted").get<std::vector<std::size_t>>();
  return e;
}

}  // namespace maskboard

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "maskboard/corpus.hpp"
#include "maskboard/embedding.hpp"
#include "maskboard/error.hpp"
#include "maskboard/explainer.hpp"

namespace maskboard {

// ---------------------------------------------------------------------------
// Phrase index

struct IndexEntry {
  std::string post_id;
  std::string phrase;
  Vector vector;  // unit length

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct PhraseIndex {
  std::string corpus;
  std::size_t dimension = 0;
  std::vector<IndexEntry> entries;

  friend bool operator==(const PhraseIndex&, const PhraseIndex&) = default;
};

struct PhraseRef {
  std::string post_id;
  std::string phrase;
};

/// Every non-blank segmented phrase, deduplicated per post.
inline std::vector<PhraseRef> gather_all_phrases(const Corpus& corpus,
                                                 const SegmenterOptions& segmenter = {}) {
  std::vector<PhraseRef> refs;
  for (const auto& post : corpus.posts) {
    std::set<std::string> seen;
    for (auto& p : segment_phrases(post.text(), segmenter)) {
      if (trim(p.text).empty() || !seen.insert(p.text).second) continue;
      refs.push_back({post.id, std::move(p.text)});
    }
  }
  return refs;
}

/// Highlighted phrases only, deduplicated per post.
inline std::vector<PhraseRef> gather_highlighted_phrases(
    const std::vector<Explanation>& explanations) {
  std::vector<PhraseRef> refs;
  for (const auto& e : explanations) {
    std::set<std::string> seen;
    for (const auto i : e.highlighted) {
      if (i >= e.phrases.size()) continue;
      const auto& text = e.phrases[i].text;
      if (trim(text).empty() || !seen.insert(text).second) continue;
      refs.push_back({e.post_id, text});
    }
  }
  return refs;
}

inline PhraseIndex build_index(Embedder& embedder, std::string corpus_name,
                               std::vector<PhraseRef> refs) {
  if (embedder.dimension() == 0) {
    throw invalid("embedding dimension must be positive");
  }
  std::vector<std::string> texts;
  texts.reserve(refs.size());
  for (const auto& r : refs) texts.push_back(r.phrase);
  auto vectors = embedder.embed(texts);
  PhraseIndex index;
  index.corpus = std::move(corpus_name);
  index.dimension = embedder.dimension();
  index.entries.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    index.entries.push_back(
        {std::move(refs[i].post_id), std::move(refs[i].phrase), std::move(vectors[i])});
  }
  return index;
}

/// Corpus mode: every phrase of every post.
inline PhraseIndex build_index(Embedder& embedder, const Corpus& corpus,
                               const SegmenterOptions& segmenter = {}) {
  return build_index(embedder, corpus.name, gather_all_phrases(corpus, segmenter));
}

/// Explanation mode: highlighted phrases only.
inline PhraseIndex build_index(Embedder& embedder, const Corpus& corpus,
                               const std::vector<Explanation>& explanations) {
  return build_index(embedder, corpus.name, gather_highlighted_phrases(explanations));
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}
inline void put_bytes(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) {
      v = (v << 8U) | static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string bytes() {
    const auto n = static_cast<std::size_t>(uint(4));
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    const auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::integrity, "truncated index file");
    }
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kIndexMagic{"MBPIDX01", 8};

/// Binary layout, little-endian: magic[8], u32 dimension, u64 count,
/// corpus name (u32 length + bytes), then per row: post id, phrase (both
/// length-prefixed) and `dimension` IEEE-754 float32 values.
inline std::string serialize_index(const PhraseIndex& index) {
  std::string out(kIndexMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(index.dimension));
  detail::put_u64(out, index.entries.size());
  detail::put_bytes(out, index.corpus);
  for (const auto& e : index.entries) {
    detail::put_bytes(out, e.post_id);
    detail::put_bytes(out, e.phrase);
    for (const float x : e.vector) detail::put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  return out;
}

inline PhraseIndex parse_index(std::string_view data) {
  detail::Reader r(data);
  if (r.raw(kIndexMagic.size()) != kIndexMagic) {
    throw Error(ErrorCode::integrity, "not a phrase index file");
  }
  PhraseIndex index;
  index.dimension = static_cast<std::size_t>(r.uint(4));
  const auto count = r.uint(8);
  index.corpus = r.bytes();
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.post_id = r.bytes();
    e.phrase = r.bytes();
    e.vector.resize(index.dimension);
    for (auto& x : e.vector) x = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    index.entries.push_back(std::move(e));
  }
  if (!r.done()) {
    throw Error(ErrorCode::integrity, "trailing bytes after phrase index rows");
  }
  return index;
}

// ---------------------------------------------------------------------------
// Themes and retrieval

struct Theme {
  std::string id;
  std::string name;
  std::vector<std::string> members;
  std::optional<Vector> query_vector;
  std::string notes;

  friend bool operator==(const Theme&, const Theme&) = default;
};

inline nlohmann::ordered_json theme_to_json(const Theme& t) {
  nlohmann::ordered_json j;
  j["theme_id"] = t.id;
  j["name"] = t.name;
  j["members"] = t.members;
  j["notes"] = t.notes;
  if (t.query_vector) j["query_vector"] = *t.query_vector;
  return j;
}

inline Theme theme_from_json(const nlohmann::json& j) {
  Theme t;
  t.id = j.at("theme_id").get<std::string>();
  t.name = j.value("name", "");
  t.members = j.value("members", std::vector<std::string>{});
  t.notes = j.value("notes", "");
  if (j.contains("query_vector")) t.query_vector = j.at("query_vector").get<Vector>();
  return t;
}

/// Normalised mean of unit vectors.
inline Vector mean_direction(const std::vector<Vector>& members) {
  if (members.empty()) {
    throw invalid("a theme needs at least one member");
  }
  std::vector<double> sum(members.front().size(), 0.0);
  for (const auto& v : members) {
    if (v.size() != sum.size()) throw invalid("member vectors differ in dimension");
    const double length = norm(v);
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += static_cast<double>(v[i]) / length;
  }
  for (auto& x : sum) x /= static_cast<double>(members.size());
  try {
    return normalized(std::span<const double>(sum));
  } catch (const Error&) {
    throw invalid("theme members cancel out; the mean embedding has zero length");
  }
}

inline Vector theme_query_vector(Embedder& embedder, const Theme& theme) {
  if (theme.members.empty()) {
    throw invalid("theme '" + theme.name + "' has no members");
  }
  return mean_direction(embedder.embed(theme.members));
}

struct Match {
  std::size_t entry = 0;  // position in PhraseIndex::entries
  double cosine = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  const double denom = norm(a) * norm(b);
  return denom > 0.0 ? dot(a, b) / denom : 0.0;
}

/// Exact top-n by descending cosine; ties by (post_id, phrase) ascending.
inline std::vector<Match> top_matches(const PhraseIndex& index, std::span<const float> query,
                                      std::size_t n) {
  if (n < 1) {
    throw invalid("n must be at least 1");
  }
  if (query.size() != index.dimension) {
    throw invalid("query dimension " + std::to_string(query.size()) +
                  " does not match index dimension " + std::to_string(index.dimension));
  }
  const double qn = norm(query);
  std::vector<Match> all;
  all.reserve(index.entries.size());
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const auto& v = index.entries[i].vector;
    const double vn = norm(v);
    all.push_back({i, qn > 0.0 && vn > 0.0 ? dot(query, v) / (qn * vn) : 0.0});
  }
  const auto before = [&](const Match& a, const Match& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    const auto& ea = index.entries[a.entry];
    const auto& eb = index.entries[b.entry];
    return std::tie(ea.post_id, ea.phrase, a.entry) < std::tie(eb.post_id, eb.phrase, b.entry);
  };
  const std::size_t take = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    before);
  all.resize(take);
  return all;
}

// ---------------------------------------------------------------------------
// Relevance reviews

enum class Verdict { match, non_match, unsure };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::match:
      return "match";
    case Verdict::non_match:
      return "non_match";
    case Verdict::unsure:
      return "unsure";
  }
  return "unsure";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "match") return Verdict::match;
  if (s == "non_match") return Verdict::non_match;
  if (s == "unsure") return Verdict::unsure;
  throw invalid("unknown verdict '" + std::string(s) + "'");
}

struct ReviewRecord {
  std::string theme_id;
  std::string corpus;
  std::string post_id;
  std::string phrase;
  std::size_t rank = 0;  // 1-based position in the theme's top matches
  Verdict verdict = Verdict::unsure;
  std::string reviewer;
  std::int64_t reviewed_at = 0;
  bool amend = false;

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

inline nlohmann::ordered_json review_to_json(const ReviewRecord& r) {
  nlohmann::ordered_json j;
  j["op"] = r.amend ? "amend" : "review";
  j["theme_id"] = r.theme_id;
  j["corpus"] = r.corpus;
  j["post_id"] = r.post_id;
  j["phrase"] = r.phrase;
  j["rank"] = r.rank;
  j["verdict"] = to_string(r.verdict);
  j["reviewer"] = r.reviewer;
  j["reviewed_at"] = r.reviewed_at;
  return j;
}

inline ReviewRecord review_from_json(const nlohmann::json& j) {
  ReviewRecord r;
  r.amend = j.value("op", "review") == "amend";
  r.theme_id = j.at("theme_id").get<std::string>();
  r.corpus = j.at("corpus").get<std::string>();
  r.post_id = j.at("post_id").get<std::string>();
  r.phrase = j.at("phrase").get<std::string>();
  r.rank = j.at("rank").get<std::size_t>();
  r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  r.reviewer = j.value("reviewer", "");
  r.reviewed_at = j.value("reviewed_at", std::int64_t{0});
  return r;
}

struct ThemeCounts {
  std::size_t k = 0;  // verdict == match within the window
  std::size_t n = 0;  // reviewed within the window
  std::size_t window = 300;
  bool partial = true;

  /// Denominator of the reported proportion: the window once fully reviewed,
  /// otherwise the number reviewed so far.
  std::size_t denominator() const { return partial ? n : window; }
  double proportion() const {
    const auto d = denominator();
    return d == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(d);
  }
};

/// Review state rebuilt purely from the append-only log.
class ReviewState {
 public:
  using Key = std::tuple<std::string, std::string, std::string, std::string>;

  static Key key_of(const ReviewRecord& r) {
    return {r.theme_id, r.corpus, r.post_id, r.phrase};
  }

  /// Validates and applies one record. Plain reviews must be new; amendments
  /// must target an existing review.
  void apply(const ReviewRecord& record) {
    if (record.rank < 1) {
      throw invalid("review rank must be >= 1");
    }
    const auto key = key_of(record);
    auto it = history_.find(key);
    if (!record.amend) {
      if (it != history_.end()) {
        throw conflict("review for post " + record.post_id + " phrase '" + record.phrase +
                       "' already exists; amend it instead");
      }
      history_[key].push_back(record);
      return;
    }
    if (it == history_.end()) {
      throw not_found("no review to amend for post " + record.post_id);
    }
    it->second.push_back(record);
  }

  static ReviewState replay(const std::vector<ReviewRecord>& log) {
    ReviewState state;
    for (const auto& r : log) state.apply(r);
    return state;
  }

  const ReviewRecord* current(const Key& key) const {
    const auto it = history_.find(key);
    return it == history_.end() ? nullptr : &it->second.back();
  }

  const std::vector<ReviewRecord>& audit(const Key& key) const {
    static const std::vector<ReviewRecord> kEmpty;
    const auto it = history_.find(key);
    return it == history_.end() ? kEmpty : it->second;
  }

  ThemeCounts counts(std::string_view theme_id, std::string_view corpus,
                     std::size_t window = 300) const {
    ThemeCounts c;
    c.window = window;
    for (const auto& [key, records] : history_) {
      if (std::get<0>(key) != theme_id || std::get<1>(key) != corpus) continue;
      const auto& latest = records.back();
      if (records.front().rank > window) continue;
      ++c.n;
      if (latest.verdict == Verdict::match) ++c.k;
    }
    c.partial = c.n < window;
    return c;
  }

  std::vector<ReviewRecord> current_records() const {
    std::vector<ReviewRecord> out;
    for (const auto& [key, records] : history_) out.push_back(records.back());
    return out;
  }

  std::size_t size() const { return history_.size(); }

 private:
  std::map<Key, std::vector<ReviewRecord>> history_;
};

}  // namespace maskboard

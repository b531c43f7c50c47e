#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "maskboard/error.hpp"
#include "maskboard/text_util.hpp"

namespace maskboard {

inline constexpr std::string_view kToolVersion = "maskboard 0.3.0";

struct Post {
  std::string id;
  std::string author;
  std::string forum;
  std::int64_t created_at = 0;  // seconds since epoch, UTC
  std::string title;
  std::string body;

  /// Title and body joined by a blank line; either part may be empty.
  std::string text() const {
    if (title.empty()) {
      return body;
    }
    if (body.empty()) {
      return title;
    }
    return title + "\n\n" + body;
  }

  friend bool operator==(const Post&, const Post&) = default;
};

struct CorpusManifest {
  std::string source;
  std::vector<std::string> filters;
  std::size_t skipped = 0;

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

struct Corpus {
  std::string name;
  std::vector<Post> posts;
  CorpusManifest manifest;

  const Post* find(std::string_view id) const {
    for (const auto& post : posts) {
      if (post.id == id) {
        return &post;
      }
    }
    return nullptr;
  }
};

inline bool post_order(const Post& a, const Post& b) {
  return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
}

inline void stabilize(std::vector<Post>& posts) {
  std::stable_sort(posts.begin(), posts.end(), post_order);
}

inline nlohmann::ordered_json post_to_json(const Post& post) {
  nlohmann::ordered_json j;
  j["id"] = post.id;
  j["author"] = post.author;
  j["subreddit"] = post.forum;
  j["created_utc"] = post.created_at;
  j["title"] = post.title;
  j["selftext"] = post.body;
  return j;
}

namespace detail {

inline bool parse_post_record(std::string_view line, Post& out) {
  const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) {
    return false;
  }
  const auto id = j.find("id");
  const auto author = j.find("author");
  const auto created = j.find("created_utc");
  if (id == j.end() || !id->is_string() || author == j.end() || !author->is_string() ||
      created == j.end() || !created->is_number_integer()) {
    return false;
  }
  out.id = id->get<std::string>();
  out.author = author->get<std::string>();
  out.created_at = created->get<std::int64_t>();
  if (out.id.empty() || out.created_at <= 0) {
    return false;
  }
  auto optional_string = [&](const char* key) -> std::string {
    const auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string{};
  };
  out.forum = optional_string("subreddit");
  out.title = optional_string("title");
  out.body = optional_string("selftext");
  return true;
}

}  // namespace detail

/// Reads newline-delimited post records. Malformed records, records missing
/// id/author/created_utc and duplicate ids are skipped and counted.
inline Corpus load_posts(std::istream& in, std::string name, std::string source) {
  Corpus corpus;
  corpus.name = std::move(name);
  corpus.manifest.source = std::move(source);
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    Post post;
    if (!detail::parse_post_record(line, post) || !seen.insert(post.id).second) {
      ++corpus.manifest.skipped;
      continue;
    }
    corpus.posts.push_back(std::move(post));
  }
  if (in.bad()) {
    throw std::runtime_error("read error in " + corpus.manifest.source);
  }
  stabilize(corpus.posts);
  return corpus;
}

inline Corpus load_posts(std::string_view records, std::string name, std::string source) {
  std::istringstream in{std::string(records)};
  return load_posts(in, std::move(name), std::move(source));
}

inline Corpus load_posts_file(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::not_found, "cannot open post source " + path.string());
  }
  return load_posts(in, std::move(name), path.string());
}

inline std::string serialize_posts(const std::vector<Post>& posts) {
  std::string out;
  for (const auto& post : posts) {
    out += post_to_json(post).dump();
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::ordered_json manifest_to_json(const Corpus& corpus) {
  nlohmann::ordered_json j;
  j["name"] = corpus.name;
  j["source"] = corpus.manifest.source;
  j["filters"] = corpus.manifest.filters;
  j["count"] = corpus.posts.size();
  j["skipped"] = corpus.manifest.skipped;
  j["tool_version"] = kToolVersion;
  return j;
}

inline CorpusManifest manifest_from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.source = j.value("source", "");
  m.filters = j.value("filters", std::vector<std::string>{});
  m.skipped = j.value("skipped", std::size_t{0});
  return m;
}

/// Case-insensitive substring match on text().
inline Corpus filter_keyword(const Corpus& corpus, std::string_view keyword,
                             std::string name = {}) {
  if (keyword.empty()) {
    throw invalid("keyword must be non-empty");
  }
  const std::string needle = ascii_lower(keyword);
  Corpus out;
  out.name = name.empty() ? corpus.name + "." + needle : std::move(name);
  out.manifest = corpus.manifest;
  out.manifest.filters.push_back("keyword:" + needle);
  for (const auto& post : corpus.posts) {
    if (ascii_lower(post.text()).find(needle) != std::string::npos) {
      out.posts.push_back(post);
    }
  }
  return out;
}

}  // namespace maskboard

#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maskboard/backends/registry.hpp"
#include "maskboard/corpus.hpp"
#include "maskboard/dataset.hpp"
#include "maskboard/error.hpp"
#include "maskboard/exploration.hpp"
#include "maskboard/explainer.hpp"
#include "maskboard/file_io.hpp"
#include "maskboard/hashing.hpp"

namespace maskboard {

enum class Kind { corpora, datasets, models, explanations, indexes, themes };

inline constexpr Kind kAllKinds[] = {Kind::corpora,      Kind::datasets, Kind::models,
                                     Kind::explanations, Kind::indexes,  Kind::themes};

inline std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::corpora: return "corpora";
    case Kind::datasets: return "datasets";
    case Kind::models: return "models";
    case Kind::explanations: return "explanations";
    case Kind::indexes: return "indexes";
    case Kind::themes: return "themes";
  }
  return "corpora";
}

inline Kind kind_from_string(std::string_view s) {
  for (const auto kind : kAllKinds) {
    if (to_string(kind) == s) return kind;
  }
  throw invalid("unknown payload kind '" + std::string(s) + "'");
}

/// On-disk project:
///
///   manifest        name, created_at, tool version
///   <kind>/         one directory per payload kind; blobs are named by their
///                   SHA-256 and `registry.json` maps names to hash history
///   reviews.log     append-only review records, one JSON object per line
///
/// Blobs and registries are replaced by temp-file + rename, so an interrupted
/// write never leaves a registered entry pointing at a partial file. Mutations
/// take an exclusive flock on `.writer.lock`; reads never modify the tree.
class Project {
 public:
  static Project init(const fs::path& root, std::string name = {}) {
    if (fs::exists(root) && !fs::is_empty(root)) {
      throw conflict("project directory " + root.string() + " is not empty");
    }
    fs::create_directories(root);
    for (const auto kind : kAllKinds) fs::create_directories(root / to_string(kind));
    nlohmann::ordered_json manifest;
    manifest["name"] = name.empty() ? root.filename().string() : name;
    manifest["created_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();
    manifest["tool_version"] = kToolVersion;
    atomic_write_file(root / ".writer.lock", "");
    atomic_write_file(root / "reviews.log", "");
    atomic_write_file(root / "manifest", manifest.dump(2) + "\n");
    return Project(root);
  }

  static Project open(const fs::path& root) {
    if (!fs::exists(root / "manifest")) {
      throw not_found("no project at " + root.string());
    }
    return Project(root);
  }

  const fs::path& root() const { return root_; }

  nlohmann::json manifest() const { return nlohmann::json::parse(read_file(root_ / "manifest")); }

  /// Stores a payload under a name and returns its content hash. Re-putting
  /// identical bytes is a no-op; different bytes need `versioned`.
  std::string put(Kind kind, const std::string& name, std::string_view payload,
                  bool versioned = false) {
    if (name.empty()) throw invalid("payload name must be non-empty");
    const std::string hash = sha256_hex(payload);
    WriterLock lock(root_);
    auto registry = load_registry(kind);
    auto& entries = registry["entries"];
    if (entries.contains(name)) {
      const auto current = entries[name]["hash"].get<std::string>();
      if (current == hash) return hash;
      if (!versioned) {
        throw conflict(std::string(to_string(kind)) + "/" + name +
                       " already exists with different content");
      }
    }
    const fs::path blob = dir(kind) / hash;
    if (!fs::exists(blob) || sha256_hex(read_file(blob)) != hash) {
      atomic_write_file(blob, payload);
    }
    auto& entry = entries[name];
    entry["hash"] = hash;
    entry["history"].push_back(hash);
    atomic_write_file(dir(kind) / "registry.json", registry.dump(2) + "\n");
    return hash;
  }

  /// Latest payload for a name, verified against its registered hash.
  std::string get(Kind kind, const std::string& name) const {
    const auto hash = hash_of(kind, name);
    if (!hash) {
      throw not_found(std::string(to_string(kind)) + "/" + name + " not found");
    }
    return read_blob(kind, *hash);
  }

  std::string read_blob(Kind kind, const std::string& hash) const {
    const fs::path blob = dir(kind) / hash;
    std::string payload;
    try {
      payload = read_file(blob);
    } catch (const Error&) {
      throw Error(ErrorCode::integrity, "integrity error: missing blob " + blob.string());
    }
    if (sha256_hex(payload) != hash) {
      throw Error(ErrorCode::integrity,
                  "integrity error: content hash mismatch in " + blob.string());
    }
    return payload;
  }

  bool contains(Kind kind, const std::string& name) const { return hash_of(kind, name).has_value(); }

  std::optional<std::string> hash_of(Kind kind, const std::string& name) const {
    const auto registry = load_registry(kind);
    const auto& entries = registry["entries"];
    if (!entries.contains(name)) return std::nullopt;
    return entries[name]["hash"].get<std::string>();
  }

  std::vector<std::string> history(Kind kind, const std::string& name) const {
    const auto registry = load_registry(kind);
    if (!registry["entries"].contains(name)) return {};
    return registry["entries"][name]["history"].get<std::vector<std::string>>();
  }

  std::vector<std::string> list(Kind kind) const {
    std::vector<std::string> names;
    const auto registry = load_registry(kind);
    for (const auto& [name, entry] : registry["entries"].items()) names.push_back(name);
    return names;
  }

  /// Unregisters a name. Blobs stay on disk so earlier hashes remain readable.
  void remove(Kind kind, const std::string& name) {
    WriterLock lock(root_);
    auto registry = load_registry(kind);
    if (!registry["entries"].contains(name)) {
      throw not_found(std::string(to_string(kind)) + "/" + name + " not found");
    }
    registry["entries"].erase(name);
    atomic_write_file(dir(kind) / "registry.json", registry.dump(2) + "\n");
  }

  /// Checks every registered hash; returns the offending blob paths.
  std::vector<std::string> verify() const {
    std::vector<std::string> bad;
    for (const auto kind : kAllKinds) {
      const auto registry = load_registry(kind);
      for (const auto& [name, entry] : registry["entries"].items()) {
        const auto hash = entry["hash"].get<std::string>();
        const fs::path blob = dir(kind) / hash;
        if (!fs::exists(blob) || sha256_hex(read_file(blob)) != hash) {
          bad.push_back(blob.string());
        }
      }
    }
    return bad;
  }

  // -- review log -----------------------------------------------------------

  std::vector<ReviewRecord> read_reviews() const {
    const fs::path path = root_ / "reviews.log";
    if (!fs::exists(path)) return {};
    const std::string data = read_file(path);
    std::vector<ReviewRecord> records;
    std::size_t line_no = 0;
    for (const auto line : split_lines(data, /*complete_only=*/true)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_object()) {
        throw Error(ErrorCode::integrity,
                    "integrity error: malformed record at reviews.log:" + std::to_string(line_no));
      }
      records.push_back(review_from_json(j));
    }
    return records;
  }

  ReviewState replay_reviews() const { return ReviewState::replay(read_reviews()); }

  /// Validates against the replayed log, then appends. Returns the new state.
  ReviewState append_review(const ReviewRecord& record) {
    WriterLock lock(root_);
    auto state = replay_reviews();
    state.apply(record);
    append_line(root_ / "reviews.log", review_to_json(record).dump());
    return state;
  }

 private:
  explicit Project(fs::path root) : root_(std::move(root)) {}

  class WriterLock {
   public:
    explicit WriterLock(const fs::path& root) {
      fd_ = ::open((root / ".writer.lock").c_str(), O_RDWR | O_CREAT, 0644);
      if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
        if (fd_ >= 0) ::close(fd_);
        throw std::runtime_error("cannot lock project " + root.string());
      }
    }
    ~WriterLock() {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
    WriterLock(const WriterLock&) = delete;
    WriterLock& operator=(const WriterLock&) = delete;

   private:
    int fd_ = -1;
  };

  fs::path dir(Kind kind) const { return root_ / to_string(kind); }

  nlohmann::json load_registry(Kind kind) const {
    const fs::path path = dir(kind) / "registry.json";
    if (!fs::exists(path)) {
      return nlohmann::json{{"entries", nlohmann::json::object()}};
    }
    auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (!j.is_object() || !j.contains("entries")) {
      throw Error(ErrorCode::integrity, "integrity error: unreadable " + path.string());
    }
    return j;
  }

  fs::path root_;
};

// ---------------------------------------------------------------------------
// Typed payload helpers. Tabular payloads are newline-delimited JSON; each
// carries a `<name>.manifest` sibling entry.

inline std::string manifest_name(const std::string& name) { return name + ".manifest"; }

inline void put_corpus(Project& project, const Corpus& corpus, bool versioned = true) {
  project.put(Kind::corpora, corpus.name, serialize_posts(corpus.posts), versioned);
  project.put(Kind::corpora, manifest_name(corpus.name), manifest_to_json(corpus).dump(2) + "\n",
              versioned);
}

inline Corpus get_corpus(const Project& project, const std::string& name) {
  Corpus corpus = load_posts(project.get(Kind::corpora, name), name, "project:" + name);
  if (project.contains(Kind::corpora, manifest_name(name))) {
    corpus.manifest = manifest_from_json(
        nlohmann::json::parse(project.get(Kind::corpora, manifest_name(name))));
  }
  return corpus;
}

inline void put_dataset(Project& project, const Dataset& dataset, bool versioned = true) {
  project.put(Kind::datasets, dataset.name, serialize_examples(dataset.examples), versioned);
  project.put(Kind::datasets, manifest_name(dataset.name),
              dataset_manifest(dataset).dump(2) + "\n", versioned);
}

inline Dataset get_dataset(const Project& project, const std::string& name) {
  Dataset d;
  d.name = name;
  d.examples = parse_examples(project.get(Kind::datasets, name));
  if (project.contains(Kind::datasets, manifest_name(name))) {
    d.manifest = nlohmann::ordered_json::parse(project.get(Kind::datasets, manifest_name(name)));
  }
  return d;
}

inline std::string put_model(Project& project, const std::string& name,
                             const TrainedClassifier& classifier, bool versioned = true) {
  return project.put(Kind::models, name, model_bundle(classifier), versioned);
}

inline TrainedClassifier get_model(const Project& project, const std::string& name) {
  return model_from_bundle(project.get(Kind::models, name));
}

struct ExplanationSet {
  std::string corpus;
  std::vector<Explanation> explanations;
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
};

inline void put_explanations(Project& project, const ExplanationSet& set, bool versioned = true) {
  std::string records;
  for (const auto& e : set.explanations) {
    records += explanation_to_json(e).dump();
    records.push_back('\n');
  }
  project.put(Kind::explanations, set.corpus, records, versioned);
  auto manifest = set.manifest;
  manifest["corpus"] = set.corpus;
  manifest["count"] = set.explanations.size();
  manifest["tool_version"] = kToolVersion;
  project.put(Kind::explanations, manifest_name(set.corpus), manifest.dump(2) + "\n", versioned);
}

/// Explanations are stored as offsets; the corpus of the same name supplies text.
inline ExplanationSet get_explanations(const Project& project, const std::string& corpus_name) {
  const Corpus corpus = get_corpus(project, corpus_name);
  ExplanationSet set;
  set.corpus = corpus_name;
  const std::string records = project.get(Kind::explanations, corpus_name);
  for (const auto line : split_lines(records)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto id = j.at("post_id").get<std::string>();
    const Post* post = corpus.find(id);
    if (!post) {
      throw Error(ErrorCode::integrity, "explanation refers to unknown post " + id);
    }
    set.explanations.push_back(explanation_from_json(j, post->text()));
  }
  if (project.contains(Kind::explanations, manifest_name(corpus_name))) {
    set.manifest = nlohmann::ordered_json::parse(
        project.get(Kind::explanations, manifest_name(corpus_name)));
  }
  return set;
}

/// The manifest records the provider so queries embed with the same model.
inline void put_index(Project& project, const PhraseIndex& index, const std::string& provider_id,
                      bool versioned = true) {
  project.put(Kind::indexes, index.corpus, serialize_index(index), versioned);
  nlohmann::ordered_json manifest;
  manifest["corpus"] = index.corpus;
  manifest["provider_id"] = provider_id;
  manifest["dimension"] = index.dimension;
  manifest["count"] = index.entries.size();
  manifest["tool_version"] = kToolVersion;
  project.put(Kind::indexes, manifest_name(index.corpus), manifest.dump(2) + "\n", versioned);
}

inline std::string index_provider_id(const Project& project, const std::string& corpus_name) {
  if (!project.contains(Kind::indexes, manifest_name(corpus_name))) {
    throw not_found("no index manifest for corpus '" + corpus_name + "'");
  }
  const auto j = nlohmann::json::parse(project.get(Kind::indexes, manifest_name(corpus_name)));
  return j.at("provider_id").get<std::string>();
}

inline PhraseIndex get_index(const Project& project, const std::string& corpus_name) {
  return parse_index(project.get(Kind::indexes, corpus_name));
}

inline void put_theme(Project& project, const Theme& theme) {
  project.put(Kind::themes, theme.id, theme_to_json(theme).dump(2) + "\n", /*versioned=*/true);
}

inline Theme get_theme(const Project& project, const std::string& theme_id) {
  return theme_from_json(nlohmann::json::parse(project.get(Kind::themes, theme_id)));
}

inline std::vector<Theme> list_themes(const Project& project) {
  std::vector<Theme> themes;
  for (const auto& id : project.list(Kind::themes)) themes.push_back(get_theme(project, id));
  return themes;
}

/// Finds a theme by id, falling back to a unique name match.
inline Theme find_theme(const Project& project, const std::string& id_or_name) {
  if (project.contains(Kind::themes, id_or_name)) return get_theme(project, id_or_name);
  for (auto& theme : list_themes(project)) {
    if (theme.name == id_or_name) return theme;
  }
  throw not_found("theme '" + id_or_name + "' not found");
}

inline std::string slugify(std::string_view name) {
  std::string slug;
  for (const char c : ascii_lower(name)) {
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (alnum) {
      slug.push_back(c);
    } else if (!slug.empty() && slug.back() != '-') {
      slug.push_back('-');
    }
  }
  while (!slug.empty() && slug.back() == '-') slug.pop_back();
  return slug.empty() ? "theme" : slug;
}

/// Creates and stores a theme with an id derived from its name.
inline Theme create_theme(Project& project, const std::string& name,
                          std::vector<std::string> members = {}, std::string notes = {}) {
  if (trim(name).empty()) throw invalid("theme name must be non-empty");
  std::string id = slugify(name);
  for (int suffix = 2; project.contains(Kind::themes, id); ++suffix) {
    id = slugify(name) + "-" + std::to_string(suffix);
  }
  Theme theme{id, name, std::move(members), std::nullopt, std::move(notes)};
  put_theme(project, theme);
  return theme;
}

}  // namespace maskboard

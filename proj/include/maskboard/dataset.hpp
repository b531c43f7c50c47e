#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "maskboard/corpus.hpp"
#include "maskboard/error.hpp"
#include "maskboard/file_io.hpp"
#include "maskboard/rng.hpp"

namespace maskboard {

enum class Provenance { manual, cohort_rule, expanded };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::manual:
      return "manual";
    case Provenance::cohort_rule:
      return "cohort_rule";
    case Provenance::expanded:
      return "expanded";
  }
  return "manual";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "manual") return Provenance::manual;
  if (s == "cohort_rule") return Provenance::cohort_rule;
  if (s == "expanded") return Provenance::expanded;
  throw invalid("unknown provenance '" + std::string(s) + "'");
}

struct LabeledExample {
  std::string post_id;
  std::string author;  // grouping key for splits; may be empty
  std::string text;
  int label = 0;  // 1 = positive
  Provenance provenance = Provenance::manual;

  const std::string& group_key() const { return author.empty() ? post_id : author; }

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct Dataset {
  std::string name;
  std::vector<LabeledExample> examples;
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count_if(
        examples.begin(), examples.end(), [](const auto& e) { return e.label == 1; }));
  }
  std::size_t negatives() const { return examples.size() - positives(); }
};

inline std::string serialize_examples(const std::vector<LabeledExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    nlohmann::ordered_json j;
    j["post_id"] = e.post_id;
    j["text"] = e.text;
    j["label"] = e.label;
    j["provenance"] = to_string(e.provenance);
    if (!e.author.empty()) {
      j["author"] = e.author;
    }
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<LabeledExample> parse_examples(std::string_view records) {
  std::vector<LabeledExample> examples;
  std::size_t line_no = 0;
  for (const auto line : split_lines(records)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_object() || !j.contains("post_id") || !j.contains("label")) {
      throw invalid("malformed dataset record at line " + std::to_string(line_no));
    }
    LabeledExample e;
    e.post_id = j.at("post_id").get<std::string>();
    e.text = j.value("text", "");
    e.label = j.at("label").get<int>();
    if (e.label != 0 && e.label != 1) {
      throw invalid("label must be 0 or 1 at line " + std::to_string(line_no));
    }
    e.provenance = provenance_from_string(j.value("provenance", "manual"));
    e.author = j.value("author", "");
    examples.push_back(std::move(e));
  }
  return examples;
}

inline nlohmann::ordered_json dataset_manifest(const Dataset& d) {
  nlohmann::ordered_json j = d.manifest;
  j["name"] = d.name;
  j["count"] = d.examples.size();
  j["positives"] = d.positives();
  j["negatives"] = d.negatives();
  j["tool_version"] = kToolVersion;
  return j;
}

/// Joins manual labels ({"post_id", "label"} records) onto a corpus.
inline Dataset label_manual(const Corpus& corpus, std::string_view label_records,
                            std::string name) {
  std::unordered_map<std::string, const Post*> by_id;
  for (const auto& post : corpus.posts) {
    by_id.emplace(post.id, &post);
  }
  Dataset d;
  d.name = std::move(name);
  std::size_t unresolved = 0;
  for (const auto line : split_lines(label_records)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_object() || !j.contains("post_id") || !j.contains("label")) {
      throw invalid("malformed label record: " + std::string(line));
    }
    const auto id = j.at("post_id").get<std::string>();
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      ++unresolved;
      continue;
    }
    const int label = j.at("label").get<int>();
    if (label != 0 && label != 1) {
      throw invalid("label must be 0 or 1 for post " + id);
    }
    d.examples.push_back({id, it->second->author, it->second->text(), label,
                          Provenance::manual});
  }
  d.manifest["source_corpus"] = corpus.name;
  d.manifest["unresolved_labels"] = unresolved;
  return d;
}

/// Turns a classifier-expanded corpus into positive examples tagged `expanded`.
inline Dataset examples_from_expansion(const Corpus& expanded, std::string name) {
  Dataset d;
  d.name = std::move(name);
  for (const auto& post : expanded.posts) {
    d.examples.push_back({post.id, post.author, post.text(), 1, Provenance::expanded});
  }
  d.manifest["source_corpus"] = expanded.name;
  return d;
}

struct SplitResult {
  Dataset train;
  Dataset test;
};

/// Author-grouped split. Groups are visited in seeded order and added to the
/// test side while they fit under floor(fraction * N); with singleton groups
/// the test size is exactly that target.
inline SplitResult split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (dataset.examples.empty()) {
    throw invalid("cannot split an empty dataset");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw invalid("test fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    groups[dataset.examples[i].group_key()].push_back(i);
  }
  if (groups.size() < 2) {
    throw invalid("split needs at least 2 authors to keep partitions author-disjoint");
  }
  std::vector<const std::vector<std::size_t>*> order;
  order.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    order.push_back(&members);
  }
  seeded_shuffle(order, seed);

  const auto target = static_cast<std::size_t>(
      std::floor(test_fraction * static_cast<double>(dataset.examples.size())));
  std::vector<bool> in_test(dataset.examples.size(), false);
  std::size_t test_size = 0;
  std::size_t test_groups = 0;
  for (std::size_t g = 0; g < order.size() && test_size < target; ++g) {
    // never hand the last remaining group to the test side
    if (test_groups + 1 == order.size()) break;
    if (test_size + order[g]->size() <= target) {
      for (const auto i : *order[g]) in_test[i] = true;
      test_size += order[g]->size();
      ++test_groups;
    }
  }

  SplitResult out;
  out.train.name = dataset.name + ".train";
  out.test.name = dataset.name + ".test";
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    (in_test[i] ? out.test : out.train).examples.push_back(dataset.examples[i]);
  }
  for (auto* part : {&out.train, &out.test}) {
    part->manifest["parent"] = dataset.name;
    part->manifest["split"] = {{"test_fraction", test_fraction},
                               {"seed", seed},
                               {"grouping", "author"},
                               {"target_test_size", target}};
  }
  return out;
}

/// Downsamples the majority class to the minority count. Survivors keep their
/// original relative order.
inline Dataset balance(const Dataset& dataset, std::uint64_t seed) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    (dataset.examples[i].label == 1 ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) {
    throw invalid("balance needs both classes present");
  }
  auto& majority = pos.size() > neg.size() ? pos : neg;
  const std::size_t keep = std::min(pos.size(), neg.size());
  if (majority.size() > keep) {
    seeded_shuffle(majority, seed);
    majority.resize(keep);
  }
  std::vector<std::size_t> kept;
  kept.reserve(2 * keep);
  kept.insert(kept.end(), pos.begin(), pos.end());
  kept.insert(kept.end(), neg.begin(), neg.end());
  std::sort(kept.begin(), kept.end());

  Dataset out;
  out.name = dataset.name + ".balanced";
  out.manifest = dataset.manifest;
  out.manifest["balance"] = {{"seed", seed}, {"per_class", keep}};
  for (const auto i : kept) {
    out.examples.push_back(dataset.examples[i]);
  }
  return out;
}

}  // namespace maskboard

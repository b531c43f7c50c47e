#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <future>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maskboard/corpus.hpp"
#include "maskboard/dataset.hpp"
#include "maskboard/error.hpp"

namespace maskboard {

/// Anything that maps text to a positive-class probability.
template <typename T>
concept TextScorer = requires(const T& scorer, std::string_view text) {
  { scorer.score(text) } -> std::convertible_to<double>;
};

/// A fitted backend. Implementations are immutable after construction, so
/// concurrent score() calls are safe.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string backend_id() const = 0;
  virtual nlohmann::ordered_json hyperparameters() const = 0;
  /// Probability of the positive class, in [0, 1].
  virtual double score(std::string_view text) const = 0;
  virtual std::string serialize_state() const = 0;
};

struct TrainingManifest {
  std::string backend_id;
  nlohmann::ordered_json hyperparameters = nlohmann::ordered_json::object();
  std::string dataset_hash;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["backend_id"] = backend_id;
    j["hyperparameters"] = hyperparameters;
    j["dataset_hash"] = dataset_hash;
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    return j;
  }

  static TrainingManifest from_json(const nlohmann::ordered_json& j) {
    TrainingManifest m;
    m.backend_id = j.at("backend_id").get<std::string>();
    m.hyperparameters = j.value("hyperparameters", nlohmann::ordered_json::object());
    m.dataset_hash = j.value("dataset_hash", "");
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
  }
};

class TrainedClassifier {
 public:
  TrainedClassifier(std::shared_ptr<const Classifier> model, TrainingManifest manifest)
      : model_(std::move(model)), manifest_(std::move(manifest)) {}

  double score(std::string_view text) const { return model_->score(text); }
  const Classifier& model() const { return *model_; }
  const TrainingManifest& manifest() const { return manifest_; }
  const std::string& backend_id() const { return manifest_.backend_id; }

 private:
  std::shared_ptr<const Classifier> model_;
  TrainingManifest manifest_;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["n"] = n;
    j["confusion"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
    return j;
  }
};

/// Positive class = 1. Precision, recall and F1 are 0 when undefined.
inline Metrics metrics_from_predictions(std::span<const int> labels,
                                        std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw invalid("labels and predictions differ in length");
  }
  Metrics m;
  m.n = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] == 1;
    const bool p = predictions[i] == 1;
    if (y && p) ++m.tp;
    else if (!y && p) ++m.fp;
    else if (!y && !p) ++m.tn;
    else ++m.fn;
  }
  if (m.n == 0) {
    return m;
  }
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  m.accuracy = d(m.tp + m.tn) / d(m.n);
  m.precision = m.tp + m.fp == 0 ? 0.0 : d(m.tp) / d(m.tp + m.fp);
  m.recall = m.tp + m.fn == 0 ? 0.0 : d(m.tp) / d(m.tp + m.fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

inline constexpr double kDecisionThreshold = 0.5;

template <TextScorer Scorer>
Metrics evaluate(const Scorer& classifier, const Dataset& test_set) {
  if (test_set.examples.empty()) {
    throw invalid("evaluation set is empty");
  }
  std::vector<int> labels;
  std::vector<int> predictions;
  labels.reserve(test_set.examples.size());
  predictions.reserve(test_set.examples.size());
  for (const auto& e : test_set.examples) {
    labels.push_back(e.label);
    predictions.push_back(classifier.score(e.text) >= kDecisionThreshold ? 1 : 0);
  }
  return metrics_from_predictions(labels, predictions);
}

struct PredictionRow {
  std::string post_id;
  double score = 0.0;
  int predicted = 0;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

inline void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw invalid("threshold must lie in (0, 1)");
  }
}

/// Scores every post; batches run concurrently but rows keep corpus order.
template <TextScorer Scorer>
std::vector<PredictionRow> classify_corpus(const Scorer& classifier, const Corpus& corpus,
                                           double threshold, std::size_t batch_size = 256) {
  check_threshold(threshold);
  if (batch_size == 0) {
    throw invalid("batch size must be positive");
  }
  std::vector<PredictionRow> rows(corpus.posts.size());
  std::vector<std::future<void>> pending;
  for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
    const std::size_t end = std::min(rows.size(), begin + batch_size);
    pending.push_back(std::async(std::launch::async, [&, begin, end] {
      for (std::size_t i = begin; i < end; ++i) {
        const auto& post = corpus.posts[i];
        const double s = classifier.score(post.text());
        rows[i] = {post.id, s, s >= threshold ? 1 : 0};
      }
    }));
    if (pending.size() >= 4) {
      pending.front().get();
      pending.erase(pending.begin());
    }
  }
  for (auto& f : pending) f.get();
  return rows;
}

inline std::string serialize_predictions(const std::vector<PredictionRow>& rows) {
  std::string out;
  for (const auto& row : rows) {
    nlohmann::ordered_json j;
    j["post_id"] = row.post_id;
    j["score"] = row.score;
    j["predicted"] = row.predicted;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

/// Keeps the posts predicted positive. `classifier_hash` identifies the model
/// in the manifest.
template <TextScorer Scorer>
Corpus expand_dataset(const Scorer& classifier, const Corpus& keyword_corpus, double threshold,
                      std::string_view classifier_hash, std::string name = {}) {
  const auto rows = classify_corpus(classifier, keyword_corpus, threshold);
  Corpus out;
  out.name = name.empty() ? keyword_corpus.name + ".expanded" : std::move(name);
  out.manifest = keyword_corpus.manifest;
  std::ostringstream filter;
  filter << "expanded:model=" << classifier_hash << ",threshold=" << threshold;
  out.manifest.filters.push_back(filter.str());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].predicted == 1) {
      out.posts.push_back(keyword_corpus.posts[i]);
    }
  }
  return out;
}

}  // namespace maskboard

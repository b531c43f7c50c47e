#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "json.hpp"
#include "maskboard/backends/logistic_regression.hpp"
#include "maskboard/backends/naive_bayes.hpp"
#include "maskboard/classifier.hpp"
#include "maskboard/file_io.hpp"
#include "maskboard/hashing.hpp"

namespace maskboard {

struct BackendSpec {
  std::string id;  // "linear" | "nb" | "transformer"
  nlohmann::json hyperparameters = nlohmann::json::object();
};

inline std::string dataset_hash(const Dataset& dataset) {
  return sha256_hex(serialize_examples(dataset.examples));
}

inline TrainedClassifier train(const BackendSpec& spec, const Dataset& train_set,
                               std::uint64_t seed) {
  const nlohmann::json hp =
      spec.hyperparameters.is_null() ? nlohmann::json::object() : spec.hyperparameters;
  if (!hp.is_object()) throw invalid("hyperparameters must be a JSON object");
  std::shared_ptr<const Classifier> model;
  if (spec.id == "nb") {
    model = std::make_shared<backends::NaiveBayes>(
        backends::NaiveBayes::fit(train_set, hp.value("alpha", 1.0)));
  } else if (spec.id == "linear") {
    backends::LogisticRegression::Options options;
    options.l2 = hp.value("l2", options.l2);
    options.max_iterations = hp.value("max_iterations", options.max_iterations);
    options.tolerance = hp.value("tolerance", options.tolerance);
    model = std::make_shared<backends::LogisticRegression>(
        backends::LogisticRegression::fit(train_set, options));
  } else if (spec.id == "transformer") {
    throw Error(ErrorCode::provider_unavailable,
                "the transformer backend is not available in this build");
  } else {
    throw invalid("unknown backend '" + spec.id + "'");
  }
  TrainingManifest manifest{spec.id, model->hyperparameters(), dataset_hash(train_set), seed};
  return TrainedClassifier(std::move(model), std::move(manifest));
}

inline TrainedClassifier restore(TrainingManifest manifest, std::string_view state) {
  std::shared_ptr<const Classifier> model;
  if (manifest.backend_id == "nb") {
    model = std::make_shared<backends::NaiveBayes>(backends::NaiveBayes::deserialize(state));
  } else if (manifest.backend_id == "linear") {
    model = std::make_shared<backends::LogisticRegression>(
        backends::LogisticRegression::deserialize(state));
  } else {
    throw invalid("cannot restore backend '" + manifest.backend_id + "'");
  }
  return TrainedClassifier(std::move(model), std::move(manifest));
}

/// Single-payload form used inside a project store.
inline std::string model_bundle(const TrainedClassifier& classifier) {
  nlohmann::ordered_json j;
  j["manifest"] = classifier.manifest().to_json();
  j["state"] = classifier.model().serialize_state();
  return j.dump();
}

inline TrainedClassifier model_from_bundle(std::string_view bundle) {
  const auto j = nlohmann::ordered_json::parse(bundle);
  return restore(TrainingManifest::from_json(j.at("manifest")),
                 j.at("state").get<std::string>());
}

inline std::string model_hash(const TrainedClassifier& classifier) {
  return sha256_hex(model_bundle(classifier));
}

/// Model artifact directory: `manifest.json` plus the opaque `state.bin`.
inline void write_model_dir(const std::filesystem::path& dir,
                            const TrainedClassifier& classifier) {
  std::filesystem::create_directories(dir);
  atomic_write_file(dir / "state.bin", classifier.model().serialize_state());
  atomic_write_file(dir / "manifest.json", classifier.manifest().to_json().dump(2) + "\n");
}

inline TrainedClassifier read_model_dir(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::ordered_json::parse(read_file(dir / "manifest.json"));
  return restore(TrainingManifest::from_json(manifest), read_file(dir / "state.bin"));
}

}  // namespace maskboard

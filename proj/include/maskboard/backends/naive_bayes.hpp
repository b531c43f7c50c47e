#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>

#include "json.hpp"
#include "maskboard/classifier.hpp"
#include "maskboard/error.hpp"
#include "maskboard/tokenizer.hpp"

namespace maskboard::backends {

/// Multinomial naive Bayes over unigram counts with additive smoothing.
/// Tokens unseen in training are ignored at scoring time.
class NaiveBayes final : public Classifier {
 public:
  struct Counts {
    std::array<double, 2> documents{};
    std::array<double, 2> token_totals{};
    std::map<std::string, std::array<double, 2>> vocabulary;  // token -> [neg, pos]
  };

  NaiveBayes(Counts counts, double alpha) : counts_(std::move(counts)), alpha_(alpha) {
    const double v = static_cast<double>(counts_.vocabulary.size());
    const double docs = counts_.documents[0] + counts_.documents[1];
    for (int c = 0; c < 2; ++c) {
      log_prior_[c] = std::log(counts_.documents[c] / docs);
      denominator_[c] = std::log(counts_.token_totals[c] + alpha_ * v);
    }
    for (const auto& [token, n] : counts_.vocabulary) {
      log_ratio_.emplace(token, (std::log(n[1] + alpha_) - denominator_[1]) -
                                    (std::log(n[0] + alpha_) - denominator_[0]));
    }
  }

  static NaiveBayes fit(const Dataset& train, double alpha = 1.0) {
    if (alpha <= 0.0) {
      throw invalid("naive Bayes smoothing must be positive");
    }
    if (train.positives() == 0 || train.negatives() == 0) {
      throw invalid("training set must contain both classes");
    }
    Counts counts;
    for (const auto& e : train.examples) {
      const int c = e.label == 1 ? 1 : 0;
      counts.documents[c] += 1.0;
      for (const auto& token : tokenize(e.text)) {
        counts.vocabulary[token][c] += 1.0;
        counts.token_totals[c] += 1.0;
      }
    }
    return NaiveBayes(std::move(counts), alpha);
  }

  std::string backend_id() const override { return "nb"; }

  nlohmann::ordered_json hyperparameters() const override {
    return {{"alpha", alpha_}, {"tokenizer", kTokenizerDescription}};
  }

  double score(std::string_view text) const override {
    double logit = log_prior_[1] - log_prior_[0];
    for (const auto& token : tokenize(text)) {
      const auto it = log_ratio_.find(token);
      if (it != log_ratio_.end()) {
        logit += it->second;
      }
    }
    return logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                        : std::exp(logit) / (1.0 + std::exp(logit));
  }

  std::string serialize_state() const override {
    nlohmann::ordered_json j;
    j["alpha"] = alpha_;
    j["documents"] = counts_.documents;
    j["token_totals"] = counts_.token_totals;
    nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
    for (const auto& [token, n] : counts_.vocabulary) {
      vocab[token] = n;
    }
    j["vocabulary"] = std::move(vocab);
    return j.dump();
  }

  static NaiveBayes deserialize(std::string_view state) {
    const auto j = nlohmann::json::parse(state);
    Counts counts;
    counts.documents = j.at("documents").get<std::array<double, 2>>();
    counts.token_totals = j.at("token_totals").get<std::array<double, 2>>();
    for (const auto& [token, n] : j.at("vocabulary").items()) {
      counts.vocabulary.emplace(token, n.get<std::array<double, 2>>());
    }
    return NaiveBayes(std::move(counts), j.at("alpha").get<double>());
  }

 private:
  Counts counts_;
  double alpha_;
  std::array<double, 2> log_prior_{};
  std::array<double, 2> denominator_{};
  std::unordered_map<std::string, double> log_ratio_;
};

}  // namespace maskboard::backends

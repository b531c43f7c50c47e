#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "maskboard/classifier.hpp"
#include "maskboard/error.hpp"
#include "maskboard/tokenizer.hpp"

namespace maskboard::backends {

/// L2-regularised logistic regression on binary token-presence features.
///
/// Minimises mean log-loss + (l2 / 2) * |w|^2 (bias unpenalised) by full-batch
/// gradient descent with Barzilai-Borwein steps and an Armijo safeguard. The
/// objective is strictly convex, so the result does not depend on the seed;
/// the seed is still recorded for provenance.
class LogisticRegression final : public Classifier {
 public:
  struct Options {
    double l2 = 1e-3;
    int max_iterations = 2000;
    double tolerance = 1e-7;  // on the max-norm of the gradient
  };

  LogisticRegression(std::map<std::string, double> weights, double bias, Options options)
      : weights_(std::move(weights)), bias_(bias), options_(options) {
    lookup_.reserve(weights_.size());
    for (const auto& [token, w] : weights_) {
      lookup_.emplace(token, w);
    }
  }

  static LogisticRegression fit(const Dataset& train, Options options) {
    if (train.positives() == 0 || train.negatives() == 0) {
      throw invalid("training set must contain both classes");
    }
    if (options.l2 < 0.0 || options.max_iterations <= 0) {
      throw invalid("invalid logistic regression options");
    }
    std::map<std::string, std::uint32_t> vocabulary;
    std::vector<std::vector<std::uint32_t>> rows;
    std::vector<std::vector<std::string>> row_tokens;
    for (const auto& e : train.examples) {
      row_tokens.push_back(unique_tokens(e.text));
      for (const auto& token : row_tokens.back()) vocabulary.emplace(token, 0);
    }
    std::uint32_t next = 0;
    for (auto& [token, index] : vocabulary) index = next++;
    for (const auto& tokens : row_tokens) {
      std::vector<std::uint32_t> row;
      row.reserve(tokens.size());
      for (const auto& token : tokens) row.push_back(vocabulary.at(token));
      rows.push_back(std::move(row));
    }
    std::vector<double> y;
    for (const auto& e : train.examples) y.push_back(e.label == 1 ? 1.0 : 0.0);

    const auto params = optimise(rows, y, vocabulary.size(), options);
    std::map<std::string, double> weights;
    for (const auto& [token, index] : vocabulary) weights.emplace(token, params[index]);
    return LogisticRegression(std::move(weights), params.back(), options);
  }

  std::string backend_id() const override { return "linear"; }

  nlohmann::ordered_json hyperparameters() const override {
    return {{"l2", options_.l2},
            {"max_iterations", options_.max_iterations},
            {"tolerance", options_.tolerance},
            {"features", "binary token presence"},
            {"tokenizer", kTokenizerDescription}};
  }

  double score(std::string_view text) const override {
    double z = bias_;
    for (const auto& token : unique_tokens(text)) {
      const auto it = lookup_.find(token);
      if (it != lookup_.end()) z += it->second;
    }
    return sigmoid(z);
  }

  double weight(const std::string& token) const {
    const auto it = lookup_.find(token);
    return it == lookup_.end() ? 0.0 : it->second;
  }
  double bias() const { return bias_; }

  std::string serialize_state() const override {
    nlohmann::ordered_json j;
    j["bias"] = bias_;
    j["l2"] = options_.l2;
    j["max_iterations"] = options_.max_iterations;
    j["tolerance"] = options_.tolerance;
    nlohmann::ordered_json w = nlohmann::ordered_json::object();
    for (const auto& [token, value] : weights_) w[token] = value;
    j["weights"] = std::move(w);
    return j.dump();
  }

  static LogisticRegression deserialize(std::string_view state) {
    const auto j = nlohmann::json::parse(state);
    Options options{j.at("l2").get<double>(), j.at("max_iterations").get<int>(),
                    j.at("tolerance").get<double>()};
    std::map<std::string, double> weights;
    for (const auto& [token, value] : j.at("weights").items()) {
      weights.emplace(token, value.get<double>());
    }
    return LogisticRegression(std::move(weights), j.at("bias").get<double>(), options);
  }

  /// Tokens in first-occurrence order, without repeats.
  static std::vector<std::string> unique_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& token : tokenize(text)) {
      if (seen.insert(token).second) out.push_back(std::move(token));
    }
    return out;
  }

 private:
  static double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }

  // log(1 + exp(z)) without overflow
  static double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

  static double objective(const std::vector<std::vector<std::uint32_t>>& rows,
                          const std::vector<double>& y, const std::vector<double>& params,
                          double l2, std::vector<double>* gradient) {
    const std::size_t dim = params.size() - 1;
    const double n = static_cast<double>(rows.size());
    if (gradient) gradient->assign(params.size(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double z = params[dim];
      for (const auto f : rows[i]) z += params[f];
      loss += softplus(z) - y[i] * z;
      if (gradient) {
        const double r = (sigmoid(z) - y[i]) / n;
        for (const auto f : rows[i]) (*gradient)[f] += r;
        (*gradient)[dim] += r;
      }
    }
    loss /= n;
    double penalty = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      penalty += params[k] * params[k];
      if (gradient) (*gradient)[k] += l2 * params[k];
    }
    return loss + 0.5 * l2 * penalty;
  }

  static std::vector<double> optimise(const std::vector<std::vector<std::uint32_t>>& rows,
                                      const std::vector<double>& y, std::size_t dim,
                                      const Options& options) {
    std::vector<double> x(dim + 1, 0.0);
    std::vector<double> g;
    std::vector<double> g_next;
    std::vector<double> x_next(dim + 1);
    double f = objective(rows, y, x, options.l2, &g);
    double step = 1.0;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
      double gmax = 0.0;
      double gg = 0.0;
      for (const double v : g) {
        gmax = std::max(gmax, std::abs(v));
        gg += v * v;
      }
      if (gmax < options.tolerance) break;

      double f_next = 0.0;
      for (int backtrack = 0;; ++backtrack) {
        for (std::size_t k = 0; k < x.size(); ++k) x_next[k] = x[k] - step * g[k];
        f_next = objective(rows, y, x_next, options.l2, &g_next);
        if (f_next <= f - 1e-4 * step * gg || backtrack >= 60) break;
        step *= 0.5;
      }
      double ss = 0.0;
      double sy = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double s = x_next[k] - x[k];
        ss += s * s;
        sy += s * (g_next[k] - g[k]);
      }
      x.swap(x_next);
      g.swap(g_next);
      f = f_next;
      step = sy > 0.0 ? std::clamp(ss / sy, 1e-6, 1e6) : 1.0;
    }
    return x;
  }

  std::map<std::string, double> weights_;
  std::unordered_map<std::string, double> lookup_;
  double bias_;
  Options options_;
};

}  // namespace maskboard::backends

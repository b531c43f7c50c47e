#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "maskboard/error.hpp"
#include "maskboard/file_io.hpp"
#include "maskboard/hashing.hpp"

namespace maskboard {

using Vector = std::vector<float>;

/// Wire contract: a batch of strings in, one vector per string out.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string provider_id() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Throws Error(provider_unavailable) on transport failure.
  virtual std::vector<Vector> embed(std::span<const std::string> texts) = 0;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

inline double norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

inline Vector normalized(std::span<const double> v) {
  double sum = 0.0;
  for (const double x : v) sum += x * x;
  const double length = std::sqrt(sum);
  if (!(length > 1e-12) || !std::isfinite(length)) {
    throw invalid("cannot normalise a zero-length vector");
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / length);
  return out;
}

inline Vector normalized(std::span<const float> v) {
  std::vector<double> wide(v.begin(), v.end());
  return normalized(std::span<const double>(wide));
}

/// Deterministic local provider: each text maps to a Gaussian vector seeded by
/// its SHA-256, so fixtures are stable across runs and machines.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dimension = 64) : dimension_(dimension) {
    if (dimension_ == 0) throw invalid("embedding dimension must be positive");
  }

  std::string provider_id() const override {
    return "test-hash-" + std::to_string(dimension_);
  }
  std::size_t dimension() const override { return dimension_; }

  std::vector<Vector> embed(std::span<const std::string> texts) override {
    ++calls_;
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(vector_for(text));
    return out;
  }

  Vector vector_for(std::string_view text) const {
    std::mt19937_64 gen(sha256_seed(text));
    auto unit = [&] { return (static_cast<double>(gen() >> 11U) + 0.5) * 0x1.0p-53; };
    Vector v(dimension_);
    for (std::size_t i = 0; i < dimension_; ++i) {
      // Box-Muller, spelled out so the stream does not depend on the standard library
      const double r = std::sqrt(-2.0 * std::log(unit()));
      v[i] = static_cast<float>(r * std::cos(2.0 * std::numbers::pi * unit()));
    }
    return v;
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::size_t dimension_;
  std::atomic<std::size_t> calls_{0};
};

/// Unit vectors keyed by (provider id, content hash). With a directory the
/// cache is mirrored to `<dir>/<provider_id>.jsonl`, one record per vector.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<Vector> lookup(const std::string& provider_id, std::string_view text) {
    std::lock_guard lock(mutex_);
    load(provider_id);
    const auto& table = tables_[provider_id];
    const auto it = table.find(sha256_hex(text));
    if (it == table.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& provider_id, std::string_view text, const Vector& v) {
    std::lock_guard lock(mutex_);
    load(provider_id);
    const std::string key = sha256_hex(text);
    if (!tables_[provider_id].emplace(key, v).second) return;
    if (!dir_.empty()) {
      nlohmann::json j;
      j["key"] = key;
      j["vector"] = v;
      std::filesystem::create_directories(dir_);
      append_line(file_for(provider_id), j.dump());
    }
  }

  std::size_t size(const std::string& provider_id) {
    std::lock_guard lock(mutex_);
    load(provider_id);
    return tables_[provider_id].size();
  }

 private:
  std::filesystem::path file_for(const std::string& provider_id) const {
    return dir_ / (provider_id + ".jsonl");
  }

  void load(const std::string& provider_id) {
    if (!loaded_.emplace(provider_id).second || dir_.empty()) return;
    const auto path = file_for(provider_id);
    if (!std::filesystem::exists(path)) return;
    const std::string data = read_file(path);
    auto& table = tables_[provider_id];
    for (const auto line : split_lines(data, /*complete_only=*/true)) {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_object()) continue;
      table.emplace(j.at("key").get<std::string>(), j.at("vector").get<Vector>());
    }
  }

  std::filesystem::path dir_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::unordered_map<std::string, Vector>> tables_;
  std::unordered_set<std::string> loaded_;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{250};
};

/// Front door for embeddings: answers from the cache, sends misses to the
/// provider in batches (at most `max_in_flight` concurrently), retries each
/// batch with exponential backoff and normalises every vector. Successful
/// batches are cached before any failure is reported.
class Embedder {
 public:
  Embedder(EmbeddingProvider& provider, EmbeddingCache& cache, EmbedOptions options = {})
      : provider_(provider), cache_(cache), options_(options) {}

  const EmbeddingProvider& provider() const { return provider_; }
  std::size_t dimension() const { return provider_.dimension(); }
  std::size_t provider_calls() const { return provider_calls_; }

  std::vector<Vector> embed(std::span<const std::string> texts) {
    std::vector<Vector> out(texts.size());
    std::vector<std::size_t> missing;
    std::unordered_map<std::string, std::size_t> first_missing;
    const std::string id = provider_.provider_id();
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (auto hit = cache_.lookup(id, texts[i])) {
        out[i] = std::move(*hit);
      } else if (first_missing.emplace(texts[i], i).second) {
        missing.push_back(i);
      }
    }
    if (!missing.empty()) fetch(texts, missing, out);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (out[i].empty()) out[i] = out[first_missing.at(texts[i])];
    }
    return out;
  }

  Vector embed_one(const std::string& text) {
    return embed(std::span<const std::string>(&text, 1)).front();
  }

 private:
  void fetch(std::span<const std::string> texts, const std::vector<std::size_t>& missing,
             std::vector<Vector>& out) {
    const std::string id = provider_.provider_id();
    const std::size_t batch = std::max<std::size_t>(1, options_.batch_size);
    std::vector<std::future<void>> in_flight;
    std::mutex error_mutex;
    std::optional<Error> failure;

    auto run_batch = [&](std::size_t begin, std::size_t end) {
      std::vector<std::string> request;
      for (std::size_t k = begin; k < end; ++k) request.push_back(texts[missing[k]]);
      std::vector<Vector> response;
      for (int attempt = 0;; ++attempt) {
        try {
          {
            std::lock_guard lock(provider_mutex_);
            ++provider_calls_;
          }
          response = provider_.embed(request);
          if (response.size() != request.size()) {
            throw Error(ErrorCode::provider_unavailable,
                        "provider returned " + std::to_string(response.size()) +
                            " vectors for " + std::to_string(request.size()) + " texts");
          }
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::provider_unavailable ||
              attempt + 1 >= options_.max_attempts) {
            std::lock_guard lock(error_mutex);
            if (!failure) failure = e;
            return;
          }
          std::this_thread::sleep_for(options_.base_delay * (1LL << attempt));
        }
      }
      for (std::size_t k = 0; k < response.size(); ++k) {
        if (response[k].size() != provider_.dimension()) {
          std::lock_guard lock(error_mutex);
          if (!failure) failure = Error(ErrorCode::provider_unavailable,
                                        "provider returned a vector of the wrong dimension");
          return;
        }
        Vector v = normalized(std::span<const float>(response[k]));
        cache_.store(id, request[k], v);
        out[missing[begin + k]] = std::move(v);
      }
    };

    for (std::size_t begin = 0; begin < missing.size(); begin += batch) {
      const std::size_t end = std::min(missing.size(), begin + batch);
      in_flight.push_back(std::async(std::launch::async, run_batch, begin, end));
      if (in_flight.size() >= std::max<std::size_t>(1, options_.max_in_flight)) {
        in_flight.front().get();
        in_flight.erase(in_flight.begin());
      }
    }
    for (auto& f : in_flight) f.get();
    if (failure) {
      throw Error(ErrorCode::provider_unavailable,
                  std::string("embedding provider failed: ") + failure->what());
    }
  }

  EmbeddingProvider& provider_;
  EmbeddingCache& cache_;
  EmbedOptions options_;
  std::mutex provider_mutex_;
  std::size_t provider_calls_ = 0;
};

}  // namespace maskboard

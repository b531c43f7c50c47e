#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "maskboard/embedding.hpp"

namespace maskboard {

struct HttpRequest {
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Sends one POST. Connection failures are reported as status 0.
using Transport = std::function<HttpResponse(const HttpRequest&)>;

struct UrlParts {
  std::string scheme_host_port;
  std::string path;
};

inline UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw invalid("endpoint URL needs a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw invalid("unsupported URL scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline Transport http_transport(std::chrono::seconds timeout = std::chrono::seconds(60)) {
  return [timeout](const HttpRequest& request) {
    const auto parts = split_url(request.url);
    httplib::Client client(parts.scheme_host_port);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) {
      if (k != "Content-Type") headers.emplace(k, v);
    }
    const auto result = client.Post(parts.path, headers, request.body, "application/json");
    if (!result) return HttpResponse{0, httplib::to_string(result.error())};
    return HttpResponse{result->status, result->body};
  };
}

struct RemoteEmbeddingOptions {
  std::string endpoint;  // full URL of the embeddings route
  std::string model;
  std::size_t dimension = 0;
  std::string key_variable = "MASKBOARD_EMBED_KEY";
};

/// JSON-over-HTTP embeddings client. Sends {"model", "input": [...]} with a
/// bearer key and accepts either a bare array of vectors or
/// {"data": [{"embedding": [...], "index": i}, ...]}.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingOptions options,
                                   Transport transport = http_transport())
      : options_(std::move(options)), transport_(std::move(transport)) {
    if (options_.endpoint.empty()) throw invalid("remote provider needs an endpoint URL");
    if (options_.dimension == 0) throw invalid("remote provider needs a positive dimension");
    split_url(options_.endpoint);
    api_key();
  }

  std::string provider_id() const override {
    return "remote-" + (options_.model.empty() ? std::string("default") : options_.model) +
           "-" + std::to_string(options_.dimension);
  }
  std::size_t dimension() const override { return options_.dimension; }

  std::vector<Vector> embed(std::span<const std::string> texts) override {
    const std::string key = api_key();
    nlohmann::json body;
    if (!options_.model.empty()) body["model"] = options_.model;
    body["input"] = std::vector<std::string>(texts.begin(), texts.end());
    HttpRequest request{options_.endpoint,
                        {{"Authorization", "Bearer " + key},
                         {"Content-Type", "application/json"}},
                        body.dump()};
    const auto response = transport_(request);
    if (response.status == 0 || response.status == 429 || response.status >= 500) {
      throw Error(ErrorCode::provider_unavailable,
                  "embedding endpoint unavailable (status " + std::to_string(response.status) +
                      ")");
    }
    if (response.status < 200 || response.status >= 300) {
      throw invalid("embedding endpoint rejected the request (status " +
                    std::to_string(response.status) + ")");
    }
    return parse_response(response.body, texts.size());
  }

  static std::vector<Vector> parse_response(const std::string& body, std::size_t expected) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    std::vector<Vector> out;
    try {
      if (j.is_array()) {
        for (const auto& row : j) out.push_back(row.get<Vector>());
      } else if (j.is_object() && j.contains("data") && j["data"].is_array()) {
        out.resize(j["data"].size());
        std::size_t position = 0;
        for (const auto& item : j["data"]) {
          const std::size_t i = item.value("index", position);
          if (i >= out.size() || !out[i].empty()) throw invalid("bad index in response");
          out[i] = item.at("embedding").get<Vector>();
          ++position;
        }
      } else {
        throw invalid("unrecognised embedding response");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::provider_unavailable, std::string("malformed embedding response: ") +
                                                       e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::provider_unavailable,
                  std::string("malformed embedding response: ") + e.what());
    }
    if (out.size() != expected) {
      throw Error(ErrorCode::provider_unavailable,
                  "embedding response has " + std::to_string(out.size()) + " vectors, expected " +
                      std::to_string(expected));
    }
    return out;
  }

 private:
  std::string api_key() const {
    const char* key = std::getenv(options_.key_variable.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::provider_unavailable,
                  "environment variable " + options_.key_variable + " is not set");
    }
    return key;
  }

  RemoteEmbeddingOptions options_;
  Transport transport_;
};

struct ProviderSettings {
  std::size_t test_dimension = 64;
  std::optional<RemoteEmbeddingOptions> remote;
  Transport transport;  // empty: real HTTP
};

/// Builds a provider by kind ("test" or "remote").
inline std::unique_ptr<EmbeddingProvider> make_provider(std::string_view kind,
                                                        const ProviderSettings& settings) {
  if (kind == "test") return std::make_unique<HashEmbeddingProvider>(settings.test_dimension);
  if (kind == "remote") {
    if (!settings.remote) {
      throw invalid("remote provider needs an endpoint, model and dimension");
    }
    return std::make_unique<RemoteEmbeddingProvider>(
        *settings.remote, settings.transport ? settings.transport : http_transport());
  }
  throw invalid("unknown provider '" + std::string(kind) + "' (expected test or remote)");
}

/// Rebuilds the provider that produced an index from its recorded id.
inline std::unique_ptr<EmbeddingProvider> provider_from_id(const std::string& id,
                                                           const ProviderSettings& settings) {
  constexpr std::string_view test_prefix = "test-hash-";
  if (id.starts_with(test_prefix)) {
    const auto dim = std::stoul(id.substr(test_prefix.size()));
    return std::make_unique<HashEmbeddingProvider>(dim);
  }
  if (id.starts_with("remote-")) {
    auto provider = make_provider("remote", settings);
    if (provider->provider_id() != id) {
      throw Error(ErrorCode::provider_unavailable,
                  "index was built with " + id + " but the configured remote provider is " +
                      provider->provider_id());
    }
    return provider;
  }
  throw invalid("unknown provider id '" + id + "'");
}

}  // namespace maskboard

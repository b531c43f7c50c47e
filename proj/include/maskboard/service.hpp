#pragma once

#include <charconv>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "maskboard/project_store.hpp"
#include "maskboard/remote_embedding.hpp"
#include "maskboard/stats.hpp"

namespace maskboard {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found:
      return 404;
    case ErrorCode::conflict:
      return 409;
    case ErrorCode::invalid:
      return 400;
    case ErrorCode::integrity:
      return 500;
    case ErrorCode::provider_unavailable:
      return 503;
  }
  return 500;
}

inline nlohmann::ordered_json error_body(ErrorCode code, const std::string& message) {
  nlohmann::ordered_json j;
  j["code"] = to_string(code);
  j["message"] = message;
  return j;
}

inline bool is_loopback(const std::string& host) {
  return host == "127.0.0.1" || host == "localhost" || host == "::1" || host.starts_with("127.");
}

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8787;
  std::optional<std::string> token;  // required for non-loopback binds
  std::optional<fs::path> static_dir;
  std::size_t page_size = 50;
  ProviderSettings providers;
};

/// Search request/response bodies, shared by the HTTP route and the CLI.
struct SearchResult {
  std::string theme_id;
  std::string corpus;
  std::vector<Match> matches;
  const PhraseIndex* index = nullptr;
};

inline nlohmann::ordered_json search_to_json(const SearchResult& r) {
  nlohmann::ordered_json j;
  j["theme_id"] = r.theme_id;
  j["corpus"] = r.corpus;
  auto& rows = j["matches"] = nlohmann::ordered_json::array();
  std::size_t rank = 0;
  for (const auto& m : r.matches) {
    const auto& e = r.index->entries[m.entry];
    nlohmann::ordered_json row;
    row["rank"] = ++rank;
    row["post_id"] = e.post_id;
    row["phrase"] = e.phrase;
    row["cosine"] = m.cosine;
    rows.push_back(std::move(row));
  }
  return j;
}

inline nlohmann::ordered_json counts_to_json(const std::string& theme_id, const std::string& corpus,
                                             const ThemeCounts& c) {
  nlohmann::ordered_json j;
  j["theme_id"] = theme_id;
  j["corpus"] = corpus;
  j["k"] = c.k;
  j["n"] = c.n;
  j["window"] = c.window;
  j["partial"] = c.partial;
  j["denominator"] = c.denominator();
  j["proportion"] = c.proportion();
  j["pct"] = format_percent(c.proportion());
  return j;
}

/// Query vector for a theme: the stored one if present, otherwise the
/// normalised mean of the member phrase embeddings.
inline Vector resolve_theme_vector(Embedder& embedder, const Theme& theme) {
  if (theme.members.empty() && theme.query_vector) return *theme.query_vector;
  return theme_query_vector(embedder, theme);
}

/// Project-level operations behind every endpoint. Reads go straight to the
/// store (all writes there are atomic renames or whole-line appends); writes
/// are serialised here and by the store's writer lock.
class Workbench {
 public:
  Workbench(Project project, ProviderSettings providers = {})
      : project_(std::move(project)), providers_(std::move(providers)) {}

  Project& project() { return project_; }

  fs::path cache_dir() const { return project_.root() / "cache" / "embeddings"; }

  std::shared_ptr<const PhraseIndex> index(const std::string& corpus) {
    const auto hash = project_.hash_of(Kind::indexes, corpus);
    if (!hash) throw not_found("no index for corpus '" + corpus + "'");
    std::lock_guard lock(cache_mutex_);
    auto& slot = indexes_[*hash];
    if (!slot) slot = std::make_shared<PhraseIndex>(parse_index(project_.read_blob(Kind::indexes, *hash)));
    return slot;
  }

  std::shared_ptr<const ExplanationSet> explanations(const std::string& corpus) {
    const auto hash = project_.hash_of(Kind::explanations, corpus);
    if (!hash) throw not_found("no explanations for corpus '" + corpus + "'");
    const auto corpus_hash = project_.hash_of(Kind::corpora, corpus).value_or("");
    std::lock_guard lock(cache_mutex_);
    auto& slot = explanation_sets_[*hash + corpus_hash];
    if (!slot) slot = std::make_shared<ExplanationSet>(get_explanations(project_, corpus));
    return slot;
  }

  struct SearchOutput {
    SearchResult result;
    std::shared_ptr<const PhraseIndex> index;
  };

  SearchOutput search(const std::string& theme_ref, const std::string& corpus, std::size_t n) {
    const Theme theme = find_theme(project_, theme_ref);
    auto idx = index(corpus);
    auto provider = provider_from_id(index_provider_id(project_, corpus), providers_);
    EmbeddingCache cache(cache_dir());
    Embedder embedder(*provider, cache);
    const Vector query = resolve_theme_vector(embedder, theme);
    SearchOutput out{{theme.id, corpus, top_matches(*idx, query, n), nullptr}, idx};
    out.result.index = out.index.get();
    return out;
  }

  ThemeCounts counts(const std::string& theme_ref, const std::string& corpus,
                     std::size_t window) {
    const Theme theme = find_theme(project_, theme_ref);
    return project_.replay_reviews().counts(theme.id, corpus, window);
  }

  ComparisonResult compare(const std::string& theme_ref, const std::string& corpus_a,
                           const std::string& corpus_b, std::size_t window) {
    const Theme theme = find_theme(project_, theme_ref);
    const auto state = project_.replay_reviews();
    return compare_theme(theme, state.counts(theme.id, corpus_a, window),
                         state.counts(theme.id, corpus_b, window));
  }

  std::string rendered(const std::string& corpus, const std::string& post_id,
                       RenderFormat format) {
    const auto set = explanations(corpus);
    const Corpus c = get_corpus(project_, corpus);
    const Post* post = c.find(post_id);
    if (!post) throw not_found("post '" + post_id + "' not in corpus '" + corpus + "'");
    for (const auto& e : set->explanations) {
      if (e.post_id == post_id) return render_highlights(post->text(), e, format);
    }
    throw not_found("post '" + post_id + "' has no explanation");
  }

  // -- writes ---------------------------------------------------------------

  Theme create(const std::string& name, std::vector<std::string> members, std::string notes) {
    std::lock_guard lock(write_mutex_);
    return create_theme(project_, name, std::move(members), std::move(notes));
  }

  Theme update(const std::string& theme_ref, const nlohmann::json& patch) {
    std::lock_guard lock(write_mutex_);
    Theme theme = find_theme(project_, theme_ref);
    if (patch.contains("name")) {
      const auto name = patch["name"].get<std::string>();
      if (trim(name).empty()) throw invalid("theme name must be non-empty");
      theme.name = name;
    }
    if (patch.contains("members")) {
      theme.members = patch["members"].get<std::vector<std::string>>();
      theme.query_vector.reset();
    }
    if (patch.contains("notes")) theme.notes = patch["notes"].get<std::string>();
    put_theme(project_, theme);
    return theme;
  }

  Theme add_members(const std::string& theme_ref, const std::vector<std::string>& phrases) {
    std::lock_guard lock(write_mutex_);
    Theme theme = find_theme(project_, theme_ref);
    for (const auto& p : phrases) {
      if (trim(p).empty()) throw invalid("member phrases must be non-empty");
      if (std::find(theme.members.begin(), theme.members.end(), p) == theme.members.end()) {
        theme.members.push_back(p);
      }
    }
    theme.query_vector.reset();
    put_theme(project_, theme);
    return theme;
  }

  void remove(const std::string& theme_ref) {
    std::lock_guard lock(write_mutex_);
    project_.remove(Kind::themes, find_theme(project_, theme_ref).id);
  }

  ThemeCounts review(ReviewRecord record, std::size_t window) {
    std::lock_guard lock(write_mutex_);
    record.theme_id = find_theme(project_, record.theme_id).id;
    return project_.append_review(record).counts(record.theme_id, record.corpus, window);
  }

 private:
  Project project_;
  ProviderSettings providers_;
  std::mutex write_mutex_;
  std::mutex cache_mutex_;
  std::map<std::string, std::shared_ptr<const PhraseIndex>> indexes_;
  std::map<std::string, std::shared_ptr<const ExplanationSet>> explanation_sets_;
};

namespace detail {

inline nlohmann::json request_json(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw invalid("request body must be a JSON object");
  return j;
}

inline std::string required_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw invalid("missing query parameter '" + name + "'");
  }
  return req.get_param_value(name);
}

inline std::size_t size_param(const httplib::Request& req, const std::string& name,
                              std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw invalid("query parameter '" + name + "' must be a non-negative integer");
  }
  return value;
}

template <class T>
T body_field(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) throw invalid("missing field '" + key + "'");
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw invalid("field '" + key + "' has the wrong type");
  }
}

inline void send(httplib::Response& res, const nlohmann::ordered_json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace detail

/// HTTP front end for one project under /api/v1.
class Service {
 public:
  Service(Project project, ServiceOptions options = {})
      : options_(std::move(options)), workbench_(std::move(project), options_.providers) {
    if (!is_loopback(options_.host) && (!options_.token || options_.token->empty())) {
      throw invalid("binding to " + options_.host + " requires an access token");
    }
    routes();
  }

  Workbench& workbench() { return workbench_; }
  httplib::Server& server() { return server_; }

  /// Binds and returns the port (an ephemeral one when options.port is 0).
  int bind() {
    if (options_.port == 0) {
      port_ = server_.bind_to_any_port(options_.host);
    } else if (server_.bind_to_port(options_.host, options_.port)) {
      port_ = options_.port;
    } else {
      port_ = -1;
    }
    if (port_ < 0) {
      throw Error(ErrorCode::provider_unavailable,
                  "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    return port_;
  }

  /// Blocks until stop().
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  int port() const { return port_; }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
      try {
        inner(req, res);
      } catch (const Error& e) {
        detail::send(res, error_body(e.code(), e.what()), http_status(e.code()));
      } catch (const nlohmann::json::exception& e) {
        detail::send(res, error_body(ErrorCode::invalid, e.what()), 400);
      } catch (const std::exception& e) {
        detail::send(res, error_body(ErrorCode::integrity, e.what()), 500);
      }
    };
  }

  void routes() {
    using detail::body_field;
    using detail::required_param;
    using detail::send;
    using detail::size_param;
    const std::string api = "/api/v1";

    if (options_.token && !options_.token->empty()) {
      server_.set_pre_routing_handler([this, api](const httplib::Request& req,
                                                  httplib::Response& res) {
        if (!req.path.starts_with(api)) return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("Authorization") == "Bearer " + *options_.token) {
          return httplib::Server::HandlerResponse::Unhandled;
        }
        detail::send(res, error_body(ErrorCode::invalid, "missing or wrong access token"), 401);
        return httplib::Server::HandlerResponse::Handled;
      });
    }
    if (options_.static_dir) server_.set_mount_point("/", options_.static_dir->string());

    server_.Get(api + "/explanations", guarded([this](const auto& req, auto& res) {
      const auto corpus = required_param(req, "corpus");
      const auto page = size_param(req, "page", 1);
      if (page < 1) throw invalid("page numbers start at 1");
      const auto set = workbench_.explanations(corpus);
      const auto& all = set->explanations;
      const std::size_t begin = std::min(all.size(), (page - 1) * options_.page_size);
      const std::size_t end = std::min(all.size(), begin + options_.page_size);
      nlohmann::ordered_json j;
      j["corpus"] = corpus;
      j["page"] = page;
      j["page_size"] = options_.page_size;
      j["total"] = all.size();
      auto& items = j["items"] = nlohmann::ordered_json::array();
      for (std::size_t i = begin; i < end; ++i) items.push_back(explanation_to_json(all[i]));
      send(res, j);
    }));

    server_.Get(api + "/themes", guarded([this](const auto&, auto& res) {
      nlohmann::ordered_json j;
      auto& themes = j["themes"] = nlohmann::ordered_json::array();
      for (const auto& t : list_themes(workbench_.project())) themes.push_back(theme_to_json(t));
      send(res, j);
    }));

    server_.Get(api + R"(/themes/([^/]+))", guarded([this](const auto& req, auto& res) {
      send(res, theme_to_json(find_theme(workbench_.project(), req.matches[1])));
    }));

    server_.Post(api + "/themes", guarded([this](const auto& req, auto& res) {
      const auto body = detail::request_json(req);
      const auto theme = workbench_.create(
          body_field<std::string>(body, "name"),
          body.contains("members") ? body_field<std::vector<std::string>>(body, "members")
                                   : std::vector<std::string>{},
          body.contains("notes") ? body_field<std::string>(body, "notes") : std::string{});
      send(res, theme_to_json(theme), 201);
    }));

    server_.Patch(api + R"(/themes/([^/]+))", guarded([this](const auto& req, auto& res) {
      send(res, theme_to_json(workbench_.update(req.matches[1], detail::request_json(req))));
    }));

    server_.Delete(api + R"(/themes/([^/]+))", guarded([this](const auto& req, auto& res) {
      workbench_.remove(req.matches[1]);
      nlohmann::ordered_json j;
      j["deleted"] = std::string(req.matches[1]);
      send(res, j);
    }));

    server_.Post(api + R"(/themes/([^/]+)/members)", guarded([this](const auto& req, auto& res) {
      const auto body = detail::request_json(req);
      send(res, theme_to_json(workbench_.add_members(
                    req.matches[1], body_field<std::vector<std::string>>(body, "phrases"))));
    }));

    server_.Post(api + "/search", guarded([this](const auto& req, auto& res) {
      const auto body = detail::request_json(req);
      const auto n = body.contains("n") ? body_field<std::size_t>(body, "n") : std::size_t{300};
      const auto out = workbench_.search(body_field<std::string>(body, "theme_id"),
                                         body_field<std::string>(body, "corpus"), n);
      send(res, search_to_json(out.result));
    }));

    server_.Post(api + "/reviews", guarded([this](const auto& req, auto& res) {
      const auto body = detail::request_json(req);
      ReviewRecord r;
      r.theme_id = body_field<std::string>(body, "theme_id");
      r.corpus = body_field<std::string>(body, "corpus");
      r.post_id = body_field<std::string>(body, "post_id");
      r.phrase = body_field<std::string>(body, "phrase");
      r.rank = body_field<std::size_t>(body, "rank");
      r.verdict = verdict_from_string(body_field<std::string>(body, "verdict"));
      r.reviewer = body.contains("reviewer") ? body_field<std::string>(body, "reviewer") : "";
      r.reviewed_at = body.contains("reviewed_at")
                          ? body_field<std::int64_t>(body, "reviewed_at")
                          : std::chrono::duration_cast<std::chrono::seconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();
      r.amend = body.contains("amend") && body_field<bool>(body, "amend");
      const auto window =
          body.contains("window") ? body_field<std::size_t>(body, "window") : std::size_t{300};
      const auto counts = workbench_.review(r, window);
      nlohmann::ordered_json j;
      j["review"] = review_to_json(r);
      j["counts"] = counts_to_json(r.theme_id, r.corpus, counts);
      send(res, j, 201);
    }));

    server_.Get(api + R"(/themes/([^/]+)/counts)", guarded([this](const auto& req, auto& res) {
      const auto corpus = required_param(req, "corpus");
      const auto window = size_param(req, "window", 300);
      const auto theme = find_theme(workbench_.project(), req.matches[1]);
      send(res, counts_to_json(theme.id, corpus, workbench_.counts(theme.id, corpus, window)));
    }));

    server_.Get(api + "/compare", guarded([this](const auto& req, auto& res) {
      const auto r = workbench_.compare(required_param(req, "theme"),
                                        required_param(req, "corpus_a"),
                                        required_param(req, "corpus_b"),
                                        size_param(req, "window", 300));
      auto j = comparison_to_json(r);
      j["row"] = render_row(r);
      send(res, j);
    }));

    server_.Get(api + R"(/posts/([^/]+)/rendered)", guarded([this](const auto& req, auto& res) {
      const auto corpus = required_param(req, "corpus");
      const auto format = render_format_from_string(
          req.has_param("format") ? req.get_param_value("format") : "html");
      nlohmann::ordered_json j;
      j["post_id"] = std::string(req.matches[1]);
      j["corpus"] = corpus;
      j["format"] = req.has_param("format") ? req.get_param_value("format") : "html";
      j["markup"] = workbench_.rendered(corpus, req.matches[1], format);
      send(res, j);
    }));

    // Batch endpoints over stored models.
    server_.Post(api + "/classify", guarded([this](const auto& req, auto& res) {
      const auto body = detail::request_json(req);
      const auto model = get_model(workbench_.project(), body_field<std::string>(body, "model"));
      const auto threshold =
          body.contains("threshold") ? body_field<double>(body, "threshold") : kDecisionThreshold;
      check_threshold(threshold);
      nlohmann::ordered_json j;
      auto& rows = j["predictions"] = nlohmann::ordered_json::array();
      for (const auto& text : body_field<std::vector<std::string>>(body, "texts")) {
        const double s = model.score(text);
        rows.push_back({{"score", s}, {"predicted", s >= threshold ? 1 : 0}});
      }
      send(res, j);
    }));

    server_.Post(api + "/explain", guarded([this](const auto& req, auto& res) {
      const auto body = detail::request_json(req);
      const auto model = get_model(workbench_.project(), body_field<std::string>(body, "model"));
      HighlightPolicy policy;
      if (body.contains("top_k")) policy.k = body_field<std::size_t>(body, "top_k");
      if (body.contains("min_influence")) {
        policy.min_influence = body_field<double>(body, "min_influence");
      }
      const auto e = explain(model, body_field<std::string>(body, "text"),
                             body.contains("post_id") ? body_field<std::string>(body, "post_id")
                                                      : std::string{},
                             policy);
      send(res, explanation_to_json(e));
    }));

    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404) {
        detail::send(res, error_body(ErrorCode::not_found, "no route for " + req.path), 404);
      } else {
        detail::send(res, error_body(ErrorCode::invalid, "request failed"), res.status);
      }
    });
  }

  ServiceOptions options_;
  Workbench workbench_;
  httplib::Server server_;
  int port_ = -1;
};

}  // namespace maskboard

#pragma once

#include <memory>
#include <thread>

#include "maskboard/service.hpp"
#include "support/stubs.hpp"
#include "support/temp_dir.hpp"

namespace maskboard::testing {

inline Corpus lyme_fixture() {
  Corpus c;
  c.name = "lyme";
  c.posts = {{"p1", "u1", "Lyme", 10, "", "I had a panic attack. The mold is back."},
             {"p2", "u2", "Lyme", 20, "", "Tired all day. Sinus pressure again."},
             {"p3", "u3", "Lyme", 30, "", "Black mold in the basement. Panic again."}};
  return c;
}

/// The three unit vectors e1, e2 and (e1+e2)/sqrt(2) under provider test-hash-2.
inline PhraseIndex three_vector_index() {
  PhraseIndex index;
  index.corpus = "lyme";
  index.dimension = 2;
  const float h = static_cast<float>(1.0 / std::sqrt(2.0));
  index.entries = {{"p1", "The mold is back", {1.0f, 0.0f}},
                   {"p2", "Sinus pressure again", {0.0f, 1.0f}},
                   {"p3", "Black mold in the basement", {h, h}}};
  return index;
}

inline void append_counts(const Project& project, const std::string& theme_id,
                          const std::string& corpus, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const ReviewRecord r{theme_id, corpus, "q" + std::to_string(i), "phrase", i + 1,
                         i < k ? Verdict::match : Verdict::non_match, "fixture", 1700000000,
                         false};
    append_line(project.root() / "reviews.log", review_to_json(r).dump());
  }
}

/// A populated project served on an ephemeral loopback port.
class ServedProject {
 public:
  explicit ServedProject(ServiceOptions options = {}) {
    auto project = Project::init(dir_ / "project", "fixture");
    const auto corpus = lyme_fixture();
    put_corpus(project, corpus);
    ExplanationSet set;
    set.corpus = corpus.name;
    for (const auto& p : corpus.posts) {
      set.explanations.push_back(explain(KeywordScorer{"panic"}, p.text(), p.id));
    }
    put_explanations(project, set);
    put_index(project, three_vector_index(), "test-hash-2");
    Theme mold{"mold", "mold", {}, Vector{1.0f, 0.0f}, ""};
    put_theme(project, mold);
    options.port = 0;
    service_ = std::make_unique<Service>(Project::open(dir_ / "project"), options);
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->run(); });
    service_->server().wait_until_ready();
  }

  ~ServedProject() {
    service_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(std::chrono::seconds(30));
    return c;
  }

  Project project() const { return Project::open(dir_ / "project"); }
  Service& service() { return *service_; }

 private:
  TempDir dir_;
  std::unique_ptr<Service> service_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace maskboard::testing

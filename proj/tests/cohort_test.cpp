#include <gtest/gtest.h>

#include <random>
#include <unordered_map>

#include "maskboard/cohort.hpp"

namespace maskboard {
namespace {

constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kT0 = 1500000000;

Post post(const std::string& id, const std::string& author, const std::string& forum,
          std::int64_t t) {
  return {id, author, forum, t, "", "text of " + id};
}

Corpus make_corpus(std::vector<Post> posts) {
  Corpus c;
  c.name = "reddit";
  c.posts = std::move(posts);
  stabilize(c.posts);
  return c;
}

std::map<std::string, int> labels_by_id(const Dataset& d) {
  std::map<std::string, int> out;
  for (const auto& e : d.examples) out[e.post_id] = e.label;
  return out;
}

TEST(TransitionCohort, ThreeAuthorFixture) {
  // A: anxiety only. B: adhd at t0+200d. C: only adhd post at t0+90d.
  const auto corpus = make_corpus({
      post("a1", "A", "Anxiety", kT0),
      post("a2", "A", "Anxiety", kT0 + 50 * kDay),
      post("b1", "B", "Anxiety", kT0),
      post("b2", "B", "Anxiety", kT0 + 150 * kDay),
      post("b3", "B", "ADHD", kT0 + 200 * kDay),
      post("b4", "B", "Anxiety", kT0 + 250 * kDay),
      post("c1", "C", "Anxiety", kT0),
      post("c2", "C", "ADHD", kT0 + 90 * kDay),
  });
  const auto result = build_transition_cohort(corpus, CohortConfig{});
  const auto labels = labels_by_id(result.dataset);
  const std::map<std::string, int> expected{{"a1", 0}, {"a2", 0}, {"b1", 1}, {"b2", 1}};
  EXPECT_EQ(labels, expected);
  EXPECT_EQ(result.stats.dropped_window_only, 1u);
  EXPECT_EQ(result.stats.positive_authors, 1u);
  EXPECT_EQ(result.stats.negative_authors, 1u);
  for (const auto& e : result.dataset.examples) {
    EXPECT_EQ(e.provenance, Provenance::cohort_rule);
  }
}

TEST(TransitionCohort, WindowBoundaryIsExclusive) {
  const auto corpus = make_corpus({
      post("x1", "X", "Anxiety", kT0),
      post("x2", "X", "ADHD", kT0 + 183 * kDay),
      post("y1", "Y", "Anxiety", kT0),
      post("y2", "Y", "ADHD", kT0 + 183 * kDay + 1),
  });
  const auto labels = labels_by_id(build_transition_cohort(corpus, CohortConfig{}).dataset);
  EXPECT_FALSE(labels.contains("x1"));
  EXPECT_EQ(labels.at("y1"), 1);
}

TEST(TransitionCohort, AdhdOnlyAndAdhdFirstAuthorsExcluded) {
  const auto corpus = make_corpus({
      post("d1", "D", "ADHD", kT0),
      post("e1", "E", "ADHD", kT0),
      post("e2", "E", "Anxiety", kT0 + kDay),
      post("e3", "E", "ADHD", kT0 + 400 * kDay),
  });
  const auto result = build_transition_cohort(corpus, CohortConfig{});
  EXPECT_TRUE(result.dataset.examples.empty());
  EXPECT_EQ(result.stats.dropped_no_anxiety, 1u);
  EXPECT_EQ(result.stats.dropped_adhd_first, 1u);
}

TEST(TransitionCohort, EmptyCorpusGivesEmptyDataset) {
  EXPECT_TRUE(build_transition_cohort(Corpus{}, CohortConfig{}).dataset.examples.empty());
}

TEST(TransitionCohort, PostsAfterCutoffIgnored) {
  CohortConfig cfg;
  cfg.cutoff_date = kT0 + 10 * kDay;
  const auto corpus = make_corpus({
      post("a1", "A", "Anxiety", kT0),
      post("a2", "A", "Anxiety", kT0 + 20 * kDay),
  });
  const auto labels = labels_by_id(build_transition_cohort(corpus, cfg).dataset);
  EXPECT_EQ(labels.size(), 1u);
}

TEST(TransitionCohort, RejectsNonPositiveWindow) {
  CohortConfig cfg;
  cfg.exclusion_window = 0;
  EXPECT_THROW(build_transition_cohort(Corpus{}, cfg), Error);
}

TEST(TransitionCohort, FuzzedHistoriesRespectInvariants) {
  std::mt19937_64 gen(2024);
  std::vector<Post> posts;
  for (int a = 0; a < 300; ++a) {
    const std::string author = "u" + std::to_string(a);
    const int n = 1 + static_cast<int>(gen() % 6);
    for (int i = 0; i < n; ++i) {
      const bool adhd = gen() % 3 == 0;
      posts.push_back(post(author + "_" + std::to_string(i), author, adhd ? "ADHD" : "Anxiety",
                           kT0 + static_cast<std::int64_t>(gen() % (400 * kDay))));
    }
  }
  const auto corpus = make_corpus(posts);
  const auto result = build_transition_cohort(corpus, CohortConfig{});
  std::unordered_map<std::string, const Post*> by_id;
  for (const auto& p : corpus.posts) by_id[p.id] = &p;
  for (const auto& e : result.dataset.examples) {
    const Post& p = *by_id.at(e.post_id);
    EXPECT_EQ(p.forum, "Anxiety");
    if (e.label != 1) continue;
    std::int64_t first_anx = INT64_MAX;
    for (const auto& q : corpus.posts) {
      if (q.author == p.author && q.forum == "Anxiety") first_anx = std::min(first_anx, q.created_at);
    }
    std::int64_t first_retained = INT64_MAX;
    for (const auto& q : corpus.posts) {
      if (q.author == p.author && q.forum == "ADHD" && q.created_at - first_anx > 183 * kDay) {
        first_retained = std::min(first_retained, q.created_at);
      }
    }
    EXPECT_LT(p.created_at, first_retained);
  }
}

}  // namespace
}  // namespace maskboard

#include <gtest/gtest.h>

#include <random>

#include "maskboard/corpus.hpp"

namespace maskboard {
namespace {

std::string record(const std::string& id, const std::string& author, std::int64_t t,
                   const std::string& body, const std::string& sub = "Lyme") {
  nlohmann::json j{{"id", id}, {"author", author}, {"subreddit", sub}, {"created_utc", t},
                   {"title", ""}, {"selftext", body}};
  return j.dump() + "\n";
}

TEST(LoadPosts, WellFormedRecords) {
  const auto corpus = load_posts(record("a", "u1", 30, "x") + record("b", "u2", 10, "y") +
                                     record("c", "u3", 20, "z"),
                                 "c", "inline");
  ASSERT_EQ(corpus.posts.size(), 3u);
  EXPECT_EQ(corpus.manifest.skipped, 0u);
  EXPECT_EQ(corpus.posts[0].id, "b");
  EXPECT_EQ(corpus.posts[2].id, "a");
}

TEST(LoadPosts, MissingAuthorIsSkippedAndCounted) {
  const std::string bad = R"({"id":"x","subreddit":"Lyme","created_utc":5,"selftext":"hi"})"
                          "\n";
  const auto corpus =
      load_posts(record("a", "u1", 1, "x") + bad + record("b", "u2", 2, "y"), "c", "inline");
  EXPECT_EQ(corpus.posts.size(), 2u);
  EXPECT_EQ(corpus.manifest.skipped, 1u);
}

TEST(LoadPosts, MalformedAndDuplicateRecordsAreSkipped) {
  const auto corpus = load_posts("{not json\n" + record("a", "u", 1, "x") +
                                     record("a", "u", 2, "dup") +
                                     R"({"id":"z","author":"u","created_utc":"soon"})" "\n",
                                 "c", "inline");
  EXPECT_EQ(corpus.posts.size(), 1u);
  EXPECT_EQ(corpus.manifest.skipped, 3u);
}

TEST(LoadPosts, EqualTimestampsOrderById) {
  const auto corpus = load_posts(record("c", "u", 5, "x") + record("a", "u", 5, "y") +
                                     record("b", "u", 5, "z"),
                                 "c", "inline");
  EXPECT_EQ(corpus.posts[0].id, "a");
  EXPECT_EQ(corpus.posts[1].id, "b");
  EXPECT_EQ(corpus.posts[2].id, "c");
}

TEST(LoadPosts, UnreadableSourceIsFatal) {
  EXPECT_THROW(load_posts_file("/nonexistent/posts.jsonl", "x"), Error);
}

TEST(LoadPosts, SerializeRoundTripIsExact) {
  std::mt19937_64 gen(11);
  std::vector<Post> posts;
  for (int i = 0; i < 200; ++i) {
    Post p;
    p.id = "p" + std::to_string(gen() % 100000) + "_" + std::to_string(i);
    p.author = "author\"" + std::to_string(gen() % 17);
    p.forum = i % 2 ? "Anxiety" : "ADHD";
    p.created_at = 1 + static_cast<std::int64_t>(gen() % 1000);
    p.title = i % 3 ? "Title \xE2\x80\xA6 " + std::to_string(i) : "";
    p.body = "line one\nline two \\ \t \xF0\x9F\x98\x80 end";
    posts.push_back(p);
  }
  stabilize(posts);
  const auto back = load_posts(serialize_posts(posts), "c", "inline");
  EXPECT_EQ(back.posts, posts);
  EXPECT_EQ(back.manifest.skipped, 0u);
}

TEST(Post, TextJoinsTitleAndBodyWithBlankLine) {
  Post p;
  p.title = "Help";
  p.body = "I feel off";
  EXPECT_EQ(p.text(), "Help\n\nI feel off");
  p.title.clear();
  EXPECT_EQ(p.text(), "I feel off");
}

TEST(FilterKeyword, CaseInsensitiveSubstring) {
  const auto corpus = load_posts(record("a", "u", 1, "Lyme disease ruined my summer") +
                                     record("b", "u", 2, "limes are sour") +
                                     record("c", "u", 3, "chlamydia test") +
                                     record("d", "u", 4, "post-LYME fatigue"),
                                 "all", "inline");
  const auto lyme = filter_keyword(corpus, "lyme");
  ASSERT_EQ(lyme.posts.size(), 2u);
  EXPECT_EQ(lyme.posts[0].id, "a");
  EXPECT_EQ(lyme.posts[1].id, "d");
  ASSERT_EQ(lyme.manifest.filters.size(), 1u);
  EXPECT_EQ(lyme.manifest.filters[0], "keyword:lyme");
}

TEST(FilterKeyword, EmptyKeywordRejected) {
  Corpus c;
  EXPECT_THROW(filter_keyword(c, ""), Error);
}

}  // namespace
}  // namespace maskboard

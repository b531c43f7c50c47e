#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maskboard/corpus.hpp"
#include "maskboard/dataset.hpp"
#include "maskboard/error.hpp"

namespace maskboard {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct CohortConfig {
  std::string anxiety_forum = "Anxiety";
  std::string adhd_forum = "ADHD";
  std::int64_t exclusion_window = 183 * kSecondsPerDay;  // "six months"
  std::int64_t cutoff_date = 1672531200;                  // 2023-01-01T00:00:00Z
};

struct CohortStats {
  std::size_t negative_authors = 0;
  std::size_t positive_authors = 0;
  std::size_t dropped_window_only = 0;
  std::size_t dropped_adhd_first = 0;
  std::size_t dropped_no_anxiety = 0;
};

struct CohortResult {
  Dataset dataset;
  CohortStats stats;
};

/// Labels anxiety-forum posts by whether the author later moves to the ADHD
/// forum.
///
/// Per author, with t0 = first anxiety post:
///  - no ADHD posts: every anxiety post is negative;
///  - ADHD posts strictly after t0 + window: positive, keeping only anxiety posts
///    strictly before the first such ADHD post;
///  - ADHD posts only inside [t0, t0 + window]: author dropped;
///  - any ADHD post before t0 or no anxiety posts: author dropped.
/// Posts at or after the cutoff are ignored, as are posts with blank text.
inline CohortResult build_transition_cohort(const Corpus& corpus, const CohortConfig& cfg) {
  if (cfg.exclusion_window <= 0) {
    throw invalid("exclusion window must be positive");
  }
  struct History {
    std::vector<const Post*> anxiety;
    std::vector<std::int64_t> adhd;
  };
  std::map<std::string, History> authors;
  for (const auto& post : corpus.posts) {
    if (post.created_at >= cfg.cutoff_date) continue;
    if (post.forum == cfg.anxiety_forum) {
      authors[post.author].anxiety.push_back(&post);
    } else if (post.forum == cfg.adhd_forum) {
      authors[post.author].adhd.push_back(post.created_at);
    }
  }

  CohortResult result;
  std::vector<LabeledExample> examples;
  std::vector<std::pair<const Post*, int>> admitted;
  for (auto& [author, history] : authors) {
    if (history.anxiety.empty()) {
      ++result.stats.dropped_no_anxiety;
      continue;
    }
    std::int64_t first_anxiety = std::numeric_limits<std::int64_t>::max();
    for (const auto* p : history.anxiety) first_anxiety = std::min(first_anxiety, p->created_at);

    if (history.adhd.empty()) {
      ++result.stats.negative_authors;
      for (const auto* p : history.anxiety) admitted.emplace_back(p, 0);
      continue;
    }
    bool adhd_first = false;
    std::optional<std::int64_t> transition;
    for (const auto t : history.adhd) {
      if (t < first_anxiety) {
        adhd_first = true;
      } else if (t - first_anxiety > cfg.exclusion_window) {
        transition = transition ? std::min(*transition, t) : t;
      }
    }
    if (adhd_first) {
      ++result.stats.dropped_adhd_first;
      continue;
    }
    if (!transition) {
      ++result.stats.dropped_window_only;
      continue;
    }
    ++result.stats.positive_authors;
    for (const auto* p : history.anxiety) {
      if (p->created_at < *transition) admitted.emplace_back(p, 1);
    }
  }

  std::stable_sort(admitted.begin(), admitted.end(),
                   [](const auto& a, const auto& b) { return post_order(*a.first, *b.first); });
  Dataset& d = result.dataset;
  d.name = corpus.name + ".cohort";
  for (const auto& [post, label] : admitted) {
    std::string text = post->text();
    if (trim(text).empty()) continue;
    d.examples.push_back({post->id, post->author, std::move(text), label,
                          Provenance::cohort_rule});
  }
  d.manifest["source_corpus"] = corpus.name;
  d.manifest["cohort"] = {{"anxiety_forum", cfg.anxiety_forum},
                          {"adhd_forum", cfg.adhd_forum},
                          {"exclusion_window_seconds", cfg.exclusion_window},
                          {"cutoff_date", cfg.cutoff_date},
                          {"negative_authors", result.stats.negative_authors},
                          {"positive_authors", result.stats.positive_authors},
                          {"dropped_window_only", result.stats.dropped_window_only},
                          {"dropped_adhd_first", result.stats.dropped_adhd_first},
                          {"dropped_no_anxiety", result.stats.dropped_no_anxiety}};
  return result;
}

}  // namespace maskboard

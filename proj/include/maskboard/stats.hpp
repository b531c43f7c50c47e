#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maskboard/error.hpp"
#include "maskboard/exploration.hpp"

namespace maskboard {

struct ComparisonResult {
  std::string theme_id;
  std::string theme_name;
  std::uint64_t k1 = 0, n1 = 0, k2 = 0, n2 = 0;
  double p1 = 0.0;
  double p2 = 0.0;
  double z = 0.0;
  double p_z = 1.0;       // two-sided, normal approximation
  double p_fisher = 1.0;  // two-sided, exact
  bool normal_approximation_ok = false;  // min expected cell count >= 5
  std::string method_note;
};

namespace detail {

inline void check_counts(std::uint64_t k1, std::uint64_t n1, std::uint64_t k2, std::uint64_t n2) {
  if (n1 == 0 || n2 == 0) {
    throw invalid("both samples need at least one observation");
  }
  if (k1 > n1 || k2 > n2) {
    throw invalid("successes cannot exceed sample size");
  }
}

}  // namespace detail

/// Two-sided Fisher exact p-value for the table [[k1, n1-k1], [k2, n2-k2]].
///
/// Sums the hypergeometric probabilities of every table with the same margins
/// whose probability does not exceed the observed one (relative slack 1e-7 so
/// exact ties are not lost to rounding). Log-probabilities come from the ratio
/// recurrence around the mode; no factorials are formed.
inline double fisher_exact(std::uint64_t k1, std::uint64_t n1, std::uint64_t k2,
                           std::uint64_t n2) {
  detail::check_counts(k1, n1, k2, n2);
  const double r1 = static_cast<double>(n1);
  const double r2 = static_cast<double>(n2);
  const std::uint64_t col = k1 + k2;
  const std::uint64_t lo = col > n2 ? col - n2 : 0;
  const std::uint64_t hi = std::min(n1, col);
  if (lo == hi) return 1.0;

  const double c = static_cast<double>(col);
  // ratio P(x+1) / P(x)
  const auto ratio = [&](double x) {
    return ((r1 - x) * (c - x)) / ((x + 1.0) * (r2 - c + x + 1.0));
  };
  const std::size_t size = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> log_weight(size, 0.0);
  std::size_t mode = 0;
  {
    const double m = std::floor((c + 1.0) * (r1 + 1.0) / (r1 + r2 + 2.0));
    const double clamped = std::clamp(m, static_cast<double>(lo), static_cast<double>(hi));
    mode = static_cast<std::size_t>(clamped - static_cast<double>(lo));
  }
  for (std::size_t i = mode; i + 1 < size; ++i) {
    log_weight[i + 1] = log_weight[i] + std::log(ratio(static_cast<double>(lo + i)));
  }
  for (std::size_t i = mode; i > 0; --i) {
    log_weight[i - 1] = log_weight[i] - std::log(ratio(static_cast<double>(lo + i - 1)));
  }
  // log-weights peak at the mode (value 0), so the total cannot overflow
  double total = 0.0;
  for (const double lw : log_weight) total += std::exp(lw);
  const double observed = log_weight[static_cast<std::size_t>(k1 - lo)];
  const double cutoff = observed + 1e-7;
  double tail_max = -std::numeric_limits<double>::infinity();
  for (const double lw : log_weight) {
    if (lw <= cutoff) tail_max = std::max(tail_max, lw);
  }
  double tail = 0.0;
  for (const double lw : log_weight) {
    if (lw <= cutoff) tail += std::exp(lw - tail_max);
  }
  const double p = std::exp(tail_max + std::log(tail) - std::log(total));
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), 1.0);
}

/// Pooled two-proportion z-test with Fisher's exact test alongside.
inline ComparisonResult two_proportion_test(std::uint64_t k1, std::uint64_t n1, std::uint64_t k2,
                                            std::uint64_t n2) {
  detail::check_counts(k1, n1, k2, n2);
  ComparisonResult r;
  r.k1 = k1;
  r.n1 = n1;
  r.k2 = k2;
  r.n2 = n2;
  const double a = static_cast<double>(n1);
  const double b = static_cast<double>(n2);
  r.p1 = static_cast<double>(k1) / a;
  r.p2 = static_cast<double>(k2) / b;
  const double pooled = static_cast<double>(k1 + k2) / (a + b);
  const double min_expected =
      std::min({a * pooled, a * (1.0 - pooled), b * pooled, b * (1.0 - pooled)});
  r.normal_approximation_ok = min_expected >= 5.0;
  r.method_note = "pooled two-proportion z-test, two-sided; Fisher exact, two-sided (tables with "
                  "probability <= observed)";
  if (k1 + k2 == 0 || k1 + k2 == n1 + n2) {
    r.z = 0.0;
    r.p_z = 1.0;
    r.method_note += "; pooled proportion is 0 or 1 so z is undefined and p_z is set to 1";
  } else {
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / a + 1.0 / b));
    r.z = (r.p1 - r.p2) / se;
    r.p_z = std::min(1.0, std::erfc(std::abs(r.z) / std::numbers::sqrt2));
    if (!r.normal_approximation_ok) {
      r.method_note += "; minimum expected cell count below 5, prefer p_fisher";
    }
  }
  r.p_fisher = fisher_exact(k1, n1, k2, n2);
  return r;
}

/// Compares one theme's reviewed counts across two corpora.
inline ComparisonResult compare_theme(const Theme& theme, const ThemeCounts& a,
                                      const ThemeCounts& b) {
  auto r = two_proportion_test(a.k, a.denominator(), b.k, b.denominator());
  r.theme_id = theme.id;
  r.theme_name = theme.name;
  if (a.partial || b.partial) {
    r.method_note += "; partial review: proportions use the number reviewed so far";
  }
  return r;
}

inline std::string format_percent(double proportion) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * proportion);
  return buf;
}

inline std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, p < 1e-4 ? "%.2e" : "%.4f", p);
  return buf;
}

inline bool significant(const ComparisonResult& r, double alpha = 0.01) {
  return r.p_z < alpha && r.p_fisher < alpha;
}

/// One Table-3-style line: theme, both percentages, z, both p-values and a
/// "p<alpha" flag.
inline std::string render_row(const ComparisonResult& r, double alpha = 0.01) {
  const std::string label = r.theme_name.empty() ? r.theme_id : r.theme_name;
  char z[32];
  std::snprintf(z, sizeof z, "%.2f", r.z);
  std::string row = label + "  " + format_percent(r.p1) + "  " + format_percent(r.p2) +
                    "  z=" + z + "  p_z=" + format_p(r.p_z) + "  p_fisher=" +
                    format_p(r.p_fisher);
  char flag[32];
  std::snprintf(flag, sizeof flag, "%g", alpha);
  row += significant(r, alpha) ? std::string("  p<") + flag : std::string("  n.s.");
  return row;
}

inline std::string render_report(const std::vector<ComparisonResult>& rows,
                                 std::string_view corpus_a, std::string_view corpus_b,
                                 double alpha = 0.01) {
  std::string out = "theme  " + std::string(corpus_a) + "(%)  " + std::string(corpus_b) +
                    "(%)  z  p_z  p_fisher  significance\n";
  for (const auto& r : rows) {
    out += render_row(r, alpha);
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::ordered_json comparison_to_json(const ComparisonResult& r) {
  nlohmann::ordered_json j;
  j["theme"] = r.theme_name.empty() ? r.theme_id : r.theme_name;
  j["theme_id"] = r.theme_id;
  j["k1"] = r.k1;
  j["n1"] = r.n1;
  j["k2"] = r.k2;
  j["n2"] = r.n2;
  j["pct1"] = format_percent(r.p1);
  j["pct2"] = format_percent(r.p2);
  j["z"] = r.z;
  j["p_z"] = r.p_z;
  j["p_fisher"] = r.p_fisher;
  j["normal_approximation_ok"] = r.normal_approximation_ok;
  j["method_note"] = r.method_note;
  return j;
}

/// Tab-delimited export with a header line.
inline std::string comparisons_to_tsv(const std::vector<ComparisonResult>& rows) {
  std::string out = "theme\tk1\tn1\tk2\tn2\tpct1\tpct2\tz\tp_z\tp_fisher\n";
  for (const auto& r : rows) {
    const auto j = comparison_to_json(r);
    out += j["theme"].get<std::string>();
    for (const char* key : {"k1", "n1", "k2", "n2"}) out += "\t" + j[key].dump();
    out += "\t" + j["pct1"].get<std::string>() + "\t" + j["pct2"].get<std::string>();
    for (const char* key : {"z", "p_z", "p_fisher"}) out += "\t" + j[key].dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace maskboard

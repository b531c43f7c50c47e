#include <gtest/gtest.h>

#include <random>

#include "maskboard/stats.hpp"
#include "support/oracles.hpp"

namespace maskboard {
namespace {

TEST(TwoProportion, MoldRow) {
  const auto r = two_proportion_test(132, 300, 59, 300);
  EXPECT_NEAR(r.p1, 0.44, 1e-15);
  EXPECT_NEAR(r.p2, 59.0 / 300.0, 1e-15);
  EXPECT_NEAR(r.z, 6.40, 0.005);
  EXPECT_LT(r.p_z, 1e-9);
  EXPECT_NEAR(r.p_z, testing::normal_two_sided_hp(r.z), 1e-12 * testing::normal_two_sided_hp(r.z) + 1e-300);
  EXPECT_LT(r.p_fisher, 0.01);
  EXPECT_TRUE(r.normal_approximation_ok);
}

TEST(TwoProportion, SinusRowNotSignificant) {
  const auto r = two_proportion_test(68, 300, 54, 300);
  EXPECT_NEAR(r.z, 1.4201, 1e-4);
  EXPECT_NEAR(r.p_z, 0.1556, 1e-4);
  EXPECT_NEAR(r.p_z, testing::normal_two_sided_hp(r.z), 1e-12);
  EXPECT_GT(r.p_fisher, 0.01);
}

TEST(TwoProportion, NoSignalAndDegenerate) {
  const auto r = two_proportion_test(0, 50, 0, 50);
  EXPECT_EQ(r.p1, 0.0);
  EXPECT_EQ(r.p2, 0.0);
  EXPECT_EQ(r.p_z, 1.0);
  EXPECT_EQ(r.p_fisher, 1.0);
  EXPECT_NE(r.method_note.find("undefined"), std::string::npos);
  EXPECT_EQ(two_proportion_test(50, 50, 50, 50).p_z, 1.0);
}

TEST(TwoProportion, InvalidCounts) {
  EXPECT_THROW(two_proportion_test(0, 0, 1, 2), Error);
  EXPECT_THROW(two_proportion_test(3, 2, 1, 2), Error);
  EXPECT_THROW(fisher_exact(1, 2, 0, 0), Error);
}

TEST(Fisher, EnumeratedExamples) {
  EXPECT_NEAR(fisher_exact(2, 2, 0, 2), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(fisher_exact(1, 1, 0, 1), 1.0, 1e-15);
  EXPECT_EQ(fisher_exact(7, 20, 7, 20), 1.0);
  EXPECT_NEAR(two_proportion_test(2, 2, 0, 2).p_fisher, 1.0 / 3.0, 1e-15);
}

TEST(Fisher, MatchesExactEnumerationSmallTables) {
  for (std::uint64_t n1 = 1; n1 <= 8; ++n1) {
    for (std::uint64_t n2 = 1; n2 <= 8; ++n2) {
      for (std::uint64_t k1 = 0; k1 <= n1; ++k1) {
        for (std::uint64_t k2 = 0; k2 <= n2; ++k2) {
          const double want = static_cast<double>(testing::fisher_enumerate(k1, n1, k2, n2));
          const double got = fisher_exact(k1, n1, k2, n2);
          EXPECT_NEAR(got, want, 1e-12 * want) << k1 << "/" << n1 << " " << k2 << "/" << n2;
        }
      }
    }
  }
}

TEST(Fisher, ExtremeTablesStayPositive) {
  const double p = fisher_exact(2000, 2000, 0, 2000);
  EXPECT_GT(p, 0.0);
  EXPECT_LE(p, 1.0);
}

TEST(Properties, ExchangeSymmetry) {
  std::mt19937_64 gen(12);
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t n1 = 1 + gen() % 400;
    const std::uint64_t n2 = 1 + gen() % 400;
    const std::uint64_t k1 = gen() % (n1 + 1);
    const std::uint64_t k2 = gen() % (n2 + 1);
    const auto a = two_proportion_test(k1, n1, k2, n2);
    const auto b = two_proportion_test(k2, n2, k1, n1);
    EXPECT_NEAR(a.p_z, b.p_z, 1e-12);
    EXPECT_NEAR(a.p_fisher, b.p_fisher, 1e-12);
  }
}

TEST(Properties, PzMonotoneInEffectSize) {
  for (std::uint64_t k2 = 0; k2 <= 300; k2 += 30) {
    double previous = 2.0;
    for (std::uint64_t k1 = k2; k1 <= 300; ++k1) {
      const double p = two_proportion_test(k1, 300, k2, 300).p_z;
      EXPECT_LE(p, previous + 1e-15) << k1 << " " << k2;
      previous = p;
    }
  }
}

double worst_gap(std::uint64_t min_cell, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t n1 = 2 * min_cell + gen() % (8 * min_cell);
    const std::uint64_t n2 = 2 * min_cell + gen() % (8 * min_cell);
    const std::uint64_t k1 = min_cell + gen() % (n1 - 2 * min_cell + 1);
    const std::uint64_t k2 = min_cell + gen() % (n2 - 2 * min_cell + 1);
    const auto r = two_proportion_test(k1, n1, k2, n2);
    worst = std::max(worst, std::abs(r.p_z - r.p_fisher));
  }
  return worst;
}

// The uncorrected z-test and the exact test converge only at rate 1/sqrt(n);
// a fixed 0.01 gap at cells >= 20 does not hold (e.g. 30/60 vs 20/60 differs
// by 0.031). Checked: the gap shrinks with cell size and is small far out.
TEST(Properties, FisherAndZConvergeAsCellsGrow) {
  const double g20 = worst_gap(20, 6);
  const double g200 = worst_gap(200, 6);
  const double g5000 = worst_gap(5000, 6);
  EXPECT_LT(g200, g20);
  EXPECT_LT(g5000, g200);
  EXPECT_LT(g5000, 0.01);
  const auto r = two_proportion_test(30, 60, 20, 60);
  EXPECT_GT(std::abs(r.p_z - r.p_fisher), 0.01);
}

TEST(CompareTheme, RendersMoldRow) {
  Theme mold{"mold", "mold"};
  ThemeCounts a{132, 300, 300, false};
  ThemeCounts b{59, 300, 300, false};
  const auto r = compare_theme(mold, a, b);
  const auto row = render_row(r);
  EXPECT_EQ(format_percent(r.p1) + " / " + format_percent(r.p2), "44.0 / 19.7");
  EXPECT_NE(row.find("mold  44.0  19.7"), std::string::npos);
  EXPECT_NE(row.find("p<0.01"), std::string::npos);
  EXPECT_TRUE(significant(r));
  const auto j = comparison_to_json(r);
  EXPECT_EQ(j["pct1"], "44.0");
  EXPECT_EQ(j["pct2"], "19.7");
  const auto tsv = comparisons_to_tsv({r});
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "theme\tk1\tn1\tk2\tn2\tpct1\tpct2\tz\tp_z\tp_fisher");
  EXPECT_NE(tsv.find("mold\t132\t300\t59\t300\t44.0\t19.7\t"), std::string::npos);
}

TEST(CompareTheme, SinusAndEqualRows) {
  const auto sinus = compare_theme({"sinus", "sinus/nose"}, {68, 300, 300, false}, {54, 300, 300, false});
  EXPECT_EQ(format_percent(sinus.p1), "22.7");
  EXPECT_EQ(format_percent(sinus.p2), "18.0");
  EXPECT_FALSE(significant(sinus));
  EXPECT_NE(render_row(sinus).find("n.s."), std::string::npos);
  const auto equal = compare_theme({"t", "t"}, {40, 300, 300, false}, {40, 300, 300, false});
  EXPECT_EQ(equal.p_z, 1.0);
  EXPECT_EQ(equal.p_fisher, 1.0);
}

TEST(CompareTheme, PartialCountsUseReviewedDenominator) {
  const auto r = compare_theme({"t", "t"}, {10, 20, 300, true}, {5, 300, 300, false});
  EXPECT_EQ(r.n1, 20u);
  EXPECT_NE(r.method_note.find("partial"), std::string::npos);
  EXPECT_THROW(compare_theme({"t", "t"}, {0, 0, 300, true}, {5, 300, 300, false}), Error);
}

}  // namespace
}  // namespace maskboard

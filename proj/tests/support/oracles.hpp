#pragma once

// Independent reference computations for tests. Nothing here calls into the
// implementation paths it is used to check.

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "maskboard/exploration.hpp"

namespace maskboard::testing {

using BigFloat = boost::multiprecision::cpp_bin_float_50;
using Rational = boost::multiprecision::cpp_rational;

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Two-sided Fisher p by enumerating every table with the observed margins in
/// exact rational arithmetic; ties are compared exactly.
inline Rational fisher_enumerate(std::uint64_t k1, std::uint64_t n1, std::uint64_t k2,
                                 std::uint64_t n2) {
  const std::uint64_t col = k1 + k2;
  const Rational denom(binomial(n1 + n2, col));
  const auto prob = [&](std::uint64_t x) {
    return Rational(binomial(n1, x)) * Rational(binomial(n2, col - x)) / denom;
  };
  const Rational observed = prob(k1);
  Rational total = 0;
  for (std::uint64_t x = 0; x <= std::min(n1, col); ++x) {
    if (col - x > n2) continue;
    const Rational p = prob(x);
    if (p <= observed) total += p;
  }
  return total;
}

/// Two-sided normal tail 2 * (1 - Phi(|z|)) at 50 decimal digits.
inline double normal_two_sided_hp(double z) {
  const BigFloat x = boost::multiprecision::abs(BigFloat(z)) /
                     boost::multiprecision::sqrt(BigFloat(2));
  return static_cast<double>(boost::math::erfc(x));
}

/// Brute-force ranking: score every entry, full sort, truncate.
inline std::vector<std::pair<std::size_t, double>> brute_force_top(const PhraseIndex& index,
                                                                   const Vector& query,
                                                                   std::size_t n) {
  double qq = 0.0;
  for (const float x : query) qq += static_cast<double>(x) * x;
  std::vector<std::tuple<double, std::string, std::string, std::size_t>> rows;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const auto& v = index.entries[i].vector;
    double d = 0.0;
    double vv = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      d += static_cast<double>(query[k]) * v[k];
      vv += static_cast<double>(v[k]) * v[k];
    }
    const double cosine = d / (std::sqrt(qq) * std::sqrt(vv));
    rows.emplace_back(-cosine, index.entries[i].post_id, index.entries[i].phrase, i);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i < std::min(n, rows.size()); ++i) {
    out.emplace_back(std::get<3>(rows[i]), -std::get<0>(rows[i]));
  }
  return out;
}

/// Dense Newton's method for mean log-loss + (l2/2)|w|^2 (bias unpenalised).
/// Rows are binary feature vectors; the last returned value is the bias.
inline std::vector<double> newton_logistic(const std::vector<std::vector<double>>& x,
                                           const std::vector<double>& y, double l2) {
  const std::size_t d = x.front().size();
  const std::size_t p = d + 1;
  const double n = static_cast<double>(x.size());
  std::vector<double> w(p, 0.0);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> g(p, 0.0);
    std::vector<std::vector<double>> h(p, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::vector<double> row(x[i]);
      row.push_back(1.0);
      double z = 0.0;
      for (std::size_t k = 0; k < p; ++k) z += w[k] * row[k];
      const double s = 1.0 / (1.0 + std::exp(-z));
      for (std::size_t a = 0; a < p; ++a) {
        g[a] += (s - y[i]) * row[a] / n;
        for (std::size_t b = 0; b < p; ++b) h[a][b] += s * (1 - s) * row[a] * row[b] / n;
      }
    }
    for (std::size_t k = 0; k < d; ++k) {
      g[k] += l2 * w[k];
      h[k][k] += l2;
    }
    // solve h * step = g by Gaussian elimination with partial pivoting
    std::vector<double> step(g);
    for (std::size_t col = 0; col < p; ++col) {
      std::size_t pivot = col;
      for (std::size_t r = col + 1; r < p; ++r) {
        if (std::abs(h[r][col]) > std::abs(h[pivot][col])) pivot = r;
      }
      std::swap(h[col], h[pivot]);
      std::swap(step[col], step[pivot]);
      for (std::size_t r = col + 1; r < p; ++r) {
        const double f = h[r][col] / h[col][col];
        for (std::size_t c = col; c < p; ++c) h[r][c] -= f * h[col][c];
        step[r] -= f * step[col];
      }
    }
    for (std::size_t col = p; col-- > 0;) {
      for (std::size_t c = col + 1; c < p; ++c) step[col] -= h[col][c] * step[c];
      step[col] /= h[col][col];
    }
    double change = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      w[k] -= step[k];
      change = std::max(change, std::abs(step[k]));
    }
    if (change < 1e-14) break;
  }
  return w;
}

}  // namespace maskboard::testing

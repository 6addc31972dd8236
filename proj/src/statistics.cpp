#include "unravel/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "unravel/errors.hpp"

namespace unravel {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 16) {
    double s = 0.0;
    for (double x : values) s += x;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

SampleSummary summarize(std::span<const double> values) {
  SampleSummary out;
  out.count = values.size();
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = pairwise_sum(values) / n;
  if (values.size() < 2) return out;
  std::vector<double> dev(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - out.mean;
    dev[i] = d * d;
  }
  out.variance = pairwise_sum(dev) / (n - 1.0);
  out.stderr_mean = std::sqrt(out.variance / n);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InsufficientSamples, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ChiSquareResult chi_square_test(std::span<const std::int64_t> observed,
                                std::span<const double> expected) {
  if (observed.size() != expected.size()) {
    throw Error(ErrorCode::DimensionMismatch, "observed and expected cell counts differ");
  }
  double total_p = 0.0;
  std::int64_t total_n = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] < 0.0 || observed[i] < 0) {
      throw Error(ErrorCode::InvalidConfig, "negative cell in chi-square test");
    }
    total_p += expected[i];
    total_n += observed[i];
  }
  if (!(total_p > 0.0)) throw Error(ErrorCode::InvalidConfig, "expected probabilities sum to zero");

  ChiSquareResult out;
  int cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = static_cast<double>(total_n) * expected[i] / total_p;
    if (expected[i] / total_p <= 1e-15) {
      if (observed[i] > 0) {
        out.statistic = std::numeric_limits<double>::infinity();
        out.p_value = 0.0;
        out.dof = 0;
        return out;
      }
      continue;
    }
    ++cells;
    const double d = static_cast<double>(observed[i]) - e;
    out.statistic += d * d / e;
  }
  out.dof = cells - 1;
  if (out.dof < 1 || total_n == 0) {
    out.degenerate = true;
    out.p_value = 1.0;
    return out;
  }
  boost::math::chi_squared dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InsufficientSamples, "empty sample in KS test");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double root = std::sqrt(ne);
  KsResult out;
  out.statistic = d;
  out.p_value = kolmogorov_q((root + 0.12 + 0.11 / root) * d);
  return out;
}

}  // namespace unravel

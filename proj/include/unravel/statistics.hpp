#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace unravel {

/// Recursive halving sum; error grows like log(n) rather than n.
double pairwise_sum(std::span<const double> values);

struct SampleSummary {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double stderr_mean = 0.0;
  std::size_t count = 0;
};

/// Two-pass mean and variance, both passes pairwise.
SampleSummary summarize(std::span<const double> values);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  /// No informative category split (all expected mass in one cell).
  bool degenerate = false;

  bool passes(double alpha) const noexcept { return degenerate || p_value >= alpha; }
};

/// Pearson goodness of fit of `observed` against probabilities `expected`
/// (normalized internally). Cells with zero expected probability are
/// dropped; any count landing in one gives p_value = 0.
ChiSquareResult chi_square_test(std::span<const std::int64_t> observed,
                                std::span<const double> expected);

/// Asymptotic Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the effective-size correction
/// lambda = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace unravel

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unravel/master_equation.hpp"
#include "unravel/statistics.hpp"
#include "unravel/trajectory.hpp"

namespace unravel {

/// Trajectories are grouped in fixed blocks of this many consecutive stream
/// indices; blocks are the unit of work and of the reduction tree.
inline constexpr int kEnsembleBlock = 64;

/// Runs `count` tasks on up to `workers` threads. Tasks are claimed in index
/// order; the caller stores results by index, so scheduling never shows.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task);

struct TrajectoryFailure {
  std::uint64_t stream_index = 0;
  std::string message;
};

struct EnsembleReport {
  std::uint64_t master_seed = 0;
  TrajectoryConfig config;
  int M = 0;
  int channels = 0;
  std::vector<double> times;

  // [time][channel], over trajectories that completed.
  std::vector<std::vector<double>> mean_p;
  std::vector<std::vector<double>> stderr_p;
  std::vector<std::vector<double>> mean_h;  // h_n(t) = E[p_n (1 - p_n)]
  std::vector<std::vector<double>> stderr_h;

  std::vector<std::int64_t> collapse_counts;  // by outcome n
  std::int64_t undecided = 0;
  std::vector<TrajectoryFailure> failures;

  /// E[|psi><psi|] at each recorded time.
  std::vector<DensityMatrix> ensemble_rho;
  /// sum_{k != l} ||P_k rho P_l||_F of ensemble_rho.
  std::vector<double> offdiag_norm;

  /// Per trajectory: -1 undecided, -2 failed, else the collapse outcome.
  std::vector<int> outcomes;
  /// Verdict times (NaN when undecided or failed).
  std::vector<double> verdict_times;

  int completed() const noexcept { return M - static_cast<int>(failures.size()); }

  /// p_n of trajectory `traj` at record `time`; NaN for failed trajectories.
  double sample(int traj, int time, int n) const {
    return samples[(static_cast<std::size_t>(traj) * times.size() + static_cast<std::size_t>(time)) *
                        static_cast<std::size_t>(channels) +
                    static_cast<std::size_t>(n)];
  }

  /// Flat [traj][time][channel] occupations.
  std::vector<double> samples;
};

/// Simulates trajectories with stream_index = 0..M-1 and aggregates them.
/// Output is identical for any `workers`. Failed trajectories are excluded
/// from every statistic and listed; more than 0.1% failures throw
/// TooManyFailures naming the first failing stream.
EnsembleReport run_ensemble(const PureState& psi0, const ProjectorFamily& family,
                            const TrajectoryConfig& cfg, int M, std::uint64_t master_seed,
                            int workers = 1);

struct HBoundRow {
  double t = 0.0;
  int n = 0;
  double h = 0.0;
  double stderr_h = 0.0;
  double ceiling = 0.0;  // h_n(0) / (1 + 4 h_n(0) t)
  double margin = 0.0;   // ceiling + 3 stderr - h
};

struct HBoundResult {
  bool passed = true;
  std::vector<HBoundRow> rows;
  double worst_margin = 0.0;
};

/// h_n(t) <= h_n(0) / (1 + 4 h_n(0) t) + 3 stderr at every record and
/// channel. Needs at least 1000 completed trajectories.
HBoundResult h_bound_check(const EnsembleReport& report);

/// delta[time][n] = fraction of trajectories with min{p_n, 1 - p_n} > eps(t).
/// `eps` holds one threshold per record, or a single value used throughout.
struct Classification {
  std::vector<double> times;
  std::vector<double> eps;
  std::vector<std::vector<double>> delta;
};

Classification classify_all(const EnsembleReport& report, std::span<const double> eps);

struct VonNeumannResult {
  std::vector<double> times;
  std::vector<double> frobenius;       // ||rho_ens(t) - rho_master(t)||_F
  std::vector<double> ensemble_offdiag;
  std::vector<double> master_offdiag;
};

/// Compares the ensemble state with a master equation path on the same grid
/// (GridMismatch otherwise).
VonNeumannResult von_neumann_check(const EnsembleReport& report, const ProjectorFamily& family,
                                   const DensityPath& master);

struct BornRuleResult {
  std::vector<double> expected_probabilities;
  std::vector<std::int64_t> observed;
  std::int64_t decided = 0;
  std::int64_t undecided = 0;
  ChiSquareResult chi_square;
  bool passed = false;
  std::string warning;
};

/// Pearson test of the collapse histogram against <psi0, P_n psi0> at the
/// 1% level. Undecided runs are excluded with a warning; more than 0.5% of
/// M throws TooManyUndecided.
BornRuleResult born_rule_test(const EnsembleReport& report, const PureState& psi0,
                              const ProjectorFamily& family);

struct MartingaleRow {
  double t = 0.0;
  int n = 0;
  double mean = 0.0;
  double stderr_p = 0.0;
  double deviation = 0.0;  // |mean - p_n(0)|
  bool passed = true;
};

/// |E[p_n(t)] - p_n(0)| <= k_sigma stderr at every record and channel.
std::vector<MartingaleRow> martingale_check(const EnsembleReport& report,
                                            std::span<const double> p0, double k_sigma = 4.0);

struct CrossWeightRow {
  int k = 0;
  int l = 0;
  double mean_product = 0.0;  // E[p_k p_l] at the last record
  double bound = 0.0;         // eps_k + eps_l, 99th percentiles of min{p, 1 - p}
};

std::vector<CrossWeightRow> cross_weight_check(const EnsembleReport& report);

}  // namespace unravel

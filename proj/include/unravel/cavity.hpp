#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "unravel/noise.hpp"
#include "unravel/statistics.hpp"
#include "unravel/linalg.hpp"

namespace unravel {

/// Photon field sum_n c_n |n>, n = 0..N.
class CavityState {
 public:
  /// Requires | sum |c_n|^2 - 1 | <= tol.
  explicit CavityState(CVector coefficients, double tol = 1e-10);

  /// Equal weights 1/sqrt(levels).
  static CavityState uniform(int levels);
  /// |n> among `levels` levels.
  static CavityState fock(int levels, int n);

  const CVector& coefficients() const noexcept { return c_; }
  int levels() const noexcept { return static_cast<int>(c_.size()); }
  std::vector<double> weights() const;

 private:
  CVector c_;
};

/// A probe with internal state psi_in that picks up U(n) from an n-photon
/// field and is then read out by the two-outcome measurement pi_+/pi_-.
class ProbeModel {
 public:
  /// Checks unit psi_in, unitary U(n), and that pi_+/pi_- are complementary
  /// orthogonal projectors, all to `tol`.
  ProbeModel(CVector psi_in, std::vector<CMatrix> unitaries, CMatrix pi_plus, CMatrix pi_minus,
             double tol = 1e-10);

  /// U(n) = exp(-i theta_n sigma_y / 2), theta_n = n pi / 3, psi_in = e_0,
  /// pi_+ = |e_0><e_0|. All f_+(n) are distinct for up to 6 levels.
  static ProbeModel default_family(int levels);

  int levels() const noexcept { return static_cast<int>(unitaries_.size()); }
  const CVector& psi_in() const noexcept { return psi_in_; }
  const CMatrix& unitary(int n) const { return unitaries_.at(static_cast<std::size_t>(n)); }
  const CMatrix& pi_plus() const noexcept { return pi_plus_; }
  const CMatrix& pi_minus() const noexcept { return pi_minus_; }

  /// f_+(n) = <U(n) psi_in, pi_+ U(n) psi_in>.
  double f_plus(int n) const { return f_plus_.at(static_cast<std::size_t>(n)); }
  const std::vector<double>& f_plus_table() const noexcept { return f_plus_; }
  /// ||pi_+- U(n) psi_in||.
  double branch_amplitude(int outcome, int n) const;

 private:
  CVector psi_in_;
  std::vector<CMatrix> unitaries_;
  CMatrix pi_plus_;
  CMatrix pi_minus_;
  std::vector<double> f_plus_;
  std::vector<double> amp_plus_;
  std::vector<double> amp_minus_;
};

/// (p_+, p_-) = sum_n |c_n|^2 (f_+(n), 1 - f_+(n)).
std::pair<double, double> outcome_probabilities(const CavityState& cav, const ProbeModel& probe);

/// c_n' = c_n ||pi_+- U(n) psi_in|| / Z. Throws ImpossibleOutcome when the
/// outcome has probability below 1e-14. `outcome` is +1 or -1.
CavityState update_after_outcome(const CavityState& cav, const ProbeModel& probe, int outcome);

struct ProbeRunRecord {
  std::vector<int> outcomes;           // +1 / -1
  std::vector<double> running_f_plus;  // after k+1 probes
  /// |c_n|^2 after each probe, when requested.
  std::vector<std::vector<double>> weight_history;
  std::vector<double> final_weights;
  std::optional<int> inferred_n;
};

struct ProbeRunOptions {
  bool keep_series = true;
  bool keep_history = false;
  double purity_threshold = 1.0 - 1e-6;
};

/// K probes; outcome +1 when a uniform draw falls below p_+.
ProbeRunRecord run_probe_sequence(const CavityState& cav0, const ProbeModel& probe, long long K,
                                  NoiseSource& noise, const ProbeRunOptions& options = {});

struct PurificationResult {
  long long K = 0;
  int R = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::int64_t> histogram;  // inferred n counts
  std::int64_t unresolved = 0;
  std::vector<int> inferred;            // per run, -1 unresolved
  std::vector<double> final_f_plus;     // per run
  std::vector<double> expected;         // |c_n(0)|^2
  ChiSquareResult chi_square;
  bool passed = false;
};

/// R independent runs on streams 0..R-1. Throws UnresolvedRuns if more than
/// 1% fail to reach the purity threshold by probe K.
PurificationResult purification_experiment(const CavityState& cav0, const ProbeModel& probe,
                                           long long K, int R, std::uint64_t master_seed,
                                           int workers = 1);

/// Columns step, outcome, f_plus, |c_0|^2 .. |c_N|^2 (weights need keep_history).
void write_probe_csv(std::ostream& os, const ProbeRunRecord& record);

}  // namespace unravel

#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "unravel/noise.hpp"
#include "unravel/spectral.hpp"

namespace unravel {

enum class Scheme { ItoEulerMaruyama, StratonovichHeun };

std::string_view to_string(Scheme scheme);
Scheme scheme_from_string(std::string_view name);

struct TrajectoryConfig {
  double dt = 1e-3;
  double t_final = 15.0;
  Scheme scheme = Scheme::ItoEulerMaruyama;
  bool renormalize_each_step = true;
  double collapse_epsilon = 1e-4;
  int record_stride = 100;

  /// dt <= 1e-2, dt * max|eps_n| < 0.1, epsilon in (0, 1/2), whole steps.
  void validate(const ProjectorFamily& family) const;
  long long steps() const;
};

struct Verdict {
  /// Outcome index for Collapsed(n); nullopt for Undecided.
  std::optional<int> outcome;
  std::optional<double> time;

  bool collapsed() const noexcept { return outcome.has_value(); }
};

struct TrajectoryPath {
  std::vector<double> times;
  std::vector<CVector> states;
  /// occupations[i][n] = p_n(times[i]).
  std::vector<std::vector<double>> occupations;
  std::vector<double> norms;
  Verdict verdict;
};

/// Ito drift sum_n [ -i eps_n P_n psi - p_n^2 psi / 2 + p_n P_n psi - P_n psi / 2 ].
/// Dense reference evaluation; p_n is normalized by <psi, psi>.
CVector ito_drift(const CVector& psi, const ProjectorFamily& family);

/// Drift of the Stratonovich form:
/// sum_n [ -i eps_n P_n psi + (1 - 2 p_n)(p_n - P_n) psi ].
CVector stratonovich_drift(const CVector& psi, const ProjectorFamily& family);

/// Channel n: (p_n - P_n) psi.
std::vector<CVector> diffusion_vectors(const CVector& psi, const ProjectorFamily& family);

/// One step with increments dB (one per channel). The result is unit norm
/// when cfg.renormalize_each_step is set. Throws ZeroState if the norm
/// before renormalization falls below 1e-6.
CVector step(const CVector& psi, const ProjectorFamily& family, std::span<const double> dB,
             const TrajectoryConfig& cfg);

/// Integrates from psi0 to cfg.t_final, recording every record_stride steps
/// and the final step. The verdict is Collapsed(n) when 1 - p_n <= epsilon
/// at the last recorded time; its time is the first recorded time at which
/// the condition held. Step failures surface as StepError with the time.
TrajectoryPath simulate(const PureState& psi0, const ProjectorFamily& family,
                        const TrajectoryConfig& cfg, IncrementSource& noise);

enum class ReducedScheme { EulerMaruyama, Milstein };

struct OccupationPath {
  std::vector<double> times;
  std::vector<std::vector<double>> occupations;
};

/// Occupation-only dynamics dp_n = 2 sum_k (p_k p_n - delta_kn p_n) dB_k.
/// After each step entries are clamped to [0, 1] and rescaled to sum to one.
/// The Milstein variant adds the second-order Ito term, exact here because
/// the noise fields commute.
OccupationPath simulate_reduced(std::span<const double> p0, const ProjectorFamily& family,
                                const TrajectoryConfig& cfg, IncrementSource& noise,
                                ReducedScheme scheme = ReducedScheme::EulerMaruyama);

/// Columns t, p_0..p_N, norm, verdict (outcome index or -1), verdict_time.
void write_trajectory_csv(std::ostream& os, const TrajectoryPath& path);

/// Binary dump of psi(t): magic "UNRVPSI1", uint32 dim, uint64 records, then
/// per record a float64 time and dim (re, im) float64 pairs; little endian.
void write_trajectory_binary(std::ostream& os, const TrajectoryPath& path);
TrajectoryPath read_trajectory_binary(std::istream& is);

}  // namespace unravel

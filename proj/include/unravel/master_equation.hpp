#pragma once

#include <iosfwd>
#include <vector>

#include "unravel/spectral.hpp"

namespace unravel {

struct MasterEvolutionConfig {
  double dt = 1e-3;
  double t_final = 10.0;
  int record_stride = 1;

  /// dt <= t_final, t_final a whole number of steps, dt * max|eps_n| < 0.1.
  void validate(const ProjectorFamily& family) const;
  long long steps() const;
};

struct DensityPath {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
};

/// Right-hand side of the measurement Lindblad equation
///   sum_n { -i eps_n [P_n, rho] - (P_n rho + rho P_n)/2 + P_n rho P_n }.
CMatrix lindblad_rhs(const CMatrix& rho, const ProjectorFamily& family);

/// Fixed-step classical RK4. The state update uses compensated summation so
/// the integration error, not rounding, dominates down to dt ~ 1e-4.
/// Throws StepError(UnstableStep) if a recorded state leaves the density
/// matrices (trace or smallest eigenvalue off by more than 1e-9).
DensityPath evolve_density(const DensityMatrix& rho0, const ProjectorFamily& family,
                           const MasterEvolutionConfig& cfg);

/// Exact solution: diagonal blocks P_k rho P_k are constant, off-diagonal
/// blocks P_k rho P_l pick up exp((-i(eps_k - eps_l) - 1) t).
DensityMatrix analytic_solution(const DensityMatrix& rho0, const ProjectorFamily& family, double t);

/// Columns t, re(rho_ij), im(rho_ij) for i, j in row-major order.
void write_density_csv(std::ostream& os, const DensityPath& path);

}  // namespace unravel

#pragma once

#include <span>
#include <vector>

#include "unravel/errors.hpp"
#include "unravel/linalg.hpp"

namespace unravel {

inline constexpr double kStructureTol = 1e-10;

/// Spectral data of a measured observable: orthogonal projectors P_n summing
/// to the identity, their distinct eigenvalues nu_n, and the frequency Omega
/// that turns them into energies eps_n = Omega * nu_n of H = sum eps_n P_n.
///
/// Instances only exist in validated form. Besides the projectors the family
/// keeps a unitary "frame" V whose columns span Ran(P_0), Ran(P_1), ... in
/// order; in that frame every projector is a 0/1 diagonal mask, which is what
/// the trajectory kernels integrate in.
class ProjectorFamily {
 public:
  /// Checks Hermiticity, idempotence, mutual orthogonality, completeness and
  /// distinct eigenvalues (operator norm, absolute `tol`). Never repairs the
  /// input; throws FamilyError listing every violation found.
  static ProjectorFamily validate(std::vector<CMatrix> projectors, std::vector<double> eigenvalues,
                                  double omega, double tol = kStructureTol);

  /// Diagonalizes a Hermitian observable and groups eigenvalues closer than
  /// `grouping_tol` into one projector. Projectors are ordered by eigenvalue.
  static ProjectorFamily from_observable(const CMatrix& observable, double omega,
                                         double grouping_tol = 1e-8, double tol = kStructureTol);

  /// Rank-one projectors onto the standard basis vectors, nu_n = eigenvalues[n].
  static ProjectorFamily standard_basis(std::vector<double> eigenvalues, double omega = 1.0);

  int dim() const noexcept { return static_cast<int>(frame_.rows()); }
  int channels() const noexcept { return static_cast<int>(projectors_.size()); }
  double omega() const noexcept { return omega_; }
  double tolerance() const noexcept { return tol_; }

  const CMatrix& projector(int n) const { return projectors_.at(static_cast<std::size_t>(n)); }
  std::span<const CMatrix> projectors() const noexcept { return projectors_; }
  std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
  std::span<const double> energies() const noexcept { return energies_; }
  double energy(int n) const { return energies_.at(static_cast<std::size_t>(n)); }
  double max_abs_energy() const noexcept;

  /// H = sum_n eps_n P_n.
  CMatrix hamiltonian() const;

  const CMatrix& frame() const noexcept { return frame_; }
  /// Channel index owning each frame column.
  std::span<const int> frame_labels() const noexcept { return labels_; }
  int rank(int n) const;

 private:
  ProjectorFamily() = default;

  std::vector<CMatrix> projectors_;
  std::vector<double> eigenvalues_;
  std::vector<double> energies_;
  double omega_ = 1.0;
  double tol_ = kStructureTol;
  CMatrix frame_;
  std::vector<int> labels_;
};

/// Unit vector in C^m.
class PureState {
 public:
  /// Requires | ||psi|| - 1 | <= tol.
  explicit PureState(CVector amplitudes, double tol = 1e-10);

  /// Scales to unit norm; throws ZeroState for (near) zero input.
  static PureState normalized(CVector amplitudes);

  const CVector& amplitudes() const noexcept { return amplitudes_; }
  int dim() const noexcept { return static_cast<int>(amplitudes_.size()); }

 private:
  struct Trusted {};
  PureState(CVector amplitudes, Trusted) : amplitudes_(std::move(amplitudes)) {}
  CVector amplitudes_;
};

/// Hermitian, unit-trace, positive semidefinite matrix.
class DensityMatrix {
 public:
  /// Validates Hermiticity and trace to `tol`, smallest eigenvalue >= -tol.
  explicit DensityMatrix(CMatrix entries, double tol = 1e-10);

  /// |psi><psi|.
  static DensityMatrix pure(const PureState& psi);

  /// Wraps a matrix whose invariants the caller has already established.
  static DensityMatrix trusted(CMatrix entries);

  const CMatrix& entries() const noexcept { return entries_; }
  int dim() const noexcept { return static_cast<int>(entries_.rows()); }

 private:
  struct Trusted {};
  DensityMatrix(CMatrix entries, Trusted) : entries_(std::move(entries)) {}
  CMatrix entries_;
};

/// p_n = <psi, P_n psi> / <psi, psi>. Accepts unnormalized vectors.
std::vector<double> occupation(const CVector& psi, const ProjectorFamily& family);
inline std::vector<double> occupation(const PureState& psi, const ProjectorFamily& family) {
  return occupation(psi.amplitudes(), family);
}

/// <psi, P_k P_n psi> / <psi, psi>; equals delta_kn p_n for a valid family.
double pair_occupation(const CVector& psi, const ProjectorFamily& family, int k, int n);
inline double pair_occupation(const PureState& psi, const ProjectorFamily& family, int k, int n) {
  return pair_occupation(psi.amplitudes(), family, k, n);
}

/// Von Neumann's ensemble map rho -> sum_n P_n rho P_n.
DensityMatrix dephase(const DensityMatrix& rho, const ProjectorFamily& family);

/// Born probabilities Tr(rho P_n).
std::vector<double> block_weights(const CMatrix& rho, const ProjectorFamily& family);

/// sum_{k != l} ||P_k rho P_l||_F, the weight outside the diagonal blocks.
double offdiagonal_weight(const CMatrix& rho, const ProjectorFamily& family);

struct LudersResidual {
  int index = 0;         // argmax_n p_n, smallest index on ties
  double residual = 0.0; // || psi - P_index psi ||
};

/// Distance of psi from the range of its most occupied spectral projector.
LudersResidual luders_residual(const PureState& psi, const ProjectorFamily& family);

/// argmax with ties (within 1e-12) resolved towards the smallest index.
int argmax_smallest(std::span<const double> values);

}  // namespace unravel

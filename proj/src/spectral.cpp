#include "unravel/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace unravel {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::NotIdempotent: return "NotIdempotent";
    case ErrorCode::NotOrthogonal: return "NotOrthogonal";
    case ErrorCode::NotComplete: return "NotComplete";
    case ErrorCode::DuplicateEigenvalue: return "DuplicateEigenvalue";
    case ErrorCode::NotUnitary: return "NotUnitary";
    case ErrorCode::ZeroState: return "ZeroState";
    case ErrorCode::NotADensityMatrix: return "NotADensityMatrix";
    case ErrorCode::NotASimplexPoint: return "NotASimplexPoint";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnstableStep: return "UnstableStep";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::TooManyUndecided: return "TooManyUndecided";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::ImpossibleOutcome: return "ImpossibleOutcome";
    case ErrorCode::UnresolvedRuns: return "UnresolvedRuns";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const auto& v = violations[i];
    if (i) os << "; ";
    os << to_string(v.code);
    if (v.first >= 0) {
      os << "(" << v.first;
      if (v.second >= 0) os << "," << v.second;
      os << ")";
    }
    os << " residual=" << v.residual;
  }
  return os.str();
}

}  // namespace

FamilyError::FamilyError(std::vector<Violation> violations)
    : Error(violations.empty() ? ErrorCode::InvalidConfig : violations.front().code,
            describe(violations)),
      violations_(std::move(violations)) {}

bool FamilyError::has(ErrorCode code) const {
  return std::any_of(violations_.begin(), violations_.end(),
                     [code](const Violation& v) { return v.code == code; });
}

double operator_norm(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(a);
  return svd.singularValues()(0);
}

double min_hermitian_eigenvalue(const CMatrix& a) {
  const CMatrix h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// ---------------------------------------------------------------------------
// ProjectorFamily

ProjectorFamily ProjectorFamily::validate(std::vector<CMatrix> projectors,
                                          std::vector<double> eigenvalues, double omega,
                                          double tol) {
  if (projectors.empty()) throw Error(ErrorCode::DimensionMismatch, "empty projector list");
  if (projectors.size() != eigenvalues.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(projectors.size()) + " projectors but " +
                    std::to_string(eigenvalues.size()) + " eigenvalues");
  }
  if (!(omega > 0.0) || !std::isfinite(omega)) {
    throw Error(ErrorCode::InvalidConfig, "omega must be positive and finite");
  }
  const Eigen::Index m = projectors.front().rows();
  for (std::size_t n = 0; n < projectors.size(); ++n) {
    if (projectors[n].rows() != m || projectors[n].cols() != m || m == 0) {
      throw Error(ErrorCode::DimensionMismatch,
                  "projector " + std::to_string(n) + " is not " + std::to_string(m) + "x" +
                      std::to_string(m));
    }
  }
  const int count = static_cast<int>(projectors.size());

  std::vector<Violation> violations;
  for (int n = 0; n < count; ++n) {
    const CMatrix& p = projectors[n];
    const double herm = operator_norm(p - p.adjoint());
    if (herm > tol) violations.push_back({ErrorCode::NotHermitian, n, -1, herm});
    const double idem = operator_norm(p * p - p);
    if (idem > tol) violations.push_back({ErrorCode::NotIdempotent, n, -1, idem});
  }
  for (int k = 0; k < count; ++k) {
    for (int l = k + 1; l < count; ++l) {
      const double overlap = operator_norm(projectors[k] * projectors[l]);
      if (overlap > tol) violations.push_back({ErrorCode::NotOrthogonal, k, l, overlap});
    }
  }
  CMatrix sum = CMatrix::Zero(m, m);
  for (const auto& p : projectors) sum += p;
  const double completeness = operator_norm(sum - CMatrix::Identity(m, m));
  if (completeness > tol) violations.push_back({ErrorCode::NotComplete, -1, -1, completeness});
  for (int k = 0; k < count; ++k) {
    for (int l = k + 1; l < count; ++l) {
      if (eigenvalues[k] == eigenvalues[l]) {
        violations.push_back({ErrorCode::DuplicateEigenvalue, k, l, 0.0});
      }
    }
  }
  if (!violations.empty()) throw FamilyError(std::move(violations));

  ProjectorFamily family;
  family.omega_ = omega;
  family.tol_ = tol;
  family.energies_.reserve(eigenvalues.size());
  for (double nu : eigenvalues) family.energies_.push_back(omega * nu);

  // Orthonormal basis of each range, then one Gram-Schmidt sweep so the frame
  // is unitary to rounding.
  CMatrix frame(m, m);
  std::vector<int> labels;
  Eigen::Index col = 0;
  for (int n = 0; n < count; ++n) {
    const CMatrix h = 0.5 * (projectors[n] + projectors[n].adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (es.eigenvalues()(j) > 0.5) {
        if (col >= m) throw Error(ErrorCode::NotComplete, "projector ranks exceed dimension");
        frame.col(col++) = es.eigenvectors().col(j);
        labels.push_back(n);
      }
    }
  }
  if (col != m) throw Error(ErrorCode::NotComplete, "projector ranks do not add up to dim");
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      frame.col(j) -= frame.col(i).dot(frame.col(j)) * frame.col(i);
    }
    frame.col(j).normalize();
  }
  family.frame_ = std::move(frame);
  family.labels_ = std::move(labels);
  family.projectors_ = std::move(projectors);
  family.eigenvalues_ = std::move(eigenvalues);
  return family;
}

ProjectorFamily ProjectorFamily::from_observable(const CMatrix& observable, double omega,
                                                 double grouping_tol, double tol) {
  if (observable.rows() != observable.cols() || observable.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "observable must be a non-empty square matrix");
  }
  const double herm = operator_norm(observable - observable.adjoint());
  if (herm > tol) throw Error(ErrorCode::NotHermitian, "observable residual " + std::to_string(herm));

  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (observable + observable.adjoint()));
  const auto& values = es.eigenvalues();
  const auto& vectors = es.eigenvectors();
  const Eigen::Index m = observable.rows();

  std::vector<CMatrix> projectors;
  std::vector<double> eigenvalues;
  Eigen::Index start = 0;
  while (start < m) {
    Eigen::Index end = start + 1;
    while (end < m && values(end) - values(end - 1) <= grouping_tol) ++end;
    const auto block = vectors.middleCols(start, end - start);
    projectors.emplace_back(block * block.adjoint());
    eigenvalues.push_back(values.segment(start, end - start).mean());
    start = end;
  }
  return validate(std::move(projectors), std::move(eigenvalues), omega, tol);
}

ProjectorFamily ProjectorFamily::standard_basis(std::vector<double> eigenvalues, double omega) {
  const auto m = static_cast<Eigen::Index>(eigenvalues.size());
  std::vector<CMatrix> projectors;
  for (Eigen::Index n = 0; n < m; ++n) {
    CMatrix p = CMatrix::Zero(m, m);
    p(n, n) = 1.0;
    projectors.push_back(std::move(p));
  }
  return validate(std::move(projectors), std::move(eigenvalues), omega);
}

double ProjectorFamily::max_abs_energy() const noexcept {
  double best = 0.0;
  for (double e : energies_) best = std::max(best, std::abs(e));
  return best;
}

CMatrix ProjectorFamily::hamiltonian() const {
  CMatrix h = CMatrix::Zero(dim(), dim());
  for (int n = 0; n < channels(); ++n) h += energies_[n] * projectors_[n];
  return h;
}

int ProjectorFamily::rank(int n) const {
  return static_cast<int>(std::count(labels_.begin(), labels_.end(), n));
}

// ---------------------------------------------------------------------------
// States

PureState::PureState(CVector amplitudes, double tol) : amplitudes_(std::move(amplitudes)) {
  const double norm = amplitudes_.norm();
  if (amplitudes_.size() == 0 || !std::isfinite(norm) || std::abs(norm - 1.0) > tol) {
    throw Error(ErrorCode::ZeroState, "state is not normalized (norm " + std::to_string(norm) + ")");
  }
}

PureState PureState::normalized(CVector amplitudes) {
  const double norm = amplitudes.norm();
  if (amplitudes.size() == 0 || !(norm > 1e-12) || !std::isfinite(norm)) {
    throw Error(ErrorCode::ZeroState, "cannot normalize a zero vector");
  }
  amplitudes /= norm;
  return PureState(std::move(amplitudes), Trusted{});
}

DensityMatrix::DensityMatrix(CMatrix entries, double tol) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "density matrix must be square");
  }
  const double herm = operator_norm(entries_ - entries_.adjoint());
  if (herm > tol) {
    throw Error(ErrorCode::NotADensityMatrix, "not Hermitian, residual " + std::to_string(herm));
  }
  const Complex trace = entries_.trace();
  if (std::abs(trace - 1.0) > tol) {
    throw Error(ErrorCode::NotADensityMatrix, "trace " + std::to_string(trace.real()));
  }
  const double low = min_hermitian_eigenvalue(entries_);
  if (low < -tol) {
    throw Error(ErrorCode::NotADensityMatrix, "negative eigenvalue " + std::to_string(low));
  }
}

DensityMatrix DensityMatrix::pure(const PureState& psi) {
  return DensityMatrix(psi.amplitudes() * psi.amplitudes().adjoint(), Trusted{});
}

DensityMatrix DensityMatrix::trusted(CMatrix entries) {
  return DensityMatrix(std::move(entries), Trusted{});
}

// ---------------------------------------------------------------------------
// Occupations and the measurement postulates

namespace {

void require_dim(Eigen::Index got, const ProjectorFamily& family, const char* what) {
  if (got != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has dimension " +
                                                  std::to_string(got) + ", family has " +
                                                  std::to_string(family.dim()));
  }
}

double squared_norm_checked(const CVector& psi) {
  const double norm2 = psi.squaredNorm();
  if (!(norm2 > 1e-20)) throw Error(ErrorCode::ZeroState, "state vector is zero");
  return norm2;
}

}  // namespace

std::vector<double> occupation(const CVector& psi, const ProjectorFamily& family) {
  require_dim(psi.size(), family, "state");
  const double norm2 = squared_norm_checked(psi);
  std::vector<double> p(static_cast<std::size_t>(family.channels()));
  for (int n = 0; n < family.channels(); ++n) {
    p[n] = psi.dot(family.projector(n) * psi).real() / norm2;
  }
  return p;
}

double pair_occupation(const CVector& psi, const ProjectorFamily& family, int k, int n) {
  require_dim(psi.size(), family, "state");
  if (k < 0 || n < 0 || k >= family.channels() || n >= family.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "channel index out of range");
  }
  const double norm2 = squared_norm_checked(psi);
  return psi.dot(family.projector(k) * (family.projector(n) * psi)).real() / norm2;
}

DensityMatrix dephase(const DensityMatrix& rho, const ProjectorFamily& family) {
  require_dim(rho.dim(), family, "density matrix");
  CMatrix out = CMatrix::Zero(rho.dim(), rho.dim());
  for (const auto& p : family.projectors()) out += p * rho.entries() * p;
  return DensityMatrix::trusted(std::move(out));
}

std::vector<double> block_weights(const CMatrix& rho, const ProjectorFamily& family) {
  require_dim(rho.rows(), family, "density matrix");
  std::vector<double> w;
  for (const auto& p : family.projectors()) w.push_back((rho * p).trace().real());
  return w;
}

double offdiagonal_weight(const CMatrix& rho, const ProjectorFamily& family) {
  require_dim(rho.rows(), family, "density matrix");
  double total = 0.0;
  for (int k = 0; k < family.channels(); ++k) {
    for (int l = 0; l < family.channels(); ++l) {
      if (k != l) total += (family.projector(k) * rho * family.projector(l)).norm();
    }
  }
  return total;
}

int argmax_smallest(std::span<const double> values) {
  // Values within 1e-12 of each other count as tied.
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best] + 1e-12) best = static_cast<int>(i);
  }
  return best;
}

LudersResidual luders_residual(const PureState& psi, const ProjectorFamily& family) {
  const auto p = occupation(psi, family);
  const int index = argmax_smallest(p);
  const CVector rest = psi.amplitudes() - family.projector(index) * psi.amplitudes();
  return {index, rest.norm()};
}

}  // namespace unravel

#include "unravel/master_equation.hpp"

#include <cmath>
#include <ostream>

#include "unravel/format.hpp"

namespace unravel {

void MasterEvolutionConfig::validate(const ProjectorFamily& family) const {
  if (!(dt > 0.0) || !(t_final > 0.0) || !std::isfinite(dt) || !std::isfinite(t_final)) {
    throw Error(ErrorCode::InvalidConfig, "dt and t_final must be positive");
  }
  if (dt > t_final) throw Error(ErrorCode::InvalidConfig, "dt exceeds t_final");
  if (record_stride < 1) throw Error(ErrorCode::InvalidConfig, "record_stride must be >= 1");
  if (dt * family.max_abs_energy() >= 0.1) {
    throw Error(ErrorCode::InvalidConfig, "dt * max|eps| must stay below 0.1");
  }
  steps();
}

long long MasterEvolutionConfig::steps() const {
  const double ratio = t_final / dt;
  const long long n = std::llround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-6 * ratio) {
    throw Error(ErrorCode::InvalidConfig, "t_final must be a whole number of steps dt");
  }
  return n;
}

CMatrix lindblad_rhs(const CMatrix& rho, const ProjectorFamily& family) {
  if (rho.rows() != family.dim() || rho.cols() != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "rho does not match the family dimension");
  }
  CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
  for (int n = 0; n < family.channels(); ++n) {
    const CMatrix& p = family.projector(n);
    const CMatrix prho = p * rho;
    const CMatrix rhop = rho * p;
    out += (-kI * family.energy(n)) * (prho - rhop) - 0.5 * (prho + rhop) + prho * p;
  }
  return out;
}

namespace {

void check_physical(const CMatrix& rho, double t) {
  constexpr double kTol = 1e-9;
  const double trace_err = std::abs(rho.trace() - 1.0);
  if (!(trace_err <= kTol)) {
    throw StepError(ErrorCode::UnstableStep, t, "trace drifted by " + std::to_string(trace_err));
  }
  const double low = min_hermitian_eigenvalue(rho);
  if (low < -kTol) {
    throw StepError(ErrorCode::UnstableStep, t, "negative eigenvalue " + std::to_string(low));
  }
}

}  // namespace

DensityPath evolve_density(const DensityMatrix& rho0, const ProjectorFamily& family,
                           const MasterEvolutionConfig& cfg) {
  cfg.validate(family);
  if (rho0.dim() != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "rho0 does not match the family dimension");
  }
  const long long steps = cfg.steps();
  const double dt = cfg.dt;

  DensityPath path;
  CMatrix rho = rho0.entries();
  CMatrix carry = CMatrix::Zero(rho.rows(), rho.cols());
  path.times.push_back(0.0);
  path.states.push_back(rho0);

  for (long long s = 1; s <= steps; ++s) {
    const CMatrix k1 = lindblad_rhs(rho, family);
    const CMatrix k2 = lindblad_rhs(rho + (0.5 * dt) * k1, family);
    const CMatrix k3 = lindblad_rhs(rho + (0.5 * dt) * k2, family);
    const CMatrix k4 = lindblad_rhs(rho + dt * k3, family);
    // Kahan update of rho += dt/6 (k1 + 2k2 + 2k3 + k4).
    const CMatrix increment = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) - carry;
    const CMatrix next = rho + increment;
    carry = (next - rho) - increment;
    rho = next;

    if (s % cfg.record_stride == 0 || s == steps) {
      const double t = static_cast<double>(s) * dt;
      check_physical(rho, t);
      path.times.push_back(t);
      path.states.push_back(DensityMatrix::trusted(rho));
    }
  }
  return path;
}

DensityMatrix analytic_solution(const DensityMatrix& rho0, const ProjectorFamily& family, double t) {
  if (rho0.dim() != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "rho0 does not match the family dimension");
  }
  if (t == 0.0) return rho0;
  const CMatrix& r = rho0.entries();
  CMatrix out = CMatrix::Zero(r.rows(), r.cols());
  for (int k = 0; k < family.channels(); ++k) {
    for (int l = 0; l < family.channels(); ++l) {
      const CMatrix block = family.projector(k) * r * family.projector(l);
      if (k == l) {
        out += block;
      } else {
        const Complex rate(-1.0, -(family.energy(k) - family.energy(l)));
        out += std::exp(rate * t) * block;
      }
    }
  }
  return DensityMatrix::trusted(std::move(out));
}

void write_density_csv(std::ostream& os, const DensityPath& path) {
  if (path.states.empty()) return;
  const int m = path.states.front().dim();
  os << "t";
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) os << ",re_" << i << "_" << j << ",im_" << i << "_" << j;
  }
  os << "\n";
  for (std::size_t s = 0; s < path.states.size(); ++s) {
    os << fmt_num(path.times[s]);
    const CMatrix& rho = path.states[s].entries();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) os << "," << fmt_num(rho(i, j).real()) << "," << fmt_num(rho(i, j).imag());
    }
    os << "\n";
  }
}

}  // namespace unravel

#include "unravel/trajectory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "unravel/format.hpp"

namespace unravel {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::ItoEulerMaruyama: return "ito-euler-maruyama";
    case Scheme::StratonovichHeun: return "stratonovich-heun";
  }
  return "unknown";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "ito-euler-maruyama" || name == "ito") return Scheme::ItoEulerMaruyama;
  if (name == "stratonovich-heun" || name == "stratonovich" || name == "heun") {
    return Scheme::StratonovichHeun;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown scheme '" + std::string(name) + "'");
}

void TrajectoryConfig::validate(const ProjectorFamily& family) const {
  if (!(dt > 0.0) || !(t_final > 0.0) || !std::isfinite(dt) || !std::isfinite(t_final)) {
    throw Error(ErrorCode::InvalidConfig, "dt and t_final must be positive");
  }
  if (dt > t_final) throw Error(ErrorCode::InvalidConfig, "dt exceeds t_final");
  if (dt > 1e-2) throw Error(ErrorCode::InvalidConfig, "dt must not exceed 1e-2");
  if (dt * family.max_abs_energy() >= 0.1) {
    throw Error(ErrorCode::InvalidConfig, "dt * max|eps| must stay below 0.1");
  }
  if (!(collapse_epsilon > 0.0 && collapse_epsilon < 0.5)) {
    throw Error(ErrorCode::InvalidConfig, "collapse_epsilon must lie in (0, 1/2)");
  }
  if (record_stride < 1) throw Error(ErrorCode::InvalidConfig, "record_stride must be >= 1");
  steps();
}

long long TrajectoryConfig::steps() const {
  const double ratio = t_final / dt;
  const long long n = std::llround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-6 * ratio) {
    throw Error(ErrorCode::InvalidConfig, "t_final must be a whole number of steps dt");
  }
  return n;
}

// ---------------------------------------------------------------------------
// Dense reference forms

CVector ito_drift(const CVector& psi, const ProjectorFamily& family) {
  const auto p = occupation(psi, family);
  CVector out = CVector::Zero(psi.size());
  for (int n = 0; n < family.channels(); ++n) {
    const CVector pn_psi = family.projector(n) * psi;
    out += (-kI * family.energy(n)) * pn_psi - (0.5 * p[n] * p[n]) * psi + p[n] * pn_psi -
           0.5 * pn_psi;
  }
  return out;
}

CVector stratonovich_drift(const CVector& psi, const ProjectorFamily& family) {
  const auto p = occupation(psi, family);
  CVector out = CVector::Zero(psi.size());
  for (int n = 0; n < family.channels(); ++n) {
    const CVector pn_psi = family.projector(n) * psi;
    out += (-kI * family.energy(n)) * pn_psi + (1.0 - 2.0 * p[n]) * (p[n] * psi - pn_psi);
  }
  return out;
}

std::vector<CVector> diffusion_vectors(const CVector& psi, const ProjectorFamily& family) {
  const auto p = occupation(psi, family);
  std::vector<CVector> out;
  out.reserve(p.size());
  for (int n = 0; n < family.channels(); ++n) {
    out.emplace_back(p[n] * psi - family.projector(n) * psi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame kernel: in the eigen-frame of the family every P_n is a diagonal
// 0/1 mask, so a step is a per-component complex multiply.

namespace {

constexpr double kMinStepNorm = 1e-6;

inline Complex cmul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

class FrameKernel {
 public:
  explicit FrameKernel(const ProjectorFamily& family)
      : labels_(family.frame_labels().begin(), family.frame_labels().end()),
        energies_(family.energies().begin(), family.energies().end()),
        p_(energies_.size()),
        q_(energies_.size()),
        scratch_(labels_.size()),
        predictor_(labels_.size()) {}

  int channels() const noexcept { return static_cast<int>(energies_.size()); }
  std::span<const double> occupations() const noexcept { return p_; }

  // Fills `out` with occupations of phi, returns <phi, phi>.
  double measure(const Complex* phi, std::vector<double>& out) const {
    std::fill(out.begin(), out.end(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < labels_.size(); ++j) {
      const double w = std::norm(phi[j]);
      out[labels_[j]] += w;
      total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total)) return total;
    for (double& x : out) x /= total;
    return total;
  }

  double measure(const CVector& phi) { return measure(phi.data(), p_); }

  // Returns the squared norm after the step (before any renormalization).
  double advance(CVector& phi, std::span<const double> dB, double dt, Scheme scheme) {
    measure(phi.data(), p_);
    if (scheme == Scheme::ItoEulerMaruyama) {
      double sum_sq = 0.0, g = 0.0;
      for (int n = 0; n < channels(); ++n) {
        sum_sq += p_[n] * p_[n];
        g += p_[n] * dB[n];
      }
      for (std::size_t j = 0; j < labels_.size(); ++j) {
        const int l = labels_[j];
        const Complex coef((-0.5 * sum_sq + p_[l] - 0.5) * dt + g - dB[l], -energies_[l] * dt);
        phi[j] += cmul(phi[j], coef);
      }
    } else {
      const StratSums first = strat_sums(p_, dB);
      for (std::size_t j = 0; j < labels_.size(); ++j) {
        scratch_[j] = cmul(phi[j], strat_coef(j, p_, first, dB, dt));
        predictor_[j] = phi[j] + scratch_[j];
      }
      measure(predictor_.data(), q_);
      const StratSums second = strat_sums(q_, dB);
      for (std::size_t j = 0; j < labels_.size(); ++j) {
        phi[j] += 0.5 * (scratch_[j] + cmul(predictor_[j], strat_coef(j, q_, second, dB, dt)));
      }
    }
    return phi.squaredNorm();
  }

 private:
  struct StratSums {
    double a = 0.0;  // sum_n (1 - 2 p_n) p_n
    double g = 0.0;  // sum_n p_n dB_n
  };

  StratSums strat_sums(const std::vector<double>& p, std::span<const double> dB) const {
    StratSums s;
    for (int n = 0; n < channels(); ++n) {
      s.a += (1.0 - 2.0 * p[n]) * p[n];
      s.g += p[n] * dB[n];
    }
    return s;
  }

  // Multiplier of phi_j in f dt + sum_n g_n dB_n for the Stratonovich form.
  Complex strat_coef(std::size_t j, const std::vector<double>& p, const StratSums& s,
                     std::span<const double> dB, double dt) const {
    const int l = labels_[j];
    return Complex((s.a - (1.0 - 2.0 * p[l])) * dt + s.g - dB[l], -energies_[l] * dt);
  }

  std::vector<int> labels_;
  std::vector<double> energies_;
  std::vector<double> p_;
  std::vector<double> q_;
  std::vector<Complex> scratch_;
  std::vector<Complex> predictor_;
};

void check_increments(std::span<const double> dB, const ProjectorFamily& family) {
  if (static_cast<int>(dB.size()) != family.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "need one increment per channel");
  }
  for (double x : dB) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidConfig, "non-finite increment");
  }
}

void finish_step(CVector& phi, double norm2, bool renormalize, double t) {
  const double norm = std::sqrt(norm2);
  if (!(norm >= kMinStepNorm) || !std::isfinite(norm)) {
    throw StepError(ErrorCode::ZeroState, t, "state norm collapsed to " + std::to_string(norm));
  }
  if (renormalize) phi /= norm;
}

}  // namespace

CVector step(const CVector& psi, const ProjectorFamily& family, std::span<const double> dB,
             const TrajectoryConfig& cfg) {
  if (psi.size() != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state does not match the family dimension");
  }
  check_increments(dB, family);
  if (!(psi.squaredNorm() > 0.0)) throw Error(ErrorCode::ZeroState, "state vector is zero");
  FrameKernel kernel(family);
  CVector phi = family.frame().adjoint() * psi;
  const double norm2 = kernel.advance(phi, dB, cfg.dt, cfg.scheme);
  finish_step(phi, norm2, cfg.renormalize_each_step, cfg.dt);
  return family.frame() * phi;
}

TrajectoryPath simulate(const PureState& psi0, const ProjectorFamily& family,
                        const TrajectoryConfig& cfg, IncrementSource& noise) {
  cfg.validate(family);
  if (psi0.dim() != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "initial state does not match the family");
  }
  if (noise.channels() != family.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "noise channel count differs from the family");
  }
  const long long steps = cfg.steps();
  const CMatrix& frame = family.frame();
  FrameKernel kernel(family);
  std::vector<double> dB(static_cast<std::size_t>(family.channels()));

  TrajectoryPath path;
  const std::size_t expected = static_cast<std::size_t>(steps / cfg.record_stride + 2);
  path.times.reserve(expected);
  path.states.reserve(expected);
  path.occupations.reserve(expected);
  path.norms.reserve(expected);

  CVector phi = frame.adjoint() * psi0.amplitudes();
  auto record = [&](double t) {
    const double norm2 = kernel.measure(phi);
    path.times.push_back(t);
    path.states.emplace_back(frame * phi);
    path.occupations.emplace_back(kernel.occupations().begin(), kernel.occupations().end());
    path.norms.push_back(std::sqrt(norm2));
  };
  record(0.0);

  for (long long s = 1; s <= steps; ++s) {
    noise.draw(cfg.dt, dB);
    const double t = static_cast<double>(s) * cfg.dt;
    const double norm2 = kernel.advance(phi, dB, cfg.dt, cfg.scheme);
    finish_step(phi, norm2, cfg.renormalize_each_step, t);
    if (s % cfg.record_stride == 0 || s == steps) record(t);
  }

  const auto& last = path.occupations.back();
  const int n = argmax_smallest(last);
  if (1.0 - last[n] <= cfg.collapse_epsilon) {
    path.verdict.outcome = n;
    for (std::size_t i = 0; i < path.times.size(); ++i) {
      if (1.0 - path.occupations[i][n] <= cfg.collapse_epsilon) {
        path.verdict.time = path.times[i];
        break;
      }
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Reduced occupation dynamics

OccupationPath simulate_reduced(std::span<const double> p0, const ProjectorFamily& family,
                                const TrajectoryConfig& cfg, IncrementSource& noise,
                                ReducedScheme scheme) {
  cfg.validate(family);
  const int channels = family.channels();
  if (static_cast<int>(p0.size()) != channels) {
    throw Error(ErrorCode::NotASimplexPoint, "occupation vector has the wrong length");
  }
  double total = 0.0;
  for (double x : p0) {
    if (!(x >= -1e-12 && x <= 1.0 + 1e-12)) {
      throw Error(ErrorCode::NotASimplexPoint, "entry outside [0, 1]");
    }
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::NotASimplexPoint, "entries sum to " + std::to_string(total));
  }
  if (noise.channels() != channels) {
    throw Error(ErrorCode::DimensionMismatch, "noise channel count differs from the family");
  }

  const long long steps = cfg.steps();
  const double dt = cfg.dt;
  std::vector<double> p(p0.begin(), p0.end());
  std::vector<double> next(p.size());
  std::vector<double> dB(p.size());

  OccupationPath path;
  path.times.push_back(0.0);
  path.occupations.push_back(p);

  for (long long s = 1; s <= steps; ++s) {
    noise.draw(dt, dB);
    double g = 0.0, q = 0.0, sum_sq = 0.0;
    for (int k = 0; k < channels; ++k) {
      g += p[k] * dB[k];
      q += p[k] * dB[k] * dB[k];
      sum_sq += p[k] * p[k];
    }
    for (int n = 0; n < channels; ++n) {
      double x = p[n] + 2.0 * p[n] * (g - dB[n]);
      if (scheme == ReducedScheme::Milstein) {
        x += 2.0 * p[n] * (2.0 * g * g - 2.0 * g * dB[n] - q + dB[n] * dB[n]) -
             4.0 * p[n] * (sum_sq - p[n]) * dt;
      }
      next[n] = std::clamp(x, 0.0, 1.0);
    }
    double norm = 0.0;
    for (double x : next) norm += x;
    if (!(norm > 0.0)) throw StepError(ErrorCode::NotASimplexPoint, s * dt, "occupations vanished");
    for (int n = 0; n < channels; ++n) p[n] = next[n] / norm;

    if (s % cfg.record_stride == 0 || s == steps) {
      path.times.push_back(static_cast<double>(s) * dt);
      path.occupations.push_back(p);
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Output

void write_trajectory_csv(std::ostream& os, const TrajectoryPath& path) {
  if (path.occupations.empty()) return;
  const std::size_t channels = path.occupations.front().size();
  os << "t";
  for (std::size_t n = 0; n < channels; ++n) os << ",p_" << n;
  os << ",norm,verdict,verdict_time\n";
  const std::string verdict = path.verdict.outcome ? std::to_string(*path.verdict.outcome) : "-1";
  const std::string when = path.verdict.time ? fmt_num(*path.verdict.time) : "nan";
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    os << fmt_num(path.times[i]);
    for (double x : path.occupations[i]) os << "," << fmt_num(x);
    os << "," << fmt_num(path.norms[i]) << "," << verdict << "," << when << "\n";
  }
}

namespace {

constexpr char kMagic[8] = {'U', 'N', 'R', 'V', 'P', 'S', 'I', '1'};

template <typename T>
void put(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw Error(ErrorCode::Io, "truncated trajectory dump");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_trajectory_binary(std::ostream& os, const TrajectoryPath& path) {
  const std::uint32_t dim = path.states.empty() ? 0u : static_cast<std::uint32_t>(path.states[0].size());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, dim);
  put<std::uint64_t>(os, path.states.size());
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    put<double>(os, path.times[i]);
    for (std::uint32_t j = 0; j < dim; ++j) {
      put<double>(os, path.states[i](j).real());
      put<double>(os, path.states[i](j).imag());
    }
  }
}

TrajectoryPath read_trajectory_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::Io, "not a trajectory dump");
  }
  const auto dim = get<std::uint32_t>(is);
  const auto records = get<std::uint64_t>(is);
  TrajectoryPath path;
  for (std::uint64_t i = 0; i < records; ++i) {
    path.times.push_back(get<double>(is));
    CVector psi(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      const double re = get<double>(is);
      const double im = get<double>(is);
      psi(j) = Complex(re, im);
    }
    path.norms.push_back(psi.norm());
    path.states.push_back(std::move(psi));
  }
  return path;
}

}  // namespace unravel

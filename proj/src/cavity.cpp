#include "unravel/cavity.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "unravel/ensemble.hpp"
#include "unravel/errors.hpp"
#include "unravel/format.hpp"
#include "unravel/spectral.hpp"

namespace unravel {

namespace {

constexpr double kImpossible = 1e-14;
constexpr double kFlushWeight = 1e-280;

std::vector<double> normalized_copy(std::vector<double> w) {
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

CavityState::CavityState(CVector coefficients, double tol) : c_(std::move(coefficients)) {
  if (c_.size() == 0) throw Error(ErrorCode::DimensionMismatch, "cavity state has no levels");
  const double norm2 = c_.squaredNorm();
  if (!(std::abs(norm2 - 1.0) <= tol)) {
    throw Error(ErrorCode::ZeroState, "sum |c_n|^2 = " + fmt_num(norm2) + ", expected 1");
  }
}

CavityState CavityState::uniform(int levels) {
  if (levels < 1) throw Error(ErrorCode::InvalidConfig, "levels must be >= 1");
  return CavityState(CVector::Constant(levels, Complex(1.0 / std::sqrt(static_cast<double>(levels)), 0.0)));
}

CavityState CavityState::fock(int levels, int n) {
  if (levels < 1 || n < 0 || n >= levels) throw Error(ErrorCode::InvalidConfig, "bad Fock index");
  CVector c = CVector::Zero(levels);
  c(n) = 1.0;
  return CavityState(std::move(c));
}

std::vector<double> CavityState::weights() const {
  std::vector<double> w(static_cast<std::size_t>(c_.size()));
  for (Eigen::Index n = 0; n < c_.size(); ++n) w[static_cast<std::size_t>(n)] = std::norm(c_(n));
  return w;
}

ProbeModel::ProbeModel(CVector psi_in, std::vector<CMatrix> unitaries, CMatrix pi_plus,
                       CMatrix pi_minus, double tol)
    : psi_in_(std::move(psi_in)),
      unitaries_(std::move(unitaries)),
      pi_plus_(std::move(pi_plus)),
      pi_minus_(std::move(pi_minus)) {
  const Eigen::Index d = psi_in_.size();
  if (d == 0 || unitaries_.empty()) throw Error(ErrorCode::DimensionMismatch, "empty probe model");
  if (std::abs(psi_in_.norm() - 1.0) > tol) throw Error(ErrorCode::ZeroState, "psi_in is not a unit vector");
  const CMatrix eye = CMatrix::Identity(d, d);
  for (std::size_t n = 0; n < unitaries_.size(); ++n) {
    const CMatrix& u = unitaries_[n];
    if (u.rows() != d || u.cols() != d) {
      throw Error(ErrorCode::DimensionMismatch, "U(" + std::to_string(n) + ") has the wrong shape");
    }
    const double r = operator_norm(u.adjoint() * u - eye);
    if (r > tol) throw Error(ErrorCode::NotUnitary, "U(" + std::to_string(n) + ") residual " + fmt_num(r));
  }
  for (const CMatrix* pi : {&pi_plus_, &pi_minus_}) {
    if (pi->rows() != d || pi->cols() != d) throw Error(ErrorCode::DimensionMismatch, "pi has the wrong shape");
    const double herm = operator_norm(*pi - pi->adjoint());
    if (herm > tol) throw Error(ErrorCode::NotHermitian, "pi residual " + fmt_num(herm));
    const double idem = operator_norm(*pi * *pi - *pi);
    if (idem > tol) throw Error(ErrorCode::NotIdempotent, "pi residual " + fmt_num(idem));
  }
  const double orth = operator_norm(pi_plus_ * pi_minus_);
  if (orth > tol) throw Error(ErrorCode::NotOrthogonal, "pi_+ pi_- residual " + fmt_num(orth));
  const double comp = operator_norm(pi_plus_ + pi_minus_ - eye);
  if (comp > tol) throw Error(ErrorCode::NotComplete, "pi_+ + pi_- residual " + fmt_num(comp));

  for (const CMatrix& u : unitaries_) {
    const CVector out = u * psi_in_;
    const double plus = (pi_plus_ * out).norm();
    const double minus = (pi_minus_ * out).norm();
    amp_plus_.push_back(plus);
    amp_minus_.push_back(minus);
    f_plus_.push_back(plus * plus);
  }
}

ProbeModel ProbeModel::default_family(int levels) {
  if (levels < 1) throw Error(ErrorCode::InvalidConfig, "levels must be >= 1");
  std::vector<CMatrix> us;
  for (int n = 0; n < levels; ++n) {
    const double half = 0.5 * n * std::numbers::pi / 3.0;
    CMatrix u(2, 2);
    // exp(-i theta sigma_y / 2) = [[cos, -sin], [sin, cos]] at theta / 2
    u << std::cos(half), -std::sin(half), std::sin(half), std::cos(half);
    us.push_back(std::move(u));
  }
  CVector psi(2);
  psi << 1.0, 0.0;
  CMatrix plus = CMatrix::Zero(2, 2);
  plus(0, 0) = 1.0;
  CMatrix minus = CMatrix::Zero(2, 2);
  minus(1, 1) = 1.0;
  return ProbeModel(std::move(psi), std::move(us), std::move(plus), std::move(minus));
}

double ProbeModel::branch_amplitude(int outcome, int n) const {
  if (outcome != 1 && outcome != -1) throw Error(ErrorCode::InvalidConfig, "outcome must be +1 or -1");
  return (outcome == 1 ? amp_plus_ : amp_minus_).at(static_cast<std::size_t>(n));
}

std::pair<double, double> outcome_probabilities(const CavityState& cav, const ProbeModel& probe) {
  if (cav.levels() != probe.levels()) {
    throw Error(ErrorCode::DimensionMismatch, "cavity levels do not match the probe model");
  }
  double plus = 0.0, minus = 0.0;
  for (int n = 0; n < cav.levels(); ++n) {
    const double w = std::norm(cav.coefficients()(n));
    const double a = probe.branch_amplitude(1, n);
    const double b = probe.branch_amplitude(-1, n);
    plus += w * a * a;
    minus += w * b * b;
  }
  return {plus, minus};
}

CavityState update_after_outcome(const CavityState& cav, const ProbeModel& probe, int outcome) {
  if (outcome != 1 && outcome != -1) throw Error(ErrorCode::InvalidConfig, "outcome must be +1 or -1");
  const auto [plus, minus] = outcome_probabilities(cav, probe);
  const double prob = outcome == 1 ? plus : minus;
  if (prob < kImpossible) {
    throw Error(ErrorCode::ImpossibleOutcome, "outcome " + std::to_string(outcome) +
                                                  " has probability " + fmt_num(prob));
  }
  CVector c = cav.coefficients();
  for (int n = 0; n < cav.levels(); ++n) c(n) *= probe.branch_amplitude(outcome, n);
  c /= c.norm();
  return CavityState(std::move(c), 1e-12);
}

ProbeRunRecord run_probe_sequence(const CavityState& cav0, const ProbeModel& probe, long long K,
                                  NoiseSource& noise, const ProbeRunOptions& options) {
  if (K < 1) throw Error(ErrorCode::InvalidConfig, "K must be >= 1");
  if (cav0.levels() != probe.levels()) {
    throw Error(ErrorCode::DimensionMismatch, "cavity levels do not match the probe model");
  }
  const std::size_t L = static_cast<std::size_t>(cav0.levels());
  std::vector<double> w = cav0.weights();
  std::vector<double> fp(L), fm(L);
  for (std::size_t n = 0; n < L; ++n) {
    const double a = probe.branch_amplitude(1, static_cast<int>(n));
    const double b = probe.branch_amplitude(-1, static_cast<int>(n));
    fp[n] = a * a;
    fm[n] = b * b;
  }

  ProbeRunRecord rec;
  if (options.keep_series) {
    rec.outcomes.reserve(static_cast<std::size_t>(K));
    rec.running_f_plus.reserve(static_cast<std::size_t>(K));
  }
  long long plus_count = 0;
  for (long long k = 0; k < K; ++k) {
    double p_plus = 0.0, p_minus = 0.0;
    for (std::size_t n = 0; n < L; ++n) {
      p_plus += w[n] * fp[n];
      p_minus += w[n] * fm[n];
    }
    const bool plus = noise.uniform() < p_plus / (p_plus + p_minus);
    const double prob = plus ? p_plus : p_minus;
    if (prob < kImpossible) {
      throw Error(ErrorCode::ImpossibleOutcome, "sampled an outcome of probability " + fmt_num(prob));
    }
    const std::vector<double>& f = plus ? fp : fm;
    const double inv_prob = 1.0 / prob;
    double total = 0.0;
    for (std::size_t n = 0; n < L; ++n) {
      w[n] *= f[n] * inv_prob;
      total += w[n];
    }
    const double inv_total = 1.0 / total;
    for (double& x : w) {
      x *= inv_total;
      if (x < kFlushWeight) x = 0.0;  // keep clear of subnormals
    }
    if (plus) ++plus_count;
    if (options.keep_series) {
      rec.outcomes.push_back(plus ? 1 : -1);
      rec.running_f_plus.push_back(static_cast<double>(plus_count) / static_cast<double>(k + 1));
    }
    if (options.keep_history) rec.weight_history.push_back(w);
  }
  if (!options.keep_series) {
    rec.running_f_plus.push_back(static_cast<double>(plus_count) / static_cast<double>(K));
  }
  rec.final_weights = w;
  const int best = argmax_smallest(w);
  if (w[static_cast<std::size_t>(best)] >= options.purity_threshold) rec.inferred_n = best;
  return rec;
}

PurificationResult purification_experiment(const CavityState& cav0, const ProbeModel& probe,
                                           long long K, int R, std::uint64_t master_seed,
                                           int workers) {
  if (R < 100) throw Error(ErrorCode::InvalidConfig, "purification needs R >= 100");
  if (K < 1) throw Error(ErrorCode::InvalidConfig, "K must be >= 1");
  PurificationResult out;
  out.K = K;
  out.R = R;
  out.master_seed = master_seed;
  out.inferred.assign(static_cast<std::size_t>(R), -1);
  out.final_f_plus.assign(static_cast<std::size_t>(R), 0.0);
  ProbeRunOptions opts;
  opts.keep_series = false;
  parallel_for(static_cast<std::size_t>(R), workers, [&](std::size_t r) {
    NoiseSource noise(master_seed, r, 1);
    const ProbeRunRecord rec = run_probe_sequence(cav0, probe, K, noise, opts);
    out.inferred[r] = rec.inferred_n ? *rec.inferred_n : -1;
    out.final_f_plus[r] = rec.running_f_plus.back();
  });
  out.histogram.assign(static_cast<std::size_t>(cav0.levels()), 0);
  for (int n : out.inferred) {
    if (n >= 0) ++out.histogram[static_cast<std::size_t>(n)];
    else ++out.unresolved;
  }
  if (static_cast<double>(out.unresolved) > 0.01 * R) {
    throw Error(ErrorCode::UnresolvedRuns, std::to_string(out.unresolved) + " of " + std::to_string(R) +
                                               " runs unresolved after K = " + std::to_string(K));
  }
  out.expected = normalized_copy(cav0.weights());
  out.chi_square = chi_square_test(out.histogram, out.expected);
  out.passed = out.chi_square.passes(0.01);
  return out;
}

void write_probe_csv(std::ostream& os, const ProbeRunRecord& record) {
  const std::size_t L = record.final_weights.size();
  os << "step,outcome,f_plus";
  for (std::size_t n = 0; n < L; ++n) os << ",w_" << n;
  os << "\n";
  for (std::size_t k = 0; k < record.outcomes.size(); ++k) {
    os << (k + 1) << "," << record.outcomes[k] << "," << fmt_num(record.running_f_plus[k]);
    if (k < record.weight_history.size()) {
      for (double x : record.weight_history[k]) os << "," << fmt_num(x);
    } else {
      for (std::size_t n = 0; n < L; ++n) os << ",";
    }
    os << "\n";
  }
}

}  // namespace unravel

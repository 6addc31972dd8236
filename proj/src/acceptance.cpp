#include "unravel/acceptance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <optional>
#include <ostream>

#include "unravel/cavity.hpp"
#include "unravel/ensemble.hpp"
#include "unravel/master_equation.hpp"
#include "unravel/serialization.hpp"
#include "unravel/trajectory.hpp"

namespace unravel {

namespace {

// Pinned limits.
constexpr double kBornLow = 0.287;
constexpr double kBornHigh = 0.313;
constexpr double kUndecidedFraction = 0.005;
constexpr double kMartingaleSigmas = 4.0;
constexpr double kHInitial = 0.21;
constexpr double kHSigmas = 3.0;
constexpr double kRk4SupError = 1e-8;
constexpr double kRk4HalvingGain = 12.0;
constexpr double kEnsembleDistance = 0.06;
constexpr double kOffdiagExactTol = 1e-8;
constexpr double kEnsembleOffdiag = 0.06;
constexpr double kCouplingSup = 0.02;
constexpr double kCouplingGain = 1.5;
constexpr double kNormDrift = 0.01;
constexpr double kNormDriftGain = 1.8;
constexpr double kCavitySignificance = 0.01;
constexpr double kCavityFrequencyTol = 0.02;

constexpr int kBornM = 20000;
constexpr int kEnsembleM = 10000;
constexpr int kPanelStreams = 64;
constexpr long long kProbeK = 100000;
constexpr int kProbeR = 3000;

std::string g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

ProjectorFamily two_level() { return ProjectorFamily::standard_basis({0.0, 1.0}, 1.0); }

PureState initial_state() {
  CVector psi(2);
  psi << std::sqrt(0.3), std::sqrt(0.7);
  return PureState(std::move(psi));
}

TrajectoryConfig born_config() {
  TrajectoryConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_final = 15.0;
  cfg.record_stride = 100;
  return cfg;
}

std::optional<std::size_t> record_at(const std::vector<double>& times, double t) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) < 1e-9) return i;
  }
  return std::nullopt;
}

std::string ensemble_fingerprint(const EnsembleReport& r) {
  std::string s = to_json(r).dump();
  s.append(reinterpret_cast<const char*>(r.samples.data()), r.samples.size() * sizeof(double));
  s.append(reinterpret_cast<const char*>(r.outcomes.data()), r.outcomes.size() * sizeof(int));
  return s;
}

struct PanelStats {
  double mean = 0.0;
  double max = 0.0;
  double geo = 0.0;
};

PanelStats panel_stats(const std::vector<double>& values) {
  PanelStats s;
  double log_sum = 0.0;
  for (double v : values) {
    s.mean += v;
    s.max = std::max(s.max, v);
    log_sum += std::log(std::max(v, 1e-300));
  }
  s.mean /= static_cast<double>(values.size());
  s.geo = std::exp(log_sum / static_cast<double>(values.size()));
  return s;
}

// sup_t max_n |p_reduced - p_full| on one stream, both driven by the same
// Brownian path; `factor` > 1 views a dt/factor path at step dt.
double coupling_sup(const ProjectorFamily& family, const PureState& psi0, Scheme full,
                    ReducedScheme reduced, double dt, int factor, std::uint64_t seed,
                    std::uint64_t stream) {
  TrajectoryConfig cfg;
  cfg.dt = dt;
  cfg.t_final = 5.0;
  cfg.scheme = full;
  cfg.record_stride = 1;
  NoiseSource fine_a(seed, stream, family.channels());
  NoiseSource fine_b(seed, stream, family.channels());
  CoarsenedIncrements coarse_a(fine_a, factor);
  CoarsenedIncrements coarse_b(fine_b, factor);
  const TrajectoryPath path = simulate(psi0, family, cfg, coarse_a);
  const auto p0 = occupation(psi0, family);
  const OccupationPath red = simulate_reduced(p0, family, cfg, coarse_b, reduced);
  double sup = 0.0;
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    for (std::size_t n = 0; n < p0.size(); ++n) {
      sup = std::max(sup, std::abs(path.occupations[i][n] - red.occupations[i][n]));
    }
  }
  return sup;
}

double norm_drift_sup(const ProjectorFamily& family, const PureState& psi0, Scheme scheme, double dt,
                      int factor, std::uint64_t seed, std::uint64_t stream) {
  TrajectoryConfig cfg;
  cfg.dt = dt;
  cfg.t_final = 5.0;
  cfg.scheme = scheme;
  cfg.renormalize_each_step = false;
  cfg.record_stride = 1;
  NoiseSource fine(seed, stream, family.channels());
  CoarsenedIncrements noise(fine, factor);
  const TrajectoryPath path = simulate(psi0, family, cfg, noise);
  double sup = 0.0;
  for (double n : path.norms) sup = std::max(sup, std::abs(n * n - 1.0));
  return sup;
}

struct PanelOutcome {
  PanelStats coarse;
  PanelStats fine;
  double gain = 0.0;  // ratio of geometric means
};

template <typename F>
PanelOutcome run_panel(F&& sup_at) {
  std::vector<double> coarse, fine;
  for (int s = 0; s < kPanelStreams; ++s) {
    coarse.push_back(sup_at(1e-3, 2, static_cast<std::uint64_t>(s)));
    fine.push_back(sup_at(5e-4, 1, static_cast<std::uint64_t>(s)));
  }
  PanelOutcome out;
  out.coarse = panel_stats(coarse);
  out.fine = panel_stats(fine);
  out.gain = out.coarse.geo / out.fine.geo;
  return out;
}

class Suite {
 public:
  Suite(const AcceptanceOptions& options, std::ostream& log) : opt_(options), log_(log) {}

  std::vector<CriterionResult> run() {
    auto wanted = [&](int id) {
      return opt_.only.empty() || std::find(opt_.only.begin(), opt_.only.end(), id) != opt_.only.end();
    };
    const bool need_born = wanted(1) || wanted(2) || wanted(3) || wanted(10);
    const bool need_ensemble = wanted(5) || wanted(6);
    if (need_born) {
      born_ = run_ensemble(initial_state(), family_, born_config(), kBornM, opt_.master_seed, opt_.workers);
    }
    if (wanted(1) || wanted(10)) emit(criterion1());
    if (wanted(2)) emit(criterion2());
    if (wanted(3)) emit(criterion3());
    if (wanted(4)) emit(criterion4());
    if (need_ensemble) prepare_unraveling();
    if (wanted(5)) emit(criterion5());
    if (wanted(6)) emit(criterion6());
    if (wanted(7)) emit(criterion7());
    if (wanted(8)) emit(criterion8());
    if (wanted(9) || wanted(10)) emit(criterion9());
    if (wanted(10)) emit(criterion10());
    return results_;
  }

 private:
  void emit(CriterionResult r) {
    log_ << format_result(r) << std::endl;
    results_.push_back(std::move(r));
  }

  CriterionResult criterion1() {
    const EnsembleReport& r = *born_;
    const double frac0 = static_cast<double>(r.collapse_counts[0]) / r.M;
    const double undecided = static_cast<double>(r.undecided) / r.M;
    CriterionResult out{1, "Born-rule collapse frequencies", false, "", {}};
    out.passed = frac0 >= kBornLow && frac0 <= kBornHigh && undecided <= kUndecidedFraction &&
                 r.failures.empty();
    out.detail = "M=" + std::to_string(r.M) + " Collapsed(0)=" + g(frac0) + " in [" + g(kBornLow) +
                 ", " + g(kBornHigh) + "], undecided=" + g(undecided) + " <= " + g(kUndecidedFraction) +
                 ", failed=" + std::to_string(r.failures.size());
    return out;
  }

  CriterionResult criterion2() {
    const EnsembleReport& r = *born_;
    CriterionResult out{2, "martingale conservation", true, "", {}};
    for (double t : {1.0, 5.0, 10.0, 15.0}) {
      const auto i = record_at(r.times, t);
      if (!i) {
        out.passed = false;
        out.detail += "t=" + g(t) + " not recorded; ";
        continue;
      }
      const double dev = std::abs(r.mean_p[*i][0] - 0.3);
      const double lim = kMartingaleSigmas * r.stderr_p[*i][0];
      if (!(dev <= lim)) out.passed = false;
      out.detail += "t=" + g(t) + " |dev|=" + g(dev) + " <= " + g(lim) + "; ";
    }
    return out;
  }

  CriterionResult criterion3() {
    const EnsembleReport& r = *born_;
    CriterionResult out{3, "h-decay ceiling", true, "", {}};
    double worst = std::numeric_limits<double>::infinity();
    double worst_t = 0.0;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
      const double ceiling = kHInitial / (1.0 + 4.0 * kHInitial * r.times[i]);
      const double margin = ceiling + kHSigmas * r.stderr_h[i][0] - r.mean_h[i][0];
      if (margin < worst) {
        worst = margin;
        worst_t = r.times[i];
      }
    }
    out.passed = worst >= 0.0;
    const auto i10 = record_at(r.times, 10.0);
    if (i10) {
      const double lim = kHInitial / (1.0 + 4.0 * kHInitial * 10.0) + kHSigmas * r.stderr_h[*i10][0];
      out.detail = "h_0(10)=" + g(r.mean_h[*i10][0]) + " <= " + g(lim) + ", ";
    }
    out.detail += "smallest margin " + g(worst) + " at t=" + g(worst_t) + " over " +
                  std::to_string(r.times.size()) + " records";
    return out;
  }

  CriterionResult criterion4() {
    const DensityMatrix rho0 = DensityMatrix::pure(initial_state());
    auto sup_error = [&](double dt) {
      MasterEvolutionConfig cfg;
      cfg.dt = dt;
      cfg.t_final = 10.0;
      cfg.record_stride = 1;
      const DensityPath path = evolve_density(rho0, family_, cfg);
      double sup = 0.0;
      for (std::size_t i = 0; i < path.times.size(); ++i) {
        const DensityMatrix exact = analytic_solution(rho0, family_, path.times[i]);
        sup = std::max(sup, (path.states[i].entries() - exact.entries()).norm());
      }
      return sup;
    };
    const double e1 = sup_error(1e-3);
    const double e2 = sup_error(5e-4);
    const double gain = e1 / e2;
    CriterionResult out{4, "master-equation oracle", false, "", {}};
    out.passed = e1 <= kRk4SupError && gain >= kRk4HalvingGain;
    out.detail = "sup error " + g(e1) + " <= " + g(kRk4SupError) + " at dt=1e-3, " + g(e2) +
                 " at dt=5e-4, gain " + g(gain) + " >= " + g(kRk4HalvingGain);
    return out;
  }

  void prepare_unraveling() {
    TrajectoryConfig cfg = born_config();
    cfg.t_final = 10.0;
    unraveling_ = run_ensemble(initial_state(), family_, cfg, kEnsembleM, opt_.master_seed, opt_.workers);
    MasterEvolutionConfig mcfg;
    mcfg.dt = cfg.dt;
    mcfg.t_final = cfg.t_final;
    mcfg.record_stride = cfg.record_stride;
    master_ = evolve_density(DensityMatrix::pure(initial_state()), family_, mcfg);
    comparison_ = von_neumann_check(*unraveling_, family_, *master_);
  }

  CriterionResult criterion5() {
    const VonNeumannResult& c = *comparison_;
    double sup = 0.0, at = 0.0;
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      if (c.times[i] <= 10.0 + 1e-9 && c.frobenius[i] > sup) {
        sup = c.frobenius[i];
        at = c.times[i];
      }
    }
    CriterionResult out{5, "unraveling consistency", sup <= kEnsembleDistance, "", {}};
    out.detail = "M=" + std::to_string(unraveling_->M) + " max Frobenius distance " + g(sup) + " at t=" +
                 g(at) + " <= " + g(kEnsembleDistance);
    return out;
  }

  CriterionResult criterion6() {
    const VonNeumannResult& c = *comparison_;
    double worst = 0.0;
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      worst = std::max(worst, std::abs(c.master_offdiag[i] - std::exp(-c.times[i]) * c.master_offdiag[0]));
    }
    const auto i10 = record_at(c.times, 10.0);
    const double ens10 = i10 ? c.ensemble_offdiag[*i10] : std::numeric_limits<double>::infinity();
    CriterionResult out{6, "von Neumann limit", worst <= kOffdiagExactTol && ens10 <= kEnsembleOffdiag, "", {}};
    out.detail = "master |offdiag - e^-t offdiag(0)| max " + g(worst) + " <= " + g(kOffdiagExactTol) +
                 ", ensemble offdiag(10)=" + g(ens10) + " <= " + g(kEnsembleOffdiag);
    return out;
  }

  CriterionResult criterion7() {
    const PureState psi0 = initial_state();
    const std::uint64_t seed = opt_.master_seed;
    const PanelOutcome heun = run_panel([&](double dt, int factor, std::uint64_t s) {
      return coupling_sup(family_, psi0, Scheme::StratonovichHeun, ReducedScheme::Milstein, dt, factor, seed, s);
    });
    const PanelOutcome ito = run_panel([&](double dt, int factor, std::uint64_t s) {
      return coupling_sup(family_, psi0, Scheme::ItoEulerMaruyama, ReducedScheme::EulerMaruyama, dt, factor,
                          seed, s);
    });
    CriterionResult out{7, "reduced-vs-full coupling", false, "", {}};
    out.passed = heun.coarse.mean <= kCouplingSup && heun.gain >= kCouplingGain;
    out.detail = "stratonovich-heun vs milstein over " + std::to_string(kPanelStreams) +
                 " streams: mean sup " + g(heun.coarse.mean) + " <= " + g(kCouplingSup) +
                 " at dt=1e-3, halving gain " + g(heun.gain) + " >= " + g(kCouplingGain);
    out.notes.push_back("ito-euler-maruyama vs euler-maruyama: mean sup " + g(ito.coarse.mean) +
                        ", halving gain " + g(ito.gain) + " (strong order 1/2, not gated)");
    return out;
  }

  CriterionResult criterion8() {
    const PureState psi0 = initial_state();
    const std::uint64_t seed = opt_.master_seed;
    const PanelOutcome heun = run_panel([&](double dt, int factor, std::uint64_t s) {
      return norm_drift_sup(family_, psi0, Scheme::StratonovichHeun, dt, factor, seed, s);
    });
    const PanelOutcome ito = run_panel([&](double dt, int factor, std::uint64_t s) {
      return norm_drift_sup(family_, psi0, Scheme::ItoEulerMaruyama, dt, factor, seed, s);
    });
    CriterionResult out{8, "norm drift", false, "", {}};
    out.passed = heun.coarse.max <= kNormDrift && heun.gain >= kNormDriftGain;
    out.detail = "stratonovich-heun unnormalized over " + std::to_string(kPanelStreams) +
                 " streams: max |norm^2-1| " + g(heun.coarse.max) + " <= " + g(kNormDrift) +
                 " at dt=1e-3, halving gain " + g(heun.gain) + " >= " + g(kNormDriftGain);
    out.notes.push_back("ito-euler-maruyama: max |norm^2-1| " + g(ito.coarse.max) + ", halving gain " +
                        g(ito.gain) + " (not gated)");
    return out;
  }

  CriterionResult criterion9() {
    const ProbeModel probe = ProbeModel::default_family(3);
    purification_ = purification_experiment(CavityState::uniform(3), probe, kProbeK, kProbeR,
                                            opt_.master_seed, opt_.workers);
    const PurificationResult& p = *purification_;
    double worst = 0.0;
    for (int r = 0; r < p.R; ++r) {
      const int n = p.inferred[static_cast<std::size_t>(r)];
      if (n < 0) continue;
      worst = std::max(worst, std::abs(p.final_f_plus[static_cast<std::size_t>(r)] - probe.f_plus(n)));
    }
    CriterionResult out{9, "cavity purification", false, "", {}};
    out.passed = p.chi_square.passes(kCavitySignificance) && worst <= kCavityFrequencyTol;
    out.detail = "R=" + std::to_string(p.R) + " histogram (" + std::to_string(p.histogram[0]) + ", " +
                 std::to_string(p.histogram[1]) + ", " + std::to_string(p.histogram[2]) +
                 "), unresolved " + std::to_string(p.unresolved) + ", chi2=" + g(p.chi_square.statistic) +
                 " p=" + g(p.chi_square.p_value) + " >= " + g(kCavitySignificance) +
                 ", max |f_+ - f_+(n)| " + g(worst) + " <= " + g(kCavityFrequencyTol);
    return out;
  }

  CriterionResult criterion10() {
    const int alt = opt_.alternate_workers != opt_.workers ? opt_.alternate_workers : opt_.workers + 1;
    const EnsembleReport again =
        run_ensemble(initial_state(), family_, born_config(), kBornM, opt_.master_seed, alt);
    const bool same_ensemble = ensemble_fingerprint(again) == ensemble_fingerprint(*born_);
    const PurificationResult cav_again = purification_experiment(
        CavityState::uniform(3), ProbeModel::default_family(3), kProbeK, kProbeR, opt_.master_seed, alt);
    const bool same_cavity = to_json(cav_again).dump() == to_json(*purification_).dump();
    CriterionResult out{10, "determinism", same_ensemble && same_cavity, "", {}};
    out.detail = "workers " + std::to_string(opt_.workers) + " vs " + std::to_string(alt) + ": ensemble " +
                 (same_ensemble ? "identical" : "DIFFERS") + ", cavity " +
                 (same_cavity ? "identical" : "DIFFERS");
    return out;
  }

  AcceptanceOptions opt_;
  std::ostream& log_;
  ProjectorFamily family_ = two_level();
  std::optional<EnsembleReport> born_;
  std::optional<EnsembleReport> unraveling_;
  std::optional<DensityPath> master_;
  std::optional<VonNeumannResult> comparison_;
  std::optional<PurificationResult> purification_;
  std::vector<CriterionResult> results_;
};

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& log) {
  return Suite(options, log).run();
}

std::string format_result(const CriterionResult& result) {
  std::string line = std::string(result.passed ? "[PASS] " : "[FAIL] ") + std::to_string(result.id) + " " +
                     result.title + ": " + result.detail;
  for (const auto& note : result.notes) line += "\n       note: " + note;
  return line;
}

}  // namespace unravel

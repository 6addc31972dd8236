#include "unravel/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace unravel {

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task) {
  if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

struct BlockPartial {
  std::vector<CMatrix> rho;  // sum of |psi><psi| per record
};

void add_into(BlockPartial& acc, const BlockPartial& other) {
  for (std::size_t i = 0; i < acc.rho.size(); ++i) acc.rho[i] += other.rho[i];
}

// Fixed-shape pairwise reduction over block indices [lo, hi).
BlockPartial reduce(std::vector<BlockPartial>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return std::move(parts[lo]);
  const std::size_t mid = lo + (hi - lo) / 2;
  BlockPartial left = reduce(parts, lo, mid);
  const BlockPartial right = reduce(parts, mid, hi);
  add_into(left, right);
  return left;
}

}  // namespace

EnsembleReport run_ensemble(const PureState& psi0, const ProjectorFamily& family,
                            const TrajectoryConfig& cfg, int M, std::uint64_t master_seed,
                            int workers) {
  cfg.validate(family);
  if (M < 2) throw Error(ErrorCode::InvalidConfig, "ensemble needs M >= 2");
  if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
  if (psi0.dim() != family.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "initial state does not match the family");
  }

  const int channels = family.channels();
  const int dim = family.dim();
  const long long steps = cfg.steps();

  EnsembleReport report;
  report.master_seed = master_seed;
  report.config = cfg;
  report.M = M;
  report.channels = channels;
  for (long long s = 0; s <= steps; ++s) {
    if (s % cfg.record_stride == 0 || s == steps) report.times.push_back(static_cast<double>(s) * cfg.dt);
  }
  const std::size_t T = report.times.size();
  const std::size_t C = static_cast<std::size_t>(channels);

  report.samples.assign(static_cast<std::size_t>(M) * T * C, std::numeric_limits<double>::quiet_NaN());
  report.outcomes.assign(static_cast<std::size_t>(M), -2);
  report.verdict_times.assign(static_cast<std::size_t>(M), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(static_cast<std::size_t>(M));

  const std::size_t blocks = (static_cast<std::size_t>(M) + kEnsembleBlock - 1) / kEnsembleBlock;
  std::vector<BlockPartial> partials(blocks);

  parallel_for(blocks, workers, [&](std::size_t b) {
    BlockPartial& part = partials[b];
    part.rho.assign(T, CMatrix::Zero(dim, dim));
    const std::size_t first = b * kEnsembleBlock;
    const std::size_t last = std::min<std::size_t>(first + kEnsembleBlock, static_cast<std::size_t>(M));
    for (std::size_t traj = first; traj < last; ++traj) {
      NoiseSource noise(master_seed, traj, channels);
      TrajectoryPath path;
      try {
        path = simulate(psi0, family, cfg, noise);
      } catch (const Error& e) {
        errors[traj] = e.what();
        continue;
      }
      for (std::size_t i = 0; i < T; ++i) {
        const CVector& psi = path.states[i];
        part.rho[i].noalias() += psi * psi.adjoint();
        std::copy(path.occupations[i].begin(), path.occupations[i].end(),
                  report.samples.begin() + static_cast<std::ptrdiff_t>((traj * T + i) * C));
      }
      report.outcomes[traj] = path.verdict.outcome ? *path.verdict.outcome : -1;
      if (path.verdict.time) report.verdict_times[traj] = *path.verdict.time;
    }
  });

  for (int traj = 0; traj < M; ++traj) {
    if (report.outcomes[static_cast<std::size_t>(traj)] == -2) {
      report.failures.push_back({static_cast<std::uint64_t>(traj), errors[static_cast<std::size_t>(traj)]});
    }
  }
  if (static_cast<double>(report.failures.size()) > 1e-3 * M) {
    const auto& f = report.failures.front();
    throw Error(ErrorCode::TooManyFailures,
                std::to_string(report.failures.size()) + " of " + std::to_string(M) +
                    " trajectories failed; first stream " + std::to_string(f.stream_index) + ": " +
                    f.message);
  }

  const int completed = report.completed();
  BlockPartial total = reduce(partials, 0, blocks);
  for (std::size_t i = 0; i < T; ++i) {
    CMatrix rho = total.rho[i] / static_cast<double>(completed);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    report.offdiag_norm.push_back(offdiagonal_weight(rho, family));
    report.ensemble_rho.push_back(DensityMatrix::trusted(std::move(rho)));
  }

  report.collapse_counts.assign(C, 0);
  for (int o : report.outcomes) {
    if (o >= 0) ++report.collapse_counts[static_cast<std::size_t>(o)];
    else if (o == -1) ++report.undecided;
  }

  std::vector<double> p_col, h_col;
  p_col.reserve(static_cast<std::size_t>(completed));
  h_col.reserve(static_cast<std::size_t>(completed));
  report.mean_p.assign(T, std::vector<double>(C));
  report.stderr_p = report.mean_h = report.stderr_h = report.mean_p;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t n = 0; n < C; ++n) {
      p_col.clear();
      h_col.clear();
      for (int traj = 0; traj < M; ++traj) {
        if (report.outcomes[static_cast<std::size_t>(traj)] == -2) continue;
        const double p = report.sample(traj, static_cast<int>(i), static_cast<int>(n));
        p_col.push_back(p);
        h_col.push_back(p * (1.0 - p));
      }
      const SampleSummary sp = summarize(p_col);
      const SampleSummary sh = summarize(h_col);
      report.mean_p[i][n] = sp.mean;
      report.stderr_p[i][n] = sp.stderr_mean;
      report.mean_h[i][n] = sh.mean;
      report.stderr_h[i][n] = sh.stderr_mean;
    }
  }
  return report;
}

HBoundResult h_bound_check(const EnsembleReport& report) {
  if (report.completed() < 1000) {
    throw Error(ErrorCode::InsufficientSamples,
                "h bound needs >= 1000 trajectories, have " + std::to_string(report.completed()));
  }
  HBoundResult out;
  out.worst_margin = std::numeric_limits<double>::infinity();
  for (int n = 0; n < report.channels; ++n) {
    const double h0 = report.mean_h[0][static_cast<std::size_t>(n)];
    for (std::size_t i = 0; i < report.times.size(); ++i) {
      HBoundRow row;
      row.t = report.times[i];
      row.n = n;
      row.h = report.mean_h[i][static_cast<std::size_t>(n)];
      row.stderr_h = report.stderr_h[i][static_cast<std::size_t>(n)];
      row.ceiling = h0 / (1.0 + 4.0 * h0 * row.t);
      row.margin = row.ceiling + 3.0 * row.stderr_h - row.h;
      out.worst_margin = std::min(out.worst_margin, row.margin);
      if (row.margin < 0.0) out.passed = false;
      out.rows.push_back(row);
    }
  }
  return out;
}

Classification classify_all(const EnsembleReport& report, std::span<const double> eps) {
  const std::size_t T = report.times.size();
  if (eps.size() != 1 && eps.size() != T) {
    throw Error(ErrorCode::GridMismatch, "need one threshold per record or a single threshold");
  }
  Classification out;
  out.times = report.times;
  out.delta.assign(T, std::vector<double>(static_cast<std::size_t>(report.channels), 0.0));
  const double completed = static_cast<double>(report.completed());
  for (std::size_t i = 0; i < T; ++i) {
    const double e = eps.size() == 1 ? eps[0] : eps[i];
    out.eps.push_back(e);
    for (int n = 0; n < report.channels; ++n) {
      std::int64_t ambiguous = 0;
      for (int traj = 0; traj < report.M; ++traj) {
        if (report.outcomes[static_cast<std::size_t>(traj)] == -2) continue;
        const double p = report.sample(traj, static_cast<int>(i), n);
        if (std::min(p, 1.0 - p) > e) ++ambiguous;
      }
      out.delta[i][static_cast<std::size_t>(n)] = static_cast<double>(ambiguous) / completed;
    }
  }
  return out;
}

VonNeumannResult von_neumann_check(const EnsembleReport& report, const ProjectorFamily& family,
                                   const DensityPath& master) {
  if (master.times.size() != report.times.size()) {
    throw Error(ErrorCode::GridMismatch, "ensemble has " + std::to_string(report.times.size()) +
                                             " records, master path " +
                                             std::to_string(master.times.size()));
  }
  VonNeumannResult out;
  for (std::size_t i = 0; i < master.times.size(); ++i) {
    if (std::abs(master.times[i] - report.times[i]) > 1e-9 * std::max(1.0, report.times[i])) {
      throw Error(ErrorCode::GridMismatch, "record times differ at index " + std::to_string(i));
    }
    const CMatrix& ens = report.ensemble_rho[i].entries();
    const CMatrix& me = master.states[i].entries();
    out.times.push_back(report.times[i]);
    out.frobenius.push_back((ens - me).norm());
    out.ensemble_offdiag.push_back(report.offdiag_norm[i]);
    out.master_offdiag.push_back(offdiagonal_weight(me, family));
  }
  return out;
}

BornRuleResult born_rule_test(const EnsembleReport& report, const PureState& psi0,
                              const ProjectorFamily& family) {
  if (static_cast<double>(report.undecided) > 5e-3 * report.M) {
    throw Error(ErrorCode::TooManyUndecided, std::to_string(report.undecided) + " of " +
                                                 std::to_string(report.M) + " trajectories undecided");
  }
  BornRuleResult out;
  out.expected_probabilities = occupation(psi0, family);
  out.observed = report.collapse_counts;
  out.undecided = report.undecided;
  for (auto c : out.observed) out.decided += c;
  if (report.undecided > 0) {
    out.warning = std::to_string(report.undecided) + " undecided trajectories excluded";
  }
  out.chi_square = chi_square_test(out.observed, out.expected_probabilities);
  out.passed = out.chi_square.passes(0.01);
  return out;
}

std::vector<MartingaleRow> martingale_check(const EnsembleReport& report,
                                            std::span<const double> p0, double k_sigma) {
  if (static_cast<int>(p0.size()) != report.channels) {
    throw Error(ErrorCode::DimensionMismatch, "initial occupations do not match the report");
  }
  std::vector<MartingaleRow> rows;
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    for (int n = 0; n < report.channels; ++n) {
      MartingaleRow row;
      row.t = report.times[i];
      row.n = n;
      row.mean = report.mean_p[i][static_cast<std::size_t>(n)];
      row.stderr_p = report.stderr_p[i][static_cast<std::size_t>(n)];
      row.deviation = std::abs(row.mean - p0[static_cast<std::size_t>(n)]);
      row.passed = row.deviation <= k_sigma * row.stderr_p + 1e-12;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<CrossWeightRow> cross_weight_check(const EnsembleReport& report) {
  const int last = static_cast<int>(report.times.size()) - 1;
  std::vector<double> eps(static_cast<std::size_t>(report.channels));
  for (int n = 0; n < report.channels; ++n) {
    std::vector<double> mins;
    for (int traj = 0; traj < report.M; ++traj) {
      if (report.outcomes[static_cast<std::size_t>(traj)] == -2) continue;
      const double p = report.sample(traj, last, n);
      mins.push_back(std::min(p, 1.0 - p));
    }
    eps[static_cast<std::size_t>(n)] = quantile(std::move(mins), 0.99);
  }
  std::vector<CrossWeightRow> rows;
  for (int k = 0; k < report.channels; ++k) {
    for (int l = 0; l < report.channels; ++l) {
      if (k == l) continue;
      std::vector<double> prod;
      for (int traj = 0; traj < report.M; ++traj) {
        if (report.outcomes[static_cast<std::size_t>(traj)] == -2) continue;
        prod.push_back(report.sample(traj, last, k) * report.sample(traj, last, l));
      }
      rows.push_back({k, l, summarize(prod).mean,
                      eps[static_cast<std::size_t>(k)] + eps[static_cast<std::size_t>(l)]});
    }
  }
  return rows;
}

}  // namespace unravel

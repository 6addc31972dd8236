#include "unravel/serialization.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "unravel/format.hpp"
#include "unravel/noise.hpp"
#include "unravel/version.hpp"

namespace unravel {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, "field '" + where + "': " + what);
}

double number_at(const Json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

Complex complex_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2) bad(where, "expected an [re, im] pair");
  return {number_at(j[0], where + "[0]"), number_at(j[1], where + "[1]")};
}

Json pair(Complex z) { return Json::array({z.real(), z.imag()}); }

Json flat_matrix(const CMatrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(pair(m(i, j)));
  }
  return out;
}

template <typename T>
T field(const Json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  const std::string path = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad(path, "expected true or false");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad(path, "expected an integer");
    return v.get<T>();
  } else {
    return static_cast<T>(number_at(v, path));
  }
}

}  // namespace

Json to_json(const CVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(pair(v(i)));
  return out;
}

Json to_json(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(pair(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

CVector vector_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where, "expected a non-empty list of [re, im] pairs");
  CVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = complex_from_json(j[i], where + "[" + std::to_string(i) + "]");
  }
  return v;
}

CMatrix matrix_from_json(const Json& j, int dim, const std::string& where) {
  if (!j.is_array()) bad(where, "expected a matrix");
  CMatrix m(dim, dim);
  const bool nested = j.size() == static_cast<std::size_t>(dim) &&
                      (dim > 1 || (j[0].is_array() && j[0].size() == 1));
  if (nested) {
    for (int r = 0; r < dim; ++r) {
      const Json& row = j[static_cast<std::size_t>(r)];
      const std::string rw = where + "[" + std::to_string(r) + "]";
      if (!row.is_array() || row.size() != static_cast<std::size_t>(dim)) {
        bad(rw, "expected " + std::to_string(dim) + " entries");
      }
      for (int c = 0; c < dim; ++c) {
        m(r, c) = complex_from_json(row[static_cast<std::size_t>(c)], rw + "[" + std::to_string(c) + "]");
      }
    }
    return m;
  }
  if (j.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim)) {
    bad(where, "expected " + std::to_string(dim * dim) + " row-major entries or " +
                   std::to_string(dim) + " rows");
  }
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) {
      const std::size_t k = static_cast<std::size_t>(r * dim + c);
      m(r, c) = complex_from_json(j[k], where + "[" + std::to_string(k) + "]");
    }
  }
  return m;
}

Json to_json(const ProjectorFamily& family) {
  Json out;
  out["dim"] = family.dim();
  out["omega"] = family.omega();
  out["eigenvalues"] = std::vector<double>(family.eigenvalues().begin(), family.eigenvalues().end());
  Json projectors = Json::array();
  for (const CMatrix& p : family.projectors()) projectors.push_back(flat_matrix(p));
  out["projectors"] = std::move(projectors);
  return out;
}

ProjectorFamily family_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const char* key : {"dim", "omega", "eigenvalues", "projectors"}) {
    if (!j.contains(key)) bad(where + "." + key, "missing");
  }
  const Json& jd = j.at("dim");
  if (!jd.is_number_integer() || jd.get<int>() < 1) bad(where + ".dim", "expected a positive integer");
  const int dim = jd.get<int>();
  const double omega = number_at(j.at("omega"), where + ".omega");
  if (!(omega > 0.0)) bad(where + ".omega", "must be positive");
  const Json& je = j.at("eigenvalues");
  const Json& jp = j.at("projectors");
  if (!je.is_array()) bad(where + ".eigenvalues", "expected a list");
  if (!jp.is_array() || jp.size() != je.size()) {
    bad(where + ".projectors", "expected one projector per eigenvalue");
  }
  std::vector<double> eigs;
  std::vector<CMatrix> projectors;
  for (std::size_t n = 0; n < je.size(); ++n) {
    eigs.push_back(number_at(je[n], where + ".eigenvalues[" + std::to_string(n) + "]"));
    projectors.push_back(matrix_from_json(jp[n], dim, where + ".projectors[" + std::to_string(n) + "]"));
  }
  return ProjectorFamily::validate(std::move(projectors), std::move(eigs), omega);
}

Json to_json(const ProbeModel& probe) {
  Json out;
  out["psi_in"] = to_json(probe.psi_in());
  Json us = Json::array();
  for (int n = 0; n < probe.levels(); ++n) us.push_back(to_json(probe.unitary(n)));
  out["unitaries"] = std::move(us);
  out["pi_plus"] = to_json(probe.pi_plus());
  out["pi_minus"] = to_json(probe.pi_minus());
  return out;
}

ProbeModel probe_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const char* key : {"psi_in", "unitaries", "pi_plus", "pi_minus"}) {
    if (!j.contains(key)) bad(where + "." + key, "missing");
  }
  CVector psi = vector_from_json(j.at("psi_in"), where + ".psi_in");
  const int d = static_cast<int>(psi.size());
  const Json& ju = j.at("unitaries");
  if (!ju.is_array() || ju.empty()) bad(where + ".unitaries", "expected a non-empty list");
  std::vector<CMatrix> us;
  for (std::size_t n = 0; n < ju.size(); ++n) {
    us.push_back(matrix_from_json(ju[n], d, where + ".unitaries[" + std::to_string(n) + "]"));
  }
  return ProbeModel(std::move(psi), std::move(us), matrix_from_json(j.at("pi_plus"), d, where + ".pi_plus"),
                    matrix_from_json(j.at("pi_minus"), d, where + ".pi_minus"));
}

Json to_json(const TrajectoryConfig& cfg) {
  Json out;
  out["dt"] = cfg.dt;
  out["t_final"] = cfg.t_final;
  out["scheme"] = std::string(to_string(cfg.scheme));
  out["renormalize_each_step"] = cfg.renormalize_each_step;
  out["collapse_epsilon"] = cfg.collapse_epsilon;
  out["record_stride"] = cfg.record_stride;
  return out;
}

TrajectoryConfig trajectory_config_from_json(const Json& j, TrajectoryConfig base,
                                             const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  base.dt = field(j, "dt", where, base.dt);
  base.t_final = field(j, "t_final", where, base.t_final);
  if (j.contains("scheme")) {
    if (!j.at("scheme").is_string()) bad(where + ".scheme", "expected a string");
    try {
      base.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    } catch (const Error& e) {
      bad(where + ".scheme", e.what());
    }
  }
  base.renormalize_each_step = field(j, "renormalize_each_step", where, base.renormalize_each_step);
  base.collapse_epsilon = field(j, "collapse_epsilon", where, base.collapse_epsilon);
  base.record_stride = field(j, "record_stride", where, base.record_stride);
  return base;
}

Json to_json(const MasterEvolutionConfig& cfg) {
  Json out;
  out["dt"] = cfg.dt;
  out["t_final"] = cfg.t_final;
  out["record_stride"] = cfg.record_stride;
  return out;
}

MasterEvolutionConfig master_config_from_json(const Json& j, MasterEvolutionConfig base,
                                              const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  base.dt = field(j, "dt", where, base.dt);
  base.t_final = field(j, "t_final", where, base.t_final);
  base.record_stride = field(j, "record_stride", where, base.record_stride);
  return base;
}

Json metadata(std::uint64_t master_seed, const Json& resolved_config) {
  Json out;
  out["library_version"] = std::string(kVersion);
  out["rng"] = std::string(kRngAlgorithm);
  out["master_seed"] = master_seed;
  out["config"] = resolved_config;
  return out;
}

Json to_json(const EnsembleReport& report) {
  Json out;
  out["M"] = report.M;
  out["completed"] = report.completed();
  out["channels"] = report.channels;
  out["collapse_counts"] = report.collapse_counts;
  out["undecided"] = report.undecided;
  Json failures = Json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"stream_index", f.stream_index}, {"message", f.message}});
  }
  out["failures"] = std::move(failures);
  out["times"] = report.times;
  out["mean_p"] = report.mean_p;
  out["stderr_p"] = report.stderr_p;
  out["mean_h"] = report.mean_h;
  out["stderr_h"] = report.stderr_h;
  out["offdiag_norm"] = report.offdiag_norm;
  Json rho = Json::array();
  for (const auto& r : report.ensemble_rho) rho.push_back(to_json(r.entries()));
  out["ensemble_rho"] = std::move(rho);
  return out;
}

Json to_json(const PurificationResult& result) {
  Json out;
  out["K"] = result.K;
  out["R"] = result.R;
  out["histogram"] = result.histogram;
  out["unresolved"] = result.unresolved;
  out["expected_fractions"] = result.expected;
  out["chi_square"] = {{"statistic", result.chi_square.statistic},
                       {"dof", result.chi_square.dof},
                       {"p_value", result.chi_square.p_value},
                       {"degenerate", result.chi_square.degenerate}};
  out["passed"] = result.passed;
  out["inferred"] = result.inferred;
  out["final_f_plus"] = result.final_f_plus;
  return out;
}

void write_report_csvs(const EnsembleReport& report, const std::filesystem::path& dir) {
  const std::size_t C = static_cast<std::size_t>(report.channels);
  std::ostringstream ts;
  ts << "t";
  for (std::size_t n = 0; n < C; ++n) ts << ",mean_p_" << n << ",stderr_p_" << n;
  for (std::size_t n = 0; n < C; ++n) ts << ",h_" << n << ",stderr_h_" << n;
  ts << ",offdiag_norm\n";
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    ts << fmt_num(report.times[i]);
    for (std::size_t n = 0; n < C; ++n) {
      ts << "," << fmt_num(report.mean_p[i][n]) << "," << fmt_num(report.stderr_p[i][n]);
    }
    for (std::size_t n = 0; n < C; ++n) {
      ts << "," << fmt_num(report.mean_h[i][n]) << "," << fmt_num(report.stderr_h[i][n]);
    }
    ts << "," << fmt_num(report.offdiag_norm[i]) << "\n";
  }
  write_text_file(dir / "ensemble_timeseries.csv", ts.str());

  DensityPath path{report.times, report.ensemble_rho};
  std::ostringstream rho;
  write_density_csv(rho, path);
  write_text_file(dir / "ensemble_rho.csv", rho.str());

  std::ostringstream oc;
  oc << "stream_index,outcome,verdict_time";
  for (std::size_t n = 0; n < C; ++n) oc << ",p_final_" << n;
  oc << "\n";
  const int last = static_cast<int>(report.times.size()) - 1;
  for (int traj = 0; traj < report.M; ++traj) {
    const auto k = static_cast<std::size_t>(traj);
    oc << traj << "," << report.outcomes[k] << "," << fmt_num(report.verdict_times[k]);
    for (std::size_t n = 0; n < C; ++n) oc << "," << fmt_num(report.sample(traj, last, static_cast<int>(n)));
    oc << "\n";
  }
  write_text_file(dir / "ensemble_outcomes.csv", oc.str());
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace unravel

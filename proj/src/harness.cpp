#include "unravel/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "unravel/acceptance.hpp"
#include "unravel/ensemble.hpp"
#include "unravel/format.hpp"

namespace unravel {

namespace fs = std::filesystem;

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Trajectory: return "trajectory";
    case Mode::Ensemble: return "ensemble";
    case Mode::Lindblad: return "lindblad";
    case Mode::Cavity: return "cavity";
    case Mode::Verify: return "verify";
  }
  return "unknown";
}

Mode mode_from_string(std::string_view name) {
  for (Mode m : {Mode::Trajectory, Mode::Ensemble, Mode::Lindblad, Mode::Cavity, Mode::Verify}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected trajectory, ensemble, lindblad, cavity or verify)");
}

namespace {

const char* const kKnownChecks[] = {"born_rule", "martingale", "h_bound", "von_neumann"};

[[noreturn]] void reject(const std::string& field, const std::string& what) {
  throw ConfigError("field '" + field + "': " + what);
}

Json load_file(const fs::path& path, const std::string& field) {
  if (!fs::exists(path)) reject(field, "file not found: " + path.string());
  try {
    return read_json_file(path);
  } catch (const Error& e) {
    reject(field, e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::int64_t integer_field(const Json& doc, const char* key, std::int64_t fallback, std::int64_t min) {
  if (!doc.contains(key)) return fallback;
  const Json& v = doc.at(key);
  if (!v.is_number_integer()) reject(key, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < min) reject(key, "must be >= " + std::to_string(min));
  return x;
}

ProjectorFamily parse_family(const Json& doc, const fs::path& base) {
  if (!doc.contains("family")) reject("family", "missing (a file path or an inline object)");
  const Json& f = doc.at("family");
  try {
    if (f.is_string()) return family_from_json(load_file(resolve(base, f.get<std::string>()), "family"), "family");
    return family_from_json(f, "family");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    reject("family", e.what());
  }
}

CVector parse_vector_or_file(const Json& v, const fs::path& base, const std::string& field) {
  if (v.is_object()) {
    if (!v.contains("file") || !v.at("file").is_string()) reject(field, "expected a list or {\"file\": path}");
    return vector_from_json(load_file(resolve(base, v.at("file").get<std::string>()), field), field);
  }
  return vector_from_json(v, field);
}

PureState parse_state(const Json& doc, const fs::path& base, const ProjectorFamily& family) {
  if (!doc.contains("initial_state")) reject("initial_state", "missing");
  try {
    PureState psi(parse_vector_or_file(doc.at("initial_state"), base, "initial_state"));
    if (psi.dim() != family.dim()) {
      reject("initial_state", "length " + std::to_string(psi.dim()) + " does not match dim " +
                                  std::to_string(family.dim()));
    }
    return psi;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    reject("initial_state", e.what());
  }
}

void parse_cavity(const Json& doc, const fs::path& base, ExperimentConfig& cfg) {
  const Json empty = Json::object();
  const Json& c = doc.contains("cavity") ? doc.at("cavity") : empty;
  if (!c.is_object()) reject("cavity", "expected an object");
  const auto levels = static_cast<int>(integer_field(c, "levels", 3, 1));
  try {
    if (!c.contains("probe") || (c.at("probe").is_string() && c.at("probe").get<std::string>() == "default")) {
      cfg.cavity.probe = ProbeModel::default_family(levels);
    } else if (c.at("probe").is_string()) {
      cfg.cavity.probe =
          probe_from_json(load_file(resolve(base, c.at("probe").get<std::string>()), "cavity.probe"), "cavity.probe");
    } else {
      cfg.cavity.probe = probe_from_json(c.at("probe"), "cavity.probe");
    }
    const int L = cfg.cavity.probe->levels();
    if (!c.contains("initial") || (c.at("initial").is_string() && c.at("initial").get<std::string>() == "uniform")) {
      cfg.cavity.initial = CavityState::uniform(L);
    } else if (c.at("initial").is_object() && c.at("initial").contains("fock")) {
      const Json& n = c.at("initial").at("fock");
      if (!n.is_number_integer()) reject("cavity.initial.fock", "expected an integer");
      cfg.cavity.initial = CavityState::fock(L, n.get<int>());
    } else {
      cfg.cavity.initial = CavityState(parse_vector_or_file(c.at("initial"), base, "cavity.initial"));
    }
    if (cfg.cavity.initial->levels() != L) reject("cavity.initial", "level count differs from the probe model");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    reject("cavity", e.what());
  }
  const Json& kr = c.contains("K") || c.contains("R") ? c : doc;
  cfg.cavity.K = integer_field(kr, "K", cfg.cavity.K, 1);
  if (kr.contains("R")) cfg.cavity.R = static_cast<int>(integer_field(kr, "R", 100, 100));
}

int workers_from_env() {
  const char* env = std::getenv("UNRAVEL_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long w = std::strtol(env, &end, 10);
  if (*end != '\0' || w < 1) throw ConfigError("UNRAVEL_WORKERS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<int>(w);
}

}  // namespace

ExperimentConfig load_config(Mode mode, const std::optional<fs::path>& file, const Overrides& overrides) {
  Json doc = Json::object();
  fs::path base = fs::current_path();
  if (file) {
    if (!fs::exists(*file)) throw ConfigError("config file not found: " + file->string());
    try {
      doc = read_json_file(*file);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (!doc.is_object()) throw ConfigError(file->string() + ": top level must be a JSON object");
    base = file->has_parent_path() ? file->parent_path() : fs::current_path();
  }

  ExperimentConfig cfg;
  cfg.mode = mode;
  if (mode == Mode::Verify) cfg.master_seed = AcceptanceOptions{}.master_seed;

  if (doc.contains("master_seed")) {
    const Json& s = doc.at("master_seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      reject("master_seed", "expected a non-negative integer");
    }
    cfg.master_seed = s.get<std::uint64_t>();
  }
  cfg.workers = workers_from_env();
  cfg.workers = static_cast<int>(integer_field(doc, "workers", cfg.workers, 1));
  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) reject("output_dir", "expected a path");
    cfg.output_dir = resolve(base, doc.at("output_dir").get<std::string>());
  }
  cfg.M = static_cast<int>(integer_field(doc, "M", cfg.M, 2));
  cfg.stream_index = static_cast<std::uint64_t>(integer_field(doc, "stream_index", 0, 0));

  if (overrides.master_seed) cfg.master_seed = *overrides.master_seed;
  if (overrides.workers) {
    if (*overrides.workers < 1) throw ConfigError("--workers must be >= 1");
    cfg.workers = *overrides.workers;
  }
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;

  Json resolved;
  resolved["mode"] = std::string(to_string(mode));
  resolved["master_seed"] = cfg.master_seed;

  if (mode == Mode::Trajectory || mode == Mode::Ensemble || mode == Mode::Lindblad) {
    cfg.family = parse_family(doc, base);
    cfg.initial_state = parse_state(doc, base, *cfg.family);
    resolved["family"] = to_json(*cfg.family);
    resolved["initial_state"] = to_json(cfg.initial_state->amplitudes());
    try {
      if (mode == Mode::Lindblad) {
        cfg.master = master_config_from_json(doc.value("master", Json::object()), cfg.master);
        cfg.master.validate(*cfg.family);
        resolved["master"] = to_json(cfg.master);
      } else {
        cfg.trajectory = trajectory_config_from_json(doc.value("trajectory", Json::object()), cfg.trajectory);
        cfg.trajectory.validate(*cfg.family);
        resolved["trajectory"] = to_json(cfg.trajectory);
      }
    } catch (const Error& e) {
      throw ConfigError(mode == Mode::Lindblad ? std::string("field 'master': ") + e.what()
                                               : std::string("field 'trajectory': ") + e.what());
    }
    if (mode == Mode::Trajectory) resolved["stream_index"] = cfg.stream_index;
  }

  if (mode == Mode::Ensemble) {
    resolved["M"] = cfg.M;
    if (doc.contains("checks")) {
      const Json& checks = doc.at("checks");
      if (!checks.is_array()) reject("checks", "expected a list of names");
      for (const auto& c : checks) {
        if (!c.is_string()) reject("checks", "expected a list of names");
        const auto name = c.get<std::string>();
        if (std::find(std::begin(kKnownChecks), std::end(kKnownChecks), name) == std::end(kKnownChecks)) {
          reject("checks", "unknown check '" + name + "'");
        }
        cfg.checks.push_back(name);
      }
    }
    resolved["checks"] = cfg.checks;
  }

  if (mode == Mode::Cavity) {
    parse_cavity(doc, base, cfg);
    resolved["probe"] = to_json(*cfg.cavity.probe);
    resolved["initial"] = to_json(cfg.cavity.initial->coefficients());
    resolved["K"] = cfg.cavity.K;
    if (cfg.cavity.R) resolved["R"] = *cfg.cavity.R;
    else resolved["stream_index"] = cfg.stream_index;
  }

  if (mode == Mode::Verify && doc.contains("criteria")) {
    const Json& c = doc.at("criteria");
    if (!c.is_array()) reject("criteria", "expected a list of criterion numbers");
    for (const auto& x : c) {
      if (!x.is_number_integer() || x.get<int>() < 1 || x.get<int>() > 10) reject("criteria", "numbers run 1..10");
      cfg.criteria.push_back(x.get<int>());
    }
    resolved["criteria"] = cfg.criteria;
  }

  cfg.resolved = std::move(resolved);
  return cfg;
}

namespace {

void log_line(std::ostream& err, const std::string& msg) { err << "[unravel] " << msg << std::endl; }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

int run_trajectory(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  NoiseSource noise(cfg.master_seed, cfg.stream_index, cfg.family->channels());
  const TrajectoryPath path = simulate(*cfg.initial_state, *cfg.family, cfg.trajectory, noise);
  std::ostringstream csv;
  write_trajectory_csv(csv, path);
  write_text_file(cfg.output_dir / "trajectory.csv", csv.str());
  std::ostringstream bin;
  write_trajectory_binary(bin, path);
  write_text_file(cfg.output_dir / "trajectory.psi", bin.str());
  Json doc;
  doc["metadata"] = metadata(cfg.master_seed, cfg.resolved);
  doc["verdict"] = path.verdict.outcome ? Json(*path.verdict.outcome) : Json("undecided");
  doc["verdict_time"] = path.verdict.time ? Json(*path.verdict.time) : Json(nullptr);
  doc["final_occupations"] = path.occupations.back();
  write_text_file(cfg.output_dir / "trajectory.json", dump(doc));
  log_line(err, "trajectory written to " + cfg.output_dir.string());
  out << "verdict: " << (path.verdict.outcome ? "Collapsed(" + std::to_string(*path.verdict.outcome) + ")" : "Undecided")
      << "\n";
  return 0;
}

int run_ensemble_mode(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  log_line(err, "ensemble: M=" + std::to_string(cfg.M) + " workers=" + std::to_string(cfg.workers));
  const EnsembleReport report =
      run_ensemble(*cfg.initial_state, *cfg.family, cfg.trajectory, cfg.M, cfg.master_seed, cfg.workers);
  log_line(err, "ensemble: trajectories done");

  Json doc;
  doc["metadata"] = metadata(cfg.master_seed, cfg.resolved);
  doc["report"] = to_json(report);
  Json checks = Json::object();
  bool all_pass = true;
  auto record = [&](const std::string& name, bool passed, Json detail) {
    detail["passed"] = passed;
    checks[name] = std::move(detail);
    all_pass = all_pass && passed;
    out << (passed ? "[PASS] " : "[FAIL] ") << name << "\n";
  };
  for (const auto& name : cfg.checks) {
    try {
      if (name == "born_rule") {
        const BornRuleResult b = born_rule_test(report, *cfg.initial_state, *cfg.family);
        record(name, b.passed,
               {{"expected", b.expected_probabilities}, {"observed", b.observed}, {"chi_square", b.chi_square.statistic},
                {"p_value", b.chi_square.p_value}, {"warning", b.warning}});
      } else if (name == "martingale") {
        const auto p0 = occupation(*cfg.initial_state, *cfg.family);
        const auto rows = martingale_check(report, p0);
        double worst = 0.0;
        bool ok = true;
        for (const auto& r : rows) {
          ok = ok && r.passed;
          if (r.stderr_p > 0.0) worst = std::max(worst, r.deviation / r.stderr_p);
        }
        record(name, ok, {{"max_sigmas", worst}});
      } else if (name == "h_bound") {
        const HBoundResult h = h_bound_check(report);
        record(name, h.passed, {{"worst_margin", h.worst_margin}});
      } else if (name == "von_neumann") {
        MasterEvolutionConfig mcfg;
        mcfg.dt = cfg.trajectory.dt;
        mcfg.t_final = cfg.trajectory.t_final;
        mcfg.record_stride = cfg.trajectory.record_stride;
        const DensityPath master = evolve_density(DensityMatrix::pure(*cfg.initial_state), *cfg.family, mcfg);
        const VonNeumannResult v = von_neumann_check(report, *cfg.family, master);
        record(name, true, {{"frobenius", v.frobenius}, {"ensemble_offdiag", v.ensemble_offdiag},
                            {"master_offdiag", v.master_offdiag}});
      }
    } catch (const Error& e) {
      record(name, false, {{"error", e.what()}});
    }
  }
  doc["checks"] = std::move(checks);
  write_text_file(cfg.output_dir / "ensemble_report.json", dump(doc));
  write_report_csvs(report, cfg.output_dir);
  out << "collapse counts:";
  for (auto c : report.collapse_counts) out << " " << c;
  out << ", undecided " << report.undecided << ", failed " << report.failures.size() << "\n";
  return all_pass ? 0 : 1;
}

int run_lindblad(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const DensityMatrix rho0 = DensityMatrix::pure(*cfg.initial_state);
  const DensityPath path = evolve_density(rho0, *cfg.family, cfg.master);
  std::ostringstream csv;
  write_density_csv(csv, path);
  write_text_file(cfg.output_dir / "density_path.csv", csv.str());
  double sup = 0.0;
  std::vector<double> offdiag;
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    const DensityMatrix exact = analytic_solution(rho0, *cfg.family, path.times[i]);
    sup = std::max(sup, (path.states[i].entries() - exact.entries()).norm());
    offdiag.push_back(offdiagonal_weight(path.states[i].entries(), *cfg.family));
  }
  Json doc;
  doc["metadata"] = metadata(cfg.master_seed, cfg.resolved);
  doc["sup_frobenius_error_vs_analytic"] = sup;
  doc["times"] = path.times;
  doc["offdiag_norm"] = offdiag;
  write_text_file(cfg.output_dir / "lindblad_summary.json", dump(doc));
  log_line(err, "lindblad path written to " + cfg.output_dir.string());
  out << "sup Frobenius error vs analytic: " << fmt_num(sup) << "\n";
  return 0;
}

int run_cavity(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  Json doc;
  doc["metadata"] = metadata(cfg.master_seed, cfg.resolved);
  if (cfg.cavity.R) {
    log_line(err, "purification: R=" + std::to_string(*cfg.cavity.R) + " K=" + std::to_string(cfg.cavity.K));
    const PurificationResult res = purification_experiment(*cfg.cavity.initial, *cfg.cavity.probe, cfg.cavity.K,
                                                           *cfg.cavity.R, cfg.master_seed, cfg.workers);
    doc["purification"] = to_json(res);
    write_text_file(cfg.output_dir / "purification.json", dump(doc));
    std::ostringstream csv;
    csv << "run,inferred_n,f_plus\n";
    for (int r = 0; r < res.R; ++r) {
      csv << r << "," << res.inferred[static_cast<std::size_t>(r)] << ","
          << fmt_num(res.final_f_plus[static_cast<std::size_t>(r)]) << "\n";
    }
    write_text_file(cfg.output_dir / "purification_runs.csv", csv.str());
    out << (res.passed ? "[PASS]" : "[FAIL]") << " purification chi-square p=" << fmt_num(res.chi_square.p_value)
        << "\n";
    return res.passed ? 0 : 1;
  }
  NoiseSource noise(cfg.master_seed, cfg.stream_index, 1);
  ProbeRunOptions opts;
  opts.keep_history = true;
  const ProbeRunRecord rec = run_probe_sequence(*cfg.cavity.initial, *cfg.cavity.probe, cfg.cavity.K, noise, opts);
  std::ostringstream csv;
  write_probe_csv(csv, rec);
  write_text_file(cfg.output_dir / "probe_run.csv", csv.str());
  doc["inferred_n"] = rec.inferred_n ? Json(*rec.inferred_n) : Json(nullptr);
  doc["final_f_plus"] = rec.running_f_plus.back();
  doc["final_weights"] = rec.final_weights;
  write_text_file(cfg.output_dir / "probe_run.json", dump(doc));
  out << "inferred n: " << (rec.inferred_n ? std::to_string(*rec.inferred_n) : "none") << "\n";
  return 0;
}

int run_verify(const ExperimentConfig& cfg, std::ostream& out) {
  AcceptanceOptions opts;
  opts.master_seed = cfg.master_seed;
  opts.workers = cfg.workers;
  opts.only = cfg.criteria;
  const auto results = run_acceptance(opts, out);
  std::ostringstream text;
  bool all = true;
  for (const auto& r : results) {
    text << format_result(r) << "\n";
    all = all && r.passed;
  }
  write_text_file(cfg.output_dir / "acceptance.txt", text.str());
  out << (all ? "all criteria passed" : "some criteria FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int run(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  try {
    fs::create_directories(config.output_dir);
    switch (config.mode) {
      case Mode::Trajectory: return run_trajectory(config, out, err);
      case Mode::Ensemble: return run_ensemble_mode(config, out, err);
      case Mode::Lindblad: return run_lindblad(config, out, err);
      case Mode::Cavity: return run_cavity(config, out, err);
      case Mode::Verify: return run_verify(config, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}

}  // namespace unravel

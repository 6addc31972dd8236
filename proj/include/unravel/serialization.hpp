#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "unravel/cavity.hpp"
#include "unravel/ensemble.hpp"
#include "unravel/master_equation.hpp"
#include "unravel/trajectory.hpp"

namespace unravel {

using Json = nlohmann::ordered_json;

// Complex numbers are [re, im] pairs everywhere. Parse failures throw
// Error(InvalidConfig) naming the offending field path.

Json to_json(const CVector& v);
Json to_json(const CMatrix& m);  // rows of [re, im] pairs
CVector vector_from_json(const Json& j, const std::string& where);
/// Accepts rows of pairs, or a flat row-major list of dim*dim pairs.
CMatrix matrix_from_json(const Json& j, int dim, const std::string& where);

/// {"dim", "omega", "eigenvalues", "projectors"}; each projector is a flat
/// row-major list of [re, im] pairs.
Json to_json(const ProjectorFamily& family);
ProjectorFamily family_from_json(const Json& j, const std::string& where = "family");

/// {"psi_in", "unitaries", "pi_plus", "pi_minus"}.
Json to_json(const ProbeModel& probe);
ProbeModel probe_from_json(const Json& j, const std::string& where = "probe");

Json to_json(const TrajectoryConfig& cfg);
/// Fields present in `j` override `base`.
TrajectoryConfig trajectory_config_from_json(const Json& j, TrajectoryConfig base,
                                             const std::string& where = "trajectory");
Json to_json(const MasterEvolutionConfig& cfg);
MasterEvolutionConfig master_config_from_json(const Json& j, MasterEvolutionConfig base,
                                              const std::string& where = "master");

/// library version, RNG algorithm, seed and the resolved configuration.
Json metadata(std::uint64_t master_seed, const Json& resolved_config);

/// Scalars, per-time arrays and ensemble states; no per-trajectory samples.
Json to_json(const EnsembleReport& report);
Json to_json(const PurificationResult& result);

/// ensemble_timeseries.csv, ensemble_rho.csv and ensemble_outcomes.csv in `dir`.
void write_report_csvs(const EnsembleReport& report, const std::filesystem::path& dir);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace unravel

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unravel/cavity.hpp"
#include "unravel/master_equation.hpp"
#include "unravel/serialization.hpp"
#include "unravel/trajectory.hpp"

namespace unravel {

enum class Mode { Trajectory, Ensemble, Lindblad, Cavity, Verify };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);

/// Rejected configuration; the CLI maps it to exit status 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(ErrorCode::InvalidConfig, message) {}
};

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> master_seed;
  std::optional<int> workers;
  std::optional<std::filesystem::path> output_dir;
};

struct CavitySettings {
  std::optional<ProbeModel> probe;
  std::optional<CavityState> initial;
  long long K = 100000;
  std::optional<int> R;  // purification experiment when set
};

struct ExperimentConfig {
  Mode mode = Mode::Verify;
  std::optional<ProjectorFamily> family;
  std::optional<PureState> initial_state;
  TrajectoryConfig trajectory;
  MasterEvolutionConfig master;
  CavitySettings cavity;
  int M = 1000;
  std::uint64_t stream_index = 0;
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::filesystem::path output_dir = "unravel_out";
  /// Ensemble checks: born_rule, martingale, h_bound, von_neumann.
  std::vector<std::string> checks;
  /// Acceptance criteria for verify mode; empty means all.
  std::vector<int> criteria;

  /// The fully resolved configuration, embedded in output metadata.
  Json resolved;
};

/// Builds the configuration for `mode` from an optional JSON file (relative
/// paths inside it resolve against the file's directory), then applies the
/// overrides. Worker precedence: --workers flag, then the file's "workers",
/// then UNRAVEL_WORKERS, then 1. Throws ConfigError with the field path.
ExperimentConfig load_config(Mode mode, const std::optional<std::filesystem::path>& file,
                             const Overrides& overrides);

/// Runs the experiment and writes its artifacts. Returns 0 when every
/// requested check passes and 1 otherwise; failures inside the run are
/// reported on `err` and also give 1.
int run(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

}  // namespace unravel

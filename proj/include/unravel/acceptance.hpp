#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace unravel {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  /// Measured values next to their pinned limits.
  std::string detail;
  /// Non-gating observations (alternative schemes and the like).
  std::vector<std::string> notes;
};

struct AcceptanceOptions {
  std::uint64_t master_seed = 0x5eed2024ULL;
  int workers = 1;
  /// Worker count of the rerun in the determinism criterion.
  int alternate_workers = 4;
  /// Criteria to run (1..10); empty means all. Criterion 10 pulls in 1 and 9.
  std::vector<int> only;
};

/// Runs the acceptance criteria in order, writing one line per criterion to
/// `log` as each completes ("[PASS] 3 h-decay ceiling: ...").
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& log);

std::string format_result(const CriterionResult& result);

}  // namespace unravel

// Acceptance suite: every criterion on the default instances, one line each.

#include <iostream>

#include "unravel/acceptance.hpp"

int main() {
  unravel::AcceptanceOptions options;
  options.workers = 1;
  options.alternate_workers = 4;
  const auto results = unravel::run_acceptance(options, std::cout);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

#pragma once

// Verification suites shared by the CLI `verify` subcommand and the
// acceptance tests: closed-form cross-checks against the simulator, the
// balance guarantee, and the numeric attention kernel.

#include <cstdint>
#include <string>
#include <vector>

namespace pipelab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string expected;
  std::string actual;
};

std::vector<CheckResult> verify_formulas();
std::vector<CheckResult> verify_balance(std::uint64_t seed = 12345);
std::vector<CheckResult> verify_kernel(std::uint64_t seed = 20240817);
std::vector<CheckResult> verify_fixtures();

// Runs the named suite ("formulas", "balance", "kernel", "fixtures",
// "all"), prints one line per check, and returns the number of failures.
int run_verify_suite(const std::string& suite, std::ostream& out);

}  // namespace pipelab

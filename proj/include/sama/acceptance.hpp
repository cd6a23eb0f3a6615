#pragma once

// Executable versions of the ten acceptance properties. The `acceptance`
// test binary runs all of them; `sama selfcheck` runs the fast subset.

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace sama {

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  /// Holds mask_index.json, boxes.csv, frames/ and fixture_replies.json.
  std::filesystem::path sources_dir;
  std::filesystem::path template_dir;
  /// Scratch space for the determinism and round-trip checks.
  std::filesystem::path scratch_dir;
  /// False skips the training check (the only one that takes minutes).
  bool include_training = true;

  /// Paths inside the source tree this library was built from.
  static AcceptanceOptions from_source_tree();
};

struct AcceptanceCheck {
  int id = 0;
  std::string name;
  bool slow = false;
  std::function<CheckResult(const AcceptanceOptions&)> run;
};

const std::vector<AcceptanceCheck>& acceptance_checks();

/// Runs the selected checks in order, printing one PASS/FAIL line each.
/// Exceptions inside a check count as a failure.
std::vector<CheckResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

/// Fast internal consistency checks; returns the number of failures.
int run_selfcheck(std::ostream& log);

}  // namespace sama

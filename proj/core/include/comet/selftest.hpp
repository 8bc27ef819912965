#pragma once

#include <string>
#include <vector>

namespace comet::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // short evidence line, or the failure reason
};

/// Fast built-in verification: gradient spot checks against finite
/// differences, the contrastive objective against its naive reference,
/// entropy edge cases, optimizer and teacher-update closed forms, and an
/// archive round-trip. Runs in a few seconds.
std::vector<CheckResult> run_all();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace comet::selftest

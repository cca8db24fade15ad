#pragma once

// Named property suites runnable from the CLI: algebra oracles, forward
// equivariance, gradient checks, size extensivity and cost scaling. Each
// case reports its worst deviation against a fixed tolerance.

#include <iosfwd>

#include "unite/training.hpp"

namespace unite {

struct CheckCase {
  std::string suite;
  std::string name;
  double max_dev = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct CheckOptions {
  unsigned seed = 0;
  // fault injection: corrupt one Clebsch-Gordan entry first, to prove the
  // harness notices broken algebra
  bool inject_cg_bug = false;
};

// "cg", "equivariance", "gradcheck", "extensivity", "scaling".
const std::vector<std::string>& check_suite_names();

// Runs one suite, or every suite for "all". Throws on unknown names.
std::vector<CheckCase> run_check_suite(const std::string& suite,
                                       const CheckOptions& opts = {});

// One machine-readable line per case:
//   suite=<s> case=<name> max_dev=<x> tol=<t> pass=<0|1>
void write_check_report(std::ostream& out, const std::vector<CheckCase>& cases);

bool all_pass(const std::vector<CheckCase>& cases);

}  // namespace unite

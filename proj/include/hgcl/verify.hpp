#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgcl/lorentz.hpp"

// Invariant suites run by `hgcl verify`.
namespace hgcl::verify {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst observed error (or count, see detail)
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 20240611;
  /// Distance clamp used by the Lorentz checks. Lowering it below 1 disables
  /// the clamp; the suite is expected to catch that.
  double clamp_floor = lorentz::kDistanceClampFloor;
  std::size_t manifold_samples = 1000;
};

/// lorentz, saam, hhcl, gradients.
const std::vector<std::string>& suite_names();

/// Run one suite or `all`. Throws ConfigError for an unknown name.
std::vector<CheckResult> run_suite(const std::string& name, const VerifyOptions& options = {});

std::vector<CheckResult> lorentz_suite(const VerifyOptions& options);
std::vector<CheckResult> saam_suite(const VerifyOptions& options);
std::vector<CheckResult> hhcl_suite(const VerifyOptions& options);
std::vector<CheckResult> gradient_suite(const VerifyOptions& options);

/// "PASS lorentz/hyperboloid-constraint  max_err=1.2e-13  tol=1e-09  ..."
std::string format_result(const CheckResult& result);

}  // namespace hgcl::verify

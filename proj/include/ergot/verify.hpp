#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ergot {

struct VerifyOptions {
  std::uint64_t seed = 1;
  int threads = 1;
  /// Replaces vol / (8 pi^2) in the pipeline comparisons.
  std::optional<double> limit_constant;
  /// Called after each criterion with its ledger entry and wall seconds.
  std::function<void(const nlohmann::json&, double)> progress;
};

/// Criteria run by a suite: spectral, variance, concentration, pipeline, all.
std::vector<int> suite_criteria(const std::string& suite);

/// Runs the criteria of a suite with pinned seeds. Returns
/// {"suite", "seed", "passed", "entries": [{criterion, name, suite, passed,
/// measured, tolerance, detail | error}]}. A throwing criterion is recorded
/// as failed and the remaining criteria still run. Contains no timings.
nlohmann::json verify(const std::string& suite, const VerifyOptions& options = {});

/// Runs a single criterion (1..11) into a ledger entry.
nlohmann::json verify_criterion(int criterion, const VerifyOptions& options = {});

/// "criterion  N  PASS  name  measured ...  tolerance ..." for one entry.
std::string ledger_line(const nlohmann::json& entry);

}  // namespace ergot

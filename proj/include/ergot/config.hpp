#pragma once

#include "ergot/drift.hpp"
#include "ergot/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ergot {

/// Every experiment knob, read from a flat `section.key = value` document.
/// Lists are comma separated. Drift terms use
///   drift.potential = "0.3 cos 1 0 0 0; 0.2 sin 0 1 0 0"
///   drift.z = "1 0 0 0"
///   drift.field = "cos 1 1 0 0 : 0.8 -0.8 0 0; sin 1 0 0 0 : 0 0.5 0 0"
struct ExperimentConfig {
  int d = 4;
  double L = 2.0 * std::numbers::pi;

  std::string potential;
  std::string z;
  std::string field;
  bool weighted = false;

  double dt = 1.0 / 60.0;
  std::vector<double> T = {1e4};
  int replicas = 256;
  std::uint64_t seed = 1;

  double gamma = 4.0;
  std::optional<double> eps;
  double tail_tol = 1e-6;

  double lambda_max = 6.0;

  int grid_n = 16;
  double reg = 0.0;
  int max_iters = 20000;
  double tol = 1e-10;
  int ot_replicas = 64;

  std::vector<double> xi = {0.2, 0.3, 0.4};
  double bernstein_c = 1.0;
  int flatness_grid_n = 16;

  std::string out_dir = "out";
  std::vector<std::string> formats = {"csv", "json"};

  /// Throws InvalidArgument on any cross-field violation.
  void validate() const;

  TorusGeometry geometry() const { return {d, L}; }
  DriftSpec drift() const;
  /// Smoothing time for horizon T: the override when set, else the schedule.
  double eps_for(double T) const;

  /// Sorted `key = value` lines with round-trip precision.
  std::string canonical() const;
  /// SHA-256 of canonical(), hex.
  std::string hash() const;
};

ExperimentConfig parse_config(const std::string& text);
/// "a cos k1 .. kd; a sin k1 .. kd" as a list of a cos/sin(w k.x) terms.
std::vector<ScalarTerm> parse_scalar_terms(const std::string& text, int d);
ExperimentConfig load_config(const std::string& path);

/// Hex SHA-256 of a byte string and of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace ergot

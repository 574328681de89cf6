#pragma once

#include "ergot/diffusion.hpp"
#include "ergot/smoothing.hpp"
#include "ergot/stats.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ergot {

/// Zero-mean trigonometric polynomial g = sum c_i phi_i over a ModeSet.
class TestFunction {
 public:
  /// `grid_n` is the per-axis quadrature grid for the L^{d/2} norm; 0 picks
  /// the smallest even size that resolves |g|^2 exactly, at least 16.
  TestFunction(std::shared_ptr<const ModeSet> modes, Eigen::VectorXd coeffs, int grid_n = 0);

  const ModeSet& modes() const noexcept { return *modes_; }
  const std::shared_ptr<const ModeSet>& mode_ptr() const noexcept { return modes_; }
  const Eigen::VectorXd& coeffs() const noexcept { return coeffs_; }

  /// 2 <g, (-Delta)^{-1} g> = 2 sum c_i^2 / lambda_i.
  double sigma_sq() const noexcept { return sigma_sq_; }
  /// ||g||_{L^{d/2}(mu)} by grid quadrature.
  double l_half_norm() const noexcept { return l_half_norm_; }
  /// sqrt2 sum |c_i|, an upper bound on sup |g|.
  double sup_bound() const noexcept { return sup_bound_; }

  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const { return modes_->evaluate(coeffs_, x); }
  /// (1/T) int_0^T g(X_t) dt from a snapshot over the same modes.
  double time_average(const Snapshot& snapshot) const;

 private:
  std::shared_ptr<const ModeSet> modes_;
  Eigen::VectorXd coeffs_;
  double sigma_sq_ = 0.0;
  double l_half_norm_ = 0.0;
  double sup_bound_ = 0.0;
};

struct BernsteinBound {
  double raw = 0.0;      // 2 exp(-T xi^2 / (2 (sigma^2 + c norm xi)))
  double clipped = 0.0;  // min(raw, 1)
};

BernsteinBound bernstein_bound(double sigma_sq, double norm, double xi, double T, double c);
inline BernsteinBound bernstein_bound(const TestFunction& g, double xi, double T, double c) {
  return bernstein_bound(g.sigma_sq(), g.l_half_norm(), xi, T, c);
}

struct TailRow {
  double xi = 0.0;
  double T = 0.0;
  std::size_t replicas = 0;
  std::size_t exceed = 0;
  double freq = 0.0;
  BinomialInterval ci;
  double bound = 0.0;  // clipped bound at the configured c
};

/// Exceedance counts of |average| > xi for each xi.
std::vector<TailRow> tail_table(const TestFunction& g, const Eigen::Ref<const Eigen::VectorXd>& averages,
                                const std::vector<double>& xi_list, double T, double c = 1.0,
                                double confidence = 0.99);

/// Simulates `config.replicas` stationary replicas over g's modes and tallies
/// exceedances at the horizon and at every checkpoint.
std::vector<TailRow> tail_empirics(const TestFunction& g, const std::vector<double>& xi_list, const SimConfig& config,
                                   const DriftSpec& drift, double c = 1.0, double confidence = 0.99);

/// CSV columns: xi, T, replicas, exceed_count, freq, ci_upper, bound_c1.
void write_tail_csv(const std::string& path, const std::vector<TailRow>& rows);

struct FlatnessRow {
  double T = 0.0;
  double eps = 0.0;
  double xi = 0.0;
  std::size_t replicas = 0;
  std::size_t failures = 0;       // certified Hessian sup above xi
  std::size_t grid_failures = 0;  // grid value alone above xi
  double freq = 0.0;
  BinomialInterval ci;
  double mean_value = 0.0;
  double mean_slack = 0.0;
};

/// Failure frequency of the flatness event over a set of smoothed empiricals
/// sharing T and eps.
FlatnessRow flatness_row(const std::vector<SpectralEmpirical>& samples, double xi, const GridTransform& transform,
                         double confidence = 0.99);

struct FlatnessReport {
  std::vector<FlatnessRow> rows;
  /// Each frequency is at most the previous one or their intervals overlap.
  bool nonincreasing = true;
};

bool nonincreasing_trend(const std::vector<FlatnessRow>& rows);

/// Simulates once up to max(T_list) with checkpoints at every T, smooths with
/// eps = (log T)^gamma / T and tests the flatness event with xi = 1 / log T
/// unless `xi_override` is set.
FlatnessReport flatness_tail(const std::vector<double>& T_list, double gamma, SimConfig config, const DriftSpec& drift,
                             std::shared_ptr<const ModeSet> modes, int grid_n,
                             std::optional<double> xi_override = std::nullopt, double confidence = 0.99);

}  // namespace ergot

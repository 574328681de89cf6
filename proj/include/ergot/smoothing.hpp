#pragma once

#include "ergot/geometry.hpp"
#include "ergot/grid.hpp"
#include "ergot/stats.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>

namespace ergot {

/// eps = (log T)^gamma / T.
double smoothing_schedule(double T, double gamma);

/// Occupation coefficients psi_i(T) with horizon T and smoothing time eps:
/// the compressed form of the smoothed empirical density
/// u = 1 + T^{-1/2} sum exp(-lambda_i eps) psi_i phi_i.
class SpectralEmpirical {
 public:
  SpectralEmpirical(std::shared_ptr<const ModeSet> modes, Eigen::VectorXd psi, double T, double eps);

  const ModeSet& modes() const noexcept { return *modes_; }
  const std::shared_ptr<const ModeSet>& mode_ptr() const noexcept { return modes_; }
  const Eigen::VectorXd& psi() const noexcept { return psi_; }
  double horizon() const noexcept { return T_; }
  double eps() const noexcept { return eps_; }
  SpectralEmpirical with_eps(double eps) const { return {modes_, psi_, T_, eps}; }

  /// Coefficients of u - 1.
  Eigen::VectorXd density_coeffs() const;
  /// Coefficients of f = (-Delta)^{-1} (u - 1).
  Eigen::VectorXd potential_coeffs() const;

  /// Expected squared L2 norm of the part of u - 1 beyond the mode set,
  /// 2 / (T lambda_max) * sum_{lambda > lambda_max} exp(-2 eps lambda).
  double truncation_tail() const;

 private:
  std::shared_ptr<const ModeSet> modes_;
  Eigen::VectorXd psi_;
  double T_;
  double eps_;
};

/// u at the columns of `points` (d x P). Negative values are returned as is.
Eigen::VectorXd smoothed_density(const SpectralEmpirical& se, const Eigen::Ref<const Eigen::MatrixXd>& points);
/// u at every grid point of the transform.
Eigen::VectorXd smoothed_density(const SpectralEmpirical& se, const GridTransform& transform);

/// Spectral coefficients of f.
inline Eigen::VectorXd f_potential(const SpectralEmpirical& se) { return se.potential_coeffs(); }

/// mu(|grad f|^2) = T^{-1} sum exp(-2 lambda eps) psi^2 / lambda.
double h1_energy(const SpectralEmpirical& se);

/// |grad f|^2 at every grid point, for coefficients `coeffs` of f.
Eigen::VectorXd gradient_energy_density(const ModeSet& modes, const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                                        const GridTransform& transform);

struct HessianSup {
  double value = 0.0;      // grid max of the Hessian operator norm
  double slack = 0.0;      // sup |grad^3 f| * (cell diagonal) / 2
  double certified = 0.0;  // value + slack
};

/// Max over the grid of the Hessian operator norm of f; with `certify` the
/// Lipschitz slack makes `certified` an upper bound on the continuum sup.
HessianSup hessian_sup(const ModeSet& modes, const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                       const GridTransform& transform, bool certify = true);
inline HessianSup hessian_sup(const SpectralEmpirical& se, const GridTransform& transform, bool certify = true) {
  return hessian_sup(se.modes(), se.potential_coeffs(), transform, certify);
}

/// Certified Hessian sup of f is at most xi.
bool flatness_event(const SpectralEmpirical& se, double xi, const GridTransform& transform);

/// Cell masses of a probability density on a uniform grid.
struct GridDensity {
  UniformGrid grid;
  Eigen::VectorXd cells;

  static GridDensity uniform(const UniformGrid& grid);
  /// Throws DensityError unless the cells are nonnegative with unit total.
  void validate() const;
};

/// Point values of u times the cell volume fraction. Negative mass below
/// 1e-6 is clamped and the rest renormalized; more throws DensityError.
GridDensity grid_density(const SpectralEmpirical& se, const GridTransform& transform);

/// Flat little-endian f64 cells plus a JSON sidecar {d, L, n} at path + ".json".
void write_grid_density(const std::string& path, const GridDensity& density);
GridDensity read_grid_density(const std::string& path);

struct KernelNormScaling {
  Eigen::VectorXd eps;
  Eigen::VectorXd values;  // ||grad^n q_eps(., y)||^2 in L2(mu)
  LogFit fit;
  /// (value(eps_min) - value(eps_max)) / (vol / (16 pi^2) log(eps_max / eps_min)).
  double growth_ratio = 0.0;
};

/// Squared L2 norms of derivatives of the Poisson kernel, order n in {0, 1, 2},
/// from the closed-form spectral sums, with a log-log fit against eps.
/// The sum over a cos/sin pair makes the value independent of y.
KernelNormScaling kernel_norm_scaling(int n, const TorusGeometry& geometry, const Eigen::Ref<const Eigen::VectorXd>& eps);

}  // namespace ergot

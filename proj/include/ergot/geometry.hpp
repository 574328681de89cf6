#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <numbers>
#include <optional>

namespace ergot {

/// Flat torus (R / L Z)^d with the normalized Lebesgue measure.
class TorusGeometry {
 public:
  TorusGeometry(int d, double L);

  int dim() const noexcept { return d_; }
  double side() const noexcept { return L_; }
  double volume() const noexcept { return volume_; }
  /// Half the main diagonal of the periodic cell.
  double diameter() const noexcept { return L_ * std::sqrt(double(d_)) / 2.0; }
  /// Angular wave number of the lattice vector e_1, 2 pi / L.
  double wave_unit() const noexcept { return 2.0 * std::numbers::pi / L_; }
  /// Laplace eigenvalue of a lattice vector with squared length k2.
  double eigenvalue(long k2) const noexcept {
    return wave_unit() * wave_unit() * double(k2);
  }
  /// Smallest nonzero eigenvalue.
  double lambda_min() const noexcept { return eigenvalue(1); }

  /// vol / (8 pi^2): limit of (T / log T) E[W_2^2] in dimension four.
  double w2_limit_constant() const noexcept;
  /// vol / (16 pi^2): t^2 times the heat trace as t -> 0 in dimension four.
  double heat_trace_constant() const noexcept;
  /// vol / (32 pi^2): N(lambda) / lambda^2 as lambda -> infinity in dimension four.
  double weyl_constant() const noexcept;

  /// Wraps every coordinate of x into [0, L).
  void wrap(Eigen::Ref<Eigen::VectorXd> x) const;
  /// Geodesic (wrapped) squared distance.
  double squared_distance(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y) const;

  bool operator==(const TorusGeometry&) const = default;

 private:
  int d_;
  double L_;
  double volume_;
};

enum class Parity : int { Cos = 0, Sin = 1 };

/// One real eigenfunction sqrt(2) cos(2 pi k.x / L) or sqrt(2) sin(...),
/// unit norm and zero mean under the normalized Lebesgue measure.
struct EigenPair {
  Eigen::VectorXi k;
  Parity parity;
  double lambda;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x, double L) const;
};

/// Truncated real Fourier eigenbasis without the constant mode.
///
/// Modes come in adjacent (cos, sin) pairs sharing one lattice
/// representative: mode 2j is the cosine and 2j+1 the sine of wave j.
/// Ordering is by |k|^2, then k lexicographically, then parity.
class ModeSet {
 public:
  ModeSet(TorusGeometry geometry, double lambda_max, Eigen::MatrixXi waves);

  const TorusGeometry& geometry() const noexcept { return geometry_; }
  int dim() const noexcept { return geometry_.dim(); }
  double lambda_max() const noexcept { return lambda_max_; }
  Eigen::Index size() const noexcept { return lambdas_.size(); }
  Eigen::Index wave_count() const noexcept { return waves_.cols(); }

  /// d x (size/2) integer matrix of lattice representatives.
  const Eigen::MatrixXi& waves() const noexcept { return waves_; }
  const Eigen::VectorXd& lambdas() const noexcept { return lambdas_; }
  double lambda(Eigen::Index i) const { return lambdas_[i]; }
  Parity parity(Eigen::Index i) const { return Parity(i % 2); }
  Eigen::VectorXi wave(Eigen::Index i) const { return waves_.col(i / 2); }
  EigenPair pair(Eigen::Index i) const { return {wave(i), parity(i), lambda(i)}; }
  /// Largest |k_j| over all waves.
  int max_component() const noexcept { return max_component_; }

  /// Index of the mode with lattice vector k (either sign) and parity.
  /// For -k the sine changes sign; `sign` reports that.
  std::optional<Eigen::Index> find(const Eigen::Ref<const Eigen::VectorXi>& k,
                                   Parity parity, int* sign = nullptr) const;

  /// All eigenfunction values at x.
  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Sum_i c_i phi_i(x).
  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& coefficients,
                  const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  TorusGeometry geometry_;
  double lambda_max_;
  Eigen::MatrixXi waves_;
  Eigen::VectorXd lambdas_;
  int max_component_ = 0;
};

/// Default cap on the number of modes one enumeration may produce.
inline constexpr std::size_t kDefaultModeBudget = std::size_t{1} << 23;

/// Every cos/sin eigenpair with 0 < lambda <= lambda_max.
ModeSet enumerate_modes(const TorusGeometry& geometry, double lambda_max,
                        std::size_t mode_budget = kDefaultModeBudget);

/// Number of lattice points k != 0 with |k|^2 <= k2_max, by direct scan.
std::size_t lattice_count(int d, long k2_max);

/// N(lambda) = #{i : lambda_i <= lambda}.
std::size_t weyl_count(const ModeSet& modes, double lambda);

/// Theta(t) = sum_n exp(-t (2 pi n / L)^2).
double theta(double t, double L);
/// Theta(t) - 1 without cancellation for large t.
double theta_minus_one(double t, double L);

/// sum_i exp(-t lambda_i) = Theta(t)^d - 1.
double heat_trace(double t, const TorusGeometry& geometry);

struct QuadratureOptions {
  double abs_tol = 1e-10;
  unsigned max_depth = 20;
};

/// sum_i exp(-s lambda_i) / lambda_i, as the integral of the heat trace over [s, inf).
double spectral_sum_inv_lambda(double s, const TorusGeometry& geometry,
                               const QuadratureOptions& options = {});

/// sum_i exp(-2 eps lambda_i) / lambda_i^2.
double spectral_sum_inv_lambda_sq(double eps, const TorusGeometry& geometry,
                                  const QuadratureOptions& options = {});

/// heat_trace(t) minus the part carried by `modes`: the truncation tail.
double heat_trace_tail(double t, const ModeSet& modes);

/// 1 + sum_i exp(-t lambda_i) phi_i(x) phi_i(y); throws TruncationError when
/// the heat-trace tail beyond the mode set exceeds `tail_tol`.
double heat_kernel(double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y, const ModeSet& modes,
                   double tail_tol = 1e-10);

/// Spectral coefficients exp(-eps lambda_i) / lambda_i of the Poisson kernel q_eps.
Eigen::VectorXd poisson_kernel_coeffs(double eps, const ModeSet& modes);

}  // namespace ergot

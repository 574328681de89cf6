#pragma once

#include "ergot/geometry.hpp"

#include <Eigen/Dense>

#include <vector>

namespace ergot {

/// a * cos(w k.x) or a * sin(w k.x), with w = 2 pi / L. No sqrt(2) factor.
struct ScalarTerm {
  Eigen::VectorXi k;
  Parity parity = Parity::Cos;
  double amplitude = 0.0;
};

/// Vector-valued trigonometric term: amplitude * cos(w k.x) or * sin(w k.x).
/// Divergence free iff amplitude is orthogonal to k.
struct VectorTerm {
  Eigen::VectorXi k;
  Parity parity = Parity::Cos;
  Eigen::VectorXd amplitude;
};

/// Generator data for Delta + grad V . grad + Z on a torus.
///
/// V is a trigonometric polynomial plus the constant that normalizes
/// exp(V) vol to a probability. Z is a constant vector plus trigonometric
/// terms W; with `weighted` set, the trigonometric part is exp(-V) W, which is
/// mu-divergence free whenever W is divergence free.
///
/// Construction evaluates sup |div(exp(V) Z)| and sup |Z| on a check grid and
/// rejects fields whose residual exceeds 1e-8 (1 + sup |Z|).
class DriftSpec {
 public:
  DriftSpec(const TorusGeometry& geometry, std::vector<ScalarTerm> potential,
            Eigen::VectorXd constant_field, std::vector<VectorTerm> field_terms = {},
            bool weighted = false);

  /// V constant, Z = 0.
  static DriftSpec flat(const TorusGeometry& geometry);
  /// V constant, Z = z.
  static DriftSpec constant(const TorusGeometry& geometry, const Eigen::VectorXd& z);

  const TorusGeometry& geometry() const noexcept { return geometry_; }
  const std::vector<ScalarTerm>& potential_terms() const noexcept { return potential_; }
  const Eigen::VectorXd& constant_field() const noexcept { return constant_field_; }
  const std::vector<VectorTerm>& field_terms() const noexcept { return field_terms_; }
  bool weighted() const noexcept { return weighted_; }

  bool constant_potential() const noexcept { return potential_.empty(); }
  bool zero_field() const noexcept;
  /// Largest |k_j| over every V and Z term.
  int max_component() const noexcept { return max_component_; }

  /// Trigonometric part of V (without the normalizing constant).
  double potential_oscillation(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// V(x) including the normalizing constant.
  double potential(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return potential_oscillation(x) + log_normalizer_;
  }
  /// sum |a|: bound on |V - constant|.
  double potential_bound() const noexcept;

  void potential_gradient(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const;
  void field(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const;
  /// grad V + Z.
  void velocity(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const;

  /// div(exp(V_osc) Z) at x, from the analytic derivatives of every term.
  double mu_divergence(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Check-grid sup of |Z|.
  double field_sup() const noexcept { return field_sup_; }
  /// Check-grid sup of |div(exp(V_osc) Z)|.
  double divergence_residual() const noexcept { return divergence_residual_; }

 private:
  TorusGeometry geometry_;
  std::vector<ScalarTerm> potential_;
  Eigen::VectorXd constant_field_;
  std::vector<VectorTerm> field_terms_;
  bool weighted_ = false;
  int max_component_ = 0;
  double log_normalizer_ = 0.0;
  double field_sup_ = 0.0;
  double divergence_residual_ = 0.0;
};

}  // namespace ergot

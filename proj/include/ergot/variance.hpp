#pragma once

#include "ergot/drift.hpp"
#include "ergot/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>

namespace ergot {

/// Truncated generator L = Delta + grad V . grad + Z in a mu-orthonormal
/// eigenbasis e_1..e_M of the symmetric part on mean-zero functions.
///
/// For constant V the basis is the Fourier ModeSet itself and Z acts
/// analytically (exact, sparse). Otherwise the symmetric part, the mass matrix
/// and Z are assembled by grid quadrature over the ModeSet plus the constant,
/// and the basis comes from the generalized eigenproblem.
///
/// In this basis L = -diag(lambda) + S with S antisymmetric; column i of S
/// holds the coefficients of Z e_i.
class GeneratorMatrix {
 public:
  GeneratorMatrix(const DriftSpec& drift, ModeSet modes);

  const ModeSet& modes() const noexcept { return modes_; }
  bool fourier_basis() const noexcept { return fourier_; }
  Eigen::Index size() const noexcept { return lambdas_.size(); }
  /// Eigenvalues of the symmetric part, ascending for the Galerkin basis and
  /// in ModeSet order for the Fourier basis.
  const Eigen::VectorXd& lambdas() const noexcept { return lambdas_; }
  double lambda(Eigen::Index i) const { return lambdas_[i]; }
  const Eigen::SparseMatrix<double>& antisymmetric_part() const noexcept { return antisym_; }
  /// -diag(lambda) + S.
  Eigen::SparseMatrix<double> matrix() const;
  /// Galerkin basis: (1 + M) x M coefficients of e_i over (1, phi_1..phi_M).
  /// Empty for the Fourier basis.
  const Eigen::MatrixXd& basis() const noexcept { return basis_; }

  /// max_i |<1, Z e_i>_mu|; zero when Z is mu-divergence free.
  double constant_leak() const noexcept { return constant_leak_; }
  /// max |S + S^T| before antisymmetrization (Galerkin only).
  double antisymmetry_defect() const noexcept { return antisymmetry_defect_; }
  /// Smallest eigenvalue magnitude of the constant direction (Galerkin only).
  double kernel_residual() const noexcept { return kernel_residual_; }

  struct Escape {
    double mass = 0.0;             // squared L2(mu) norm of Z e_i outside the basis
    double required_lambda = 0.0;  // cutoff that would contain it
  };
  Escape escape(Eigen::Index i) const;

  /// Solves (-L) u = c on the mean-zero subspace.
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& c) const;
  /// <c, (-L)^{-1} c>; touches only the coupled blocks where c is nonzero.
  double quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& c) const;

 private:
  void assemble_fourier(const DriftSpec& drift);
  void assemble_galerkin(const DriftSpec& drift);
  void factorize_blocks(const Eigen::SparseMatrix<double>& A);

  struct Block;

  ModeSet modes_;
  bool fourier_ = true;
  Eigen::VectorXd lambdas_;
  Eigen::SparseMatrix<double> antisym_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd escape_mass_, escape_lambda_;
  double constant_leak_ = 0.0;
  double antisymmetry_defect_ = 0.0;
  double kernel_residual_ = 0.0;
  std::shared_ptr<const Eigen::SparseLU<Eigen::SparseMatrix<double>>> solver_;
  // Dense LU per connected block of -L when every block is small.
  std::shared_ptr<const std::vector<Block>> blocks_;
  std::vector<int> block_of_;
};

/// V(phi) = <phi, (-L)^{-1} phi> for phi = sum c_i e_i.
double v_form(const Eigen::Ref<const Eigen::VectorXd>& coeffs, const GeneratorMatrix& gen);
/// V(Z e_i); throws TruncationError when Z e_i leaves the basis.
double v_form_z(Eigen::Index i, const GeneratorMatrix& gen);
/// |V(e_i) - (1/lambda_i - V(Z e_i)/lambda_i^2)|.
double variance_identity_residual(Eigen::Index i, const GeneratorMatrix& gen);
/// Leading terms 2/lambda_i - 2 V(Z e_i)/lambda_i^2 of E|psi_i(T)|^2.
double psi_moment_prediction(Eigen::Index i, const GeneratorMatrix& gen, double T);

/// Coefficient-space L2 distance between exp(tL) e_i and
/// exp(-lambda_i t) e_i + int_0^t exp(-lambda_i (t - s)) exp(sL) Z e_i ds,
/// the integral by the midpoint rule with `quad_steps` nodes. Dense; limited
/// to small bases.
double duhamel_residual(Eigen::Index i, const GeneratorMatrix& gen, double t, int quad_steps);

/// Closed forms for constant V and Z = z on the invariant cos/sin block of
/// one wave, with b = (2 pi / L) k . z.
double block_v_form(double lambda, double b);
double block_v_form_z(double lambda, double b);

}  // namespace ergot

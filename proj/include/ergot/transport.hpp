#pragma once

#include "ergot/smoothing.hpp"

namespace ergot {

/// int_0^1 int |grad f|^2 / u_s dmu ds along u_s = 1 + s (u - 1); midpoint rule
/// in s with `steps` nodes, grid mean in x. Throws DensityError if u <= 0 on the grid.
double dm_action(const SpectralEmpirical& se, int steps, const GridTransform& transform);

/// 4 int |grad (-Delta)^{-1}(u - v)|^2 / v dmu for two smoothed densities on
/// the same modes. Throws DensityError if v <= 0 on the grid.
double ledoux_bound(const SpectralEmpirical& u, const SpectralEmpirical& v, const GridTransform& transform);

/// 8 int_{eps'}^{eps} ||u_s - 1||^2 ds = 4 T^{-1} sum (e^{-2 lambda eps'} - e^{-2 lambda eps}) psi^2 / lambda.
double ledoux_telescoped(const SpectralEmpirical& se, double eps_prime);

struct SinkhornOptions {
  double reg = 0.0;  // 0 selects 2 h^2
  int max_iters = 20000;
  double tol = 1e-12;  // L1 marginal violation
  int check_every = 5;
};

struct SinkhornSolve {
  double value = 0.0;  // <a, f> + <b, g>
  int iterations = 0;
  double residual = 0.0;
};

struct SinkhornReport {
  double value = 0.0;  // debiased: OT(a,b) - OT(a,a)/2 - OT(b,b)/2
  double reg = 0.0;
  SinkhornSolve cross, self_a, self_b;
};

/// 2 h^2 for the grid spacing h.
double default_regularization(const UniformGrid& grid);

/// Entropic OT between two grid densities with squared wrapped distance as
/// cost; the Gibbs kernel acts as separable per-axis convolutions. Throws
/// ConvergenceError when the marginal violation stays above tol.
SinkhornSolve sinkhorn_solve(const GridDensity& a, const GridDensity& b, const SinkhornOptions& options);

/// Debiased entropic estimate of W2^2. A precomputed OT(b, b) may be passed
/// to skip that solve.
SinkhornReport sinkhorn_w2(const GridDensity& a, const GridDensity& b, const SinkhornOptions& options,
                           const SinkhornSolve* self_b = nullptr);

/// Exact W2^2 between two densities on a one-dimensional grid (the circle),
/// minimizing the lifted quantile cost over the rotation of the coupling.
double circle_w2_exact(const GridDensity& a, const GridDensity& b);

}  // namespace ergot

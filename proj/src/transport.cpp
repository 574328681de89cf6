#include "ergot/transport.hpp"

#include "ergot/errors.hpp"

#include <cmath>
#include <vector>

namespace ergot {

namespace {

/// Gibbs kernel exp(-wrapped distance^2 / reg) acting per axis.
class SeparableKernel {
 public:
  SeparableKernel(const UniformGrid& grid, double reg) : dims_(grid.dim(), grid.points_per_axis()) {
    const int n = grid.points_per_axis();
    const double h = grid.spacing();
    kernel_.resize(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const int m = std::abs(i - j);
        const double dist = std::min(m, n - m) * h;
        kernel_(i, j) = std::exp(-dist * dist / reg);
      }
    }
  }

  std::vector<double> apply(const std::vector<double>& in) const {
    std::vector<int> dims = dims_;
    std::vector<double> out = in;
    for (std::size_t axis = 0; axis < dims.size(); ++axis) {
      out = apply_along_axis(out, dims, static_cast<int>(axis), kernel_);
    }
    return out;
  }

 private:
  std::vector<int> dims_;
  Eigen::MatrixXd kernel_;
};

void check_same_grid(const GridDensity& a, const GridDensity& b) {
  if (!(a.grid.geometry() == b.grid.geometry()) || a.grid.points_per_axis() != b.grid.points_per_axis()) {
    throw InvalidArgument("sinkhorn: densities live on different grids");
  }
}

/// target / Kx, zero where the target has no mass.
double rescale(const Eigen::VectorXd& target, const std::vector<double>& kx, std::vector<double>& out) {
  double worst = 0.0;
  for (std::size_t i = 0; i < kx.size(); ++i) {
    const double t = target[static_cast<Eigen::Index>(i)];
    if (t == 0.0) {
      out[i] = 0.0;
      continue;
    }
    if (!(kx[i] > 0.0) || !std::isfinite(kx[i])) {
      throw ConvergenceError("sinkhorn: kernel underflow, increase reg", std::numeric_limits<double>::infinity());
    }
    out[i] = t / kx[i];
    if (!std::isfinite(out[i])) {
      throw ConvergenceError("sinkhorn: scaling overflow, increase reg", std::numeric_limits<double>::infinity());
    }
    worst = std::max(worst, out[i]);
  }
  return worst;
}

}  // namespace

double dm_action(const SpectralEmpirical& se, int steps, const GridTransform& transform) {
  if (steps < 1) throw InvalidArgument("dm_action: need at least one step");
  const Eigen::VectorXd u = smoothed_density(se, transform);
  if (u.minCoeff() <= 0.0) throw DensityError("dm_action: density not positive on the grid");
  const Eigen::VectorXd g2 = gradient_energy_density(se.modes(), se.potential_coeffs(), transform);
  Eigen::ArrayXd inv = Eigen::ArrayXd::Zero(u.size());
  for (int j = 0; j < steps; ++j) {
    const double s = (j + 0.5) / steps;
    inv += 1.0 / (1.0 + s * (u.array() - 1.0));
  }
  return (g2.array() * inv).sum() / steps / double(u.size());
}

double ledoux_bound(const SpectralEmpirical& u, const SpectralEmpirical& v, const GridTransform& transform) {
  if (u.modes().size() != v.modes().size() || !(u.modes().geometry() == v.modes().geometry())) {
    throw InvalidArgument("ledoux_bound: densities use different mode sets");
  }
  const Eigen::VectorXd denom = smoothed_density(v, transform);
  if (denom.minCoeff() <= 0.0) throw DensityError("ledoux_bound: denominator not positive on the grid");
  const Eigen::VectorXd g =
      ((u.density_coeffs() - v.density_coeffs()).array() / u.modes().lambdas().array()).matrix();
  const Eigen::VectorXd g2 = gradient_energy_density(u.modes(), g, transform);
  return 4.0 * (g2.array() / denom.array()).sum() / double(denom.size());
}

double ledoux_telescoped(const SpectralEmpirical& se, double eps_prime) {
  if (!(eps_prime >= 0.0) || eps_prime > se.eps()) {
    throw InvalidArgument("ledoux_telescoped: need 0 <= eps' <= eps");
  }
  const Eigen::ArrayXd lam = se.modes().lambdas().array();
  const Eigen::ArrayXd gap = (-2.0 * eps_prime * lam).exp() - (-2.0 * se.eps() * lam).exp();
  return 4.0 * (gap * se.psi().array().square() / lam).sum() / se.horizon();
}

double default_regularization(const UniformGrid& grid) {
  const double h = grid.spacing();
  return 2.0 * h * h;
}

SinkhornSolve sinkhorn_solve(const GridDensity& a, const GridDensity& b, const SinkhornOptions& options) {
  check_same_grid(a, b);
  a.validate();
  b.validate();
  const double reg = options.reg > 0.0 ? options.reg : default_regularization(a.grid);
  if (options.max_iters < 1 || options.check_every < 1 || !(options.tol > 0.0)) {
    throw InvalidArgument("sinkhorn: invalid iteration options");
  }
  const SeparableKernel kernel(a.grid, reg);
  const std::size_t size = static_cast<std::size_t>(a.cells.size());
  std::vector<double> u(size, 1.0), v(size, 1.0);

  SinkhornSolve out;
  out.residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iters; ++it) {
    rescale(a.cells, kernel.apply(v), u);
    rescale(b.cells, kernel.apply(u), v);
    out.iterations = it;
    if (it % options.check_every != 0 && it != options.max_iters) continue;
    const std::vector<double> kv = kernel.apply(v);
    double residual = 0.0;
    for (std::size_t i = 0; i < size; ++i) residual += std::abs(u[i] * kv[i] - a.cells[Eigen::Index(i)]);
    out.residual = residual;
    if (residual < options.tol) break;
  }
  if (!(out.residual < options.tol)) {
    throw ConvergenceError("sinkhorn: marginal violation above tolerance", out.residual);
  }
  double value = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const Eigen::Index k = Eigen::Index(i);
    if (a.cells[k] > 0.0) value += a.cells[k] * reg * std::log(u[i]);
    if (b.cells[k] > 0.0) value += b.cells[k] * reg * std::log(v[i]);
  }
  out.value = value;
  return out;
}

SinkhornReport sinkhorn_w2(const GridDensity& a, const GridDensity& b, const SinkhornOptions& options,
                           const SinkhornSolve* self_b) {
  SinkhornReport out;
  out.reg = options.reg > 0.0 ? options.reg : default_regularization(a.grid);
  SinkhornOptions opts = options;
  opts.reg = out.reg;
  out.cross = sinkhorn_solve(a, b, opts);
  out.self_a = sinkhorn_solve(a, a, opts);
  out.self_b = self_b ? *self_b : sinkhorn_solve(b, b, opts);
  out.value = out.cross.value - 0.5 * out.self_a.value - 0.5 * out.self_b.value;
  return out;
}

}  // namespace ergot

namespace ergot {

namespace {

// Lifted quantile function of a circle histogram: Q(t + 1) = Q(t) + L.
class LiftedQuantile {
 public:
  explicit LiftedQuantile(const GridDensity& p) : L_(p.grid.geometry().side()), cum_(p.cells.size() + 1) {
    cum_[0] = 0.0;
    for (Eigen::Index i = 0; i < p.cells.size(); ++i) {
      cum_[std::size_t(i) + 1] = cum_[std::size_t(i)] + p.cells[i];
      x_.push_back(p.grid.point(i)[0]);
    }
    cum_.back() = 1.0;
  }

  double operator()(double t) const {
    const double k = std::floor(t);
    const double r = t - k;
    auto it = std::upper_bound(cum_.begin(), cum_.end(), r);
    std::size_t i = std::size_t(it - cum_.begin()) - 1;
    i = std::min(i, x_.size() - 1);
    return x_[i] + k * L_;
  }

  // Breakpoints of t -> Q(t + shift) inside (0, 1).
  void breaks(double shift, std::vector<double>& out) const {
    for (double c : cum_) {
      double t = c - shift;
      t -= std::floor(t);
      if (t > 0.0 && t < 1.0) out.push_back(t);
    }
  }

 private:
  double L_;
  std::vector<double> cum_;
  std::vector<double> x_;
};

}  // namespace

double circle_w2_exact(const GridDensity& a, const GridDensity& b) {
  if (a.grid.dim() != 1 || !(a.grid.geometry() == b.grid.geometry()) ||
      a.grid.points_per_axis() != b.grid.points_per_axis()) throw InvalidArgument("circle_w2_exact: needs matching 1-d grids");
  a.validate();
  b.validate();
  const LiftedQuantile qa(a), qb(b);
  std::vector<double> pts;
  auto cost = [&](double theta) {
    pts.assign({0.0, 1.0});
    qa.breaks(0.0, pts);
    qb.breaks(theta, pts);
    std::sort(pts.begin(), pts.end());
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
      const double w = pts[j + 1] - pts[j];
      if (w <= 0.0) continue;
      const double t = 0.5 * (pts[j] + pts[j + 1]);
      const double dx = qa(t) - qb(t + theta);
      sum += w * dx * dx;
    }
    return sum;
  };
  // The cost is convex in the rotation theta; golden-section search over one period.
  const double g = (std::sqrt(5.0) - 1) / 2;
  double lo = -1.0, hi = 1.0;
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = cost(x1), f2 = cost(x2);
  while (hi - lo > 1e-13) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = cost(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = cost(x2);
    }
  }
  return std::min({f1, f2, cost(0.5 * (lo + hi))});
}

}  // namespace ergot

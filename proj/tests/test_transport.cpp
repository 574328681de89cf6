#include "ergot/errors.hpp"
#include "ergot/transport.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace ergot;

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const ModeSet> modes_ptr(int d, double lambda_max) {
  return std::make_shared<const ModeSet>(enumerate_modes(TorusGeometry(d, 2 * kPi), lambda_max));
}

Eigen::VectorXd random_vector(Eigen::Index n, unsigned seed, double scale = 1.0) {
  boost::random::mt19937 gen(seed);
  boost::random::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = scale * normal(gen);
  return v;
}

Eigen::Index cos_index(const ModeSet& m, std::initializer_list<int> k) {
  Eigen::VectorXi v(static_cast<Eigen::Index>(k.size()));
  int j = 0;
  for (int c : k) v[j++] = c;
  int sign = 1;
  const auto idx = m.find(v, Parity::Cos, &sign);
  REQUIRE(idx.has_value());
  return *idx;
}

GridDensity wrapped_gaussian(const UniformGrid& grid, double var) {
  Eigen::VectorXd cells(grid.size());
  const double L = grid.geometry().side();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double x = grid.point(i)[0];
    double s = 0.0;
    for (int m = -20; m <= 20; ++m) s += std::exp(-(x - m * L) * (x - m * L) / (2 * var));
    cells[i] = s;
  }
  cells /= cells.sum();
  return {grid, cells};
}

}  // namespace

TEST_CASE("smoothing schedule") {
  CHECK(smoothing_schedule(1e4, 4.0) == doctest::Approx(std::pow(std::log(1e4), 4) / 1e4).epsilon(1e-15));
  CHECK_THROWS_AS(smoothing_schedule(1.0, 4.0), InvalidArgument);
  CHECK_THROWS_AS(smoothing_schedule(10.0, 0.0), InvalidArgument);
}

TEST_CASE("smoothed density and potential coefficients") {
  const auto modes = modes_ptr(2, 10.0);
  const GridTransform tr(UniformGrid(modes->geometry(), 16), modes->max_component());

  const SpectralEmpirical zero(modes, Eigen::VectorXd::Zero(modes->size()), 100.0, 0.01);
  CHECK((smoothed_density(zero, tr).array() - 1.0).abs().maxCoeff() == 0.0);

  // u = 1 + phi_1 for the cos mode of k = (1, 0).
  const Eigen::Index i1 = cos_index(*modes, {1, 0});
  const double T = 25.0, eps = 0.3;
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(modes->size());
  psi[i1] = std::sqrt(T) / std::exp(-modes->lambda(i1) * eps);
  const SpectralEmpirical one(modes, psi, T, eps);
  const Eigen::VectorXd u = smoothed_density(one, tr);
  CHECK(u.maxCoeff() == doctest::Approx(1 + std::numbers::sqrt2).epsilon(1e-13));
  CHECK(u.minCoeff() == doctest::Approx(1 - std::numbers::sqrt2).epsilon(1e-13));
  CHECK(one.potential_coeffs()[i1] == doctest::Approx(1.0).epsilon(1e-14));

  const SpectralEmpirical rnd(modes, random_vector(modes->size(), 3), 50.0, 0.05);
  CHECK(std::abs(smoothed_density(rnd, tr).mean() - 1.0) < 1e-12);
  const Eigen::VectorXd f = rnd.potential_coeffs();
  const Eigen::VectorXd lf = (f.array() * modes->lambdas().array()).matrix();
  CHECK((lf - rnd.density_coeffs()).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::Index i2 = cos_index(*modes, {2, 0});
  Eigen::VectorXd c = Eigen::VectorXd::Zero(modes->size());
  c[i2] = 1.0;
  const SpectralEmpirical lam4(modes, c, 1.0, 0.0);
  CHECK(lam4.potential_coeffs()[i2] == doctest::Approx(0.25).epsilon(1e-15));

  Eigen::MatrixXd pts(2, 3);
  pts << 0.1, 1.2, 4.0, 2.2, 0.3, 5.9;
  const Eigen::VectorXd at = smoothed_density(rnd, pts);
  for (int p = 0; p < 3; ++p) {
    CHECK(at[p] == doctest::Approx(1.0 + modes->evaluate(rnd.density_coeffs(), pts.col(p))).epsilon(1e-15));
  }
}

TEST_CASE("h1 energy") {
  const auto modes = modes_ptr(2, 20.0);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(modes->size());
  psi[cos_index(*modes, {0, 1})] = 1.0;
  CHECK(h1_energy(SpectralEmpirical(modes, psi, 1.0, 0.0)) == doctest::Approx(1.0).epsilon(1e-15));

  const SpectralEmpirical se(modes, random_vector(modes->size(), 5), 40.0, 0.02);
  const Eigen::VectorXd f = se.potential_coeffs();
  const double parseval = (f.array().square() * modes->lambdas().array()).sum();
  CHECK(std::abs(h1_energy(se) - parseval) < 1e-12 * (1 + parseval));

  const GridTransform tr(UniformGrid(modes->geometry(), 32), modes->max_component());
  const double quad = gradient_energy_density(*modes, f, tr).mean();
  CHECK(std::abs(quad - h1_energy(se)) < 1e-8);

  double prev = h1_energy(se);
  for (double eps : {0.05, 0.1, 0.5, 1.0}) {
    const double e = h1_energy(se.with_eps(eps));
    CHECK(e <= prev);
    prev = e;
  }
}

TEST_CASE("hessian sup and flatness") {
  const auto modes = modes_ptr(4, 1.0);
  const GridTransform tr(UniformGrid(modes->geometry(), 8), modes->max_component());
  Eigen::VectorXd c = Eigen::VectorXd::Zero(modes->size());
  c[cos_index(*modes, {1, 0, 0, 0})] = 1 / std::numbers::sqrt2;
  const HessianSup h = hessian_sup(*modes, c, tr);
  CHECK(h.value >= 1 - 1e-6);
  CHECK(h.value <= 1 + 1e-12);
  CHECK(h.slack == doctest::Approx(tr.grid().cell_diagonal() / 2).epsilon(1e-14));
  CHECK(h.certified == doctest::Approx(h.value + h.slack));

  const SpectralEmpirical zero(modes, Eigen::VectorXd::Zero(modes->size()), 10.0, 0.1);
  CHECK(hessian_sup(zero, tr).certified == 0.0);
  CHECK(flatness_event(zero, 1e-3, tr));
  CHECK_THROWS_AS(flatness_event(zero, 0.0, tr), InvalidArgument);

  // f = cos x1 through psi with T = 1, eps = 0.
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(modes->size());
  psi[cos_index(*modes, {1, 0, 0, 0})] = 1 / std::numbers::sqrt2;
  CHECK_FALSE(flatness_event(SpectralEmpirical(modes, psi, 1.0, 0.0), 0.5, tr));
}

TEST_CASE("certified hessian bound dominates finer grids") {
  const auto all = enumerate_modes(TorusGeometry(2, 2 * kPi), 10.0);
  for (unsigned seed = 0; seed < 5; ++seed) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(all.size());
    boost::random::mt19937 gen(seed);
    for (int j = 0; j < 10; ++j) c[gen() % all.size()] = random_vector(1, seed * 31 + j)[0];
    const HessianSup coarse = hessian_sup(all, c, GridTransform(UniformGrid(all.geometry(), 8), 3));
    const HessianSup fine = hessian_sup(all, c, GridTransform(UniformGrid(all.geometry(), 64), 3), false);
    CHECK(coarse.certified >= fine.value);
    CHECK(fine.value >= coarse.value - 1e-12);
  }
}

TEST_CASE("grid density export and clamping") {
  const auto modes = modes_ptr(2, 5.0);
  const GridTransform tr(UniformGrid(modes->geometry(), 16), modes->max_component());
  const SpectralEmpirical se(modes, random_vector(modes->size(), 9, 0.3), 10.0, 0.05);
  const GridDensity gd = grid_density(se, tr);
  CHECK(gd.cells.minCoeff() >= 0.0);
  CHECK(std::abs(gd.cells.sum() - 1.0) < 1e-12);

  const auto dir = std::filesystem::temp_directory_path() / "ergot_test_transport";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "density.f64").string();
  write_grid_density(path, gd);
  const GridDensity back = read_grid_density(path);
  CHECK(back.grid.points_per_axis() == 16);
  CHECK(back.grid.geometry() == gd.grid.geometry());
  CHECK(back.cells == gd.cells);
  CHECK(std::filesystem::file_size(path) == 8u * 256u);
  std::filesystem::remove_all(dir);

  Eigen::VectorXd psi = Eigen::VectorXd::Zero(modes->size());
  psi[cos_index(*modes, {1, 0})] = 1.0;
  CHECK_THROWS_AS(grid_density(SpectralEmpirical(modes, psi, 1.0, 0.0), tr), DensityError);

  // A single grid point at -1e-5: clamped, then renormalized.
  psi[cos_index(*modes, {1, 0})] = (1 + 1e-5) / std::numbers::sqrt2;
  const GridDensity clamped = grid_density(SpectralEmpirical(modes, psi, 1.0, 0.0), tr);
  CHECK(clamped.cells.minCoeff() == 0.0);
  CHECK(std::abs(clamped.cells.sum() - 1.0) < 1e-12);

  GridDensity bad = GridDensity::uniform(tr.grid());
  bad.cells[0] *= 2;
  CHECK_THROWS_AS(bad.validate(), DensityError);
}

TEST_CASE("dm action") {
  const auto modes = modes_ptr(1, 1.0);
  const GridTransform tr(UniformGrid(modes->geometry(), 32), modes->max_component());
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(modes->size());
  const Eigen::Index i1 = cos_index(*modes, {1});
  psi[i1] = 0.1;
  const SpectralEmpirical se(modes, psi, 1.0, 0.0);

  // Exact in s: int_0^1 ds / (1 + s(u - 1)) = log(u) / (u - 1).
  const double a = 0.1 * std::numbers::sqrt2;
  auto integrand = [&](double x) {
    const double u = 1 + a * std::cos(x);
    const double g2 = a * a * std::sin(x) * std::sin(x);
    return g2 * std::log(u) / (u - 1);
  };
  const double oracle =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 2 * kPi, 15, 1e-15) / (2 * kPi);
  CHECK(std::abs(dm_action(se, 64, tr) - oracle) < 1e-6);

  const SpectralEmpirical flat(modes, Eigen::VectorXd::Zero(modes->size()), 1.0, 0.0);
  CHECK(dm_action(flat, 8, tr) == 0.0);

  const auto m2 = modes_ptr(2, 8.0);
  const GridTransform tr2(UniformGrid(m2->geometry(), 32), m2->max_component());
  for (unsigned seed = 0; seed < 4; ++seed) {
    const SpectralEmpirical r(m2, random_vector(m2->size(), 40 + seed, 0.05), 1.0, 0.0);
    const double eta = (smoothed_density(r, tr2).array() - 1.0).abs().maxCoeff();
    REQUIRE(eta < 1.0);
    const double e = h1_energy(r), action = dm_action(r, 32, tr2);
    CHECK(action >= e / (1 + eta));
    CHECK(action <= e / (1 - eta));
  }

  psi[i1] = 1.0;
  CHECK_THROWS_AS(dm_action(SpectralEmpirical(modes, psi, 1.0, 0.0), 8, tr), DensityError);
}

TEST_CASE("ledoux bound") {
  const auto modes = modes_ptr(2, 8.0);
  const GridTransform tr(UniformGrid(modes->geometry(), 32), modes->max_component());
  const SpectralEmpirical u(modes, random_vector(modes->size(), 12, 0.2), 20.0, 0.05);
  CHECK(ledoux_bound(u, u, tr) == 0.0);

  const SpectralEmpirical one(modes, Eigen::VectorXd::Zero(modes->size()), 20.0, 0.05);
  const double c = 0.3;
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(modes->size());
  psi[cos_index(*modes, {1, 0})] = c;
  CHECK(ledoux_bound(SpectralEmpirical(modes, psi, 1.0, 0.0), one, tr) ==
        doctest::Approx(4 * c * c).epsilon(1e-12));
  CHECK(ledoux_bound(u, one, tr) == doctest::Approx(4 * h1_energy(u)).epsilon(1e-10));

  const Eigen::ArrayXd lam = modes->lambdas().array();
  for (unsigned seed = 0; seed < 20; ++seed) {
    const SpectralEmpirical s(modes, random_vector(modes->size(), 100 + seed), 50.0, 0.2);
    const double eps_prime = 0.01 * (seed + 1);
    const Eigen::ArrayXd diff = ((-eps_prime * lam).exp() - (-s.eps() * lam).exp()) * s.psi().array();
    const double unit_denominator = 4 * (diff.square() / lam).sum() / s.horizon();
    CHECK(unit_denominator <= ledoux_telescoped(s, eps_prime) + 1e-10);
  }
  CHECK(ledoux_telescoped(u, u.eps()) == 0.0);
  CHECK_THROWS_AS(ledoux_telescoped(u, 1.0), InvalidArgument);
}

TEST_CASE("sinkhorn against exact discrete transport in one dimension") {
  const UniformGrid grid(TorusGeometry(1, 2 * kPi), 64);
  const GridDensity uniform = GridDensity::uniform(grid);
  const SinkhornOptions opts{.reg = 0.0, .max_iters = 20000, .tol = 1e-13};
  const std::pair<double, double> lp[] = {{0.05, 2.27477650288976}, {0.2, 1.45122126273407}, {1.0, 0.272760885735482}};
  for (const auto& [e1, exact] : lp) {
    const SinkhornReport r = sinkhorn_w2(wrapped_gaussian(grid, 2 * e1), uniform, opts);
    CHECK(std::abs(r.value - exact) < 0.02 * exact);
    CHECK(r.cross.residual < 1e-13);
    CHECK(circle_w2_exact(wrapped_gaussian(grid, 2 * e1), uniform) == doctest::Approx(exact).epsilon(1e-9));
  }
  CHECK(circle_w2_exact(uniform, uniform) < 1e-13);
  const GridDensity g = wrapped_gaussian(grid, 0.3);
  Eigen::VectorXd rolled(64);
  for (int i = 0; i < 64; ++i) rolled[(i + 5) % 64] = g.cells[i];
  CHECK(circle_w2_exact(g, {grid, rolled}) == doctest::Approx(0.240729872387359).epsilon(1e-9));
  CHECK(circle_w2_exact(g, {grid, rolled}) <= std::pow(5 * grid.spacing(), 2));
}

TEST_CASE("sinkhorn properties") {
  const UniformGrid grid(TorusGeometry(2, 2 * kPi), 16);
  const auto modes = modes_ptr(2, 5.0);
  const GridTransform tr(grid, modes->max_component());
  const GridDensity a = grid_density(SpectralEmpirical(modes, random_vector(modes->size(), 21, 0.3), 16.0, 0.05), tr);
  const GridDensity b = grid_density(SpectralEmpirical(modes, random_vector(modes->size(), 22, 0.3), 16.0, 0.05), tr);
  const SinkhornOptions opts;

  CHECK(std::abs(sinkhorn_w2(a, a, opts).value) < 1e-8);
  const double ab = sinkhorn_w2(a, b, opts).value, ba = sinkhorn_w2(b, a, opts).value;
  CHECK(ab > 0.0);
  CHECK(std::abs(ab - ba) <= 1e-10 * (1 + ab));

  const SinkhornSolve self_b = sinkhorn_solve(b, b, opts);
  CHECK(sinkhorn_w2(a, b, opts, &self_b).value == doctest::Approx(ab).epsilon(1e-12));

  const UniformGrid line(TorusGeometry(1, 2 * kPi), 32);
  Eigen::VectorXd shifted = Eigen::VectorXd::Zero(32);
  Eigen::VectorXd base = Eigen::VectorXd::Zero(32);
  for (int i = 0; i < 32; i += 2) base[i] = 1.0 / 16;
  for (int i = 1; i < 32; i += 2) shifted[i] = 1.0 / 16;
  // Uniform on the even and odd sublattices: a shift by one cell.
  const double shift = sinkhorn_w2({line, base}, {line, shifted}, opts).value;
  const double h = line.spacing();
  CHECK(shift == doctest::Approx(h * h).epsilon(0.05));
  CHECK(std::abs(sinkhorn_w2(GridDensity::uniform(line), GridDensity::uniform(line), opts).value) < 1e-12);

  SinkhornOptions tight = opts;
  tight.max_iters = 1;
  tight.check_every = 1;
  try {
    sinkhorn_solve(a, b, tight);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > tight.tol);
  }

  SinkhornOptions tiny = opts;
  tiny.reg = 1e-5;
  CHECK_THROWS_AS(sinkhorn_solve(wrapped_gaussian(UniformGrid(TorusGeometry(1, 2 * kPi), 64), 0.1),
                                 GridDensity::uniform(UniformGrid(TorusGeometry(1, 2 * kPi), 64)), tiny),
                  ConvergenceError);
}

TEST_CASE("kernel norm scaling") {
  const TorusGeometry g(4, 2 * kPi);
  Eigen::VectorXd eps(5);
  eps << 1e-1, std::pow(10, -1.5), 1e-2, std::pow(10, -2.5), 1e-3;
  CHECK(kernel_norm_scaling(2, g, eps).fit.slope == doctest::Approx(-2.0).epsilon(0.1));
  CHECK(kernel_norm_scaling(1, g, eps).fit.slope == doctest::Approx(-1.0).epsilon(0.1));
  CHECK(kernel_norm_scaling(0, g, eps).growth_ratio == doctest::Approx(1.0).epsilon(0.15));

  Eigen::VectorXd narrow(2);
  narrow << 1e-2, 5e-2;
  CHECK_THROWS_AS(kernel_norm_scaling(2, g, narrow), InvalidArgument);
  CHECK_THROWS_AS(kernel_norm_scaling(2, TorusGeometry(2, 2 * kPi), eps), InvalidArgument);
  CHECK_THROWS_AS(kernel_norm_scaling(3, g, eps), InvalidArgument);
}

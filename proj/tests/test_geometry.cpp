#include "ergot/errors.hpp"
#include "ergot/geometry.hpp"
#include "ergot/grid.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ergot;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent oracles: plain loops over the integer lattice.
double direct_theta(double t, double L, int n_max) {
  double s = 0.0;
  for (int n = -n_max; n <= n_max; ++n) s += std::exp(-t * std::pow(2 * kPi * n / L, 2));
  return s;
}

template <typename Fn>
double lattice_sum_4d(int K, Fn&& term) {
  double s = 0.0;
  for (int a = -K; a <= K; ++a)
    for (int b = -K; b <= K; ++b)
      for (int c = -K; c <= K; ++c)
        for (int e = -K; e <= K; ++e) {
          const long k2 = long(a) * a + long(b) * b + long(c) * c + long(e) * e;
          if (k2 > 0) s += term(k2);
        }
  return s;
}

long brute_count_4d(long k2max) {
  const int K = int(std::sqrt(double(k2max)));
  return long(lattice_sum_4d(K, [&](long k2) { return k2 <= k2max ? 1.0 : 0.0; }));
}

}  // namespace

TEST_CASE("torus geometry basics") {
  const TorusGeometry g(4, 2 * kPi);
  CHECK(g.volume() == doctest::Approx(std::pow(2 * kPi, 4)));
  CHECK(g.diameter() == doctest::Approx(2 * kPi));
  CHECK(g.w2_limit_constant() == doctest::Approx(2 * kPi * kPi));
  CHECK(g.heat_trace_constant() == doctest::Approx(kPi * kPi));
  CHECK(g.weyl_constant() == doctest::Approx(kPi * kPi / 2));
  CHECK_THROWS_AS(TorusGeometry(5, 1.0), InvalidArgument);
  CHECK_THROWS_AS(TorusGeometry(2, -1.0), InvalidArgument);

  Eigen::VectorXd x(4);
  x << -0.1, 2 * kPi + 0.2, 3.0, 0.0;
  g.wrap(x);
  CHECK(x[0] == doctest::Approx(2 * kPi - 0.1));
  CHECK(x[1] == doctest::Approx(0.2));
  Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd z(4);
  z << 2 * kPi - 0.5, 0.0, 0.0, 0.0;
  CHECK(g.squared_distance(y, z) == doctest::Approx(0.25));
}

TEST_CASE("enumerate_modes small cases") {
  const ModeSet m1 = enumerate_modes(TorusGeometry(1, 2 * kPi), 1.5);
  REQUIRE(m1.size() == 2);
  CHECK(m1.lambda(0) == doctest::Approx(1.0));
  CHECK(m1.parity(0) == Parity::Cos);
  CHECK(m1.parity(1) == Parity::Sin);

  const ModeSet m4 = enumerate_modes(TorusGeometry(4, 2 * kPi), 1.0);
  CHECK(m4.size() == 8);
  for (Eigen::Index i = 0; i < m4.size(); ++i) CHECK(m4.lambda(i) == doctest::Approx(1.0));
  // Representatives are lexicographically positive and distinct.
  for (Eigen::Index j = 0; j < m4.wave_count(); ++j) CHECK(m4.waves().col(j).sum() == 1);

  CHECK_THROWS_AS(enumerate_modes(TorusGeometry(4, 2 * kPi), -1.0), InvalidArgument);
  CHECK_THROWS_AS(enumerate_modes(TorusGeometry(4, 2 * kPi), 1e4, 1000), InvalidArgument);
}

TEST_CASE("mode count matches a brute-force lattice scan") {
  const ModeSet m = enumerate_modes(TorusGeometry(4, 2 * kPi), 100.0);
  CHECK(long(m.size()) == brute_count_4d(100));
  // Sorted ascending and deterministic.
  for (Eigen::Index i = 1; i < m.size(); ++i) CHECK(m.lambda(i - 1) <= m.lambda(i));
  const ModeSet again = enumerate_modes(TorusGeometry(4, 2 * kPi), 100.0);
  CHECK(again.waves() == m.waves());
}

TEST_CASE("find locates modes for either sign of k") {
  const ModeSet m = enumerate_modes(TorusGeometry(2, 2 * kPi), 10.0);
  Eigen::VectorXi k(2);
  k << -1, 2;
  int sign = 0;
  auto idx = m.find(k, Parity::Sin, &sign);
  REQUIRE(idx.has_value());
  CHECK(sign == -1);
  CHECK(m.wave(*idx) == -k);
  k << 5, 5;
  CHECK_FALSE(m.find(k, Parity::Cos).has_value());
}

TEST_CASE("weyl_count") {
  const TorusGeometry g(4, 2 * kPi);
  const ModeSet m = enumerate_modes(g, 400.0);
  CHECK(weyl_count(m, 0.5) == 0);
  CHECK(weyl_count(m, 1.0) == 8);
  const double c = g.weyl_constant();
  CHECK(std::abs(double(weyl_count(m, 100.0)) / 1e4 / c - 1.0) < 0.08);
  CHECK(std::abs(double(weyl_count(m, 400.0)) / 1.6e5 / c - 1.0) < 0.03);
  CHECK(long(weyl_count(m, 400.0)) == brute_count_4d(400));
  CHECK_THROWS_AS(weyl_count(m, 401.0), InvalidArgument);
}

TEST_CASE("theta function") {
  const double L = 2 * kPi;
  CHECK(theta(1.0, L) == doctest::Approx(direct_theta(1.0, L, 10)).epsilon(1e-14));
  CHECK(theta(1.0, L) == doctest::Approx(1.772637).epsilon(1e-6));
  CHECK(std::abs(theta(50.0, L) - 1.0) < 1e-20);
  // Small t uses the dual series; compare against the slowly converging direct sum.
  CHECK(theta(1e-3, L) == doctest::Approx(direct_theta(1e-3, L, 2000)).epsilon(1e-13));
  CHECK(theta(1e-3, L) == doctest::Approx(56.0500).epsilon(1e-5));
  CHECK(theta(1e-3, L) * std::sqrt(1e-3 / kPi) == doctest::Approx(1.0).epsilon(1e-12));
  // Side length enters through t (2 pi / L)^2.
  CHECK(theta(0.25, 1.0) == doctest::Approx(direct_theta(0.25, 1.0, 50)).epsilon(1e-13));
  CHECK(theta_minus_one(100.0, L) == doctest::Approx(2 * std::exp(-100.0)).epsilon(1e-12));
  CHECK_THROWS_AS(theta(0.0, L), InvalidArgument);
}

TEST_CASE("heat trace") {
  const double L = 2 * kPi;
  const TorusGeometry g4(4, L);
  const double h = heat_trace(1e-3, g4);
  CHECK(h == doctest::Approx(std::pow(direct_theta(1e-3, L, 2000), 4) - 1).epsilon(1e-12));
  CHECK(std::abs(1e-6 * h / (kPi * kPi) - 1.0) < 1e-3);
  CHECK(heat_trace(1.0, TorusGeometry(1, L)) == doctest::Approx(0.772637).epsilon(1e-6));
  for (int d = 1; d <= 4; ++d) {
    const double v = heat_trace(100.0, TorusGeometry(d, L));
    CHECK(v == doctest::Approx(2 * d * std::exp(-100.0)).epsilon(1e-9));
  }
  // Agreement with the mode sum plus its tail, and strict monotonicity.
  const ModeSet m = enumerate_modes(g4, 60.0);
  CHECK(heat_trace_tail(1.0, m) < 1e-20);
  double prev = heat_trace(0.01, g4);
  for (double t = 0.02; t < 5; t *= 1.7) {
    const double cur = heat_trace(t, g4);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("spectral sums against brute-force mode sums") {
  const TorusGeometry g(4, 2 * kPi);
  const double direct1 = lattice_sum_4d(8, [](long k2) {
    return k2 <= 60 ? std::exp(-double(k2)) / double(k2) : 0.0;
  });
  CHECK(std::abs(spectral_sum_inv_lambda(1.0, g) - direct1) < 1e-10);

  const double direct2 = lattice_sum_4d(8, [](long k2) {
    return k2 <= 60 ? std::exp(-2.0 * double(k2)) / double(k2 * k2) : 0.0;
  });
  CHECK(std::abs(spectral_sum_inv_lambda_sq(1.0, g) - direct2) < 1e-10);
}

TEST_CASE("spectral sums: asymptotics and limits") {
  const double L = 2 * kPi;
  const TorusGeometry g(4, L);
  const double s = 1e-3;
  CHECK(std::abs(s * spectral_sum_inv_lambda(s, g) / (kPi * kPi) - 1.0) < 0.02);

  const double slope = spectral_sum_inv_lambda_sq(1e-4, g) - spectral_sum_inv_lambda_sq(1e-2, g);
  CHECK(std::abs(slope / (kPi * kPi * std::log(100.0)) - 1.0) < 0.05);

  const TorusGeometry g1(1, L);
  CHECK(spectral_sum_inv_lambda(30.0, g1) == doctest::Approx(2 * std::exp(-30.0)).epsilon(1e-10));

  double prev = spectral_sum_inv_lambda_sq(0.01, g);
  for (double e : {0.1, 1.0, 3.0, 10.0}) {
    const double cur = spectral_sum_inv_lambda_sq(e, g);
    CHECK(cur < prev);
    CHECK(cur > 0.0);
    prev = cur;
  }
  CHECK(spectral_sum_inv_lambda(0.5, g) > spectral_sum_inv_lambda(0.6, g));
  CHECK_THROWS_AS(spectral_sum_inv_lambda(0.0, g), InvalidArgument);
}

TEST_CASE("heat kernel") {
  const double L = 2 * kPi;
  const TorusGeometry g2(2, L);
  const ModeSet m = enumerate_modes(g2, 60.0);
  const UniformGrid grid(g2, 32);
  Eigen::VectorXd x(2);
  x << 0.3, 1.7;
  double integral = 0.0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) integral += heat_kernel(0.5, x, grid.point(i), m);
  CHECK(integral / double(grid.size()) == doctest::Approx(1.0).epsilon(1e-8));

  Eigen::VectorXd y(2);
  y << 4.0, 0.1;
  CHECK(heat_kernel(0.5, x, y, m) == heat_kernel(0.5, y, x, m));

  // One dimension: Poisson summation of the wrapped Gaussian kernel.
  const ModeSet m1 = enumerate_modes(TorusGeometry(1, L), 100.0);
  const double t = 0.5;
  double wrapped = 0.0;
  for (int n = -10; n <= 10; ++n) wrapped += std::exp(-std::pow(n * L, 2) / (4 * t));
  wrapped *= L / std::sqrt(4 * kPi * t);
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);
  CHECK(std::abs(heat_kernel(t, origin, origin, m1) - wrapped) < 1e-8);

  CHECK_THROWS_AS(heat_kernel(1e-3, x, y, m), TruncationError);
}

TEST_CASE("poisson kernel coefficients") {
  const ModeSet m = enumerate_modes(TorusGeometry(4, 2 * kPi), 30.0);
  const Eigen::VectorXd c0 = poisson_kernel_coeffs(0.0, m);
  CHECK(c0[0] == doctest::Approx(1.0));
  const Eigen::VectorXd c = poisson_kernel_coeffs(0.1, m);
  for (Eigen::Index i = 1; i < m.size(); ++i) {
    if (m.lambda(i) > m.lambda(i - 1)) CHECK(c[i] < c[i - 1]);
  }
  // Coefficient equals int_0^inf exp(-(t + eps) lambda) dt; midpoint rule, error O(h^2).
  const double eps = 0.1, lam = m.lambda(0);
  double q = 0.0;
  const int steps = 400000;
  const double h = 40.0 / steps;
  for (int j = 0; j < steps; ++j) q += std::exp(-((j + 0.5) * h + eps) * lam) * h;
  CHECK(std::abs(q - c[0]) < 1e-8);
}

TEST_CASE("orthonormality on grids: Parseval and mean zero") {
  const TorusGeometry g(2, 3.0);
  const ModeSet m = enumerate_modes(g, g.eigenvalue(20));
  const UniformGrid grid(g, 32);
  const GridTransform tf(grid, m.max_component());
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Eigen::VectorXd c(m.size());
  for (auto& v : c) v = nd(rng);
  const Eigen::VectorXd values = tf.synthesize(m, c);
  CHECK(values.squaredNorm() / double(grid.size()) == doctest::Approx(c.squaredNorm()).epsilon(1e-10));
  CHECK((tf.analyze(m, values) - c).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(m.size(), i);
    CHECK(std::abs(tf.synthesize(m, e).mean()) < 1e-12);
  }
  // Synthesis agrees with pointwise evaluation.
  const Eigen::Index probe = 37;
  CHECK(values[probe] == doctest::Approx(m.evaluate(c, grid.point(probe))).epsilon(1e-12));
}

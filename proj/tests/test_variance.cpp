#include "ergot/errors.hpp"
#include "ergot/stats.hpp"
#include "ergot/variance.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

using namespace ergot;

namespace {

constexpr double kPi = std::numbers::pi;

// int_0^inf <phi, e^{tL} phi> dt for constant z: the stationary correlation
// of sqrt2 cos(k.X) along X_t = X_0 + z t + sqrt2 B_t is e^{-lambda t} cos(b t).
double correlation_integral(double lambda, double b) {
  boost::math::quadrature::exp_sinh<double> q;
  return q.integrate([&](double t) { return std::exp(-lambda * t) * std::cos(b * t); });
}

// Simpson quadrature of <c, e^{tL} c> over [0, horizon] with dense exponentials.
double time_quadrature(const GeneratorMatrix& gen, const Eigen::VectorXd& c, double horizon, int steps) {
  const Eigen::MatrixXd L(gen.matrix());
  const double h = horizon / steps;
  const Eigen::MatrixXd E = (h * L).exp();
  Eigen::VectorXd v = c;
  double s = 0.0;
  for (int j = 0; j <= steps; ++j) {
    const double wgt = (j == 0 || j == steps) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    s += wgt * c.dot(v);
    v = E * v;
  }
  return s * h / 3.0;
}

DriftSpec trig_drift(const TorusGeometry& g) {
  std::vector<ScalarTerm> V = {{Eigen::Vector2i(1, 0), Parity::Cos, 0.3}, {Eigen::Vector2i(0, 1), Parity::Sin, 0.2}};
  std::vector<VectorTerm> W = {{Eigen::Vector2i(1, 1), Parity::Cos, Eigen::Vector2d(0.8, -0.8)},
                               {Eigen::Vector2i(1, 0), Parity::Sin, Eigen::Vector2d(0.0, 0.5)},
                               {Eigen::Vector2i(0, 2), Parity::Cos, Eigen::Vector2d(0.4, 0.0)}};
  return DriftSpec(g, V, Eigen::VectorXd(), W, true);
}

}  // namespace

TEST_CASE("v_form without drift is 1/lambda") {
  const TorusGeometry g(3, 2 * kPi);
  const GeneratorMatrix gen(DriftSpec::flat(g), enumerate_modes(g, 6.0));
  CHECK(gen.fourier_basis());
  CHECK(gen.antisymmetric_part().nonZeros() == 0);
  for (Eigen::Index i = 0; i < gen.size(); ++i) {
    CHECK(v_form(Eigen::VectorXd::Unit(gen.size(), i), gen) == doctest::Approx(1.0 / gen.lambda(i)).epsilon(1e-14));
    CHECK(v_form_z(i, gen) == 0.0);
    CHECK(variance_identity_residual(i, gen) == 0.0);
  }
  CHECK(psi_moment_prediction(0, gen, 100.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(psi_moment_prediction(0, gen, 0.0), InvalidArgument);
}

TEST_CASE("constant drift against the correlation-integral oracle") {
  const TorusGeometry g(4, 2 * kPi);
  const ModeSet modes = enumerate_modes(g, 6.0);
  for (const Eigen::Vector4d z : {Eigen::Vector4d(1, 0, 0, 0), Eigen::Vector4d(2, 0, 0, 0), Eigen::Vector4d(1, 1, 0, 0),
                                  Eigen::Vector4d(0.3, -0.7, 1.1, 0.2)}) {
    const GeneratorMatrix gen(DriftSpec::constant(g, z), modes);
    CHECK(gen.constant_leak() == 0.0);
    for (Eigen::Index i = 0; i < gen.size(); ++i) {
      const double lam = gen.lambda(i);
      const double b = g.wave_unit() * modes.wave(i).cast<double>().dot(z);
      const double v = v_form(Eigen::VectorXd::Unit(gen.size(), i), gen);
      CHECK(v == doctest::Approx(correlation_integral(lam, b)).epsilon(1e-10));
      CHECK(v == doctest::Approx(block_v_form(lam, b)).epsilon(1e-13));
      CHECK(v_form_z(i, gen) == doctest::Approx(block_v_form_z(lam, b)).epsilon(1e-12));
      CHECK(variance_identity_residual(i, gen) <= 1e-10);
      CHECK(v <= 1.0 / lam + 1e-15);
    }
  }
  const ModeSet unit = enumerate_modes(g, 1.0);
  const auto idx = *unit.find(Eigen::Vector4i(1, 0, 0, 0), Parity::Cos);
  const GeneratorMatrix g1(DriftSpec::constant(g, Eigen::Vector4d(1, 0, 0, 0)), unit);
  CHECK(v_form(Eigen::VectorXd::Unit(g1.size(), idx), g1) == doctest::Approx(0.5));
  CHECK(v_form_z(idx, g1) == doctest::Approx(0.5));
  CHECK(psi_moment_prediction(idx, g1, 200.0) == doctest::Approx(1.0));
  const GeneratorMatrix g2(DriftSpec::constant(g, Eigen::Vector4d(2, 0, 0, 0)), unit);
  CHECK(v_form_z(idx, g2) == doctest::Approx(0.8));
}

TEST_CASE("variance form is nonnegative and dominated by the symmetric form") {
  const TorusGeometry g(2, 2 * kPi);
  const GeneratorMatrix gen(DriftSpec::constant(g, Eigen::Vector2d(1.3, -0.4)), enumerate_modes(g, 20.0));
  boost::random::mt19937_64 rng(5);
  boost::random::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd c(gen.size());
    for (auto& v : c) v = nd(rng);
    const double v = v_form(c, gen);
    CHECK(v >= 0.0);
    CHECK(v <= (c.array().square() / gen.lambdas().array()).sum() + 1e-12);
  }
}

TEST_CASE("trigonometric drift with constant potential") {
  const TorusGeometry g(2, 2 * kPi);
  std::vector<VectorTerm> W = {{Eigen::Vector2i(1, 1), Parity::Cos, Eigen::Vector2d(0.8, -0.8)}};
  const DriftSpec drift(g, {}, Eigen::VectorXd(), W);
  const GeneratorMatrix gen(drift, enumerate_modes(g, 30.0));
  CHECK(gen.fourier_basis());
  CHECK(gen.constant_leak() < 1e-15);
  const Eigen::SparseMatrix<double> S = gen.antisymmetric_part();
  CHECK(Eigen::MatrixXd(S + Eigen::SparseMatrix<double>(S.transpose())).cwiseAbs().maxCoeff() < 1e-15);
  // Lowest modes stay inside the basis; the outermost shell escapes.
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(variance_identity_residual(i, gen) <= 1e-12);
  const Eigen::Index last = gen.size() - 1;
  CHECK(gen.escape(last).mass > 0.0);
  CHECK(gen.escape(last).required_lambda > 30.0);
  CHECK_THROWS_AS(v_form_z(last, gen), TruncationError);
  // Resolvent against dense time integration of the correlation.
  const Eigen::VectorXd e0 = Eigen::VectorXd::Unit(gen.size(), 0);
  CHECK(v_form(e0, gen) == doctest::Approx(time_quadrature(gen, e0, 40.0, 8000)).epsilon(1e-8));
}

TEST_CASE("Galerkin generator for a non-constant potential") {
  const TorusGeometry g(2, 2 * kPi);
  const DriftSpec drift = trig_drift(g);
  const GeneratorMatrix coarse(drift, enumerate_modes(g, 60.0));
  const GeneratorMatrix fine(drift, enumerate_modes(g, 120.0));
  CHECK_FALSE(fine.fourier_basis());
  CHECK(fine.kernel_residual() < 1e-10);
  CHECK(fine.constant_leak() < 1e-10);
  CHECK(fine.antisymmetry_defect() < 1e-10);
  // Spectrum of the symmetric part is positive and close to the flat one for small V.
  CHECK(fine.lambda(0) > 0.5);
  CHECK(fine.lambda(0) < 1.5);
  // Individual eigenvectors may rotate inside the lambda ~ 1 cluster, so
  // compare eigenvalues and cluster sums across the two cutoffs.
  REQUIRE(fine.lambda(4) - fine.lambda(3) > 0.5);
  double vc = 0.0, vf = 0.0, zc = 0.0, zf = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(variance_identity_residual(i, fine) <= 1e-8);
    CHECK(std::abs(coarse.lambda(i) - fine.lambda(i)) <= 1e-10);
    vc += v_form(Eigen::VectorXd::Unit(coarse.size(), i), coarse);
    vf += v_form(Eigen::VectorXd::Unit(fine.size(), i), fine);
    zc += v_form_z(i, coarse);
    zf += v_form_z(i, fine);
    CHECK(v_form(Eigen::VectorXd::Unit(fine.size(), i), fine) <= 1.0 / fine.lambda(i) + 1e-12);
  }
  CHECK(std::abs(vc - vf) <= 1e-8);
  CHECK(std::abs(zc - zf) <= 1e-8);
  const Eigen::VectorXd e0 = Eigen::VectorXd::Unit(coarse.size(), 0);
  CHECK(v_form(e0, coarse) == doctest::Approx(time_quadrature(coarse, e0, 40.0, 8000)).epsilon(1e-8));
}

TEST_CASE("Duhamel consistency") {
  const TorusGeometry g(2, 2 * kPi);
  const ModeSet modes = enumerate_modes(g, 5.0);
  const GeneratorMatrix flat(DriftSpec::flat(g), modes);
  for (double t : {0.1, 1.0, 5.0}) CHECK(duhamel_residual(0, flat, t, 10) <= 1e-12);

  const GeneratorMatrix gen(DriftSpec::constant(g, Eigen::Vector2d(1.0, 0.5)), modes);
  const double r1 = duhamel_residual(0, gen, 1.0, 10000);
  const double r2 = duhamel_residual(0, gen, 1.0, 5000);
  CHECK(r1 <= 1e-6);
  CHECK(r2 / r1 == doctest::Approx(4.0).epsilon(0.05));
  double prev = duhamel_residual(0, gen, 0.4, 20);
  for (double t : {0.2, 0.1, 0.05}) {
    const double r = duhamel_residual(0, gen, t, 20);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("sample statistics") {
  boost::random::mt19937_64 rng(17);
  boost::random::normal_distribution<double> nd(0.0, std::sqrt(2.0));
  Eigen::VectorXd x(4096);
  for (auto& v : x) v = nd(rng);
  const NormalityReport r = normality_report(x, 2.0);
  CHECK(std::abs(r.variance_zscore) < 3.0);
  CHECK(std::abs(r.summary.excess_kurtosis) < 0.3);
  CHECK(r.p_value > 0.001);
  CHECK_THROWS_AS(normality_report(x.head(100), 2.0), InvalidArgument);

  Eigen::VectorXd exp_samples(4096);
  for (auto& v : exp_samples) v = -std::log(1.0 - std::abs(std::erf(nd(rng))));
  CHECK(normality_report(exp_samples, 1.0).p_value < 1e-6);

  const auto ci = clopper_pearson(0, 10, 0.99);
  CHECK(ci.lower == 0.0);
  CHECK(ci.upper == doctest::Approx(1.0 - std::pow(0.005, 0.1)).epsilon(1e-10));
  const auto mid = clopper_pearson(5, 10, 0.99);
  CHECK(mid.lower == doctest::Approx(1.0 - mid.upper).epsilon(1e-10));

  Eigen::VectorXd xs(4), ys(4);
  xs << 1e-3, 1e-2, 1e-1, 1.0;
  ys = xs.array().pow(-2.0) * 3.0;
  const LogFit f = fit_log_log(xs, ys);
  CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(f.max_residual < 1e-12);
}

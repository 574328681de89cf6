#include "ergot/geometry.hpp"

#include "ergot/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

namespace ergot {

namespace {

constexpr double kPi = std::numbers::pi;

// Calls fn(k) for every k in [-K, K]^d, first coordinate slowest.
template <typename Fn>
void for_each_box_point(int d, int K, Fn&& fn) {
  Eigen::VectorXi k = Eigen::VectorXi::Constant(d, -K);
  while (true) {
    fn(k);
    int j = d - 1;
    while (j >= 0 && k[j] == K) {
      k[j] = -K;
      --j;
    }
    if (j < 0) return;
    ++k[j];
  }
}

bool lexicographically_positive(const Eigen::VectorXi& k) {
  for (int j = 0; j < k.size(); ++j) {
    if (k[j] != 0) return k[j] > 0;
  }
  return false;
}

long max_k2(const TorusGeometry& g, double lambda_max) {
  const double unit = g.wave_unit() * g.wave_unit();
  // Round-off guard so that lambda == lambda_max stays included.
  return static_cast<long>(std::floor(lambda_max / unit * (1.0 + 1e-12)));
}

double integrate_checked(const auto& f, double a, double b, const QuadratureOptions& opt,
                         const char* what) {
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, a, b, opt.max_depth, 1e-14, &error, &l1);
  const double allowed = std::max(opt.abs_tol, 64 * std::numeric_limits<double>::epsilon() * l1);
  if (!(error <= allowed)) {
    std::ostringstream os;
    os << what << ": quadrature did not reach tolerance (error estimate " << error << ")";
    throw ConvergenceError(os.str(), error);
  }
  return value;
}

}  // namespace

TorusGeometry::TorusGeometry(int d, double L) : d_(d), L_(L) {
  if (d < 1 || d > 4) throw InvalidArgument("TorusGeometry: dimension must be in 1..4");
  if (!(L > 0.0) || !std::isfinite(L)) throw InvalidArgument("TorusGeometry: side length must be positive");
  volume_ = std::pow(L, d);
}

double TorusGeometry::w2_limit_constant() const noexcept { return volume_ / (8 * kPi * kPi); }
double TorusGeometry::heat_trace_constant() const noexcept { return volume_ / (16 * kPi * kPi); }
double TorusGeometry::weyl_constant() const noexcept { return volume_ / (32 * kPi * kPi); }

void TorusGeometry::wrap(Eigen::Ref<Eigen::VectorXd> x) const {
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double v = x[j];
    if (v >= 0.0 && v < L_) continue;
    if (v < 0.0 && v >= -L_) {
      v += L_;
    } else if (v >= L_ && v < 2 * L_) {
      v -= L_;
    } else {
      v = std::fmod(v, L_);
      if (v < 0) v += L_;
    }
    if (v >= L_) v = 0.0;  // fmod(-tiny) + L can round up to L
    x[j] = v;
  }
}

double TorusGeometry::squared_distance(const Eigen::Ref<const Eigen::VectorXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& y) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double delta = std::fmod(std::abs(x[j] - y[j]), L_);
    delta = std::min(delta, L_ - delta);
    s += delta * delta;
  }
  return s;
}

double EigenPair::operator()(const Eigen::Ref<const Eigen::VectorXd>& x, double L) const {
  const double phase = 2 * kPi / L * k.cast<double>().dot(x);
  return std::numbers::sqrt2 * (parity == Parity::Cos ? std::cos(phase) : std::sin(phase));
}

ModeSet::ModeSet(TorusGeometry geometry, double lambda_max, Eigen::MatrixXi waves)
    : geometry_(geometry), lambda_max_(lambda_max), waves_(std::move(waves)) {
  if (waves_.rows() != geometry_.dim()) throw InvalidArgument("ModeSet: wave matrix has wrong row count");
  lambdas_.resize(2 * waves_.cols());
  for (Eigen::Index j = 0; j < waves_.cols(); ++j) {
    const double lam = geometry_.eigenvalue(waves_.col(j).squaredNorm());
    lambdas_[2 * j] = lam;
    lambdas_[2 * j + 1] = lam;
  }
  max_component_ = waves_.size() ? waves_.cwiseAbs().maxCoeff() : 0;
}

std::optional<Eigen::Index> ModeSet::find(const Eigen::Ref<const Eigen::VectorXi>& k,
                                          Parity parity, int* sign) const {
  Eigen::VectorXi rep = k;
  int s = 1;
  if (!lexicographically_positive(rep)) {
    rep = -rep;
    s = parity == Parity::Sin ? -1 : 1;
  }
  const long k2 = rep.squaredNorm();
  if (k2 == 0) return std::nullopt;
  // Waves are sorted by (|k|^2, k); binary search on that key.
  auto less = [&](Eigen::Index col) {
    const long c2 = waves_.col(col).squaredNorm();
    if (c2 != k2) return c2 < k2;
    for (int j = 0; j < rep.size(); ++j) {
      if (waves_(j, col) != rep[j]) return waves_(j, col) < rep[j];
    }
    return false;
  };
  Eigen::Index lo = 0, hi = waves_.cols();
  while (lo < hi) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (less(mid)) lo = mid + 1;
    else hi = mid;
  }
  if (lo == waves_.cols() || waves_.col(lo) != rep) return std::nullopt;
  if (sign) *sign = s;
  return 2 * lo + static_cast<int>(parity);
}

Eigen::VectorXd ModeSet::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd out(size());
  const Eigen::VectorXd phase = geometry_.wave_unit() * (waves_.cast<double>().transpose() * x);
  for (Eigen::Index j = 0; j < waves_.cols(); ++j) {
    out[2 * j] = std::numbers::sqrt2 * std::cos(phase[j]);
    out[2 * j + 1] = std::numbers::sqrt2 * std::sin(phase[j]);
  }
  return out;
}

double ModeSet::evaluate(const Eigen::Ref<const Eigen::VectorXd>& coefficients,
                         const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return coefficients.dot(evaluate(x));
}

ModeSet enumerate_modes(const TorusGeometry& geometry, double lambda_max, std::size_t mode_budget) {
  if (!(lambda_max > 0.0)) throw InvalidArgument("enumerate_modes: lambda_max must be positive");
  const int d = geometry.dim();
  const long k2max = max_k2(geometry, lambda_max);
  const int K = static_cast<int>(std::floor(std::sqrt(double(k2max))));
  // Volume of the d-ball as a cheap upper estimate before scanning.
  const double ball = std::pow(kPi, d / 2.0) / std::tgamma(d / 2.0 + 1) *
                      std::pow(std::sqrt(double(k2max)) + std::sqrt(double(d)), d);
  if (ball > 4.0 * double(mode_budget)) {
    throw InvalidArgument("enumerate_modes: lambda_max exceeds the mode budget");
  }

  std::vector<Eigen::VectorXi> reps;
  if (k2max >= 1) {
    for_each_box_point(d, K, [&](const Eigen::VectorXi& k) {
      if (k.squaredNorm() <= k2max && lexicographically_positive(k)) reps.push_back(k);
    });
  }
  if (2 * reps.size() > mode_budget) {
    throw InvalidArgument("enumerate_modes: mode count " + std::to_string(2 * reps.size()) +
                          " exceeds the mode budget");
  }
  std::sort(reps.begin(), reps.end(), [](const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
    const long a2 = a.squaredNorm(), b2 = b.squaredNorm();
    if (a2 != b2) return a2 < b2;
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  Eigen::MatrixXi waves(d, static_cast<Eigen::Index>(reps.size()));
  for (std::size_t j = 0; j < reps.size(); ++j) waves.col(static_cast<Eigen::Index>(j)) = reps[j];
  return ModeSet(geometry, lambda_max, std::move(waves));
}

std::size_t lattice_count(int d, long k2_max) {
  const int K = static_cast<int>(std::floor(std::sqrt(double(k2_max))));
  std::size_t count = 0;
  for_each_box_point(d, K, [&](const Eigen::VectorXi& k) {
    const long k2 = k.squaredNorm();
    if (k2 > 0 && k2 <= k2_max) ++count;
  });
  return count;
}

std::size_t weyl_count(const ModeSet& modes, double lambda) {
  if (lambda > modes.lambda_max() * (1.0 + 1e-12)) {
    throw InvalidArgument("weyl_count: lambda above the mode-set cutoff");
  }
  const auto& l = modes.lambdas();
  const double cut = lambda * (1.0 + 1e-12);
  return static_cast<std::size_t>(std::upper_bound(l.data(), l.data() + l.size(), cut) - l.data());
}

double theta_minus_one(double t, double L) {
  if (!(t > 0.0)) throw InvalidArgument("theta: t must be positive");
  const double a = t * std::pow(2 * kPi / L, 2);
  if (a >= 0.5) {
    double sum = 0.0;
    for (int n = 1;; ++n) {
      const double term = std::exp(-a * n * n);
      sum += term;
      if (term <= 1e-18 * sum || term == 0.0) break;
    }
    return 2.0 * sum;
  }
  // Poisson-dual series: Theta = sqrt(pi / a) sum_m exp(-pi^2 m^2 / a).
  double sum = 0.0;
  for (int m = 1;; ++m) {
    const double term = std::exp(-kPi * kPi * m * m / a);
    sum += term;
    if (term <= 1e-18 * (1.0 + sum)) break;
  }
  return std::sqrt(kPi / a) * (1.0 + 2.0 * sum) - 1.0;
}

double theta(double t, double L) { return 1.0 + theta_minus_one(t, L); }

double heat_trace(double t, const TorusGeometry& geometry) {
  const double m = theta_minus_one(t, geometry.side());
  return std::expm1(geometry.dim() * std::log1p(m));
}

namespace {

// Upper integration point beyond which the heat trace is handled analytically:
// there sum_i exp(-t lambda_i) = 2d exp(-lambda_1 t) (1 + O(exp(-lambda_1 t))).
double switchover(double from, const TorusGeometry& g) {
  return std::max(50.0 / g.lambda_min(), from + 50.0 / g.lambda_min());
}

}  // namespace

double spectral_sum_inv_lambda(double s, const TorusGeometry& geometry,
                               const QuadratureOptions& options) {
  if (!(s > 0.0)) throw InvalidArgument("spectral_sum_inv_lambda: s must be positive");
  const double upper = switchover(s, geometry);
  const double l1 = geometry.lambda_min();
  // Integrate in u = log t: the integrand spans many decades near small s.
  auto f = [&](double u) {
    const double t = std::exp(u);
    return heat_trace(t, geometry) * t;
  };
  const double body = integrate_checked(f, std::log(s), std::log(upper), options,
                                        "spectral_sum_inv_lambda");
  const double tail = 2.0 * geometry.dim() * std::exp(-l1 * upper) / l1;
  return body + tail;
}

double spectral_sum_inv_lambda_sq(double eps, const TorusGeometry& geometry,
                                  const QuadratureOptions& options) {
  if (!(eps > 0.0)) throw InvalidArgument("spectral_sum_inv_lambda_sq: eps must be positive");
  // int_{2eps}^inf sum_i e^{-s l_i}/l_i ds = int_{2eps}^inf (t - 2eps) trace(t) dt.
  const double start = 2.0 * eps;
  const double upper = switchover(start, geometry);
  const double l1 = geometry.lambda_min();
  auto f = [&](double u) {
    const double t = std::exp(u);
    return (t - start) * heat_trace(t, geometry) * t;
  };
  const double body = integrate_checked(f, std::log(start), std::log(upper), options,
                                        "spectral_sum_inv_lambda_sq");
  const double tail =
      2.0 * geometry.dim() * std::exp(-l1 * upper) * ((upper - start) / l1 + 1.0 / (l1 * l1));
  return body + tail;
}

double heat_trace_tail(double t, const ModeSet& modes) {
  const double partial = (-t * modes.lambdas().array()).exp().sum();
  return std::max(0.0, heat_trace(t, modes.geometry()) - partial);
}

double heat_kernel(double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y, const ModeSet& modes,
                   double tail_tol) {
  if (!(t > 0.0)) throw InvalidArgument("heat_kernel: t must be positive");
  const double tail = heat_trace_tail(t, modes);
  if (tail > tail_tol) {
    std::ostringstream os;
    os << "heat_kernel: truncation tail " << tail << " exceeds tolerance " << tail_tol
       << " at t=" << t << "; raise lambda_max";
    throw TruncationError(os.str(), tail);
  }
  const Eigen::VectorXd weights = (-t * modes.lambdas().array()).exp();
  return 1.0 + (weights.array() * modes.evaluate(x).array() * modes.evaluate(y).array()).sum();
}

Eigen::VectorXd poisson_kernel_coeffs(double eps, const ModeSet& modes) {
  if (!(eps >= 0.0)) throw InvalidArgument("poisson_kernel_coeffs: eps must be nonnegative");
  const auto& l = modes.lambdas().array();
  return ((-eps * l).exp() / l).matrix();
}

}  // namespace ergot

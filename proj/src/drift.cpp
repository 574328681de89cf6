#include "ergot/drift.hpp"

#include "ergot/errors.hpp"
#include "ergot/grid.hpp"

#include <algorithm>
#include <cmath>

namespace ergot {

namespace {

double phase(const TorusGeometry& g, const Eigen::VectorXi& k, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return g.wave_unit() * k.cast<double>().dot(x);
}

// Value and derivative (with respect to the phase) of cos or sin.
std::pair<double, double> trig(Parity p, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return p == Parity::Cos ? std::pair{c, -s} : std::pair{s, c};
}

int check_points_per_axis(int d, int K) {
  const int base = d <= 2 ? 64 : (d == 3 ? 24 : 16);
  return std::max(base, 4 * K + 4);
}

}  // namespace

DriftSpec::DriftSpec(const TorusGeometry& geometry, std::vector<ScalarTerm> potential,
                     Eigen::VectorXd constant_field, std::vector<VectorTerm> field_terms, bool weighted)
    : geometry_(geometry),
      potential_(std::move(potential)),
      constant_field_(std::move(constant_field)),
      field_terms_(std::move(field_terms)),
      weighted_(weighted) {
  const int d = geometry_.dim();
  if (constant_field_.size() == 0) constant_field_ = Eigen::VectorXd::Zero(d);
  if (constant_field_.size() != d) throw InvalidArgument("DriftSpec: constant field has wrong dimension");
  if (!constant_field_.allFinite()) throw InvalidArgument("DriftSpec: constant field is not finite");
  for (const auto& t : potential_) {
    if (t.k.size() != d) throw InvalidArgument("DriftSpec: potential term has wrong dimension");
    if (!std::isfinite(t.amplitude)) throw InvalidArgument("DriftSpec: potential amplitude is not finite");
    max_component_ = std::max(max_component_, t.k.cwiseAbs().maxCoeff());
  }
  for (const auto& t : field_terms_) {
    if (t.k.size() != d || t.amplitude.size() != d) {
      throw InvalidArgument("DriftSpec: field term has wrong dimension");
    }
    if (!t.amplitude.allFinite()) throw InvalidArgument("DriftSpec: field amplitude is not finite");
    max_component_ = std::max(max_component_, t.k.cwiseAbs().maxCoeff());
  }
  // Drop exactly-zero potential terms so a zero potential counts as constant.
  std::erase_if(potential_, [](const ScalarTerm& t) { return t.amplitude == 0.0 || t.k.isZero(); });

  const UniformGrid grid(geometry_, check_points_per_axis(d, max_component_));
  double mass = 0.0;
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.point(i);
    mass += std::exp(potential_oscillation(x));
    field(x, z);
    field_sup_ = std::max(field_sup_, z.norm());
    divergence_residual_ = std::max(divergence_residual_, std::abs(mu_divergence(x)));
  }
  log_normalizer_ = -std::log(geometry_.volume() * mass / double(grid.size()));
  if (divergence_residual_ > 1e-8 * (1.0 + field_sup_)) {
    throw InvalidArgument("DriftSpec: Z is not mu-divergence free (residual " +
                          std::to_string(divergence_residual_) + ")");
  }
}

DriftSpec DriftSpec::flat(const TorusGeometry& geometry) {
  return DriftSpec(geometry, {}, Eigen::VectorXd::Zero(geometry.dim()));
}

DriftSpec DriftSpec::constant(const TorusGeometry& geometry, const Eigen::VectorXd& z) {
  return DriftSpec(geometry, {}, z);
}

bool DriftSpec::zero_field() const noexcept {
  if (!constant_field_.isZero(0.0)) return false;
  return std::all_of(field_terms_.begin(), field_terms_.end(),
                     [](const VectorTerm& t) { return t.amplitude.isZero(0.0); });
}

double DriftSpec::potential_oscillation(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double v = 0.0;
  for (const auto& t : potential_) v += t.amplitude * trig(t.parity, phase(geometry_, t.k, x)).first;
  return v;
}

double DriftSpec::potential_bound() const noexcept {
  double b = 0.0;
  for (const auto& t : potential_) b += std::abs(t.amplitude);
  return b;
}

void DriftSpec::potential_gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   Eigen::Ref<Eigen::VectorXd> out) const {
  out.setZero();
  const double w = geometry_.wave_unit();
  for (const auto& t : potential_) {
    const double dv = trig(t.parity, phase(geometry_, t.k, x)).second;
    out += (t.amplitude * dv * w) * t.k.cast<double>();
  }
}

void DriftSpec::field(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const {
  out = constant_field_;
  if (field_terms_.empty()) return;
  const double scale = weighted_ ? std::exp(-potential_oscillation(x)) : 1.0;
  for (const auto& t : field_terms_) {
    out += (scale * trig(t.parity, phase(geometry_, t.k, x)).first) * t.amplitude;
  }
}

void DriftSpec::velocity(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const {
  field(x, out);
  if (potential_.empty()) return;
  Eigen::VectorXd g(geometry_.dim());
  potential_gradient(x, g);
  out += g;
}

double DriftSpec::mu_divergence(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  // div(e^V Z) = e^V (grad V . Z + div Z); for the weighted part e^V e^{-V} W
  // this is div W.
  const int d = geometry_.dim();
  const double w = geometry_.wave_unit();
  const double ev = std::exp(potential_oscillation(x));
  Eigen::VectorXd grad_v(d);
  potential_gradient(x, grad_v);

  double result = ev * grad_v.dot(constant_field_);
  for (const auto& t : field_terms_) {
    const auto [val, dval] = trig(t.parity, phase(geometry_, t.k, x));
    const double div_w = dval * w * t.amplitude.dot(t.k.cast<double>());
    if (weighted_) {
      result += div_w;
    } else {
      result += ev * (val * grad_v.dot(t.amplitude) + div_w);
    }
  }
  return result;
}

}  // namespace ergot

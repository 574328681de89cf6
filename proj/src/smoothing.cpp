#include "ergot/smoothing.hpp"

#include "ergot/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

namespace ergot {

namespace {

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) os.put(char((bits >> (8 * b)) & 0xff));
}

double get_f64(std::istream& is) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    const int c = is.get();
    if (c == EOF) throw Error("grid density file truncated");
    v |= std::uint64_t(static_cast<unsigned char>(c)) << (8 * b);
  }
  return std::bit_cast<double>(v);
}

std::array<int, 4> unit_alpha(int a, int b) {
  std::array<int, 4> alpha{0, 0, 0, 0};
  ++alpha[a];
  ++alpha[b];
  return alpha;
}

}  // namespace

double smoothing_schedule(double T, double gamma) {
  if (!(T > 1.0)) throw InvalidArgument("smoothing_schedule: horizon must exceed 1");
  if (!(gamma > 0.0)) throw InvalidArgument("smoothing_schedule: gamma must be positive");
  return std::pow(std::log(T), gamma) / T;
}

SpectralEmpirical::SpectralEmpirical(std::shared_ptr<const ModeSet> modes, Eigen::VectorXd psi, double T,
                                     double eps)
    : modes_(std::move(modes)), psi_(std::move(psi)), T_(T), eps_(eps) {
  if (!modes_) throw InvalidArgument("SpectralEmpirical: missing mode set");
  if (psi_.size() != modes_->size()) throw InvalidArgument("SpectralEmpirical: psi size mismatch");
  if (!(T_ > 0.0)) throw InvalidArgument("SpectralEmpirical: horizon must be positive");
  if (!(eps_ >= 0.0)) throw InvalidArgument("SpectralEmpirical: eps must be nonnegative");
}

Eigen::VectorXd SpectralEmpirical::density_coeffs() const {
  const Eigen::ArrayXd decay = (-eps_ * modes_->lambdas().array()).exp();
  return (decay * psi_.array() / std::sqrt(T_)).matrix();
}

Eigen::VectorXd SpectralEmpirical::potential_coeffs() const {
  return (density_coeffs().array() / modes_->lambdas().array()).matrix();
}

double SpectralEmpirical::truncation_tail() const {
  return 2.0 / (T_ * modes_->lambda_max()) * heat_trace_tail(2.0 * eps_, *modes_);
}

Eigen::VectorXd smoothed_density(const SpectralEmpirical& se, const Eigen::Ref<const Eigen::MatrixXd>& points) {
  const Eigen::VectorXd c = se.density_coeffs();
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index p = 0; p < points.cols(); ++p) out[p] = 1.0 + se.modes().evaluate(c, points.col(p));
  return out;
}

Eigen::VectorXd smoothed_density(const SpectralEmpirical& se, const GridTransform& transform) {
  return (transform.synthesize(se.modes(), se.density_coeffs()).array() + 1.0).matrix();
}

double h1_energy(const SpectralEmpirical& se) {
  const Eigen::ArrayXd lam = se.modes().lambdas().array();
  return ((-2.0 * se.eps() * lam).exp() * se.psi().array().square() / lam).sum() / se.horizon();
}

Eigen::VectorXd gradient_energy_density(const ModeSet& modes, const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                                        const GridTransform& transform) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(transform.grid().size());
  for (int a = 0; a < modes.dim(); ++a) {
    std::array<int, 4> alpha{0, 0, 0, 0};
    alpha[a] = 1;
    out.array() += transform.synthesize(modes, coeffs, alpha).array().square();
  }
  return out;
}

HessianSup hessian_sup(const ModeSet& modes, const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                       const GridTransform& transform, bool certify) {
  const int d = modes.dim();
  std::vector<Eigen::VectorXd> parts;
  std::vector<std::pair<int, int>> index;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      parts.push_back(transform.synthesize(modes, coeffs, unit_alpha(a, b)));
      index.emplace_back(a, b);
    }
  }
  HessianSup out;
  Eigen::MatrixXd H(d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(d);
  for (Eigen::Index p = 0; p < transform.grid().size(); ++p) {
    double frob2 = 0.0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const auto [a, b] = index[j];
      const double h = parts[j][p];
      H(a, b) = H(b, a) = h;
      frob2 += (a == b ? 1.0 : 2.0) * h * h;
    }
    if (std::sqrt(frob2) <= out.value) continue;
    solver.compute(H, Eigen::EigenvaluesOnly);
    out.value = std::max(out.value, solver.eigenvalues().cwiseAbs().maxCoeff());
  }
  if (certify) {
    const double w = modes.geometry().wave_unit();
    double third = 0.0;
    for (Eigen::Index i = 0; i < modes.size(); ++i) {
      const double k = w * modes.wave(i).cast<double>().norm();
      third += std::abs(coeffs[i]) * k * k * k * std::numbers::sqrt2;
    }
    out.slack = third * transform.grid().cell_diagonal() / 2.0;
  }
  out.certified = out.value + out.slack;
  return out;
}

bool flatness_event(const SpectralEmpirical& se, double xi, const GridTransform& transform) {
  if (!(xi > 0.0)) throw InvalidArgument("flatness_event: xi must be positive");
  return hessian_sup(se, transform, true).certified <= xi;
}

GridDensity GridDensity::uniform(const UniformGrid& grid) {
  return {grid, Eigen::VectorXd::Constant(grid.size(), 1.0 / double(grid.size()))};
}

void GridDensity::validate() const {
  if (cells.size() != grid.size()) throw DensityError("grid density: cell count mismatch");
  if (!cells.allFinite()) throw DensityError("grid density: non-finite cell");
  if (cells.minCoeff() < 0.0) throw DensityError("grid density: negative cell");
  if (std::abs(cells.sum() - 1.0) > 1e-12) throw DensityError("grid density: total mass differs from one");
}

GridDensity grid_density(const SpectralEmpirical& se, const GridTransform& transform) {
  const UniformGrid& grid = transform.grid();
  Eigen::VectorXd cells = smoothed_density(se, transform) / double(grid.size());
  const double negative = (-cells.array()).max(0.0).sum();
  if (negative >= 1e-6) throw DensityError("grid density: negative mass too large, increase eps");
  if (negative > 0.0) cells = cells.array().max(0.0).matrix();
  cells /= cells.sum();
  GridDensity out{grid, std::move(cells)};
  out.validate();
  return out;
}

void write_grid_density(const std::string& path, const GridDensity& density) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  for (double v : density.cells) put_f64(os, v);
  if (!os) throw Error("write failed: " + path);
  const auto& g = density.grid.geometry();
  nlohmann::json meta{{"d", g.dim()}, {"L", g.side()}, {"n", density.grid.points_per_axis()}};
  std::ofstream js(path + ".json");
  if (!js) throw Error("cannot open " + path + ".json");
  js << meta.dump(2) << '\n';
}

GridDensity read_grid_density(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw Error("cannot open " + path + ".json");
  const auto meta = nlohmann::json::parse(js);
  const UniformGrid grid(TorusGeometry(meta.at("d").get<int>(), meta.at("L").get<double>()),
                         meta.at("n").get<int>());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  Eigen::VectorXd cells(grid.size());
  for (Eigen::Index i = 0; i < cells.size(); ++i) cells[i] = get_f64(is);
  if (is.peek() != EOF) throw Error("grid density file has trailing data");
  return {grid, std::move(cells)};
}

KernelNormScaling kernel_norm_scaling(int n, const TorusGeometry& geometry,
                                      const Eigen::Ref<const Eigen::VectorXd>& eps) {
  if (geometry.dim() != 4) throw InvalidArgument("kernel_norm_scaling: dimension must be 4");
  if (n < 0 || n > 2) throw InvalidArgument("kernel_norm_scaling: order must be 0, 1 or 2");
  if (eps.size() < 2 || eps.minCoeff() <= 0.0) throw InvalidArgument("kernel_norm_scaling: need positive eps values");
  const double lo = eps.minCoeff(), hi = eps.maxCoeff();
  if (hi / lo < 100.0) throw InvalidArgument("kernel_norm_scaling: eps must span two decades");

  KernelNormScaling out;
  out.eps = eps;
  out.values.resize(eps.size());
  auto value = [&](double e) {
    switch (n) {
      case 0: return spectral_sum_inv_lambda_sq(e, geometry);
      case 1: return spectral_sum_inv_lambda(2.0 * e, geometry);
      default: return heat_trace(2.0 * e, geometry);
    }
  };
  for (Eigen::Index i = 0; i < eps.size(); ++i) out.values[i] = value(eps[i]);
  out.fit = fit_log_log(eps, out.values);
  if (n > 0 && out.fit.max_residual > 0.1) {
    throw ConvergenceError("kernel_norm_scaling: log-log fit residual too large", out.fit.max_residual);
  }
  out.growth_ratio = (value(lo) - value(hi)) / (geometry.heat_trace_constant() * std::log(hi / lo));
  return out;
}

}  // namespace ergot

#include "ergot/concentration.hpp"

#include "ergot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ergot {

TestFunction::TestFunction(std::shared_ptr<const ModeSet> modes, Eigen::VectorXd coeffs, int grid_n)
    : modes_(std::move(modes)), coeffs_(std::move(coeffs)) {
  if (!modes_) throw InvalidArgument("TestFunction: missing mode set");
  if (coeffs_.size() != modes_->size()) throw InvalidArgument("TestFunction: coefficient size mismatch");
  sigma_sq_ = 2.0 * (coeffs_.array().square() / modes_->lambdas().array()).sum();
  sup_bound_ = std::numbers::sqrt2 * coeffs_.cwiseAbs().sum();
  const int K = modes_->max_component();
  if (grid_n == 0) grid_n = std::max(16, 4 * K + 2);
  const GridTransform tr(UniformGrid(modes_->geometry(), grid_n), K);
  const double p = modes_->dim() / 2.0;
  const Eigen::VectorXd values = tr.synthesize(*modes_, coeffs_);
  l_half_norm_ = std::pow(values.array().abs().pow(p).mean(), 1.0 / p);
}

double TestFunction::time_average(const Snapshot& snapshot) const {
  if (snapshot.psi_raw.size() != coeffs_.size()) throw InvalidArgument("TestFunction: snapshot over other modes");
  return coeffs_.dot(snapshot.psi_raw) / snapshot.time;
}

BernsteinBound bernstein_bound(double sigma_sq, double norm, double xi, double T, double c) {
  if (!(sigma_sq > 0.0) || !(norm > 0.0) || !(xi > 0.0) || !(T > 0.0) || !(c > 0.0)) {
    throw InvalidArgument("bernstein_bound: all arguments must be positive");
  }
  BernsteinBound out;
  out.raw = 2.0 * std::exp(-T * xi * xi / (2.0 * (sigma_sq + c * norm * xi)));
  out.clipped = std::min(out.raw, 1.0);
  return out;
}

std::vector<TailRow> tail_table(const TestFunction& g, const Eigen::Ref<const Eigen::VectorXd>& averages,
                                const std::vector<double>& xi_list, double T, double c, double confidence) {
  if (averages.size() < 1) throw InvalidArgument("tail_table: no replicas");
  std::vector<TailRow> rows;
  for (double xi : xi_list) {
    TailRow row;
    row.xi = xi;
    row.T = T;
    row.replicas = std::size_t(averages.size());
    row.exceed = std::size_t((averages.array().abs() > xi).count());
    row.freq = double(row.exceed) / double(row.replicas);
    row.ci = clopper_pearson(row.exceed, row.replicas, confidence);
    row.bound = bernstein_bound(g, xi, T, c).clipped;
    rows.push_back(row);
  }
  return rows;
}

std::vector<TailRow> tail_empirics(const TestFunction& g, const std::vector<double>& xi_list, const SimConfig& config,
                                   const DriftSpec& drift, double c, double confidence) {
  const auto results = simulate(config, drift, g.modes(), {});
  std::vector<TailRow> rows;
  const std::size_t snaps = results.front().snapshots.size();
  for (std::size_t s = 0; s < snaps; ++s) {
    Eigen::VectorXd averages(Eigen::Index(results.size()));
    for (std::size_t r = 0; r < results.size(); ++r) averages[Eigen::Index(r)] = g.time_average(results[r].snapshots[s]);
    const double T = results.front().snapshots[s].time;
    for (auto& row : tail_table(g, averages, xi_list, T, c, confidence)) rows.push_back(row);
  }
  return rows;
}

void write_tail_csv(const std::string& path, const std::vector<TailRow>& rows) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  os << "xi,T,replicas,exceed_count,freq,ci_upper,bound_c1\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%zu,%zu,%.17g,%.17g,%.17g\n", r.xi, r.T, r.replicas, r.exceed,
                  r.freq, r.ci.upper, r.bound);
    os << line;
  }
  if (!os) throw Error("write failed: " + path);
}

FlatnessRow flatness_row(const std::vector<SpectralEmpirical>& samples, double xi, const GridTransform& transform,
                         double confidence) {
  if (samples.empty()) throw InvalidArgument("flatness_row: no samples");
  if (!(xi > 0.0)) throw InvalidArgument("flatness_row: xi must be positive");
  FlatnessRow row;
  row.T = samples.front().horizon();
  row.eps = samples.front().eps();
  row.xi = xi;
  row.replicas = samples.size();
  for (const auto& se : samples) {
    const HessianSup h = hessian_sup(se, transform, true);
    row.failures += h.certified > xi;
    row.grid_failures += h.value > xi;
    row.mean_value += h.value;
    row.mean_slack += h.slack;
  }
  row.mean_value /= double(row.replicas);
  row.mean_slack /= double(row.replicas);
  row.freq = double(row.failures) / double(row.replicas);
  row.ci = clopper_pearson(row.failures, row.replicas, confidence);
  return row;
}

bool nonincreasing_trend(const std::vector<FlatnessRow>& rows) {
  for (std::size_t j = 1; j < rows.size(); ++j) {
    if (rows[j].freq > rows[j - 1].freq && rows[j].ci.lower > rows[j - 1].ci.upper) return false;
  }
  return true;
}

FlatnessReport flatness_tail(const std::vector<double>& T_list, double gamma, SimConfig config, const DriftSpec& drift,
                             std::shared_ptr<const ModeSet> modes, int grid_n, std::optional<double> xi_override,
                             double confidence) {
  if (T_list.empty() || !std::is_sorted(T_list.begin(), T_list.end()) ||
      std::adjacent_find(T_list.begin(), T_list.end()) != T_list.end()) {
    throw InvalidArgument("flatness_tail: T_list must be strictly increasing");
  }
  if (!(gamma > 3.0)) throw InvalidArgument("flatness_tail: the smoothing schedule needs gamma > 3");
  config.horizon = T_list.back();
  config.checkpoints.assign(T_list.begin(), T_list.end() - 1);
  const auto results = simulate(config, drift, *modes, {});
  const GridTransform transform(UniformGrid(modes->geometry(), grid_n), modes->max_component());

  FlatnessReport report;
  for (std::size_t s = 0; s < T_list.size(); ++s) {
    const double T = T_list[s];
    const double eps = smoothing_schedule(T, gamma);
    std::vector<SpectralEmpirical> samples;
    samples.reserve(results.size());
    for (const auto& r : results) samples.emplace_back(modes, r.snapshots[s].psi(), T, eps);
    report.rows.push_back(flatness_row(samples, xi_override.value_or(1.0 / std::log(T)), transform, confidence));
  }
  report.nonincreasing = nonincreasing_trend(report.rows);
  return report;
}

}  // namespace ergot

#include "ergot/pipelines.hpp"

#include "ergot/errors.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#ifndef ERGOT_VERSION
#define ERGOT_VERSION "unknown"
#endif

namespace ergot {

namespace {

constexpr double kPi = std::numbers::pi;

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) : path_(path), os_(path) {
    if (!os_) throw Error("cannot open " + path);
    os_ << header << '\n';
  }
  CsvWriter& operator<<(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return field(buf);
  }
  CsvWriter& operator<<(std::size_t v) { return field(std::to_string(v)); }
  CsvWriter& operator<<(int v) { return field(std::to_string(v)); }
  CsvWriter& operator<<(const std::string& v) { return field(v); }
  void end_row() {
    os_ << '\n';
    first_ = true;
  }
  ~CsvWriter() noexcept(false) {
    os_.flush();
    if (!os_ && std::uncaught_exceptions() == 0) throw Error("write failed: " + path_);
  }

 private:
  CsvWriter& field(const std::string& s) {
    if (!first_) os_ << ',';
    os_ << s;
    first_ = false;
    return *this;
  }
  std::string path_;
  std::ofstream os_;
  bool first_ = true;
};

std::string wave_string(const Eigen::VectorXi& k) {
  std::string s;
  for (int j = 0; j < k.size(); ++j) s += (j ? ";" : "") + std::to_string(k[j]);
  return s;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::vector<SpectralEmpirical> PsiSamples::empirical(std::size_t horizon, double eps, std::size_t count) const {
  const auto& rows = psi.at(horizon);
  count = std::min(count, rows.size());
  std::vector<SpectralEmpirical> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) out.emplace_back(modes, rows[r], T[horizon], eps);
  return out;
}

PsiSamples simulate_psi(const SimConfig& sim, const DriftSpec& drift, std::shared_ptr<const ModeSet> modes,
                        const std::vector<double>& T) {
  if (T.empty() || !std::is_sorted(T.begin(), T.end())) throw InvalidArgument("simulate_psi: T must be increasing");
  SimConfig cfg = sim;
  cfg.horizon = T.back();
  cfg.checkpoints.assign(T.begin(), T.end() - 1);
  const auto results = simulate(cfg, drift, *modes, {});
  PsiSamples out{modes, T, std::vector<std::vector<Eigen::VectorXd>>(T.size())};
  for (std::size_t t = 0; t < T.size(); ++t) {
    out.psi[t].reserve(results.size());
    for (const auto& r : results) out.psi[t].push_back(r.snapshots.at(t).psi());
  }
  return out;
}

PsiSamples simulate_psi(const ExperimentConfig& config, int threads) {
  SimConfig sim;
  sim.dt = config.dt;
  sim.seed = config.seed;
  sim.replicas = config.replicas;
  sim.threads = threads;
  auto modes = std::make_shared<const ModeSet>(enumerate_modes(config.geometry(), config.lambda_max));
  return simulate_psi(sim, config.drift(), std::move(modes), config.T);
}

double w2_limit(const TorusGeometry& geometry) { return geometry.volume() / (8 * kPi * kPi); }

double energy_prediction(const GeneratorMatrix& gen, double T, double eps) {
  if (!gen.fourier_basis()) throw InvalidArgument("energy_prediction: needs a constant potential");
  if (!(T > 1.0)) throw InvalidArgument("energy_prediction: T must exceed 1");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < gen.size(); ++i) {
    const double lam = gen.lambda(i);
    sum += std::exp(-2 * lam * eps) / lam * psi_moment_prediction(i, gen, T);
  }
  return sum / std::log(T);
}

std::vector<EnergyRow> energy_report(const ExperimentConfig& config, const PsiSamples& samples,
                                     const GeneratorMatrix& gen, double limit_constant) {
  std::vector<EnergyRow> rows;
  for (std::size_t t = 0; t < samples.T.size(); ++t) {
    const double T = samples.T[t];
    const double eps = config.eps_for(T);
    const auto se = samples.empirical(t, eps, samples.psi[t].size());
    Eigen::VectorXd h1(Eigen::Index(se.size()));
    for (std::size_t r = 0; r < se.size(); ++r) h1[Eigen::Index(r)] = h1_energy(se[r]);
    const SampleSummary s = summarize(h1);
    const double scale = T / std::log(T);
    EnergyRow row;
    row.T = T;
    row.eps = eps;
    row.replicas = se.size();
    row.mean_h1 = s.mean;
    row.scaled_mean = scale * s.mean;
    row.scaled_stderr = scale * s.mean_stderr;
    row.prediction = energy_prediction(gen, T, eps);
    row.limit = limit_constant;
    row.truncation_tail = se.front().truncation_tail();
    if (row.truncation_tail > config.tail_tol) {
      throw TruncationError("energy_report: raise modes.lambda_max, truncation tail above smoothing.tail_tol",
                            row.truncation_tail);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<ZGapRow> z_gap_trend(const TorusGeometry& geometry, const Eigen::VectorXd& z, double lambda_max,
                                 const std::vector<double>& T, double gamma) {
  const ModeSet modes = enumerate_modes(geometry, lambda_max);
  const GeneratorMatrix flat(DriftSpec::flat(geometry), modes);
  const GeneratorMatrix shifted(DriftSpec::constant(geometry, z), modes);
  std::vector<ZGapRow> rows;
  for (double t : T) {
    ZGapRow row;
    row.T = t;
    row.eps = smoothing_schedule(t, gamma);
    row.gap = energy_prediction(flat, t, row.eps) - energy_prediction(shifted, t, row.eps);
    row.gap_over_log = row.gap / std::log(t);
    rows.push_back(row);
  }
  return rows;
}

std::vector<W2Row> w2_report(const ExperimentConfig& config, const PsiSamples& samples, double limit_constant) {
  const TorusGeometry g = config.geometry();
  const GridTransform transform(UniformGrid(g, config.grid_n), samples.modes->max_component());
  const GridDensity uniform = GridDensity::uniform(transform.grid());
  SinkhornOptions opts;
  opts.reg = config.reg > 0.0 ? config.reg : default_regularization(transform.grid());
  opts.max_iters = config.max_iters;
  opts.tol = config.tol;
  SinkhornOptions half = opts;
  half.reg = opts.reg / 2;
  const SinkhornSolve self_b = sinkhorn_solve(uniform, uniform, opts);

  std::vector<W2Row> rows;
  for (std::size_t t = 0; t < samples.T.size(); ++t) {
    const double T = samples.T[t];
    const double eps = config.eps_for(T);
    const auto se = samples.empirical(t, eps, std::size_t(config.ot_replicas));
    if (se.empty()) throw InvalidArgument("w2_report: no replicas selected");
    W2Row row;
    row.T = T;
    row.eps = eps;
    row.replicas = se.size();
    Eigen::VectorXd w2(Eigen::Index(se.size())), h1(w2.size()), ratio(w2.size());
    for (std::size_t r = 0; r < se.size(); ++r) {
      const SinkhornReport rep = sinkhorn_w2(grid_density(se[r], transform), uniform, opts, &self_b);
      const Eigen::Index i = Eigen::Index(r);
      w2[i] = rep.value;
      h1[i] = h1_energy(se[r]);
      ratio[i] = h1[i] > 0.0 ? w2[i] / h1[i] : 0.0;
      row.max_iterations = std::max({row.max_iterations, rep.cross.iterations, rep.self_a.iterations});
      if (r == 0) {
        const SinkhornReport fine = sinkhorn_w2(grid_density(se[r], transform), uniform, half);
        row.entropic_err = std::abs(rep.value - fine.value);
      }
    }
    const SampleSummary sw = summarize(w2), sr = summarize(ratio);
    const double scale = T / std::log(T);
    const double h = transform.grid().spacing();
    row.mean_w2 = sw.mean;
    row.mean_h1 = h1.mean();
    row.mean_ratio = sr.mean;
    row.ratio_stderr = sr.mean_stderr;
    row.scaled_w2 = scale * sw.mean;
    row.limit = limit_constant;
    row.stat_err = scale * sw.mean_stderr;
    row.grid_err = g.dim() * h * h / 4;
    row.smoothing_err = 2 * g.dim() * eps;
    rows.push_back(row);
  }
  return rows;
}

std::vector<PsiMomentRow> psi_moments(const GeneratorMatrix& gen, const std::vector<Eigen::VectorXd>& psi, double T,
                                      Eigen::Index count) {
  if (psi.empty()) throw InvalidArgument("psi_moments: no replicas");
  count = std::min(count, gen.size());
  std::vector<PsiMomentRow> rows;
  for (Eigen::Index i = 0; i < count; ++i) {
    Eigen::VectorXd x(Eigen::Index(psi.size()));
    for (std::size_t r = 0; r < psi.size(); ++r) x[Eigen::Index(r)] = psi[r][i];
    const SampleSummary sq = summarize(x.array().square().matrix());
    PsiMomentRow row;
    if (gen.fourier_basis()) {
      row.k = gen.modes().wave(i);
      row.parity = gen.modes().parity(i);
    }
    row.lambda = gen.lambda(i);
    row.summary = summarize(x);
    row.second_moment = sq.mean;
    row.second_moment_stderr = sq.mean_stderr;
    row.prediction = psi_moment_prediction(i, gen, T);
    row.clt_variance = 2 * v_form(Eigen::VectorXd::Unit(gen.size(), i), gen);
    rows.push_back(row);
  }
  return rows;
}

TestFunction parse_test_function(const TorusGeometry& geometry, const std::string& terms) {
  const auto parsed = parse_scalar_terms(terms, geometry.dim());
  if (parsed.empty()) throw InvalidArgument("test function: no terms");
  long top = 0;
  for (const auto& t : parsed) top = std::max<long>(top, t.k.squaredNorm());
  if (top == 0) throw InvalidArgument("test function: constant terms are not mean zero");
  auto modes = std::make_shared<const ModeSet>(enumerate_modes(geometry, geometry.eigenvalue(top)));
  Eigen::VectorXd c = Eigen::VectorXd::Zero(modes->size());
  for (const auto& t : parsed) {
    int sign = 1;
    const auto idx = modes->find(t.k, t.parity, &sign);
    if (!idx) throw InvalidArgument("test function: wave outside the mode set");
    c[*idx] += sign * t.amplitude / std::numbers::sqrt2;
  }
  return TestFunction(modes, c);
}

void write_energy_csv(const std::string& path, const std::vector<EnergyRow>& rows) {
  CsvWriter w(path, "T,eps,replicas,mean_h1,scaled_mean,scaled_stderr,prediction,limit,truncation_tail");
  for (const auto& r : rows) {
    w << r.T << r.eps << r.replicas << r.mean_h1 << r.scaled_mean << r.scaled_stderr << r.prediction << r.limit
      << r.truncation_tail;
    w.end_row();
  }
}

void write_z_gap_csv(const std::string& path, const std::vector<ZGapRow>& rows) {
  CsvWriter w(path, "T,eps,gap,gap_over_log");
  for (const auto& r : rows) {
    w << r.T << r.eps << r.gap << r.gap_over_log;
    w.end_row();
  }
}

void write_w2_csv(const std::string& path, const std::vector<W2Row>& rows) {
  CsvWriter w(path,
              "T,eps,replicas,mean_w2,mean_h1,mean_ratio,ratio_stderr,scaled_w2,limit,stat_err,grid_err,"
              "entropic_err,smoothing_err,max_iterations");
  for (const auto& r : rows) {
    w << r.T << r.eps << r.replicas << r.mean_w2 << r.mean_h1 << r.mean_ratio << r.ratio_stderr << r.scaled_w2
      << r.limit << r.stat_err << r.grid_err << r.entropic_err << r.smoothing_err << r.max_iterations;
    w.end_row();
  }
}

void write_psi_moments_csv(const std::string& path, const std::vector<PsiMomentRow>& rows) {
  CsvWriter w(path,
              "k_vector,parity,lambda,replicas,mean,variance,excess_kurtosis,second_moment,second_moment_stderr,"
              "prediction,clt_variance");
  for (const auto& r : rows) {
    w << wave_string(r.k) << std::string(r.parity == Parity::Cos ? "cos" : "sin") << r.lambda << r.summary.n
      << r.summary.mean << r.summary.variance << r.summary.excess_kurtosis << r.second_moment
      << r.second_moment_stderr << r.prediction << r.clt_variance;
    w.end_row();
  }
}

void write_flatness_csv(const std::string& path, const std::vector<FlatnessRow>& rows) {
  CsvWriter w(path, "T,eps,xi,replicas,failures,grid_failures,freq,ci_lower,ci_upper,mean_value,mean_slack");
  for (const auto& r : rows) {
    w << r.T << r.eps << r.xi << r.replicas << r.failures << r.grid_failures << r.freq << r.ci.lower << r.ci.upper
      << r.mean_value << r.mean_slack;
    w.end_row();
  }
}

nlohmann::json run_experiment(const ExperimentConfig& config, const std::vector<std::string>& stages, int threads,
                              const std::string& test_function) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  const bool csv = std::find(config.formats.begin(), config.formats.end(), "csv") != config.formats.end();
  const bool json = std::find(config.formats.begin(), config.formats.end(), "json") != config.formats.end();

  nlohmann::json manifest{{"config_hash", config.hash()},
                          {"code_version", ERGOT_VERSION},
                          {"seed", config.seed},
                          {"started", utc_now()},
                          {"stages", nlohmann::json::array()}};
  bool ok = true;
  std::optional<PsiSamples> samples;
  std::optional<GeneratorMatrix> gen;
  const DriftSpec drift = config.drift();
  const double limit = w2_limit(config.geometry());

  auto run_stage = [&](const std::string& name, const std::function<std::vector<std::string>()>& body) {
    nlohmann::json entry{{"name", name}, {"ok", true}, {"outputs", nlohmann::json::array()}};
    try {
      for (const auto& file : body()) {
        entry["outputs"].push_back({{"path", file}, {"sha256", sha256_file((dir / file).string())}});
      }
    } catch (const std::exception& e) {
      entry["ok"] = false;
      entry["error"] = e.what();
      ok = false;
    }
    manifest["stages"].push_back(entry);
  };
  auto need_samples = [&]() -> const PsiSamples& {
    if (!samples) samples = simulate_psi(config, threads);
    return *samples;
  };
  auto need_gen = [&]() -> const GeneratorMatrix& {
    if (!gen) gen.emplace(drift, *need_samples().modes);
    return *gen;
  };
  auto out = [&](const std::string& file) { return (dir / file).string(); };

  for (const auto& stage : stages) {
    if (stage == "psi") {
      run_stage(stage, [&] {
        const auto& s = need_samples();
        std::vector<std::string> files;
        if (!csv) return files;
        CsvWriter w(out("psi.csv"), "replica,k_vector,parity,psi");
        for (std::size_t r = 0; r < s.psi.back().size(); ++r) {
          for (Eigen::Index i = 0; i < s.modes->size(); ++i) {
            w << r << wave_string(s.modes->wave(i)) << std::string(s.modes->parity(i) == Parity::Cos ? "cos" : "sin")
              << s.psi.back()[r][i];
            w.end_row();
          }
        }
        files.push_back("psi.csv");
        if (need_gen().fourier_basis()) {
          write_psi_moments_csv(out("psi_moments.csv"), psi_moments(need_gen(), s.psi.back(), s.T.back(), s.modes->size()));
          files.push_back("psi_moments.csv");
        }
        return files;
      });
    } else if (stage == "energy") {
      run_stage(stage, [&] {
        const auto rows = energy_report(config, need_samples(), need_gen(), limit);
        std::vector<std::string> files;
        if (csv) {
          write_energy_csv(out("energy.csv"), rows);
          files.push_back("energy.csv");
        }
        if (csv && drift.constant_potential() && drift.field_terms().empty() && !drift.zero_field()) {
          write_z_gap_csv(out("z_gap.csv"),
                          z_gap_trend(config.geometry(), drift.constant_field(), config.lambda_max, config.T, config.gamma));
          files.push_back("z_gap.csv");
        }
        return files;
      });
    } else if (stage == "w2") {
      run_stage(stage, [&] {
        const auto rows = w2_report(config, need_samples(), limit);
        std::vector<std::string> files;
        if (csv) {
          write_w2_csv(out("w2.csv"), rows);
          files.push_back("w2.csv");
        }
        return files;
      });
    } else if (stage == "concentration") {
      run_stage(stage, [&] {
        const TestFunction g = parse_test_function(config.geometry(), test_function);
        SimConfig sim;
        sim.dt = config.dt;
        sim.seed = config.seed;
        sim.replicas = config.replicas;
        sim.threads = threads;
        sim.horizon = config.T.back();
        sim.checkpoints.assign(config.T.begin(), config.T.end() - 1);
        const auto rows = tail_empirics(g, config.xi, sim, drift, config.bernstein_c);
        std::vector<std::string> files;
        if (csv) {
          write_tail_csv(out("tails.csv"), rows);
          files.push_back("tails.csv");
        }
        return files;
      });
    } else if (stage == "flatness") {
      run_stage(stage, [&] {
        const auto& s = need_samples();
        const GridTransform transform(UniformGrid(config.geometry(), config.flatness_grid_n), s.modes->max_component());
        std::vector<FlatnessRow> rows;
        for (std::size_t t = 0; t < s.T.size(); ++t) {
          rows.push_back(flatness_row(s.empirical(t, config.eps_for(s.T[t]), s.psi[t].size()), 1 / std::log(s.T[t]),
                                      transform));
        }
        std::vector<std::string> files;
        if (csv) {
          write_flatness_csv(out("flatness.csv"), rows);
          files.push_back("flatness.csv");
        }
        return files;
      });
    } else {
      throw InvalidArgument("run_experiment: unknown stage '" + stage + "'");
    }
  }
  manifest["finished"] = utc_now();
  manifest["ok"] = ok;
  if (json) {
    std::ofstream os(out("manifest.json"));
    if (!os) throw Error("cannot open " + out("manifest.json"));
    os << manifest.dump(2) << '\n';
  }
  return manifest;
}

}  // namespace ergot

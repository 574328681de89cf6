#include "ergot/config.hpp"
#include "ergot/diffusion.hpp"
#include "ergot/errors.hpp"
#include "ergot/geometry.hpp"
#include "ergot/pipelines.hpp"
#include "ergot/verify.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace ergot;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

ExperimentConfig load(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out_dir = g.out;
  c.validate();
  return c;
}

int run_stages(const Globals& g, const std::vector<std::string>& stages, const std::string& test_function) {
  const ExperimentConfig c = load(g);
  const auto manifest = run_experiment(c, stages, g.threads, test_function);
  for (const auto& stage : manifest["stages"]) {
    std::printf("%-14s %s", stage["name"].get<std::string>().c_str(), stage["ok"].get<bool>() ? "ok" : "FAILED");
    if (stage.contains("error")) std::printf("  %s", stage["error"].get<std::string>().c_str());
    for (const auto& f : stage["outputs"]) std::printf("  %s", f["path"].get<std::string>().c_str());
    std::printf("\n");
  }
  return manifest["ok"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergot: occupation-measure transport experiments on flat tori"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override sim.seed");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "override output.dir");

  int d = 4;
  double L = 2 * std::numbers::pi;
  auto torus_options = [&](CLI::App* sub) {
    sub->add_option("--dim", d, "torus dimension")->check(CLI::Range(1, 4));
    sub->add_option("--side", L, "torus side length")->check(CLI::PositiveNumber);
  };

  auto* trace = app.add_subcommand("trace", "heat trace Theta^d - 1 and its small-time constant");
  std::vector<double> times = {1e-1, 1e-2, 1e-3};
  trace->add_option("--t", times, "times")->check(CLI::PositiveNumber);
  torus_options(trace);

  auto* spectral = app.add_subcommand("spectral", "spectral sums and eigenvalue counts");
  std::vector<double> eps = {1e-2, 1e-3, 1e-4};
  double lambda = 100.0;
  spectral->add_option("--eps", eps, "smoothing times")->check(CLI::PositiveNumber);
  spectral->add_option("--lambda", lambda, "Weyl counting level")->check(CLI::PositiveNumber);
  torus_options(spectral);

  auto* simulate_cmd = app.add_subcommand("simulate", "simulate replicas, write psi.csv and one trajectory");
  int stride = 0;
  simulate_cmd->add_option("--record-stride", stride, "steps between recorded states of replica 0 (0: none)");

  auto* psi = app.add_subcommand("psi", "psi samples and second moments");
  auto* energy = app.add_subcommand("energy", "smoothed H^-1 energy against the spectral prediction");
  auto* w2 = app.add_subcommand("w2", "Sinkhorn W2 of the smoothed empirical measure");
  auto* conc = app.add_subcommand("concentration", "exceedance tails and the flatness event");
  std::string test_function = "1.4142135623730951 cos 1 0 0 0";
  conc->add_option("--g", test_function, "test function terms 'a cos k1 .. kd; ...'");

  auto* verify_cmd = app.add_subcommand("verify", "acceptance suite with a pass/fail ledger");
  std::string suite = "all", ledger;
  std::optional<double> limit;
  verify_cmd->add_option("suite", suite, "spectral, variance, concentration, pipeline or all")
      ->check(CLI::IsMember({"spectral", "variance", "concentration", "pipeline", "all"}));
  verify_cmd->add_option("--ledger", ledger, "ledger JSON path (default <out>/ledger_<suite>.json)");
  verify_cmd->add_option("--limit-constant", limit, "replace vol/(8 pi^2) in the pipeline checks");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();
  CLI11_PARSE(app, argc, argv);

  try {
    if (trace->parsed()) {
      const TorusGeometry geo(d, L);
      std::printf("t,heat_trace,t_pow_half_d_times_trace,constant\n");
      for (double t : times) {
        const double h = heat_trace(t, geo);
        std::printf("%.17g,%.17g,%.17g,%.17g\n", t, h, std::pow(t, d / 2.0) * h, geo.heat_trace_constant());
      }
      return 0;
    }
    if (spectral->parsed()) {
      const TorusGeometry geo(d, L);
      std::printf("eps,sum_exp_over_lambda_2eps,sum_exp_over_lambda_sq\n");
      for (double e : eps) {
        std::printf("%.17g,%.17g,%.17g\n", e, spectral_sum_inv_lambda(2 * e, geo), spectral_sum_inv_lambda_sq(e, geo));
      }
      const ModeSet modes = enumerate_modes(geo, lambda);
      std::printf("weyl lambda=%.17g count=%zu constant=%.17g\n", lambda, weyl_count(modes, lambda), geo.weyl_constant());
      return 0;
    }
    if (simulate_cmd->parsed()) {
      const ExperimentConfig c = load(g);
      std::filesystem::create_directories(c.out_dir);
      const ModeSet modes = enumerate_modes(c.geometry(), c.lambda_max);
      SimConfig sim;
      sim.dt = c.dt;
      sim.seed = c.seed;
      sim.replicas = c.replicas;
      sim.threads = g.threads;
      sim.horizon = c.T.back();
      const auto results = simulate(sim, c.drift(), modes);
      const auto dir = std::filesystem::path(c.out_dir);
      write_psi_csv((dir / "psi.csv").string(), modes, results);
      std::printf("psi.csv: %d replicas, %td modes\n", c.replicas, modes.size());
      if (stride > 0) {
        SimConfig one = sim;
        one.replicas = 1;
        one.record_stride = stride;
        const auto rec = simulate(one, c.drift(), modes);
        write_trajectory((dir / "trajectory.bin").string(), *rec.front().trajectory);
        std::printf("trajectory.bin: %td states\n", rec.front().trajectory->positions.cols());
      }
      return 0;
    }
    if (psi->parsed()) return run_stages(g, {"psi"}, test_function);
    if (energy->parsed()) return run_stages(g, {"energy"}, test_function);
    if (w2->parsed()) return run_stages(g, {"w2"}, test_function);
    if (conc->parsed()) return run_stages(g, {"concentration", "flatness"}, test_function);
    if (verify_cmd->parsed()) {
      VerifyOptions opts;
      if (g.seed) opts.seed = *g.seed;
      opts.threads = g.threads;
      opts.limit_constant = limit;
      opts.progress = [](const nlohmann::json& entry, double) {
        std::printf("%s\n", ledger_line(entry).c_str());
        std::fflush(stdout);
      };
      const auto result = verify(suite, opts);
      const std::filesystem::path dir = g.out.empty() ? "out" : g.out;
      const std::string path = ledger.empty() ? (dir / ("ledger_" + suite + ".json")).string() : ledger;
      if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) std::filesystem::create_directories(parent);
      std::ofstream(path) << result.dump(2) << '\n';
      std::printf("ledger %s: %s\n", path.c_str(), result["passed"].get<bool>() ? "PASS" : "FAIL");
      return result["passed"].get<bool>() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

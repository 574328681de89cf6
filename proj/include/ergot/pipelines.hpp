#pragma once

#include "ergot/concentration.hpp"
#include "ergot/config.hpp"
#include "ergot/diffusion.hpp"
#include "ergot/smoothing.hpp"
#include "ergot/transport.hpp"
#include "ergot/variance.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace ergot {

/// psi vectors per horizon and replica from one stationary simulation with
/// checkpoints at every configured T.
struct PsiSamples {
  std::shared_ptr<const ModeSet> modes;
  std::vector<double> T;
  std::vector<std::vector<Eigen::VectorXd>> psi;  // [horizon][replica]

  std::vector<SpectralEmpirical> empirical(std::size_t horizon, double eps, std::size_t count) const;
};

PsiSamples simulate_psi(const ExperimentConfig& config, int threads);
PsiSamples simulate_psi(const SimConfig& sim, const DriftSpec& drift, std::shared_ptr<const ModeSet> modes,
                        const std::vector<double>& T);

/// vol / (8 pi^2).
double w2_limit(const TorusGeometry& geometry);

/// (T / log T) E[h1_energy] from the leading psi moments:
/// (1 / log T) sum exp(-2 lambda eps) / lambda * (2 / lambda - 2 V(Z phi) / lambda^2).
double energy_prediction(const GeneratorMatrix& gen, double T, double eps);

struct EnergyRow {
  double T = 0.0;
  double eps = 0.0;
  std::size_t replicas = 0;
  double mean_h1 = 0.0;
  double scaled_mean = 0.0;  // T / log T * mean h1
  double scaled_stderr = 0.0;
  double prediction = 0.0;
  double limit = 0.0;
  double truncation_tail = 0.0;
};

std::vector<EnergyRow> energy_report(const ExperimentConfig& config, const PsiSamples& samples,
                                     const GeneratorMatrix& gen, double limit_constant);

struct ZGapRow {
  double T = 0.0;
  double eps = 0.0;
  double gap = 0.0;  // prediction without Z minus prediction with Z
  double gap_over_log = 0.0;
};

/// Spectral Z effect on the energy prediction for constant V and Z = z.
std::vector<ZGapRow> z_gap_trend(const TorusGeometry& geometry, const Eigen::VectorXd& z, double lambda_max,
                                 const std::vector<double>& T, double gamma);

struct W2Row {
  double T = 0.0;
  double eps = 0.0;
  std::size_t replicas = 0;
  double mean_w2 = 0.0;
  double mean_h1 = 0.0;
  double mean_ratio = 0.0;  // mean of w2 / h1 over replicas
  double ratio_stderr = 0.0;
  double scaled_w2 = 0.0;  // T / log T * mean w2
  double limit = 0.0;
  double stat_err = 0.0;       // stderr of scaled_w2
  double grid_err = 0.0;       // d h^2 / 4, cell quantization bound
  double entropic_err = 0.0;   // |S_reg - S_{reg/2}| on the first replica
  double smoothing_err = 0.0;  // 2 d eps, heat-flow displacement bound
  int max_iterations = 0;
};

std::vector<W2Row> w2_report(const ExperimentConfig& config, const PsiSamples& samples, double limit_constant);

struct PsiMomentRow {
  Eigen::VectorXi k;
  Parity parity = Parity::Cos;
  double lambda = 0.0;
  SampleSummary summary;  // of psi
  double second_moment = 0.0;
  double second_moment_stderr = 0.0;
  double prediction = 0.0;    // 2 / lambda - 2 V(Z phi) / lambda^2
  double clt_variance = 0.0;  // 2 V(phi)
};

std::vector<PsiMomentRow> psi_moments(const GeneratorMatrix& gen, const std::vector<Eigen::VectorXd>& psi, double T,
                                      Eigen::Index count);

/// g from drift-style terms "a cos k ..." (a multiplies cos(w k.x)) over the
/// smallest ModeSet holding them.
TestFunction parse_test_function(const TorusGeometry& geometry, const std::string& terms);

void write_energy_csv(const std::string& path, const std::vector<EnergyRow>& rows);
void write_z_gap_csv(const std::string& path, const std::vector<ZGapRow>& rows);
void write_w2_csv(const std::string& path, const std::vector<W2Row>& rows);
void write_psi_moments_csv(const std::string& path, const std::vector<PsiMomentRow>& rows);
void write_flatness_csv(const std::string& path, const std::vector<FlatnessRow>& rows);

/// Runs the named stages ("psi", "energy", "w2", "concentration",
/// "flatness") under config.out_dir and writes manifest.json. A failing
/// stage is recorded in the manifest and the remaining stages still run.
/// Returns the manifest; its "ok" field is false if any stage failed.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::vector<std::string>& stages, int threads,
                              const std::string& test_function = "1.4142135623730951 cos 1 0 0 0");

}  // namespace ergot

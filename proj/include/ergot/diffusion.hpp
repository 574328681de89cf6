#pragma once

#include "ergot/drift.hpp"
#include "ergot/geometry.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ergot {

/// Independent random stream for one replica, keyed by (seed, replica).
class ReplicaRng {
 public:
  ReplicaRng(std::uint64_t seed, std::uint64_t replica);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

 private:
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
  boost::random::uniform_01<double> uniform_;
};

/// Draw from mu = exp(V) vol: uniform for constant V, otherwise rejection
/// from uniform with acceptance exp(V - sup V). Throws when the acceptance
/// rate bound exp(-2 sum|a|) drops below 1e-4.
Eigen::VectorXd sample_stationary(const DriftSpec& drift, ReplicaRng& rng);

/// One Euler-Maruyama step x <- x + (grad V + Z) dt + noise, wrapped into
/// [0, L)^d. `noise` receives the Gaussian increment sqrt(2 dt) xi.
void step(Eigen::Ref<Eigen::VectorXd> x, const DriftSpec& drift, double dt, ReplicaRng& rng,
          Eigen::Ref<Eigen::VectorXd> noise);
void step(Eigen::Ref<Eigen::VectorXd> x, const DriftSpec& drift, double dt, ReplicaRng& rng);

/// A single replica of the stationary diffusion. Its state advances only
/// through `run`, so consecutive runs continue one random stream.
class ReplicaSimulator {
 public:
  ReplicaSimulator(const DriftSpec& drift, double dt, std::uint64_t seed, std::uint64_t replica);
  /// Start from a given point instead of a stationary draw.
  ReplicaSimulator(const DriftSpec& drift, double dt, std::uint64_t seed, std::uint64_t replica,
                   const Eigen::VectorXd& start);

  const Eigen::VectorXd& state() const noexcept { return x_; }
  double dt() const noexcept { return dt_; }
  long steps() const noexcept { return steps_; }
  double time() const noexcept { return double(steps_) * dt_; }

  /// Advances n steps; visit(x, noise) sees the left-endpoint state and the
  /// increment used to leave it.
  template <typename Visitor>
  void run(long n, Visitor&& visit) {
    for (long s = 0; s < n; ++s) {
      prev_ = x_;
      step(x_, *drift_, dt_, rng_, noise_);
      if (!x_.allFinite()) fail();
      visit(static_cast<const Eigen::VectorXd&>(prev_), static_cast<const Eigen::VectorXd&>(noise_));
      ++steps_;
    }
  }

 private:
  [[noreturn]] void fail() const;

  const DriftSpec* drift_;
  double dt_;
  std::uint64_t replica_;
  ReplicaRng rng_;
  Eigen::VectorXd x_, prev_, noise_;
  long steps_ = 0;
};

/// Running sums of phi_i(X_t) dt for every mode of a ModeSet. The mode set
/// must outlive the accumulator.
class OccupationAccumulator {
 public:
  explicit OccupationAccumulator(const ModeSet& modes);

  const ModeSet& modes() const noexcept { return *modes_; }
  void add(const Eigen::Ref<const Eigen::VectorXd>& x, double dt);
  /// Appends a later, contiguous time segment.
  void merge(const OccupationAccumulator& later);

  double time() const noexcept { return time_; }
  /// sum phi_i(X_t) dt per mode.
  Eigen::VectorXd raw() const;
  /// psi_i(T) = raw_i / sqrt(T).
  Eigen::VectorXd psi() const;

 private:
  const ModeSet* modes_;
  int K_;
  int split_;  // axes [0, split) and [split, d) form the two phase tables
  std::vector<int> left_index_, right_index_;
  std::vector<double> left_re_, left_im_, right_re_, right_im_, axis_re_, axis_im_;
  std::vector<double> sum_re_, sum_im_;  // sum exp(i w k.x) dt per wave
  double time_ = 0.0;
};

using ScalarFunctional = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

struct SimConfig {
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  int replicas = 1;
  int first_replica = 0;
  /// Steps between recorded states; 0 records nothing.
  int record_stride = 0;
  /// Extra times at which snapshots are taken; the horizon is always last.
  std::vector<double> checkpoints;
  int threads = 1;
  /// dt times the largest consumed eigenvalue must not exceed this.
  double accuracy_guard = 0.1;
};

struct Trajectory {
  TorusGeometry geometry;
  double dt = 0.0;
  int record_stride = 0;
  /// d x n_records.
  Eigen::MatrixXd positions;
};

struct Snapshot {
  double time = 0.0;
  /// sum phi_i dt per mode, and sum g_j dt per functional.
  Eigen::VectorXd psi_raw;
  Eigen::VectorXd functional_raw;

  Eigen::VectorXd psi() const { return psi_raw / std::sqrt(time); }
  Eigen::VectorXd functional_mean() const { return functional_raw / time; }
};

struct ReplicaResult {
  int replica = 0;
  std::vector<Snapshot> snapshots;
  std::optional<Trajectory> trajectory;

  const Snapshot& final() const { return snapshots.back(); }
};

/// Number of Euler steps that reach time t on a dt grid.
long steps_for(double t, double dt);

/// Runs config.replicas stationary replicas in parallel. Results are ordered
/// by replica and do not depend on the thread count.
std::vector<ReplicaResult> simulate(const SimConfig& config, const DriftSpec& drift, const ModeSet& modes,
                                    const std::vector<ScalarFunctional>& functionals = {});

/// Runs body(replica) for replica in [first, first + count) on `threads` workers.
void parallel_replicas(int first, int count, int threads, const std::function<void(int)>& body);

void write_trajectory(const std::string& path, const Trajectory& trajectory);
Trajectory read_trajectory(const std::string& path);

/// CSV rows (replica, k_vector, parity, psi) for the final snapshot of each replica.
void write_psi_csv(const std::string& path, const ModeSet& modes, const std::vector<ReplicaResult>& results);

}  // namespace ergot

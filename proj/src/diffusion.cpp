#include "ergot/diffusion.hpp"

#include "ergot/errors.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

namespace ergot {

namespace {

using cd = std::complex<double>;

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t replica) {
  return std::seed_seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(replica),
                       std::uint32_t(replica >> 32), 0x65726730u};
}

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) os.put(char((v >> (8 * b)) & 0xff));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) os.put(char((v >> (8 * b)) & 0xff));
}
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) {
    const int c = is.get();
    if (c == EOF) throw Error("trajectory file truncated");
    v |= std::uint64_t(static_cast<unsigned char>(c)) << (8 * b);
  }
  return v;
}

constexpr char kTrajectoryMagic[5] = {'W', 'D', 'I', 'F', '1'};

}  // namespace

ReplicaRng::ReplicaRng(std::uint64_t seed, std::uint64_t replica) {
  auto seq = make_seed_seq(seed, replica);
  engine_.seed(seq);
}

Eigen::VectorXd sample_stationary(const DriftSpec& drift, ReplicaRng& rng) {
  const auto& g = drift.geometry();
  Eigen::VectorXd x(g.dim());
  auto propose = [&] {
    for (int j = 0; j < g.dim(); ++j) x[j] = g.side() * rng.uniform();
  };
  if (drift.constant_potential()) {
    propose();
    return x;
  }
  const double bound = drift.potential_bound();
  if (std::exp(-2.0 * bound) < 1e-4) {
    throw InvalidArgument("sample_stationary: rejection acceptance rate below 1e-4");
  }
  for (;;) {
    propose();
    if (rng.uniform() < std::exp(drift.potential_oscillation(x) - bound)) return x;
  }
}

void step(Eigen::Ref<Eigen::VectorXd> x, const DriftSpec& drift, double dt, ReplicaRng& rng,
          Eigen::Ref<Eigen::VectorXd> noise) {
  const int d = drift.geometry().dim();
  const double scale = std::sqrt(2.0 * dt);
  for (int j = 0; j < d; ++j) noise[j] = scale * rng.normal();
  if (drift.zero_field() && drift.constant_potential()) {
    x += noise;
  } else {
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1> v(d);
    drift.velocity(x, v);
    x += dt * v + noise;
  }
  drift.geometry().wrap(x);
}

void step(Eigen::Ref<Eigen::VectorXd> x, const DriftSpec& drift, double dt, ReplicaRng& rng) {
  Eigen::VectorXd noise(drift.geometry().dim());
  step(x, drift, dt, rng, noise);
}

ReplicaSimulator::ReplicaSimulator(const DriftSpec& drift, double dt, std::uint64_t seed,
                                   std::uint64_t replica)
    : drift_(&drift), dt_(dt), replica_(replica), rng_(seed, replica) {
  if (!(dt > 0.0)) throw InvalidArgument("ReplicaSimulator: dt must be positive");
  x_ = sample_stationary(drift, rng_);
  prev_ = x_;
  noise_ = Eigen::VectorXd::Zero(x_.size());
}

ReplicaSimulator::ReplicaSimulator(const DriftSpec& drift, double dt, std::uint64_t seed,
                                   std::uint64_t replica, const Eigen::VectorXd& start)
    : drift_(&drift), dt_(dt), replica_(replica), rng_(seed, replica), x_(start) {
  if (!(dt > 0.0)) throw InvalidArgument("ReplicaSimulator: dt must be positive");
  if (start.size() != drift.geometry().dim()) throw InvalidArgument("ReplicaSimulator: start has wrong dimension");
  drift.geometry().wrap(x_);
  prev_ = x_;
  noise_ = Eigen::VectorXd::Zero(x_.size());
}

void ReplicaSimulator::fail() const {
  throw Error("ReplicaSimulator: non-finite state in replica " + std::to_string(replica_) + " at step " +
              std::to_string(steps_));
}

OccupationAccumulator::OccupationAccumulator(const ModeSet& modes)
    : modes_(&modes), K_(modes.max_component()) {
  const int d = modes.dim();
  split_ = (d + 1) / 2;
  const int width = 2 * K_ + 1;
  const auto index = [&](const Eigen::VectorXi& k, int lo, int hi) {
    int idx = 0, stride = 1;
    for (int j = lo; j < hi; ++j) {
      idx += (k[j] + K_) * stride;
      stride *= width;
    }
    return idx;
  };
  left_index_.resize(static_cast<std::size_t>(modes.wave_count()));
  right_index_.resize(left_index_.size());
  for (Eigen::Index w = 0; w < modes.wave_count(); ++w) {
    const Eigen::VectorXi k = modes.waves().col(w);
    left_index_[std::size_t(w)] = index(k, 0, split_);
    right_index_[std::size_t(w)] = index(k, split_, d);
  }
  std::size_t left_size = 1, right_size = 1;
  for (int j = 0; j < d; ++j) (j < split_ ? left_size : right_size) *= std::size_t(width);
  left_re_.resize(left_size);
  left_im_.resize(left_size);
  right_re_.resize(right_size);
  right_im_.resize(right_size);
  axis_re_.resize(std::size_t(width));
  axis_im_.resize(std::size_t(width));
  sum_re_.assign(std::size_t(modes.wave_count()), 0.0);
  sum_im_.assign(std::size_t(modes.wave_count()), 0.0);
}

namespace {

// table <- table (x) axis with axis-major growth, in place; returns the new size.
std::size_t extend_table(std::vector<double>& re, std::vector<double>& im, std::size_t size,
                         const std::vector<double>& are, const std::vector<double>& aim) {
  for (std::size_t m = are.size(); m-- > 0;) {
    const double ar = are[m], ai = aim[m];
    double* dr = re.data() + m * size;
    double* di = im.data() + m * size;
    for (std::size_t t = 0; t < size; ++t) {
      const double tr = re[t], ti = im[t];
      dr[t] = tr * ar - ti * ai;
      di[t] = tr * ai + ti * ar;
    }
  }
  return size * are.size();
}

}  // namespace

void OccupationAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& x, double dt) {
  const int d = modes_->dim();
  const double w = modes_->geometry().wave_unit();
  left_re_[0] = dt;
  left_im_[0] = 0.0;
  right_re_[0] = 1.0;
  right_im_[0] = 0.0;
  std::size_t left_size = 1, right_size = 1;
  for (int j = 0; j < d; ++j) {
    const double c = std::cos(w * x[j]), sn = std::sin(w * x[j]);
    axis_re_[K_] = 1.0;
    axis_im_[K_] = 0.0;
    double pr = 1.0, pi = 0.0;
    for (int m = 1; m <= K_; ++m) {
      const double nr = pr * c - pi * sn;
      pi = pr * sn + pi * c;
      pr = nr;
      axis_re_[K_ + m] = pr;
      axis_im_[K_ + m] = pi;
      axis_re_[K_ - m] = pr;
      axis_im_[K_ - m] = -pi;
    }
    if (j < split_) {
      left_size = extend_table(left_re_, left_im_, left_size, axis_re_, axis_im_);
    } else {
      right_size = extend_table(right_re_, right_im_, right_size, axis_re_, axis_im_);
    }
  }
  const std::size_t waves = left_index_.size();
  for (std::size_t i = 0; i < waves; ++i) {
    const std::size_t l = std::size_t(left_index_[i]), r = std::size_t(right_index_[i]);
    sum_re_[i] += left_re_[l] * right_re_[r] - left_im_[l] * right_im_[r];
    sum_im_[i] += left_re_[l] * right_im_[r] + left_im_[l] * right_re_[r];
  }
  time_ += dt;
}

void OccupationAccumulator::merge(const OccupationAccumulator& later) {
  if (later.modes_ != modes_) throw InvalidArgument("OccupationAccumulator: merging different mode sets");
  for (std::size_t i = 0; i < sum_re_.size(); ++i) {
    sum_re_[i] += later.sum_re_[i];
    sum_im_[i] += later.sum_im_[i];
  }
  time_ += later.time_;
}

Eigen::VectorXd OccupationAccumulator::raw() const {
  Eigen::VectorXd out(modes_->size());
  for (std::size_t w = 0; w < sum_re_.size(); ++w) {
    out[Eigen::Index(2 * w)] = std::numbers::sqrt2 * sum_re_[w];
    out[Eigen::Index(2 * w + 1)] = std::numbers::sqrt2 * sum_im_[w];
  }
  return out;
}

Eigen::VectorXd OccupationAccumulator::psi() const {
  if (!(time_ > 0.0)) throw InvalidArgument("OccupationAccumulator: no time accumulated");
  return raw() / std::sqrt(time_);
}

long steps_for(double t, double dt) {
  const long n = std::lround(t / dt);
  if (n < 1 || std::abs(double(n) * dt - t) > 1e-9 * std::max(1.0, t)) {
    throw InvalidArgument("simulate: time " + std::to_string(t) + " is not a positive multiple of dt");
  }
  return n;
}

void parallel_replicas(int first, int count, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || count <= 1) {
    for (int r = first; r < first + count; ++r) body(r);
    return;
  }
  std::atomic<int> next{first};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (int t = 0; t < std::min(threads, count); ++t) {
    pool.emplace_back([&] {
      for (int r = next++; r < first + count; r = next++) {
        try {
          body(r);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

std::vector<ReplicaResult> simulate(const SimConfig& config, const DriftSpec& drift, const ModeSet& modes,
                                    const std::vector<ScalarFunctional>& functionals) {
  if (!(config.dt > 0.0) || !(config.horizon >= config.dt)) {
    throw InvalidArgument("simulate: need dt > 0 and horizon >= dt");
  }
  if (config.replicas < 1) throw InvalidArgument("simulate: need at least one replica");
  if (modes.geometry() != drift.geometry()) throw InvalidArgument("simulate: mode set and drift disagree on the torus");
  const double top = modes.size() ? modes.lambdas().maxCoeff() : 0.0;
  if (config.dt * top > config.accuracy_guard * (1.0 + 1e-12)) {
    throw InvalidArgument("simulate: dt * lambda_max exceeds the accuracy guard");
  }
  std::vector<long> marks;
  for (double t : config.checkpoints) {
    if (t < config.horizon) marks.push_back(steps_for(t, config.dt));
  }
  marks.push_back(steps_for(config.horizon, config.dt));
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  std::vector<ReplicaResult> results(static_cast<std::size_t>(config.replicas));
  parallel_replicas(config.first_replica, config.replicas, config.threads, [&](int replica) {
    ReplicaSimulator sim(drift, config.dt, config.seed, std::uint64_t(replica));
    OccupationAccumulator acc(modes);
    Eigen::VectorXd fsum = Eigen::VectorXd::Zero(Eigen::Index(functionals.size()));
    ReplicaResult out;
    out.replica = replica;
    std::vector<Eigen::VectorXd> recorded;
    const int stride = config.record_stride;
    for (long mark : marks) {
      sim.run(mark - sim.steps(), [&](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        if (stride > 0 && sim.steps() % stride == 0) recorded.push_back(x);
        acc.add(x, config.dt);
        for (std::size_t f = 0; f < functionals.size(); ++f) fsum[Eigen::Index(f)] += functionals[f](x) * config.dt;
      });
      out.snapshots.push_back({sim.time(), acc.raw(), fsum});
    }
    if (stride > 0) {
      if (sim.steps() % stride == 0) recorded.push_back(sim.state());
      Trajectory traj{drift.geometry(), config.dt, stride, Eigen::MatrixXd(drift.geometry().dim(), Eigen::Index(recorded.size()))};
      for (std::size_t i = 0; i < recorded.size(); ++i) traj.positions.col(Eigen::Index(i)) = recorded[i];
      out.trajectory = std::move(traj);
    }
    results[std::size_t(replica - config.first_replica)] = std::move(out);
  });
  return results;
}

void write_trajectory(const std::string& path, const Trajectory& trajectory) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  os.write(kTrajectoryMagic, 5);
  put_u32(os, std::uint32_t(trajectory.geometry.dim()));
  put_f64(os, trajectory.geometry.side());
  put_f64(os, trajectory.dt);
  put_u32(os, std::uint32_t(trajectory.record_stride));
  put_u64(os, std::uint64_t(trajectory.positions.cols()));
  for (Eigen::Index c = 0; c < trajectory.positions.cols(); ++c)
    for (Eigen::Index r = 0; r < trajectory.positions.rows(); ++r) put_f64(os, trajectory.positions(r, c));
  if (!os) throw Error("write failed: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || !std::equal(magic, magic + 5, kTrajectoryMagic)) throw Error("not a trajectory file: " + path);
  const int d = int(get_le(is, 4));
  const double L = std::bit_cast<double>(get_le(is, 8));
  const double dt = std::bit_cast<double>(get_le(is, 8));
  const int stride = int(get_le(is, 4));
  const auto n = get_le(is, 8);
  Trajectory traj{TorusGeometry(d, L), dt, stride, Eigen::MatrixXd(d, Eigen::Index(n))};
  for (Eigen::Index c = 0; c < traj.positions.cols(); ++c)
    for (int r = 0; r < d; ++r) traj.positions(r, c) = std::bit_cast<double>(get_le(is, 8));
  return traj;
}

void write_psi_csv(const std::string& path, const ModeSet& modes, const std::vector<ReplicaResult>& results) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  os << "replica,k_vector,parity,psi\n";
  char buf[64];
  for (const auto& r : results) {
    const Eigen::VectorXd psi = r.final().psi();
    for (Eigen::Index i = 0; i < modes.size(); ++i) {
      os << r.replica << ',';
      const Eigen::VectorXi k = modes.wave(i);
      for (int j = 0; j < k.size(); ++j) os << (j ? ";" : "") << k[j];
      std::snprintf(buf, sizeof buf, "%.17g", psi[i]);
      os << ',' << (modes.parity(i) == Parity::Cos ? "cos" : "sin") << ',' << buf << '\n';
    }
  }
  if (!os) throw Error("write failed: " + path);
}

}  // namespace ergot

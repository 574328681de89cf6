#include "ergot/variance.hpp"

#include "ergot/errors.hpp"
#include "ergot/grid.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

namespace ergot {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// One product-to-sum term: coef * trig_parity(w m.x).
struct WaveTerm {
  Eigen::VectorXi m;
  Parity parity;
  double coef;
};

// T_P(alpha) * U(beta), alpha = w q.x, beta = w k.x, as sums of trig(w (k +- q).x).
std::vector<WaveTerm> product_to_sum(Parity P, Parity U, const Eigen::VectorXi& q, const Eigen::VectorXi& k) {
  const Eigen::VectorXi plus = k + q, minus = k - q;
  if (P == Parity::Cos && U == Parity::Cos) return {{plus, Parity::Cos, 0.5}, {minus, Parity::Cos, 0.5}};
  if (P == Parity::Cos && U == Parity::Sin) return {{plus, Parity::Sin, 0.5}, {minus, Parity::Sin, 0.5}};
  if (P == Parity::Sin && U == Parity::Cos) return {{plus, Parity::Sin, 0.5}, {minus, Parity::Sin, -0.5}};
  return {{minus, Parity::Cos, 0.5}, {plus, Parity::Cos, -0.5}};
}

bool lex_positive(const Eigen::VectorXi& m) {
  for (int j = 0; j < m.size(); ++j) {
    if (m[j] != 0) return m[j] > 0;
  }
  return false;
}

using EscapeKey = std::pair<std::vector<int>, int>;

void factorize(const Eigen::SparseMatrix<double>& A,
               std::shared_ptr<const Eigen::SparseLU<Eigen::SparseMatrix<double>>>& out) {
  auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  lu->analyzePattern(A);
  lu->factorize(A);
  if (lu->info() != Eigen::Success) throw Error("GeneratorMatrix: restricted generator is singular");
  out = std::move(lu);
}

}  // namespace

GeneratorMatrix::GeneratorMatrix(const DriftSpec& drift, ModeSet modes) : modes_(std::move(modes)) {
  if (drift.geometry() != modes_.geometry()) throw InvalidArgument("GeneratorMatrix: drift and modes disagree on the torus");
  if (modes_.size() == 0) throw InvalidArgument("GeneratorMatrix: empty mode set");
  fourier_ = drift.constant_potential();
  if (fourier_) {
    assemble_fourier(drift);
  } else {
    assemble_galerkin(drift);
  }
  Eigen::SparseMatrix<double> A = -matrix();
  A.makeCompressed();
  factorize_blocks(A);
  if (!blocks_) factorize(A, solver_);
}

struct GeneratorMatrix::Block {
  std::vector<Eigen::Index> index;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
};

void GeneratorMatrix::factorize_blocks(const Eigen::SparseMatrix<double>& A) {
  constexpr Eigen::Index kMaxBlock = 256;
  const Eigen::Index n = A.rows();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) parent[std::size_t(i)] = i;
  auto root = [&](Eigen::Index i) {
    while (parent[std::size_t(i)] != i) i = parent[std::size_t(i)] = parent[std::size_t(parent[std::size_t(i)])];
    return i;
  };
  for (Eigen::Index col = 0; col < A.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it) {
      const Eigen::Index a = root(it.row()), b = root(col);
      if (a != b) parent[std::size_t(std::max(a, b))] = std::min(a, b);
    }
  }
  std::map<Eigen::Index, int> id;
  std::vector<int> block_of(static_cast<std::size_t>(n));
  std::vector<std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [it, fresh] = id.emplace(root(i), int(members.size()));
    if (fresh) members.emplace_back();
    members[std::size_t(it->second)].push_back(i);
    if (Eigen::Index(members[std::size_t(it->second)].size()) > kMaxBlock) return;
    block_of[std::size_t(i)] = it->second;
  }
  auto blocks = std::make_shared<std::vector<Block>>(members.size());
  for (std::size_t b = 0; b < members.size(); ++b) {
    const auto& idx = members[b];
    Eigen::MatrixXd dense(Eigen::Index(idx.size()), Eigen::Index(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < idx.size(); ++c) dense(Eigen::Index(r), Eigen::Index(c)) = A.coeff(idx[r], idx[c]);
    }
    (*blocks)[b].index = idx;
    (*blocks)[b].lu.compute(dense);
    if (!((*blocks)[b].lu.rcond() > 1e-14)) throw Error("GeneratorMatrix: restricted generator is singular");
  }
  blocks_ = std::move(blocks);
  block_of_ = std::move(block_of);
}

void GeneratorMatrix::assemble_fourier(const DriftSpec& drift) {
  const Eigen::Index M = modes_.size();
  const double w = modes_.geometry().wave_unit();
  lambdas_ = modes_.lambdas();
  escape_mass_ = Eigen::VectorXd::Zero(M);
  escape_lambda_ = Eigen::VectorXd::Zero(M);
  std::vector<Eigen::Triplet<double>> trip;

  const Eigen::VectorXd& z = drift.constant_field();
  for (Eigen::Index j = 0; j < modes_.wave_count(); ++j) {
    const double b = w * modes_.waves().col(j).cast<double>().dot(z);
    if (b == 0.0) continue;
    // z . grad(sqrt2 cos) = -b sqrt2 sin and z . grad(sqrt2 sin) = b sqrt2 cos.
    trip.emplace_back(2 * j + 1, 2 * j, -b);
    trip.emplace_back(2 * j, 2 * j + 1, b);
  }

  Eigen::VectorXd leak = Eigen::VectorXd::Zero(M);
  for (Eigen::Index i = 0; i < M && !drift.field_terms().empty(); ++i) {
    const Eigen::VectorXi k = modes_.wave(i);
    const Parity p = modes_.parity(i);
    // grad(sqrt2 trig_p(beta)) = sqrt2 w k * (cos: -sin(beta), sin: +cos(beta)).
    const double dsign = p == Parity::Cos ? -1.0 : 1.0;
    const Parity U = p == Parity::Cos ? Parity::Sin : Parity::Cos;
    std::map<EscapeKey, double> escaped;
    for (const auto& t : drift.field_terms()) {
      const double ak = t.amplitude.dot(k.cast<double>());
      if (ak == 0.0) continue;
      const double scale = kSqrt2 * w * ak * dsign;
      for (const auto& term : product_to_sum(t.parity, U, t.k, k)) {
        const double amp = scale * term.coef;  // function amplitude of trig(w m.x)
        if (term.m.isZero()) {
          if (term.parity == Parity::Cos) leak[i] += amp;
          continue;
        }
        int sign = 1;
        if (auto idx = modes_.find(term.m, term.parity, &sign)) {
          trip.emplace_back(*idx, i, sign * amp / kSqrt2);
          continue;
        }
        Eigen::VectorXi m = term.m;
        double c = amp / kSqrt2;
        if (!lex_positive(m)) {
          m = -m;
          if (term.parity == Parity::Sin) c = -c;
        }
        escaped[{std::vector<int>(m.data(), m.data() + m.size()), int(term.parity)}] += c;
        escape_lambda_[i] = std::max(escape_lambda_[i], modes_.geometry().eigenvalue(m.squaredNorm()));
      }
    }
    for (const auto& [key, c] : escaped) escape_mass_[i] += c * c;
    if (escape_mass_[i] == 0.0) escape_lambda_[i] = 0.0;
  }
  constant_leak_ = leak.size() ? leak.cwiseAbs().maxCoeff() : 0.0;
  antisym_.resize(M, M);
  antisym_.setFromTriplets(trip.begin(), trip.end());
  antisym_.prune(0.0);
}

void GeneratorMatrix::assemble_galerkin(const DriftSpec& drift) {
  const auto& g = modes_.geometry();
  const int d = g.dim();
  const Eigen::Index M = modes_.size();
  const int K = std::max(modes_.max_component(), drift.max_component());
  const UniformGrid grid(g, std::max(32, 4 * K + 16));
  const Eigen::Index N = grid.size();
  if (double(N) * double(M + 1) * double(d + 2) > 4e8) {
    throw InvalidArgument("GeneratorMatrix: Galerkin quadrature exceeds the memory budget");
  }
  const double w = g.wave_unit();

  // Basis values and derivatives at grid points; column 0 is the constant.
  Eigen::MatrixXd F(N, M + 1);
  std::vector<Eigen::MatrixXd> D(std::size_t(d), Eigen::MatrixXd::Zero(N, M + 1));
  Eigen::VectorXd weight(N);
  Eigen::MatrixXd Zx(N, d);
  Eigen::VectorXd z(d);
  const Eigen::MatrixXd kd = modes_.waves().cast<double>();
  for (Eigen::Index p = 0; p < N; ++p) {
    const Eigen::VectorXd x = grid.point(p);
    weight[p] = std::exp(drift.potential(x)) * g.volume() / double(N);
    drift.field(x, z);
    Zx.row(p) = z.transpose();
    F(p, 0) = 1.0;
    const Eigen::VectorXd phase = w * (kd.transpose() * x);
    for (Eigen::Index j = 0; j < modes_.wave_count(); ++j) {
      const double c = kSqrt2 * std::cos(phase[j]), s = kSqrt2 * std::sin(phase[j]);
      F(p, 1 + 2 * j) = c;
      F(p, 2 + 2 * j) = s;
      for (int a = 0; a < d; ++a) {
        D[std::size_t(a)](p, 1 + 2 * j) = -w * kd(a, j) * s;
        D[std::size_t(a)](p, 2 + 2 * j) = w * kd(a, j) * c;
      }
    }
  }
  const Eigen::MatrixXd WF = weight.asDiagonal() * F;
  const Eigen::MatrixXd G = F.transpose() * WF;
  Eigen::MatrixXd stiff = Eigen::MatrixXd::Zero(M + 1, M + 1);
  Eigen::MatrixXd ZD = Eigen::MatrixXd::Zero(N, M + 1);
  for (int a = 0; a < d; ++a) {
    const auto& Da = D[std::size_t(a)];
    stiff.noalias() += Da.transpose() * weight.asDiagonal() * Da;
    ZD.noalias() += Zx.col(a).asDiagonal() * Da;
  }
  D.clear();
  const Eigen::MatrixXd Zmat = WF.transpose() * ZD;  // <f_a, Z f_b>_mu

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(stiff, G);
  if (es.info() != Eigen::Success) throw Error("GeneratorMatrix: generalized eigensolve failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  kernel_residual_ = std::abs(ev[0]);
  if (!(ev[1] > 1e3 * kernel_residual_)) throw Error("GeneratorMatrix: no spectral gap above the constant mode");
  const Eigen::MatrixXd& E = es.eigenvectors();
  basis_ = E.rightCols(M);
  lambdas_ = ev.tail(M);

  Eigen::MatrixXd S = basis_.transpose() * Zmat * basis_;
  antisymmetry_defect_ = (S + S.transpose()).cwiseAbs().maxCoeff();
  S = 0.5 * (S - S.transpose());
  const Eigen::RowVectorXd leak = E.col(0).transpose() * Zmat * basis_;
  constant_leak_ = leak.cwiseAbs().maxCoeff();
  antisym_ = S.sparseView();

  const Eigen::MatrixXd ZE = ZD * basis_;
  escape_mass_.resize(M);
  const double shell = g.eigenvalue(long(modes_.max_component() + drift.max_component()) *
                                    (modes_.max_component() + drift.max_component()) * d);
  escape_lambda_ = Eigen::VectorXd::Constant(M, shell);
  for (Eigen::Index i = 0; i < M; ++i) {
    const double total = (weight.array() * ZE.col(i).array().square()).sum();
    const double kept = S.col(i).squaredNorm() + leak[i] * leak[i];
    escape_mass_[i] = std::max(0.0, total - kept);
  }
}

Eigen::SparseMatrix<double> GeneratorMatrix::matrix() const {
  Eigen::SparseMatrix<double> L = antisym_;
  for (Eigen::Index i = 0; i < size(); ++i) L.coeffRef(i, i) -= lambdas_[i];
  L.makeCompressed();
  return L;
}

GeneratorMatrix::Escape GeneratorMatrix::escape(Eigen::Index i) const {
  if (i < 0 || i >= size()) throw InvalidArgument("GeneratorMatrix: mode index out of range");
  return {escape_mass_[i], escape_lambda_[i]};
}

Eigen::VectorXd GeneratorMatrix::solve(const Eigen::Ref<const Eigen::VectorXd>& c) const {
  if (c.size() != size()) throw InvalidArgument("GeneratorMatrix: coefficient size mismatch");
  if (blocks_) {
    Eigen::VectorXd u(c.size());
    for (const Block& b : *blocks_) {
      Eigen::VectorXd local(Eigen::Index(b.index.size()));
      for (std::size_t j = 0; j < b.index.size(); ++j) local[Eigen::Index(j)] = c[b.index[j]];
      local = b.lu.solve(local);
      for (std::size_t j = 0; j < b.index.size(); ++j) u[b.index[j]] = local[Eigen::Index(j)];
    }
    return u;
  }
  Eigen::VectorXd u = solver_->solve(Eigen::VectorXd(c));
  if (solver_->info() != Eigen::Success) throw Error("GeneratorMatrix: solve failed");
  return u;
}

double GeneratorMatrix::quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& c) const {
  if (!blocks_) return c.dot(solve(c));
  if (c.size() != size()) throw InvalidArgument("GeneratorMatrix: coefficient size mismatch");
  std::vector<int> touched;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (c[i] != 0.0) touched.push_back(block_of_[std::size_t(i)]);
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  double sum = 0.0;
  for (int id : touched) {
    const Block& b = (*blocks_)[std::size_t(id)];
    Eigen::VectorXd local(Eigen::Index(b.index.size()));
    for (std::size_t j = 0; j < b.index.size(); ++j) local[Eigen::Index(j)] = c[b.index[j]];
    sum += local.dot(b.lu.solve(local));
  }
  return sum;
}

double v_form(const Eigen::Ref<const Eigen::VectorXd>& coeffs, const GeneratorMatrix& gen) {
  return gen.quadratic_form(coeffs);
}

double v_form_z(Eigen::Index i, const GeneratorMatrix& gen) {
  const Eigen::VectorXd zc = gen.antisymmetric_part().col(i);
  const auto esc = gen.escape(i);
  if (esc.mass > 1e-10 * (1.0 + zc.squaredNorm())) {
    std::ostringstream msg;
    msg << "v_form_z: Z e_" << i << " leaves the basis; enlarge lambda_max to at least " << esc.required_lambda;
    throw TruncationError(msg.str(), esc.mass);
  }
  return v_form(zc, gen);
}

double variance_identity_residual(Eigen::Index i, const GeneratorMatrix& gen) {
  const double lam = gen.lambda(i);
  const double lhs = v_form(Eigen::VectorXd::Unit(gen.size(), i), gen);
  return std::abs(lhs - (1.0 / lam - v_form_z(i, gen) / (lam * lam)));
}

double psi_moment_prediction(Eigen::Index i, const GeneratorMatrix& gen, double T) {
  if (!(T > 0.0)) throw InvalidArgument("psi_moment_prediction: T must be positive");
  const double lam = gen.lambda(i);
  return 2.0 / lam - 2.0 * v_form_z(i, gen) / (lam * lam);
}

double duhamel_residual(Eigen::Index i, const GeneratorMatrix& gen, double t, int quad_steps) {
  if (!(t > 0.0) || quad_steps < 1) throw InvalidArgument("duhamel_residual: need t > 0 and quad_steps >= 1");
  if (gen.size() > 2000) throw InvalidArgument("duhamel_residual: basis too large for dense exponentials");
  const Eigen::MatrixXd L(gen.matrix());
  const double lam = gen.lambda(i);
  const Eigen::VectorXd e = Eigen::VectorXd::Unit(gen.size(), i);
  const Eigen::VectorXd lhs = (t * L).exp() * e;

  const double h = t / quad_steps;
  const Eigen::MatrixXd step = (h * L).exp();
  Eigen::VectorXd v = (0.5 * h * L).exp() * Eigen::VectorXd(gen.antisymmetric_part().col(i));
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(gen.size());
  for (int j = 0; j < quad_steps; ++j) {
    const double s = (j + 0.5) * h;
    integral += (h * std::exp(-lam * (t - s))) * v;
    v = step * v;
  }
  return (lhs - std::exp(-lam * t) * e - integral).norm();
}

double block_v_form(double lambda, double b) { return lambda / (lambda * lambda + b * b); }

double block_v_form_z(double lambda, double b) { return b * b * lambda / (lambda * lambda + b * b); }

}  // namespace ergot

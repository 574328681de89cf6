#include "ergot/grid.hpp"

#include "ergot/errors.hpp"

#include <cmath>

namespace ergot {

namespace {
constexpr double kPi = std::numbers::pi;
using cd = std::complex<double>;
}  // namespace

UniformGrid::UniformGrid(const TorusGeometry& geometry, int n) : geometry_(geometry), n_(n) {
  if (n < 1) throw InvalidArgument("UniformGrid: need at least one point per axis");
  size_ = 1;
  for (int j = 0; j < geometry.dim(); ++j) size_ *= n;
}

std::array<int, 4> UniformGrid::multi_index(Eigen::Index idx) const {
  std::array<int, 4> m{0, 0, 0, 0};
  for (int j = 0; j < dim(); ++j) {
    m[j] = static_cast<int>(idx % n_);
    idx /= n_;
  }
  return m;
}

Eigen::VectorXd UniformGrid::point(Eigen::Index idx) const {
  const auto m = multi_index(idx);
  Eigen::VectorXd x(dim());
  for (int j = 0; j < dim(); ++j) x[j] = m[j] * spacing();
  return x;
}

GridTransform::GridTransform(const UniformGrid& grid, int max_component)
    : grid_(grid), K_(max_component) {
  const int n = grid.points_per_axis();
  if (2 * K_ + 1 > n) {
    throw InvalidArgument("GridTransform: grid too coarse for the requested wave numbers");
  }
  synth_.resize(n, 2 * K_ + 1);
  for (int x = 0; x < n; ++x) {
    for (int m = -K_; m <= K_; ++m) {
      synth_(x, m + K_) = std::polar(1.0, 2 * kPi * double(m) * x / n);
    }
  }
}

Eigen::Index GridTransform::box_index(const Eigen::Ref<const Eigen::VectorXi>& k) const {
  Eigen::Index idx = 0, stride = 1;
  for (int j = 0; j < k.size(); ++j) {
    idx += (k[j] + K_) * stride;
    stride *= 2 * K_ + 1;
  }
  return idx;
}

Eigen::VectorXd GridTransform::synthesize(const ModeSet& modes,
                                          const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                                          const std::array<int, 4>& alpha) const {
  if (modes.max_component() > K_) throw InvalidArgument("GridTransform: mode set exceeds wave range");
  if (coeffs.size() != modes.size()) throw InvalidArgument("GridTransform: coefficient size mismatch");
  const int d = grid_.dim();
  const double w = modes.geometry().wave_unit();
  std::vector<int> dims(d, 2 * K_ + 1);
  Eigen::Index box = 1;
  for (int j = 0; j < d; ++j) box *= 2 * K_ + 1;
  std::vector<cd> data(static_cast<std::size_t>(box), cd(0.0, 0.0));

  // f = Re sum_k C_k exp(i w k.x): cos mode -> sqrt2 c, sin mode -> -i sqrt2 c.
  for (Eigen::Index j = 0; j < modes.wave_count(); ++j) {
    const auto k = modes.waves().col(j);
    cd factor(std::numbers::sqrt2, 0.0);
    for (int a = 0; a < d; ++a) {
      for (int p = 0; p < alpha[a]; ++p) factor *= cd(0.0, w * k[a]);
    }
    const cd value = factor * cd(coeffs[2 * j], -coeffs[2 * j + 1]);
    data[static_cast<std::size_t>(box_index(k))] += value;
  }
  for (int axis = 0; axis < d; ++axis) data = apply_along_axis(data, dims, axis, synth_);
  Eigen::VectorXd out(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) out[static_cast<Eigen::Index>(i)] = data[i].real();
  return out;
}

std::vector<cd> GridTransform::analyze_box(const Eigen::Ref<const Eigen::VectorXd>& values) const {
  if (values.size() != grid_.size()) throw InvalidArgument("GridTransform: grid size mismatch");
  const int d = grid_.dim();
  std::vector<int> dims(d, grid_.points_per_axis());
  std::vector<cd> data(values.data(), values.data() + values.size());
  const Eigen::MatrixXcd analysis = synth_.adjoint() / double(grid_.points_per_axis());
  for (int axis = 0; axis < d; ++axis) data = apply_along_axis(data, dims, axis, analysis);
  return data;
}

Eigen::VectorXd GridTransform::box_to_modes(const ModeSet& modes, const std::vector<cd>& box) const {
  if (modes.max_component() > K_) throw InvalidArgument("GridTransform: mode set exceeds wave range");
  Eigen::VectorXd out(modes.size());
  for (Eigen::Index j = 0; j < modes.wave_count(); ++j) {
    const cd g = box[static_cast<std::size_t>(box_index(modes.waves().col(j)))];
    out[2 * j] = std::numbers::sqrt2 * g.real();
    out[2 * j + 1] = -std::numbers::sqrt2 * g.imag();
  }
  return out;
}

Eigen::VectorXd GridTransform::analyze(const ModeSet& modes,
                                       const Eigen::Ref<const Eigen::VectorXd>& values) const {
  return box_to_modes(modes, analyze_box(values));
}

}  // namespace ergot

#pragma once

#include "ergot/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <vector>

namespace ergot {

/// Uniform periodic grid with n points per axis on a torus. Points sit at
/// i * L / n; linear index runs with axis 0 fastest.
class UniformGrid {
 public:
  UniformGrid(const TorusGeometry& geometry, int n);

  const TorusGeometry& geometry() const noexcept { return geometry_; }
  int dim() const noexcept { return geometry_.dim(); }
  int points_per_axis() const noexcept { return n_; }
  Eigen::Index size() const noexcept { return size_; }
  double spacing() const noexcept { return geometry_.side() / n_; }
  /// Diagonal of one grid cell.
  double cell_diagonal() const noexcept { return spacing() * std::sqrt(double(dim())); }
  /// Per-axis integer coordinates of a linear index.
  std::array<int, 4> multi_index(Eigen::Index idx) const;
  Eigen::VectorXd point(Eigen::Index idx) const;

 private:
  TorusGeometry geometry_;
  int n_;
  Eigen::Index size_;
};

/// Applies `op` (out_len x in_len) along one axis of a column-major tensor
/// whose extents are `dims`; `dims[axis]` becomes `op.rows()`.
template <typename Scalar, typename MatrixType>
std::vector<Scalar> apply_along_axis(const std::vector<Scalar>& in, std::vector<int>& dims,
                                     int axis, const MatrixType& op) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::Index inner = 1, outer = 1;
  for (int j = 0; j < axis; ++j) inner *= dims[j];
  for (std::size_t j = axis + 1; j < dims.size(); ++j) outer *= dims[j];
  const Eigen::Index in_len = dims[axis];
  const Eigen::Index out_len = op.rows();
  std::vector<Scalar> out(static_cast<std::size_t>(inner * out_len * outer));
  if (inner == 1) {
    Eigen::Map<const Mat> block(in.data(), in_len, outer);
    Eigen::Map<Mat> dst(out.data(), out_len, outer);
    dst.noalias() = op * block;
    dims[axis] = static_cast<int>(out_len);
    return out;
  }
  const Mat op_t = op.transpose();
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Map<const Mat> block(in.data() + o * inner * in_len, inner, in_len);
    Eigen::Map<Mat> dst(out.data() + o * inner * out_len, inner, out_len);
    dst.noalias() = block * op_t;
  }
  dims[axis] = static_cast<int>(out_len);
  return out;
}

/// Synthesis and analysis of real trigonometric series over a ModeSet on a
/// uniform grid, by separable per-axis DFT matrices.
class GridTransform {
 public:
  GridTransform(const UniformGrid& grid, int max_component);

  const UniformGrid& grid() const noexcept { return grid_; }
  int max_component() const noexcept { return K_; }

  /// Values of sum_i c_i d^alpha phi_i at every grid point; alpha holds the
  /// derivative order per axis.
  Eigen::VectorXd synthesize(const ModeSet& modes, const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                             const std::array<int, 4>& alpha = {0, 0, 0, 0}) const;

  /// Grid inner products <g, phi_i> (mean over grid points). Exact for
  /// trigonometric g without aliasing.
  Eigen::VectorXd analyze(const ModeSet& modes, const Eigen::Ref<const Eigen::VectorXd>& values) const;

  /// Complex box coefficients G_k = mean_x g(x) exp(-i w k.x) for k in [-K, K]^d.
  std::vector<std::complex<double>> analyze_box(const Eigen::Ref<const Eigen::VectorXd>& values) const;
  /// Mode coefficients from box coefficients.
  Eigen::VectorXd box_to_modes(const ModeSet& modes, const std::vector<std::complex<double>>& box) const;

 private:
  Eigen::Index box_index(const Eigen::Ref<const Eigen::VectorXi>& k) const;

  UniformGrid grid_;
  int K_;
  Eigen::MatrixXcd synth_;  // n x (2K+1)
};

}  // namespace ergot

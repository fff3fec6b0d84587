#pragma once

#include "gsdtta/graph.hpp"
#include "gsdtta/pointcloud.hpp"

#include <Eigen/Core>

namespace gsdtta {

/// Laplacian eigenpairs with a canonical ordering and sign.
///
/// `eigenvalues` always holds the full ascending spectrum; `eigenvectors`
/// holds the lowest K columns (K == N for a complete basis). Canonical form:
///  - eigenvalues below the zero tolerance are clamped to 0 and, when their
///    count matches the number of connected components, the zero modes are
///    the normalized component indicators ordered by lowest vertex;
///  - within a cluster of equal eigenvalues columns are ordered by the first
///    index of their largest-magnitude entry;
///  - the largest-magnitude entry of each column is positive (ties: lower index).
struct SpectralBasis {
  Eigen::MatrixXd eigenvectors;
  Eigen::VectorXd eigenvalues;
  Eigen::Index n_zero = 0;

  Eigen::Index size() const noexcept { return eigenvectors.rows(); }
  Eigen::Index num_modes() const noexcept { return eigenvectors.cols(); }
  bool complete() const noexcept { return eigenvectors.cols() == eigenvectors.rows(); }
};

using Coefficients = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Per-axis GFT coefficients, one row per computed mode.
struct SpectralCoefficients {
  Coefficients coeffs;
};

/// Additive perturbation of the lowest M coefficient rows.
struct SpectralAdjustment {
  Coefficients delta;

  Eigen::Index m() const noexcept { return delta.rows(); }
  static SpectralAdjustment zeros(Eigen::Index m) { return {Coefficients::Zero(m, 3)}; }
};

/// Eigenvalues below this count as zero.
double zero_tolerance(double largest_eigenvalue);

/// Dense L = D_o - A_o.
Eigen::MatrixXd laplacian(const OutlierAwareGraph& graph);

/// Full decomposition (Eigen's self-adjoint solver).
SpectralBasis eigendecompose(const Eigen::MatrixXd& laplacian);

/// Lowest `modes` eigenvectors plus the full spectrum, via LAPACK
/// tridiagonal reduction and MRRR. Matches eigendecompose() on shared modes.
SpectralBasis eigendecompose_lowest(const Eigen::MatrixXd& laplacian, Eigen::Index modes);

/// Applies the canonical form described on SpectralBasis in place.
void canonicalize(SpectralBasis& basis, const Eigen::MatrixXd& laplacian);

/// Graph + Laplacian + lowest `modes` eigenvectors of a cloud.
SpectralBasis spectral_basis(const PointCloud& cloud, const GraphConfig& config, Eigen::Index modes);

/// X^ = U^T X over the computed modes.
SpectralCoefficients gft(const Points& points, const SpectralBasis& basis);
/// X = U X^; needs one coefficient row per computed mode.
Points igft(const SpectralCoefficients& coeffs, const SpectralBasis& basis);

/// X^_a = X^ + [delta; 0]. Rows past M are copied untouched.
SpectralCoefficients apply_adjustment(const SpectralCoefficients& coeffs, const SpectralAdjustment& adjustment);

/// X_s = X + U[:, :M] delta, equal to igft(apply_adjustment(gft(X))) on a
/// complete basis.
Points spectral_point_shift(const Points& points, const SpectralBasis& basis, const SpectralAdjustment& adjustment);

/// Columns n_zero .. n_zero + m - 1 of U (all zero modes skipped).
Eigen::MatrixXd eigenmap_embed(const SpectralBasis& basis, Eigen::Index m);

/// Column-wise max of the eigenmap over all vertices.
Eigen::VectorXd spectral_descriptor(const SpectralBasis& basis, Eigen::Index m);

/// Cumulative fraction of coefficient energy, by ascending frequency.
Eigen::VectorXd energy_profile(const SpectralCoefficients& coeffs);

/// Reconstruction from the lowest `keep` coefficients only.
Points lowpass_reconstruction(const Points& points, const SpectralBasis& basis, Eigen::Index keep);

/// Mean nearest-neighbour Euclidean distance, averaged over both directions.
double symmetric_chamfer_distance(const Points& a, const Points& b);

}  // namespace gsdtta

#pragma once

// Data-parallel inner loops. Each kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`; the two must
// agree bitwise (tests and bench/ compare them).

#include "gsdtta/pointcloud.hpp"

#include <Eigen/Core>

namespace gsdtta::kernels {

using IndexMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DistMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Exact k nearest neighbours of every point (self excluded), ascending by
/// (squared distance, index).
struct KnnResult {
  IndexMatrix index;  // N x k
  DistMatrix dist2;   // N x k squared distances
};

/// For every point of `from`, its nearest point in `to` (ties to the lower
/// index) and the squared distance.
struct NearestResult {
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 1> index;
  Eigen::VectorXd dist2;
};

/// Squared Euclidean distance, summed axis by axis (x, y, z).
inline double squared_distance(const Points& p, Eigen::Index i, const Points& q, Eigen::Index j) {
  const double dx = p(i, 0) - q(j, 0);
  const double dy = p(i, 1) - q(j, 1);
  const double dz = p(i, 2) - q(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

namespace serial {
KnnResult knn(const Points& points, int k);
NearestResult nearest(const Points& from, const Points& to);
}  // namespace serial

namespace omp {
KnnResult knn(const Points& points, int k);
NearestResult nearest(const Points& from, const Points& to);
}  // namespace omp

}  // namespace gsdtta::kernels

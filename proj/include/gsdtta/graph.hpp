#pragma once

#include "gsdtta/pointcloud.hpp"

#include <Eigen/SparseCore>

#include <filesystem>
#include <vector>

namespace gsdtta {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// How the edge weight depends on the distance.
///   kGaussian:       exp(-|xi - xj|^2 / (2 delta^2))
///   kLiteralQuartic: exp(-(|xi - xj|^2)^2 / (2 delta^2)), i.e. d taken as the
///                    squared distance and squared again.
enum class WeightKernel { kGaussian, kLiteralQuartic };

struct GraphConfig {
  int k = 10;
  double delta = 0.1;
  double gamma = 0.6;
  WeightKernel kernel = WeightKernel::kGaussian;

  /// Throws UsageError unless 3 <= k < n, delta > 0, gamma >= 0.
  void validate(Eigen::Index n) const;
};

/// Weighted kNN graph with low-degree vertices isolated.
///
/// Masked vertices stay in the vertex set (their rows and columns are zero)
/// so downstream transforms keep all N points.
struct OutlierAwareGraph {
  SparseMatrix adjacency;         // A_o, symmetric, zero diagonal
  Eigen::VectorXd degrees;        // row sums of the pre-mask symmetric A
  std::vector<bool> outlier_mask;  // true = isolated as an outlier
  double tau = 0.0;

  Eigen::Index size() const noexcept { return adjacency.rows(); }
  Eigen::Index num_masked() const;

  /// Wraps a symmetric adjacency with an empty mask (tau = 0).
  static OutlierAwareGraph from_adjacency(SparseMatrix adjacency);
};

double rbf_weight(const Eigen::Vector3d& xi, const Eigen::Vector3d& xj, double delta,
                  WeightKernel kernel = WeightKernel::kGaussian);

/// A[i][j] = w_ij when x_j is among the k nearest neighbours of x_i, then
/// A <- max(A, A^T). Neighbour search is exact; ties go to the lower index.
SparseMatrix build_knn_adjacency(const PointCloud& cloud, const GraphConfig& config);

/// tau = gamma / (N k) * sum(A); vertex i is masked iff degree_i <= tau.
OutlierAwareGraph build_outlier_aware_graph(const PointCloud& cloud, const GraphConfig& config);

/// Component id per vertex, numbered in order of each component's lowest vertex.
std::vector<int> connected_components(const SparseMatrix& adjacency);

/// CSV "i,j,w" of every stored entry (both directions), row-major order.
void write_adjacency_csv(const OutlierAwareGraph& graph, const std::filesystem::path& path);

}  // namespace gsdtta

#include "gsdtta/graph.hpp"

#include "gsdtta/error.hpp"
#include "gsdtta/kernels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

namespace gsdtta {

namespace {

double weight_from_dist2(double dist2, double delta, WeightKernel kernel) {
  const double d = kernel == WeightKernel::kGaussian ? dist2 : dist2 * dist2;
  return std::exp(-d / (2.0 * delta * delta));
}

}  // namespace

void GraphConfig::validate(Eigen::Index n) const {
  if (k < 3 || k >= n)
    throw UsageError("graph: need 3 <= k < N (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw UsageError("graph: delta must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw UsageError("graph: gamma must be nonnegative");
}

Eigen::Index OutlierAwareGraph::num_masked() const {
  return static_cast<Eigen::Index>(std::count(outlier_mask.begin(), outlier_mask.end(), true));
}

OutlierAwareGraph OutlierAwareGraph::from_adjacency(SparseMatrix adjacency) {
  OutlierAwareGraph g;
  g.adjacency = std::move(adjacency);
  g.adjacency.makeCompressed();
  g.degrees = g.adjacency * Eigen::VectorXd::Ones(g.adjacency.cols());
  g.outlier_mask.assign(static_cast<std::size_t>(g.adjacency.rows()), false);
  return g;
}

double rbf_weight(const Eigen::Vector3d& xi, const Eigen::Vector3d& xj, double delta, WeightKernel kernel) {
  const double dx = xi.x() - xj.x();
  const double dy = xi.y() - xj.y();
  const double dz = xi.z() - xj.z();
  return weight_from_dist2(dx * dx + dy * dy + dz * dz, delta, kernel);
}

SparseMatrix build_knn_adjacency(const PointCloud& cloud, const GraphConfig& config) {
  const Eigen::Index n = cloud.size();
  // kNN itself only needs k < N; the k >= 3 floor is a pipeline requirement.
  if (config.k < 1 || config.k >= n) config.validate(n);
  if (!(config.delta > 0.0)) throw UsageError("graph: delta must be positive");
  const kernels::KnnResult knn = kernels::omp::knn(cloud.points(), config.k);

  // Directed edges keyed by (row, col); max-symmetrize by emitting both
  // orientations and keeping the larger weight of duplicates.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(2 * n * config.k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int t = 0; t < config.k; ++t) {
      const Eigen::Index j = knn.index(i, t);
      const double w = weight_from_dist2(knn.dist2(i, t), config.delta, config.kernel);
      triplets.emplace_back(i, j, w);
      triplets.emplace_back(j, i, w);
    }
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end(), [](double x, double y) { return std::max(x, y); });
  a.makeCompressed();
  return a;
}

OutlierAwareGraph build_outlier_aware_graph(const PointCloud& cloud, const GraphConfig& config) {
  const Eigen::Index n = cloud.size();
  config.validate(n);
  SparseMatrix a = build_knn_adjacency(cloud, config);

  OutlierAwareGraph g;
  g.degrees = a * Eigen::VectorXd::Ones(n);
  g.tau = config.gamma / (static_cast<double>(n) * config.k) * g.degrees.sum();
  g.outlier_mask.resize(static_cast<std::size_t>(n));
  Eigen::Index masked = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    g.outlier_mask[i] = g.degrees(i) <= g.tau;
    masked += g.outlier_mask[i];
  }
  if (masked == n) throw UsageError("graph: every vertex falls below the degree threshold (gamma too large)");

  if (masked > 0) {
    a.prune([&](Eigen::Index row, Eigen::Index col, double) {
      return !g.outlier_mask[row] && !g.outlier_mask[col];
    });
  }
  a.makeCompressed();
  g.adjacency = std::move(a);
  return g;
}

std::vector<int> connected_components(const SparseMatrix& adjacency) {
  const Eigen::Index n = adjacency.rows();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> stack;
  int next = 0;
  for (Eigen::Index start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    comp[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const Eigen::Index v = stack.back();
      stack.pop_back();
      for (SparseMatrix::InnerIterator it(adjacency, v); it; ++it) {
        if (it.value() != 0.0 && comp[it.col()] < 0) {
          comp[it.col()] = next;
          stack.push_back(it.col());
        }
      }
    }
    ++next;
  }
  return comp;
}

void write_adjacency_csv(const OutlierAwareGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "i,j,w\n";
  char buf[40];
  for (Eigen::Index i = 0; i < graph.adjacency.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(graph.adjacency, i); it; ++it) {
      const auto res = std::to_chars(buf, buf + sizeof buf, it.value(), std::chars_format::general, 17);
      out << it.row() << ',' << it.col() << ',' << std::string_view(buf, res.ptr - buf) << '\n';
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace gsdtta

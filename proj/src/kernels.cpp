#include "gsdtta/kernels.hpp"

#include "gsdtta/error.hpp"
#include "gsdtta/parallel.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace gsdtta::kernels {

namespace {

void check_knn_args(const Points& points, int k) {
  if (k < 1 || k >= points.rows())
    throw UsageError("knn: need 1 <= k < N (k=" + std::to_string(k) + ", N=" + std::to_string(points.rows()) + ")");
}

// Fills row i of `out`. `scratch` is reused across rows of one thread.
void knn_row(const Points& points, int k, Eigen::Index i, std::vector<std::pair<double, Eigen::Index>>& scratch,
             KnnResult& out) {
  const Eigen::Index n = points.rows();
  scratch.clear();
  Eigen::Index duplicates = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    const double d = squared_distance(points, i, points, j);
    duplicates += d == 0.0;
    scratch.emplace_back(d, j);
  }
  if (duplicates > k)
    throw UsageError("knn: point " + std::to_string(i) + " has more than k exact duplicates; ties unresolvable");
  std::partial_sort(scratch.begin(), scratch.begin() + k, scratch.end());
  for (int t = 0; t < k; ++t) {
    out.index(i, t) = scratch[t].second;
    out.dist2(i, t) = scratch[t].first;
  }
}

void nearest_row(const Points& from, const Points& to, Eigen::Index i, NearestResult& out) {
  double best = squared_distance(from, i, to, 0);
  Eigen::Index arg = 0;
  for (Eigen::Index j = 1; j < to.rows(); ++j) {
    const double d = squared_distance(from, i, to, j);
    if (d < best) {
      best = d;
      arg = j;
    }
  }
  out.index(i) = arg;
  out.dist2(i) = best;
}

KnnResult make_knn(const Points& points, int k) {
  return {IndexMatrix(points.rows(), k), DistMatrix(points.rows(), k)};
}

NearestResult make_nearest(const Points& from, const Points& to) {
  if (to.rows() == 0 || from.rows() == 0) throw UsageError("nearest: empty point set");
  return {Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 1>(from.rows()), Eigen::VectorXd(from.rows())};
}

}  // namespace

namespace serial {

KnnResult knn(const Points& points, int k) {
  check_knn_args(points, k);
  KnnResult out = make_knn(points, k);
  std::vector<std::pair<double, Eigen::Index>> scratch;
  scratch.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) knn_row(points, k, i, scratch, out);
  return out;
}

NearestResult nearest(const Points& from, const Points& to) {
  NearestResult out = make_nearest(from, to);
  for (Eigen::Index i = 0; i < from.rows(); ++i) nearest_row(from, to, i, out);
  return out;
}

}  // namespace serial

namespace omp {

KnnResult knn(const Points& points, int k) {
  check_knn_args(points, k);
  KnnResult out = make_knn(points, k);
  const Eigen::Index n = points.rows();
  const int threads = num_threads();
  // Exceptions cannot cross the parallel region; record the first one.
  std::string failure;
#pragma omp parallel num_threads(threads) if (threads > 1)
  {
    std::vector<std::pair<double, Eigen::Index>> scratch;
    scratch.reserve(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      try {
        knn_row(points, k, i, scratch, out);
      } catch (const std::exception& e) {
#pragma omp critical(gsdtta_knn_failure)
        if (failure.empty()) failure = e.what();
      }
    }
  }
  if (!failure.empty()) throw UsageError(failure);
  return out;
}

NearestResult nearest(const Points& from, const Points& to) {
  NearestResult out = make_nearest(from, to);
  const int threads = num_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (Eigen::Index i = 0; i < from.rows(); ++i) nearest_row(from, to, i, out);
  return out;
}

}  // namespace omp

}  // namespace gsdtta::kernels

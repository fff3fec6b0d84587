#include "gsdtta/spectral.hpp"

#include "gsdtta/error.hpp"
#include "gsdtta/kernels.hpp"

#include <Eigen/Eigenvalues>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace gsdtta {

namespace {

// Eigenvalues closer than this (times max(lambda_N, 1)) form one cluster.
constexpr double kClusterTolerance = 1e-9;

std::string diagnostics(const Eigen::MatrixXd& l) {
  std::ostringstream s;
  s << "N=" << l.rows() << ", |L|_F=" << l.norm() << ", asymmetry=" << (l - l.transpose()).cwiseAbs().maxCoeff()
    << ", finite=" << (l.allFinite() ? "yes" : "no");
  return s.str();
}

void check_square(const Eigen::MatrixXd& l) {
  if (l.rows() != l.cols() || l.rows() == 0) throw UsageError("eigendecompose: matrix must be square and nonempty");
  if (!l.allFinite()) throw NumericError("eigendecompose: non-finite matrix (" + diagnostics(l) + ")");
}

Eigen::Index argmax_abs(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  return best;
}

// Component labels read off the off-diagonal pattern of L.
std::vector<int> laplacian_components(const Eigen::MatrixXd& l) {
  const Eigen::Index n = l.rows();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> stack;
  int next = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const Eigen::Index v = stack.back();
      stack.pop_back();
      for (Eigen::Index u = 0; u < n; ++u) {
        if (u != v && l(u, v) != 0.0 && comp[u] < 0) {
          comp[u] = next;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
  return comp;
}

}  // namespace

double zero_tolerance(double largest_eigenvalue) { return 1e-8 * std::max(largest_eigenvalue, 1.0); }

Eigen::MatrixXd laplacian(const OutlierAwareGraph& graph) {
  const Eigen::Index n = graph.size();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < graph.adjacency.outerSize(); ++i) {
    double degree = 0.0;
    for (SparseMatrix::InnerIterator it(graph.adjacency, i); it; ++it) {
      if (it.col() == i) continue;
      l(i, it.col()) = -it.value();
      degree += it.value();
    }
    l(i, i) = degree;
  }
  return l;
}

void canonicalize(SpectralBasis& basis, const Eigen::MatrixXd& laplacian) {
  const Eigen::Index n = basis.eigenvalues.size();
  const Eigen::Index k = basis.num_modes();
  const double scale = std::max(basis.eigenvalues(n - 1), 1.0);
  const double zero_tol = zero_tolerance(basis.eigenvalues(n - 1));

  // Roundoff below zero is clamped; anything clearly negative is kept.
  for (Eigen::Index i = 0; i < n; ++i)
    if (basis.eigenvalues(i) < 0.0 && basis.eigenvalues(i) > -1e-9 * scale) basis.eigenvalues(i) = 0.0;

  basis.n_zero = 0;
  while (basis.n_zero < n && std::abs(basis.eigenvalues(basis.n_zero)) < zero_tol) ++basis.n_zero;

  // Null space of a Laplacian is spanned by component indicators; use them
  // when the numerical null space has exactly that dimension.
  Eigen::Index first_free = 0;
  const std::vector<int> comp = laplacian_components(laplacian);
  const int n_comp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  if (basis.n_zero == n_comp && basis.n_zero <= k) {
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(n_comp), 0);
    for (int c : comp) ++sizes[c];
    for (Eigen::Index c = 0; c < n_comp; ++c) {
      const double v = 1.0 / std::sqrt(static_cast<double>(sizes[c]));
      for (Eigen::Index i = 0; i < n; ++i) basis.eigenvectors(i, c) = comp[i] == c ? v : 0.0;
      basis.eigenvalues(c) = 0.0;
    }
    first_free = n_comp;
  }

  for (Eigen::Index j = first_free; j < k; ++j) {
    auto col = basis.eigenvectors.col(j);
    if (col(argmax_abs(col)) < 0.0) col = -col;
  }

  // Order columns inside clusters of (numerically) equal eigenvalues.
  Eigen::Index start = first_free;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && basis.eigenvalues(end) - basis.eigenvalues(end - 1) <= kClusterTolerance * scale) ++end;
    if (end - start > 1) {
      const double mean = basis.eigenvalues.segment(start, end - start).mean();
      basis.eigenvalues.segment(start, end - start).setConstant(mean);
      const Eigen::Index col_end = std::min(end, k);
      if (col_end - start > 1) {
        std::vector<std::pair<Eigen::Index, Eigen::Index>> order;
        for (Eigen::Index j = start; j < col_end; ++j) order.emplace_back(argmax_abs(basis.eigenvectors.col(j)), j);
        std::stable_sort(order.begin(), order.end());
        const Eigen::MatrixXd block = basis.eigenvectors.middleCols(start, col_end - start);
        for (Eigen::Index t = 0; t < col_end - start; ++t)
          basis.eigenvectors.col(start + t) = block.col(order[t].second - start);
      }
    }
    start = end;
  }
}

SpectralBasis eigendecompose(const Eigen::MatrixXd& l) {
  check_square(l);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(l);
  if (solver.info() != Eigen::Success)
    throw NumericError("eigendecompose: solver did not converge (" + diagnostics(l) + ")");
  SpectralBasis basis{solver.eigenvectors(), solver.eigenvalues(), 0};
  canonicalize(basis, l);
  return basis;
}

SpectralBasis eigendecompose_lowest(const Eigen::MatrixXd& l, Eigen::Index modes) {
  check_square(l);
  const auto n = static_cast<lapack_int>(l.rows());
  if (modes < 1 || modes > l.rows()) throw UsageError("eigendecompose_lowest: modes must be in [1, N]");
  const auto k = static_cast<lapack_int>(modes);

  Eigen::MatrixXd a = l;
  Eigen::VectorXd d(n), e(std::max<lapack_int>(n - 1, 1)), tau(std::max<lapack_int>(n - 1, 1));
  lapack_int info = LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', n, a.data(), n, d.data(), e.data(), tau.data());
  if (info != 0) throw NumericError("eigendecompose_lowest: dsytrd failed, info=" + std::to_string(info));

  Eigen::VectorXd all = d;
  Eigen::VectorXd e_all = e;
  info = LAPACKE_dsterf(n, all.data(), e_all.data());
  if (info != 0)
    throw NumericError("eigendecompose_lowest: dsterf did not converge (" + diagnostics(l) + ")");

  Eigen::VectorXd d_sel = d;
  // dstemr needs room for n entries in e.
  Eigen::VectorXd e_sel = Eigen::VectorXd::Zero(n);
  e_sel.head(n - 1) = e.head(n - 1);
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, k);
  std::vector<lapack_int> isuppz(static_cast<std::size_t>(2 * k));
  lapack_int found = 0;
  lapack_logical tryrac = 1;
  info = LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', n, d_sel.data(), e_sel.data(), 0.0, 0.0, 1, k, &found, w.data(),
                        z.data(), n, k, isuppz.data(), &tryrac);
  if (info != 0 || found != k)
    throw NumericError("eigendecompose_lowest: dstemr failed, info=" + std::to_string(info) + " (" + diagnostics(l) + ")");

  info = LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'N', n, k, a.data(), n, tau.data(), z.data(), n);
  if (info != 0) throw NumericError("eigendecompose_lowest: dormtr failed, info=" + std::to_string(info));

  SpectralBasis basis{std::move(z), std::move(all), 0};
  canonicalize(basis, l);
  return basis;
}

SpectralBasis spectral_basis(const PointCloud& cloud, const GraphConfig& config, Eigen::Index modes) {
  const OutlierAwareGraph graph = build_outlier_aware_graph(cloud, config);
  const Eigen::MatrixXd l = laplacian(graph);
  if (modes >= cloud.size()) return eigendecompose(l);
  return eigendecompose_lowest(l, modes);
}

SpectralCoefficients gft(const Points& points, const SpectralBasis& basis) {
  if (points.rows() != basis.size()) throw UsageError("gft: point count does not match the basis");
  return {basis.eigenvectors.transpose() * points};
}

Points igft(const SpectralCoefficients& coeffs, const SpectralBasis& basis) {
  if (coeffs.coeffs.rows() != basis.num_modes()) throw UsageError("igft: coefficient rows do not match the basis");
  return basis.eigenvectors * coeffs.coeffs;
}

SpectralCoefficients apply_adjustment(const SpectralCoefficients& coeffs, const SpectralAdjustment& adjustment) {
  const Eigen::Index m = adjustment.m();
  if (m >= coeffs.coeffs.rows()) throw UsageError("apply_adjustment: band size M must be smaller than N");
  SpectralCoefficients out = coeffs;
  out.coeffs.topRows(m) += adjustment.delta;
  return out;
}

Points spectral_point_shift(const Points& points, const SpectralBasis& basis, const SpectralAdjustment& adjustment) {
  const Eigen::Index m = adjustment.m();
  if (points.rows() != basis.size()) throw UsageError("spectral_point_shift: point count does not match the basis");
  if (m >= basis.size()) throw UsageError("spectral_point_shift: band size M must be smaller than N");
  if (m > basis.num_modes()) throw UsageError("spectral_point_shift: basis has fewer than M modes");
  return points + basis.eigenvectors.leftCols(m) * adjustment.delta;
}

Eigen::MatrixXd eigenmap_embed(const SpectralBasis& basis, Eigen::Index m) {
  if (m < 1 || basis.n_zero + m > basis.num_modes())
    throw UsageError("eigenmap_embed: m=" + std::to_string(m) + " exceeds available modes after skipping " +
                     std::to_string(basis.n_zero) + " zero modes");
  return basis.eigenvectors.middleCols(basis.n_zero, m);
}

Eigen::VectorXd spectral_descriptor(const SpectralBasis& basis, Eigen::Index m) {
  return eigenmap_embed(basis, m).colwise().maxCoeff().transpose();
}

Eigen::VectorXd energy_profile(const SpectralCoefficients& coeffs) {
  const Eigen::VectorXd energy = coeffs.coeffs.rowwise().squaredNorm();
  const double total = energy.sum();
  if (!(total > 0.0)) throw NumericError("energy_profile: zero-energy signal");
  Eigen::VectorXd out(energy.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < energy.size(); ++i) {
    acc += energy(i);
    out(i) = acc / total;
  }
  out(energy.size() - 1) = 1.0;
  return out;
}

Points lowpass_reconstruction(const Points& points, const SpectralBasis& basis, Eigen::Index keep) {
  if (keep < 0 || keep > basis.num_modes()) throw UsageError("lowpass_reconstruction: keep exceeds computed modes");
  const auto u = basis.eigenvectors.leftCols(keep);
  return u * (u.transpose() * points);
}

double symmetric_chamfer_distance(const Points& a, const Points& b) {
  const auto ab = kernels::omp::nearest(a, b);
  const auto ba = kernels::omp::nearest(b, a);
  return 0.5 * (ab.dist2.cwiseSqrt().mean() + ba.dist2.cwiseSqrt().mean());
}

}  // namespace gsdtta

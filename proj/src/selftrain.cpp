#include "gsdtta/selftrain.hpp"

#include "gsdtta/error.hpp"
#include "gsdtta/kernels.hpp"
#include "gsdtta/nn.hpp"

#include <cmath>
#include <limits>

namespace gsdtta {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }

}  // namespace

Centroids compute_centroids(const BatchDescriptors& batch) {
  const Eigen::Index b = batch.probabilities.rows();
  if (b < 1) throw UsageError("compute_centroids: empty batch");
  if (batch.deep.rows() != b || batch.spectral.rows() != b)
    throw UsageError("compute_centroids: descriptor rows do not match the batch");
  Centroids c;
  c.support = batch.probabilities.colwise().sum().transpose();
  // Weighted sums: (P^T D)[c] = sum_i p_ic d_i.
  c.deep = batch.probabilities.transpose() * batch.deep;
  c.spectral = batch.probabilities.transpose() * batch.spectral;
  c.empty.resize(static_cast<std::size_t>(c.support.size()));
  for (Eigen::Index k = 0; k < c.support.size(); ++k) {
    c.empty[k] = c.support(k) < kLogClamp;
    if (c.empty[k]) {
      c.deep.row(k).setZero();
      c.spectral.row(k).setZero();
    } else {
      c.deep.row(k) /= c.support(k);
      c.spectral.row(k) /= c.support(k);
    }
  }
  return c;
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                         int* zero_norm) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kLogClamp || nb < kLogClamp) {
    if (zero_norm) ++*zero_norm;
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

PseudoLabels pseudo_label(const BatchDescriptors& batch, const Centroids& centroids, double alpha, LabelRule rule) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("pseudo_label: alpha must lie in [0, 1]");
  const Eigen::Index b = batch.deep.rows();
  const Eigen::Index classes = centroids.support.size();
  bool any = false;
  for (bool e : centroids.empty) any = any || !e;
  if (!any) throw UsageError("pseudo_label: every class centroid is empty");

  PseudoLabels out;
  out.labels.resize(static_cast<std::size_t>(b));
  out.scores.resize(b, classes);
  const double excluded = rule == LabelRule::kArgmaxSimilarity ? -std::numeric_limits<double>::infinity()
                                                               : std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (centroids.empty[c]) {
        out.scores(i, c) = excluded;
        continue;
      }
      // Boundary weights skip the other stream entirely, so alpha = 1 (or 0)
      // labels never depend on spectral (or deep) descriptors.
      double s = 0.0;
      if (alpha > 0.0)
        s += alpha * cosine_similarity(batch.deep.row(i).transpose(), centroids.deep.row(c).transpose(),
                                       &out.zero_norm_terms);
      if (alpha < 1.0)
        s += (1.0 - alpha) * cosine_similarity(batch.spectral.row(i).transpose(),
                                               centroids.spectral.row(c).transpose(), &out.zero_norm_terms);
      out.scores(i, c) = s;
    }
    int best = -1;
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (centroids.empty[c]) continue;
      const bool better = best < 0 || (rule == LabelRule::kArgmaxSimilarity ? out.scores(i, c) > out.scores(i, best)
                                                                            : out.scores(i, c) < out.scores(i, best));
      if (better) best = static_cast<int>(c);
    }
    out.labels[i] = best;
  }
  return out;
}

double loss_pl(const Eigen::VectorXd& probabilities, int label) {
  if (label < 0 || label >= probabilities.size()) throw UsageError("loss_pl: label out of range");
  return -clamped_log(probabilities(label));
}

double loss_ent(const Eigen::VectorXd& probabilities) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < probabilities.size(); ++c) h -= probabilities(c) * clamped_log(probabilities(c));
  return h;
}

double loss_div(const Eigen::MatrixXd& batch_probabilities) {
  if (batch_probabilities.rows() < 1) throw UsageError("loss_div: empty batch");
  const Eigen::VectorXd g = batch_probabilities.colwise().mean().transpose();
  double v = 0.0;
  for (Eigen::Index c = 0; c < g.size(); ++c) v += g(c) * clamped_log(g(c));
  return v;
}

double loss_cd(const Points& original, const Points& shifted) {
  return kernels::omp::nearest(original, shifted).dist2.mean();
}

ChamferGrad loss_cd_with_grad(const Points& original, const Points& shifted) {
  const kernels::NearestResult nn = kernels::omp::nearest(original, shifted);
  const double n = static_cast<double>(original.rows());
  ChamferGrad out;
  out.value = nn.dist2.mean();
  out.grad = Points::Zero(shifted.rows(), 3);
  for (Eigen::Index i = 0; i < original.rows(); ++i)
    out.grad.row(nn.index(i)) += (2.0 / n) * (shifted.row(nn.index(i)) - original.row(i));
  return out;
}

double loss_input_adaptation(const LossParts& parts, double beta1, double beta2) {
  const double v = parts.pl + beta1 * (parts.ent + parts.div) + beta2 * parts.cd;
  if (!std::isfinite(v)) throw NumericError("loss_input_adaptation: non-finite loss");
  return v;
}

double loss_model_adaptation(const LossParts& parts, double beta3) {
  const double v = parts.pl + beta3 * (parts.ent + parts.div);
  if (!std::isfinite(v)) throw NumericError("loss_model_adaptation: non-finite loss");
  return v;
}

ClassificationObjective classification_objective(const Eigen::MatrixXd& probs, const std::vector<int>& labels,
                                                 double info_weight) {
  const Eigen::Index b = probs.rows();
  const Eigen::Index classes = probs.cols();
  if (b < 1 || static_cast<Eigen::Index>(labels.size()) != b)
    throw UsageError("classification_objective: labels do not match the batch");
  const double inv_b = 1.0 / static_cast<double>(b);

  ClassificationObjective out;
  const Eigen::VectorXd g = probs.colwise().mean().transpose();
  Eigen::VectorXd div_prob_grad(classes);
  for (Eigen::Index c = 0; c < classes; ++c)
    div_prob_grad(c) = inv_b * (clamped_log(g(c)) + (g(c) >= kLogClamp ? 1.0 : 0.0));
  out.parts.div = loss_div(probs);

  out.logit_grads.resize(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::VectorXd p = probs.row(i).transpose();
    out.parts.pl += inv_b * loss_pl(p, labels[i]);
    out.parts.ent += inv_b * loss_ent(p);

    Eigen::VectorXd ent_prob_grad(classes);
    for (Eigen::Index c = 0; c < classes; ++c)
      ent_prob_grad(c) = -inv_b * (clamped_log(p(c)) + (p(c) >= kLogClamp ? 1.0 : 0.0));

    Eigen::VectorXd grad = inv_b * p;
    grad(labels[i]) -= inv_b;
    grad += info_weight * softmax_backward(p, ent_prob_grad + div_prob_grad);
    out.logit_grads[i] = std::move(grad);
  }
  return out;
}

}  // namespace gsdtta

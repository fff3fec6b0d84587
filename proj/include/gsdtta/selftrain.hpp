#pragma once

#include "gsdtta/pointcloud.hpp"

#include <Eigen/Core>

#include <vector>

namespace gsdtta {

/// Clamp applied inside logs and to cosine denominators.
inline constexpr double kLogClamp = 1e-12;

/// Per-cloud descriptors and current class probabilities of one batch.
struct BatchDescriptors {
  Eigen::MatrixXd deep;           // B x F (f_d)
  Eigen::MatrixXd spectral;       // B x m (f_s)
  Eigen::MatrixXd probabilities;  // B x C
};

/// Probability-weighted class means in both descriptor spaces.
struct Centroids {
  Eigen::MatrixXd deep;      // C x F
  Eigen::MatrixXd spectral;  // C x m
  Eigen::VectorXd support;   // sum of class probability over the batch
  std::vector<bool> empty;   // support < 1e-12; excluded from labelling
};

/// Which extremum of the combined similarity picks the label. The default
/// picks the most similar centroid; kLiteralArgmin takes the least similar.
enum class LabelRule { kArgmaxSimilarity, kLiteralArgmin };

struct PseudoLabels {
  std::vector<int> labels;
  Eigen::MatrixXd scores;  // B x C combined similarity (empty classes hold -inf / +inf)
  int zero_norm_terms = 0;  // cosine terms forced to 0 by a zero-norm vector
};

Centroids compute_centroids(const BatchDescriptors& batch);

/// scores[i][c] = alpha cos(f_d^i, q_d^c) + (1 - alpha) cos(f_s^i, q_s^c);
/// ties go to the lower class index.
PseudoLabels pseudo_label(const BatchDescriptors& batch, const Centroids& centroids, double alpha,
                          LabelRule rule = LabelRule::kArgmaxSimilarity);

/// Cosine similarity; 0 (and `zero_norm` incremented) when either norm is
/// below kLogClamp.
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                         int* zero_norm = nullptr);

/// Cross entropy -log p[label].
double loss_pl(const Eigen::VectorXd& probabilities, int label);
/// Entropy -sum p log p.
double loss_ent(const Eigen::VectorXd& probabilities);
/// sum g log g of the batch-mean prediction g.
double loss_div(const Eigen::MatrixXd& batch_probabilities);

/// One-directional Chamfer: mean over x in `original` of the squared
/// distance to its nearest point in `shifted`.
double loss_cd(const Points& original, const Points& shifted);

struct ChamferGrad {
  double value = 0.0;
  Points grad;  // d loss / d shifted
};
/// Value and gradient w.r.t. `shifted`; each original point pushes only on
/// its nearest shifted point (ties: lower index).
ChamferGrad loss_cd_with_grad(const Points& original, const Points& shifted);

/// Batch-mean loss terms.
struct LossParts {
  double pl = 0.0;
  double ent = 0.0;
  double div = 0.0;
  double cd = 0.0;
};

/// L_pl + beta1 (L_ent + L_div) + beta2 L_cd.
double loss_input_adaptation(const LossParts& parts, double beta1, double beta2);
/// L_pl + beta3 (L_ent + L_div).
double loss_model_adaptation(const LossParts& parts, double beta3);

/// Batch classification objective pl + w (ent + div) with pl and ent averaged
/// over the batch; returns the per-sample gradient w.r.t. the logits.
struct ClassificationObjective {
  LossParts parts;  // cd left at 0
  std::vector<Eigen::VectorXd> logit_grads;
};
ClassificationObjective classification_objective(const Eigen::MatrixXd& batch_probabilities,
                                                 const std::vector<int>& labels, double info_weight);

}  // namespace gsdtta

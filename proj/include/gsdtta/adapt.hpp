#pragma once

#include "gsdtta/dataset.hpp"
#include "gsdtta/graph.hpp"
#include "gsdtta/nn.hpp"
#include "gsdtta/selftrain.hpp"
#include "gsdtta/spectral.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gsdtta {

enum class LabelRefresh { kEveryStep, kPerCycle };

struct AdaptConfig {
  double alpha = 0.5;
  double beta1 = 0.3;
  double beta2 = 1000.0;
  double beta3 = 3.0;
  int m_band = 100;
  double lr = 1e-4;
  double weight_decay = 0.01;
  int batch_size = 32;
  int input_steps_per_cycle = 4;
  int model_steps_per_cycle = 1;
  int total_steps = 10;
  bool enable_gsdps = true;
  bool enable_gsgma = true;
  bool eigenmap_guided = true;  // false: labels from deep descriptors only (alpha = 1)
  int eigenmap_dim = 32;
  bool band_excludes_zero_modes = false;
  LabelRule label_rule = LabelRule::kArgmaxSimilarity;
  LabelRefresh label_refresh = LabelRefresh::kEveryStep;
  bool reset_per_group = true;
  GraphConfig graph{};
  std::uint64_t seed = 0;

  /// total_steps == 0 is allowed and means no adaptation.
  void validate() const;
  double effective_alpha() const { return eigenmap_guided ? alpha : 1.0; }
  bool is_noop() const { return total_steps == 0 || (!enable_gsdps && !enable_gsgma); }
};

/// Per-cloud state fixed for the whole batch: centred coordinates, the
/// band of low-frequency eigenvectors carrying the shift and f_s.
struct PreparedCloud {
  Points points;
  Eigen::MatrixXd band;                // N x M
  Eigen::VectorXd spectral_descriptor;  // m
  Eigen::Index n_zero = 0;
  std::optional<int> label;
};

PreparedCloud prepare_cloud(const PointCloud& cloud, const AdaptConfig& cfg);
std::vector<PreparedCloud> prepare_clouds(const std::vector<const PointCloud*>& clouds, const AdaptConfig& cfg);

struct StepDiagnostics {
  int step = 0;
  bool input_phase = true;
  LossParts parts;
  double total = 0.0;
  double label_agreement = -1.0;  // fraction of pseudo-labels equal to ground truth; -1 without labels
  int zero_norm_terms = 0;
};

struct BatchReport {
  std::string group;
  int index = 0;
  int size = 0;
  int input_steps = 0;
  int model_steps = 0;
  double delta_norm = 0.0;  // Frobenius norm of all adjustments after the batch
  std::vector<StepDiagnostics> steps;
};

struct BatchResult {
  std::vector<int> predictions;
  BatchReport report;
};

/// Adapts one batch. `model` is updated in place and leaves as the adapted
/// model. The adjustments and their optimizer live only inside the call.
BatchResult adapt_batch(const std::vector<PreparedCloud>& batch, ClassifierState& model, const AdaptConfig& cfg);

/// Shifted coordinates X + band * delta.
Points shifted_points(const PreparedCloud& cloud, const Coefficients& delta);

/// Batch value of L_IA (enable_gsdps path) for fixed pseudo-labels, with the
/// gradient w.r.t. every cloud's adjustment. Exposed for gradient checks.
struct InputObjective {
  double value = 0.0;
  LossParts parts;
  std::vector<Coefficients> delta_grads;
};
InputObjective input_objective(const std::vector<PreparedCloud>& batch, const ClassifierState& model,
                               const std::vector<Coefficients>& deltas, const std::vector<int>& labels,
                               const AdaptConfig& cfg);

/// Batch value of L_MA for fixed pseudo-labels with the parameter gradient.
struct ModelObjective {
  double value = 0.0;
  LossParts parts;
  Eigen::VectorXd param_grad;
};
ModelObjective model_objective(const std::vector<Points>& inputs, const ClassifierState& model,
                               const std::vector<int>& labels, const AdaptConfig& cfg);

struct GroupAccuracy {
  std::string name;
  int count = 0;
  int source_correct = 0;
  int adapted_correct = 0;

  double source_accuracy() const { return count ? static_cast<double>(source_correct) / count : 0.0; }
  double adapted_accuracy() const { return count ? static_cast<double>(adapted_correct) / count : 0.0; }
};

struct StreamReport {
  std::vector<GroupAccuracy> groups;  // first-appearance order
  std::vector<BatchReport> batches;
  double mean_source_accuracy() const;
  double mean_adapted_accuracy() const;
};

/// Online adaptation over a tagged stream in batches of cfg.batch_size.
/// With reset_per_group every group starts from `source`; otherwise the
/// model threads through the whole stream in order.
StreamReport adapt_stream(const std::vector<TaggedCloud>& items, const ClassifierState& source,
                          const AdaptConfig& cfg);

/// One row of the ablation table.
struct AblationRow {
  std::string variant;
  std::vector<double> group_accuracy;
  double mean = 0.0;
};
struct AblationTable {
  std::vector<std::string> groups;
  std::vector<AblationRow> rows;
};

/// Variants: source_only, gsgma_only, gsdps_only, deep_feature_guided, full.
/// Bases are computed once per group and shared by all variants.
AblationTable ablation_suite(const std::vector<TaggedCloud>& items, const ClassifierState& source,
                             const AdaptConfig& cfg);

}  // namespace gsdtta

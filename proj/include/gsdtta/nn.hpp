#pragma once

#include "gsdtta/pointcloud.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace gsdtta {

/// Per-point MLP (3 -> hidden -> feature, ReLU), max-pool over points,
/// head (feature -> head_hidden -> classes, ReLU between).
struct Architecture {
  int input = 3;
  int hidden = 64;
  int feature = 128;
  int head_hidden = 64;
  int classes = kNumFamilies;

  Eigen::Index parameter_count() const;
  bool operator==(const Architecture&) const = default;
};

/// Element-wise AdamW with bias correction and decoupled weight decay.
class AdamW {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamW() = default;
  explicit AdamW(Eigen::Index size) : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  /// Throws NumericError (and leaves everything untouched) on non-finite grads.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, double lr,
            double weight_decay);

  std::int64_t steps() const noexcept { return steps_; }
  const Eigen::VectorXd& first_moment() const noexcept { return m_; }
  const Eigen::VectorXd& second_moment() const noexcept { return v_; }
  void restore(Eigen::VectorXd m, Eigen::VectorXd v, std::int64_t steps);

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t steps_ = 0;
};

/// Classifier weights plus optimizer state. Parameters live in one flat
/// vector so gradients and moments align by construction.
class ClassifierState {
 public:
  ClassifierState() = default;
  /// He-uniform weights, zero biases, deterministic in `seed`.
  ClassifierState(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  Eigen::VectorXd& mutable_parameters() noexcept { return params_; }
  const AdamW& optimizer() const noexcept { return optimizer_; }
  AdamW& mutable_optimizer() noexcept { return optimizer_; }
  std::int64_t step() const noexcept { return optimizer_.steps(); }

  /// Offsets of each tensor in the flat vector (w1 b1 w2 b2 w3 b3 w4 b4).
  struct Layout {
    Eigen::Index w1, b1, w2, b2, w3, b3, w4, b4, total;
  };
  Layout layout() const;
  /// Offset where the head (w3 onwards) starts.
  Eigen::Index head_offset() const { return layout().w3; }

 private:
  Architecture arch_;
  Eigen::VectorXd params_;
  AdamW optimizer_;
};

/// Output of forward() with what backward() needs. Only the rows that win
/// the max-pool are kept.
struct ForwardTrace {
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
  Eigen::VectorXd deep_descriptor;  // pooled per-point features (f_d)

  Eigen::Index num_points = 0;
  std::vector<Eigen::Index> argmax;    // winning point per feature channel
  std::vector<Eigen::Index> selected;  // unique winners, ascending
  Eigen::MatrixXd x_sel, pre1_sel, h1_sel, pre2_sel;
  Eigen::VectorXd pre3, z;
  std::int64_t state_step = -1;
};

struct Gradients {
  Eigen::VectorXd params;  // aligned with ClassifierState::parameters()
  Points input;            // N x 3
};

ForwardTrace forward(const ClassifierState& state, const Points& points);

/// Reverse-mode gradients of a scalar loss given dL/dlogits. Rejects traces
/// produced before the state's last optimizer step.
Gradients backward(const ClassifierState& state, const ForwardTrace& trace, const Eigen::VectorXd& logit_grad);

/// dL/dlogits from dL/dprobabilities through the softmax.
Eigen::VectorXd softmax_backward(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& prob_grad);

void adamw_step(ClassifierState& state, const Eigen::VectorXd& param_grads, double lr, double weight_decay);

/// Binary checkpoint, little-endian:
///   8 bytes  magic "GSDTTACK"
///   u32      format version (1)
///   u32 x 5  input, hidden, feature, head_hidden, classes
///   u64      parameter count P
///   i64      optimizer step
///   f64 x P  parameters, then first moments, then second moments
void save_checkpoint(const ClassifierState& state, const std::filesystem::path& path);
ClassifierState load_checkpoint(const std::filesystem::path& path);

/// Mean-centred coordinates; the classifier and the spectral pipeline see
/// clouds in this form.
Points prepare_points(const PointCloud& cloud);

int predict(const ClassifierState& state, const Points& points);
/// Predictions for many clouds, computed in parallel.
std::vector<int> predict_all(const ClassifierState& state, const std::vector<Points>& clouds);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  Architecture arch{};
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

/// Minibatch cross-entropy training on labelled clouds; deterministic in
/// the seed. `on_epoch` (optional) sees each epoch's log.
ClassifierState train_source(const std::vector<PointCloud>& train, const TrainConfig& config,
                             const std::function<void(const EpochLog&)>& on_epoch = {});

double accuracy(const ClassifierState& state, const std::vector<PointCloud>& clouds);

}  // namespace gsdtta

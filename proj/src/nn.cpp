#include "gsdtta/nn.hpp"

#include "gsdtta/error.hpp"
#include "gsdtta/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace gsdtta {

namespace {

using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
using ConstRow = Eigen::Map<const Eigen::RowVectorXd>;
using Mat = Eigen::Map<Eigen::MatrixXd>;
using Row = Eigen::Map<Eigen::RowVectorXd>;

struct ConstViews {
  ConstMat w1, w2, w3, w4;
  ConstRow b1, b2, b3, b4;
};

struct Views {
  Mat w1, w2, w3, w4;
  Row b1, b2, b3, b4;
};

ConstViews const_views(const Architecture& a, const ClassifierState::Layout& l, const double* p) {
  return {ConstMat(p + l.w1, a.input, a.hidden),     ConstMat(p + l.w2, a.hidden, a.feature),
          ConstMat(p + l.w3, a.feature, a.head_hidden), ConstMat(p + l.w4, a.head_hidden, a.classes),
          ConstRow(p + l.b1, a.hidden),              ConstRow(p + l.b2, a.feature),
          ConstRow(p + l.b3, a.head_hidden),         ConstRow(p + l.b4, a.classes)};
}

Views views(const Architecture& a, const ClassifierState::Layout& l, double* p) {
  return {Mat(p + l.w1, a.input, a.hidden),     Mat(p + l.w2, a.hidden, a.feature),
          Mat(p + l.w3, a.feature, a.head_hidden), Mat(p + l.w4, a.head_hidden, a.classes),
          Row(p + l.b1, a.hidden),              Row(p + l.b2, a.feature),
          Row(p + l.b3, a.head_hidden),         Row(p + l.b4, a.classes)};
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* layer) {
  if (!m.allFinite()) throw NumericError(std::string("forward: non-finite activations in layer ") + layer);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp();
  return e / e.sum();
}

// Little-endian scalar I/O.
template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("checkpoint " + path.string() + " is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

constexpr char kMagic[8] = {'G', 'S', 'D', 'T', 'T', 'A', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

Eigen::Index Architecture::parameter_count() const {
  return static_cast<Eigen::Index>(input) * hidden + hidden + static_cast<Eigen::Index>(hidden) * feature + feature +
         static_cast<Eigen::Index>(feature) * head_hidden + head_hidden +
         static_cast<Eigen::Index>(head_hidden) * classes + classes;
}

void AdamW::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, double lr,
                 double weight_decay) {
  if (params.size() != grads.size()) throw UsageError("adamw: parameter/gradient size mismatch");
  if (!grads.allFinite()) throw NumericError("adamw: non-finite gradient, step refused");
  if (m_.size() != params.size()) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
  }
  const std::int64_t t = steps_ + 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  Eigen::VectorXd m = kBeta1 * m_ + (1.0 - kBeta1) * grads;
  Eigen::VectorXd v = kBeta2 * v_ + (1.0 - kBeta2) * grads.cwiseProduct(grads);
  Eigen::VectorXd next = params * (1.0 - lr * weight_decay);
  next.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEpsilon);
  if (!next.allFinite()) throw NumericError("adamw: update produced non-finite parameters, step refused");
  params = next;
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = t;
}

void AdamW::restore(Eigen::VectorXd m, Eigen::VectorXd v, std::int64_t steps) {
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

ClassifierState::ClassifierState(const Architecture& arch, std::uint64_t seed)
    : arch_(arch), params_(Eigen::VectorXd::Zero(arch.parameter_count())), optimizer_(arch.parameter_count()) {
  std::mt19937_64 rng(mix_seed(seed, 0x1417));
  const Layout l = layout();
  auto fill = [&](Eigen::Index offset, Eigen::Index count, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < count; ++i) params_(offset + i) = dist(rng);
  };
  fill(l.w1, l.b1 - l.w1, arch.input);
  fill(l.w2, l.b2 - l.w2, arch.hidden);
  fill(l.w3, l.b3 - l.w3, arch.feature);
  fill(l.w4, l.b4 - l.w4, arch.head_hidden);
}

ClassifierState::Layout ClassifierState::layout() const {
  Layout l{};
  const Architecture& a = arch_;
  l.w1 = 0;
  l.b1 = l.w1 + static_cast<Eigen::Index>(a.input) * a.hidden;
  l.w2 = l.b1 + a.hidden;
  l.b2 = l.w2 + static_cast<Eigen::Index>(a.hidden) * a.feature;
  l.w3 = l.b2 + a.feature;
  l.b3 = l.w3 + static_cast<Eigen::Index>(a.feature) * a.head_hidden;
  l.w4 = l.b3 + a.head_hidden;
  l.b4 = l.w4 + static_cast<Eigen::Index>(a.head_hidden) * a.classes;
  l.total = l.b4 + a.classes;
  return l;
}

ForwardTrace forward(const ClassifierState& state, const Points& points) {
  if (points.rows() == 0) throw UsageError("forward: empty point set");
  const Architecture& a = state.architecture();
  const auto w = const_views(a, state.layout(), state.parameters().data());

  const Eigen::MatrixXd pre1 = (points * w.w1).rowwise() + w.b1;
  const Eigen::MatrixXd h1 = pre1.cwiseMax(0.0);
  require_finite(h1, "point_mlp.1");
  const Eigen::MatrixXd pre2 = (h1 * w.w2).rowwise() + w.b2;
  require_finite(pre2, "point_mlp.2");

  ForwardTrace t;
  t.num_points = points.rows();
  t.state_step = state.step();
  t.deep_descriptor.resize(a.feature);
  t.argmax.resize(static_cast<std::size_t>(a.feature));
  for (int c = 0; c < a.feature; ++c) {
    Eigen::Index best = 0;
    // max over relu(pre2); strict comparison keeps the lowest index on ties.
    double best_value = std::max(pre2(0, c), 0.0);
    for (Eigen::Index i = 1; i < pre2.rows(); ++i) {
      const double v = std::max(pre2(i, c), 0.0);
      if (v > best_value) {
        best_value = v;
        best = i;
      }
    }
    t.argmax[c] = best;
    t.deep_descriptor(c) = best_value;
  }

  t.selected = t.argmax;
  std::sort(t.selected.begin(), t.selected.end());
  t.selected.erase(std::unique(t.selected.begin(), t.selected.end()), t.selected.end());
  const auto s = static_cast<Eigen::Index>(t.selected.size());
  t.x_sel.resize(s, 3);
  t.pre1_sel.resize(s, a.hidden);
  t.h1_sel.resize(s, a.hidden);
  t.pre2_sel.resize(s, a.feature);
  for (Eigen::Index r = 0; r < s; ++r) {
    const Eigen::Index i = t.selected[r];
    t.x_sel.row(r) = points.row(i);
    t.pre1_sel.row(r) = pre1.row(i);
    t.h1_sel.row(r) = h1.row(i);
    t.pre2_sel.row(r) = pre2.row(i);
  }

  t.pre3 = (t.deep_descriptor.transpose() * w.w3 + w.b3).transpose();
  t.z = t.pre3.cwiseMax(0.0);
  t.logits = (t.z.transpose() * w.w4 + w.b4).transpose();
  require_finite(t.logits, "head");
  t.probabilities = softmax(t.logits);
  return t;
}

Gradients backward(const ClassifierState& state, const ForwardTrace& trace, const Eigen::VectorXd& logit_grad) {
  if (trace.state_step != state.step()) throw UsageError("backward: stale trace (state changed since forward)");
  const Architecture& a = state.architecture();
  if (logit_grad.size() != a.classes) throw UsageError("backward: loss gradient has the wrong length");
  const ClassifierState::Layout l = state.layout();
  const auto w = const_views(a, l, state.parameters().data());

  Gradients g;
  g.params = Eigen::VectorXd::Zero(l.total);
  auto gv = views(a, l, g.params.data());

  gv.w4 = trace.z * logit_grad.transpose();
  gv.b4 = logit_grad.transpose();
  const Eigen::VectorXd dz = ((w.w4 * logit_grad).array() * (trace.pre3.array() > 0.0).cast<double>()).matrix();
  gv.w3 = trace.deep_descriptor * dz.transpose();
  gv.b3 = dz.transpose();
  const Eigen::VectorXd dfeat = w.w3 * dz;

  const auto s = static_cast<Eigen::Index>(trace.selected.size());
  Eigen::MatrixXd dpre2 = Eigen::MatrixXd::Zero(s, a.feature);
  for (int c = 0; c < a.feature; ++c) {
    const auto row = static_cast<Eigen::Index>(
        std::lower_bound(trace.selected.begin(), trace.selected.end(), trace.argmax[c]) - trace.selected.begin());
    if (trace.pre2_sel(row, c) > 0.0) dpre2(row, c) = dfeat(c);
  }
  gv.w2 = trace.h1_sel.transpose() * dpre2;
  gv.b2 = dpre2.colwise().sum();
  const Eigen::MatrixXd dpre1 =
      ((dpre2 * w.w2.transpose()).array() * (trace.pre1_sel.array() > 0.0).cast<double>()).matrix();
  gv.w1 = trace.x_sel.transpose() * dpre1;
  gv.b1 = dpre1.colwise().sum();

  g.input = Points::Zero(trace.num_points, 3);
  const Eigen::MatrixXd dx = dpre1 * w.w1.transpose();
  for (Eigen::Index r = 0; r < s; ++r) g.input.row(trace.selected[r]) = dx.row(r);
  return g;
}

Eigen::VectorXd softmax_backward(const Eigen::VectorXd& p, const Eigen::VectorXd& prob_grad) {
  return p.cwiseProduct(prob_grad - Eigen::VectorXd::Constant(p.size(), p.dot(prob_grad)));
}

void adamw_step(ClassifierState& state, const Eigen::VectorXd& param_grads, double lr, double weight_decay) {
  state.mutable_optimizer().step(state.mutable_parameters(), param_grads, lr, weight_decay);
}

void save_checkpoint(const ClassifierState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const Architecture& a = state.architecture();
  for (int v : {a.input, a.hidden, a.feature, a.head_hidden, a.classes}) put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  const Eigen::Index p = state.parameters().size();
  put<std::uint64_t>(out, static_cast<std::uint64_t>(p));
  put<std::int64_t>(out, state.step());
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(p);
  const AdamW& opt = state.optimizer();
  const Eigen::VectorXd& m = opt.first_moment().size() == p ? opt.first_moment() : zeros;
  const Eigen::VectorXd& v = opt.second_moment().size() == p ? opt.second_moment() : zeros;
  for (const Eigen::VectorXd* vec : {&state.parameters(), &m, &v})
    for (Eigen::Index i = 0; i < p; ++i) put<double>(out, (*vec)(i));
  if (!out) throw IoError("write failure on checkpoint " + path.string());
}

ClassifierState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint " + path.string() + " has version " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));
  Architecture a;
  a.input = static_cast<int>(get<std::uint32_t>(in, path));
  a.hidden = static_cast<int>(get<std::uint32_t>(in, path));
  a.feature = static_cast<int>(get<std::uint32_t>(in, path));
  a.head_hidden = static_cast<int>(get<std::uint32_t>(in, path));
  a.classes = static_cast<int>(get<std::uint32_t>(in, path));
  if (a.input != 3 || a.hidden < 1 || a.feature < 1 || a.head_hidden < 1 || a.classes < 1)
    throw IoError("checkpoint " + path.string() + " has an invalid architecture header");
  const auto p = static_cast<Eigen::Index>(get<std::uint64_t>(in, path));
  if (p != a.parameter_count()) throw IoError("checkpoint " + path.string() + " parameter count mismatch");
  const auto steps = get<std::int64_t>(in, path);
  ClassifierState state(a, 0);
  Eigen::VectorXd m(p), v(p);
  for (Eigen::VectorXd* vec : {&state.mutable_parameters(), &m, &v})
    for (Eigen::Index i = 0; i < p; ++i) (*vec)(i) = get<double>(in, path);
  if (!state.parameters().allFinite()) throw NumericError("checkpoint " + path.string() + " has non-finite parameters");
  state.mutable_optimizer().restore(std::move(m), std::move(v), steps);
  return state;
}

Points prepare_points(const PointCloud& cloud) { return cloud.centered().points(); }

int predict(const ClassifierState& state, const Points& points) {
  Eigen::Index arg = 0;
  forward(state, points).logits.maxCoeff(&arg);
  return static_cast<int>(arg);
}

std::vector<int> predict_all(const ClassifierState& state, const std::vector<Points>& clouds) {
  std::vector<int> out(clouds.size());
  parallel_for(static_cast<std::ptrdiff_t>(clouds.size()), [&](std::ptrdiff_t i) { out[i] = predict(state, clouds[i]); });
  return out;
}

double accuracy(const ClassifierState& state, const std::vector<PointCloud>& clouds) {
  std::vector<Points> pts;
  pts.reserve(clouds.size());
  for (const auto& c : clouds) pts.push_back(prepare_points(c));
  const std::vector<int> pred = predict_all(state, pts);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) correct += clouds[i].label() && pred[i] == *clouds[i].label();
  return clouds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(clouds.size());
}

ClassifierState train_source(const std::vector<PointCloud>& train, const TrainConfig& config,
                             const std::function<void(const EpochLog&)>& on_epoch) {
  if (config.epochs < 1) throw UsageError("train_source: no training performed (epochs < 1)");
  if (train.empty()) throw UsageError("train_source: empty training split");
  std::vector<Points> pts;
  std::vector<int> labels;
  for (const auto& c : train) {
    if (!c.label() || *c.label() < 0 || *c.label() >= config.arch.classes)
      throw UsageError("train_source: every training cloud needs a label in [0, classes)");
    pts.push_back(prepare_points(c));
    labels.push_back(*c.label());
  }

  ClassifierState state(config.arch, config.seed);
  const Eigen::Index p = state.parameters().size();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(std::max(1, config.batch_size));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t b = std::min(batch, order.size() - start);
      std::vector<Eigen::VectorXd> grads(b);
      std::vector<double> losses(b);
      std::vector<int> hits(b);
      parallel_for(static_cast<std::ptrdiff_t>(b), [&](std::ptrdiff_t t) {
        const std::size_t idx = order[start + t];
        const ForwardTrace tr = forward(state, pts[idx]);
        Eigen::VectorXd g = tr.probabilities;
        g(labels[idx]) -= 1.0;
        losses[t] = -std::log(std::max(tr.probabilities(labels[idx]), 1e-12));
        Eigen::Index arg = 0;
        tr.logits.maxCoeff(&arg);
        hits[t] = arg == labels[idx];
        grads[t] = backward(state, tr, g).params;
      });
      Eigen::VectorXd total = Eigen::VectorXd::Zero(p);
      for (std::size_t t = 0; t < b; ++t) {
        total += grads[t];
        loss_sum += losses[t];
        correct += static_cast<std::size_t>(hits[t]);
      }
      total /= static_cast<double>(b);
      if (!std::isfinite(loss_sum) || !total.allFinite())
        throw NumericError("train_source: divergence at epoch " + std::to_string(epoch) + ", batch starting " +
                           std::to_string(start) + " (loss " + std::to_string(loss_sum) + ")");
      adamw_step(state, total, config.lr, config.weight_decay);
    }
    if (on_epoch)
      on_epoch({epoch, loss_sum / static_cast<double>(order.size()),
                static_cast<double>(correct) / static_cast<double>(order.size())});
  }
  return state;
}

}  // namespace gsdtta

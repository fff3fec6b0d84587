#include "gsdtta/adapt.hpp"

#include "gsdtta/error.hpp"
#include "gsdtta/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace gsdtta {

void AdaptConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0) || !(beta3 >= 0.0)) throw UsageError("betas must be non-negative");
  if (m_band < 1) throw UsageError("m_band must be positive");
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be non-negative");
  if (batch_size < 1) throw UsageError("batch_size must be positive");
  if (input_steps_per_cycle < 0 || model_steps_per_cycle < 0 ||
      input_steps_per_cycle + model_steps_per_cycle < 1)
    throw UsageError("a cycle needs at least one step");
  if (total_steps < 0) throw UsageError("total_steps must be non-negative");
  if (total_steps > 0 && total_steps < input_steps_per_cycle + model_steps_per_cycle)
    throw UsageError("total_steps must cover at least one full cycle");
  if (eigenmap_dim < 1) throw UsageError("eigenmap_dim must be positive");
  if (!(graph.delta > 0.0) || !(graph.gamma >= 0.0) || graph.k < 3) throw UsageError("invalid graph settings");
}

PreparedCloud prepare_cloud(const PointCloud& cloud, const AdaptConfig& cfg) {
  const Eigen::Index n = cloud.size();
  if (cfg.is_noop()) return {prepare_points(cloud), Eigen::MatrixXd(n, 0), Eigen::VectorXd(), 0, cloud.label()};
  if (cfg.m_band >= n) throw UsageError("m_band must be smaller than the number of points");
  PreparedCloud out;
  out.points = prepare_points(cloud);
  out.label = cloud.label();

  const PointCloud centred(out.points);
  const OutlierAwareGraph graph = build_outlier_aware_graph(centred, cfg.graph);
  const std::vector<int> comp = connected_components(graph.adjacency);
  const Eigen::Index n_comp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  // Small margin over the component count in case a nearly disconnected
  // piece adds an eigenvalue below the zero tolerance.
  const Eigen::Index modes = std::min<Eigen::Index>(n, n_comp + std::max<Eigen::Index>(cfg.m_band, cfg.eigenmap_dim) + 8);
  const Eigen::MatrixXd l = laplacian(graph);
  const SpectralBasis basis = modes >= n ? eigendecompose(l) : eigendecompose_lowest(l, modes);

  out.n_zero = basis.n_zero;
  const Eigen::Index first = cfg.band_excludes_zero_modes ? basis.n_zero : 0;
  if (first + cfg.m_band > basis.num_modes())
    throw NumericError("prepare_cloud: band exceeds the computed modes (" + std::to_string(basis.n_zero) +
                       " zero modes)");
  out.band = basis.eigenvectors.middleCols(first, cfg.m_band);
  out.spectral_descriptor = spectral_descriptor(basis, cfg.eigenmap_dim);
  return out;
}

std::vector<PreparedCloud> prepare_clouds(const std::vector<const PointCloud*>& clouds, const AdaptConfig& cfg) {
  std::vector<PreparedCloud> out(clouds.size());
  parallel_for(static_cast<std::ptrdiff_t>(clouds.size()),
               [&](std::ptrdiff_t i) { out[i] = prepare_cloud(*clouds[i], cfg); });
  return out;
}

Points shifted_points(const PreparedCloud& cloud, const Coefficients& delta) {
  return cloud.points + cloud.band * delta;
}

namespace {

std::vector<ForwardTrace> forward_all(const ClassifierState& model, const std::vector<Points>& inputs) {
  std::vector<ForwardTrace> traces(inputs.size());
  std::vector<std::exception_ptr> errors(inputs.size());
  parallel_for(static_cast<std::ptrdiff_t>(inputs.size()), [&](std::ptrdiff_t i) {
    try {
      traces[i] = forward(model, inputs[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return traces;
}

Eigen::MatrixXd stack_probabilities(const std::vector<ForwardTrace>& traces) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(traces.size()), traces.front().probabilities.size());
  for (std::size_t i = 0; i < traces.size(); ++i) p.row(i) = traces[i].probabilities.transpose();
  return p;
}

InputObjective input_from_traces(const std::vector<PreparedCloud>& batch, const ClassifierState& model,
                                 const std::vector<Points>& shifted, const std::vector<ForwardTrace>& traces,
                                 const std::vector<int>& labels, const AdaptConfig& cfg) {
  const ClassificationObjective cls = classification_objective(stack_probabilities(traces), labels, cfg.beta1);
  const std::size_t b = batch.size();
  const double cd_weight = cfg.beta2 / static_cast<double>(b);
  std::vector<double> cd(b, 0.0);
  InputObjective out;
  out.delta_grads.resize(b);
  parallel_for(static_cast<std::ptrdiff_t>(b), [&](std::ptrdiff_t i) {
    Points g = backward(model, traces[i], cls.logit_grads[i]).input;
    const ChamferGrad c = loss_cd_with_grad(batch[i].points, shifted[i]);
    cd[i] = c.value;
    g += cd_weight * c.grad;
    out.delta_grads[i] = batch[i].band.transpose() * g;
  });
  out.parts = cls.parts;
  for (double v : cd) out.parts.cd += v / static_cast<double>(b);
  out.value = loss_input_adaptation(out.parts, cfg.beta1, cfg.beta2);
  return out;
}

ModelObjective model_from_traces(const ClassifierState& model, const std::vector<ForwardTrace>& traces,
                                 const std::vector<int>& labels, const AdaptConfig& cfg) {
  const ClassificationObjective cls = classification_objective(stack_probabilities(traces), labels, cfg.beta3);
  std::vector<Eigen::VectorXd> grads(traces.size());
  parallel_for(static_cast<std::ptrdiff_t>(traces.size()),
               [&](std::ptrdiff_t i) { grads[i] = backward(model, traces[i], cls.logit_grads[i]).params; });
  ModelObjective out;
  out.parts = cls.parts;
  out.param_grad = Eigen::VectorXd::Zero(model.parameters().size());
  for (const auto& g : grads) out.param_grad += g;
  out.value = loss_model_adaptation(out.parts, cfg.beta3);
  return out;
}

std::vector<Points> shift_all(const std::vector<PreparedCloud>& batch, const std::vector<Coefficients>& deltas) {
  std::vector<Points> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = shifted_points(batch[i], deltas[i]);
  return out;
}

std::string describe(const LossParts& p) {
  std::ostringstream os;
  os.precision(17);
  os << "l_pl=" << p.pl << " l_ent=" << p.ent << " l_div=" << p.div << " l_cd=" << p.cd;
  return os.str();
}

}  // namespace

InputObjective input_objective(const std::vector<PreparedCloud>& batch, const ClassifierState& model,
                               const std::vector<Coefficients>& deltas, const std::vector<int>& labels,
                               const AdaptConfig& cfg) {
  if (batch.empty() || deltas.size() != batch.size()) throw UsageError("input_objective: batch/delta mismatch");
  const std::vector<Points> shifted = shift_all(batch, deltas);
  return input_from_traces(batch, model, shifted, forward_all(model, shifted), labels, cfg);
}

ModelObjective model_objective(const std::vector<Points>& inputs, const ClassifierState& model,
                               const std::vector<int>& labels, const AdaptConfig& cfg) {
  if (inputs.empty()) throw UsageError("model_objective: empty batch");
  return model_from_traces(model, forward_all(model, inputs), labels, cfg);
}

BatchResult adapt_batch(const std::vector<PreparedCloud>& batch, ClassifierState& model, const AdaptConfig& cfg) {
  if (batch.empty()) throw UsageError("adapt_batch: empty batch");
  cfg.validate();
  const std::size_t b = batch.size();
  const Eigen::Index m = cfg.m_band;
  if (!cfg.is_noop())
    for (const auto& c : batch)
      if (c.band.cols() != m) throw UsageError("adapt_batch: cloud prepared with a different band size");

  BatchResult result;
  result.report.size = static_cast<int>(b);

  std::vector<Coefficients> deltas(b, Coefficients::Zero(m, 3));
  Eigen::VectorXd delta_flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b) * m * 3);
  AdamW delta_opt(delta_flat.size());
  const int cycle = cfg.input_steps_per_cycle + cfg.model_steps_per_cycle;
  const int steps = cfg.is_noop() ? 0 : cfg.total_steps;
  std::vector<int> labels;

  for (int s = 0; s < steps; ++s) {
    const int pos = s % cycle;
    const bool input_phase = pos < cfg.input_steps_per_cycle;
    if (input_phase ? !cfg.enable_gsdps : !cfg.enable_gsgma) continue;

    const std::vector<Points> shifted = shift_all(batch, deltas);
    const std::vector<ForwardTrace> traces = forward_all(model, shifted);

    StepDiagnostics diag;
    diag.step = s;
    diag.input_phase = input_phase;
    if (labels.empty() || cfg.label_refresh == LabelRefresh::kEveryStep || pos == 0) {
      BatchDescriptors d;
      d.probabilities = stack_probabilities(traces);
      d.deep.resize(static_cast<Eigen::Index>(b), traces.front().deep_descriptor.size());
      d.spectral.resize(static_cast<Eigen::Index>(b), batch.front().spectral_descriptor.size());
      for (std::size_t i = 0; i < b; ++i) {
        d.deep.row(i) = traces[i].deep_descriptor.transpose();
        d.spectral.row(i) = batch[i].spectral_descriptor.transpose();
      }
      const PseudoLabels pl = pseudo_label(d, compute_centroids(d), cfg.effective_alpha(), cfg.label_rule);
      labels = pl.labels;
      diag.zero_norm_terms = pl.zero_norm_terms;
    }
    int known = 0, agree = 0;
    for (std::size_t i = 0; i < b; ++i) {
      if (!batch[i].label) continue;
      ++known;
      agree += labels[i] == *batch[i].label;
    }
    if (known > 0) diag.label_agreement = static_cast<double>(agree) / known;

    try {
      if (input_phase) {
        const InputObjective obj = input_from_traces(batch, model, shifted, traces, labels, cfg);
        Eigen::VectorXd grad(delta_flat.size());
        for (std::size_t i = 0; i < b; ++i)
          grad.segment(static_cast<Eigen::Index>(i) * m * 3, m * 3) =
              Eigen::Map<const Eigen::VectorXd>(obj.delta_grads[i].data(), m * 3);
        delta_opt.step(delta_flat, grad, cfg.lr, cfg.weight_decay);
        for (std::size_t i = 0; i < b; ++i)
          deltas[i] = Eigen::Map<const Coefficients>(delta_flat.data() + static_cast<Eigen::Index>(i) * m * 3, m, 3);
        diag.parts = obj.parts;
        diag.total = obj.value;
        ++result.report.input_steps;
      } else {
        const ModelObjective obj = model_from_traces(model, traces, labels, cfg);
        adamw_step(model, obj.param_grad, cfg.lr, cfg.weight_decay);
        diag.parts = obj.parts;
        diag.total = obj.value;
        ++result.report.model_steps;
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(s) + " (" +
                         (input_phase ? "input" : "model") + " phase; " + describe(diag.parts) + ")");
    }
    result.report.steps.push_back(diag);
  }

  const std::vector<ForwardTrace> final_traces = forward_all(model, shift_all(batch, deltas));
  result.predictions.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    Eigen::Index best = 0;
    final_traces[i].logits.maxCoeff(&best);
    result.predictions[i] = static_cast<int>(best);
  }
  result.report.delta_norm = delta_flat.norm();
  return result;
}

double StreamReport::mean_source_accuracy() const {
  if (groups.empty()) return 0.0;
  double s = 0.0;
  for (const auto& g : groups) s += g.source_accuracy();
  return s / static_cast<double>(groups.size());
}

double StreamReport::mean_adapted_accuracy() const {
  if (groups.empty()) return 0.0;
  double s = 0.0;
  for (const auto& g : groups) s += g.adapted_accuracy();
  return s / static_cast<double>(groups.size());
}

namespace {

struct Grouping {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> group_of;
};

Grouping group_items(const std::vector<TaggedCloud>& items) {
  Grouping g;
  std::map<std::string, std::size_t> index;
  g.group_of.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, inserted] = index.emplace(items[i].group, g.names.size());
    if (inserted) {
      g.names.push_back(items[i].group);
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
    g.group_of[i] = it->second;
  }
  return g;
}

std::vector<int> source_predictions(const std::vector<TaggedCloud>& items, const ClassifierState& source) {
  std::vector<Points> inputs(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) inputs[i] = prepare_points(items[i].cloud);
  return predict_all(source, inputs);
}

/// Fresh optimizer moments so step counters follow the adaptation schedule.
ClassifierState adaptation_start(const ClassifierState& source) {
  ClassifierState model = source;
  model.mutable_optimizer() = AdamW(model.parameters().size());
  return model;
}

}  // namespace

StreamReport adapt_stream(const std::vector<TaggedCloud>& items, const ClassifierState& source,
                          const AdaptConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw UsageError("adapt_stream: no clouds");
  const Grouping grouping = group_items(items);
  const std::vector<int> source_pred = source_predictions(items, source);

  StreamReport report;
  report.groups.resize(grouping.names.size());
  for (std::size_t g = 0; g < grouping.names.size(); ++g) report.groups[g].name = grouping.names[g];

  std::vector<int> adapted_pred(items.size(), -1);
  std::vector<std::vector<std::size_t>> segments;
  if (cfg.reset_per_group) {
    segments = grouping.members;
  } else {
    segments.emplace_back(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) segments.front()[i] = i;
  }

  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (const auto& segment : segments) {
    ClassifierState model = adaptation_start(source);
    for (std::size_t start = 0, batch_index = 0; start < segment.size(); start += bs, ++batch_index) {
      const std::size_t end = std::min(segment.size(), start + bs);
      std::vector<const PointCloud*> clouds;
      std::string group;
      for (std::size_t j = start; j < end; ++j) {
        const TaggedCloud& item = items[segment[j]];
        clouds.push_back(&item.cloud);
        if (group.empty())
          group = item.group;
        else if (group.find(item.group) == std::string::npos)
          group += "+" + item.group;
      }
      BatchResult r = adapt_batch(prepare_clouds(clouds, cfg), model, cfg);
      for (std::size_t j = start; j < end; ++j) adapted_pred[segment[j]] = r.predictions[j - start];
      r.report.group = group;
      r.report.index = static_cast<int>(batch_index);
      report.batches.push_back(std::move(r.report));
    }
  }

  for (std::size_t i = 0; i < items.size(); ++i) {
    GroupAccuracy& g = report.groups[grouping.group_of[i]];
    ++g.count;
    const auto& label = items[i].cloud.label();
    if (!label) continue;
    g.source_correct += source_pred[i] == *label;
    g.adapted_correct += adapted_pred[i] == *label;
  }
  return report;
}

AblationTable ablation_suite(const std::vector<TaggedCloud>& items, const ClassifierState& source,
                             const AdaptConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw UsageError("ablation_suite: no clouds");
  const Grouping grouping = group_items(items);
  const std::vector<int> source_pred = source_predictions(items, source);

  struct Variant {
    std::string name;
    AdaptConfig cfg;
  };
  std::vector<Variant> variants;
  AdaptConfig v = cfg;
  v.enable_gsdps = false;
  v.enable_gsgma = true;
  variants.push_back({"gsgma_only", v});
  v = cfg;
  v.enable_gsdps = true;
  v.enable_gsgma = false;
  variants.push_back({"gsdps_only", v});
  v = cfg;
  v.enable_gsdps = v.enable_gsgma = true;
  v.eigenmap_guided = false;
  variants.push_back({"deep_feature_guided", v});
  v = cfg;
  v.enable_gsdps = v.enable_gsgma = v.eigenmap_guided = true;
  variants.push_back({"full", v});

  AblationTable table;
  table.groups = grouping.names;
  table.rows.push_back({"source_only", {}, 0.0});
  for (const auto& var : variants) table.rows.push_back({var.name, {}, 0.0});

  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t g = 0; g < grouping.names.size(); ++g) {
    const auto& members = grouping.members[g];
    std::vector<const PointCloud*> clouds;
    for (std::size_t i : members) clouds.push_back(&items[i].cloud);
    const std::vector<PreparedCloud> prepared = prepare_clouds(clouds, cfg);

    auto accuracy_of = [&](const std::vector<int>& pred) {
      int correct = 0;
      for (std::size_t j = 0; j < members.size(); ++j) {
        const auto& label = items[members[j]].cloud.label();
        correct += label && pred[j] == *label;
      }
      return static_cast<double>(correct) / static_cast<double>(members.size());
    };

    std::vector<int> pred(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) pred[j] = source_pred[members[j]];
    table.rows[0].group_accuracy.push_back(accuracy_of(pred));

    for (std::size_t k = 0; k < variants.size(); ++k) {
      ClassifierState model = adaptation_start(source);
      for (std::size_t start = 0; start < members.size(); start += bs) {
        const std::size_t end = std::min(members.size(), start + bs);
        const std::vector<PreparedCloud> batch(prepared.begin() + static_cast<std::ptrdiff_t>(start),
                                               prepared.begin() + static_cast<std::ptrdiff_t>(end));
        const BatchResult r = adapt_batch(batch, model, variants[k].cfg);
        std::copy(r.predictions.begin(), r.predictions.end(), pred.begin() + static_cast<std::ptrdiff_t>(start));
      }
      table.rows[k + 1].group_accuracy.push_back(accuracy_of(pred));
    }
  }
  for (auto& row : table.rows) {
    double s = 0.0;
    for (double a : row.group_accuracy) s += a;
    row.mean = s / static_cast<double>(row.group_accuracy.size());
  }
  return table;
}

}  // namespace gsdtta

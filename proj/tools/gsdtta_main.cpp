#include "gsdtta/adapt.hpp"
#include "gsdtta/config.hpp"
#include "gsdtta/dataset.hpp"
#include "gsdtta/error.hpp"
#include "gsdtta/graph.hpp"
#include "gsdtta/nn.hpp"
#include "gsdtta/parallel.hpp"
#include "gsdtta/report.hpp"
#include "gsdtta/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using namespace gsdtta;

/// Output directory of one command. Files created by a failed command are
/// removed; a directory the command created is removed entirely.
class OutputDir {
 public:
  void open(const fs::path& dir, bool force) {
    dir_ = dir;
    std::error_code ec;
    existed_ = fs::exists(dir, ec);
    if (existed_ && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
    if (existed_ && !fs::is_empty(dir) && !force)
      throw UsageError(dir.string() + " is not empty; pass --force to overwrite");
    if (!fs::create_directories(dir, ec) && ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  fs::path file(const std::string& name) {
    written_.push_back(dir_ / name);
    return written_.back();
  }
  void cleanup() noexcept {
    if (dir_.empty()) return;
    std::error_code ec;
    if (!existed_) {
      fs::remove_all(dir_, ec);
      return;
    }
    for (const auto& p : written_) fs::remove_all(p, ec);
  }
  const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
  bool existed_ = false;
  std::vector<fs::path> written_;
};

OutputDir g_out;

void write_run_json(const std::string& command, json config) {
  json j;
  j["command"] = command;
  j["version"] = version_string();
  j["config"] = std::move(config);
  write_text(g_out.file("run.json"), j.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<PointCloud> load_split(const Manifest& m, const std::string& split) {
  std::vector<PointCloud> out;
  for (const auto& e : m.split(split)) out.push_back(m.load(e));
  return out;
}

std::vector<TaggedCloud> load_tagged(const Manifest& m, const std::string& split) {
  std::vector<TaggedCloud> out;
  for (const auto& e : m.split(split))
    out.push_back({m.load(e), e.corruption ? std::string(to_string(*e.corruption)) : std::string("clean")});
  if (out.empty()) throw UsageError("manifest has no '" + split + "' clouds");
  return out;
}

// ---- make-dataset -------------------------------------------------------

struct MakeDatasetArgs {
  std::string out, classes;
  int train_per_class = 200, test_per_class = 50, points = 1024;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_make_dataset(const MakeDatasetArgs& a) {
  DatasetConfig cfg;
  for (const auto& name : split_list(a.classes)) cfg.families.push_back(parse_family(name));
  cfg.train_per_class = a.train_per_class;
  cfg.test_per_class = a.test_per_class;
  cfg.n_points = a.points;
  cfg.seed = a.seed;
  g_out.open(a.out, a.force);
  g_out.file("train");
  g_out.file("test");
  g_out.file("manifest.json");
  const Manifest m = write_dataset(make_dataset(cfg), a.out, true);
  json c;
  c["classes"] = a.classes.empty() ? "all" : a.classes;
  c["train_per_class"] = a.train_per_class;
  c["test_per_class"] = a.test_per_class;
  c["points"] = a.points;
  c["seed"] = a.seed;
  write_run_json("make-dataset", c);
  std::cout << "wrote " << m.split("train").size() << " train and " << m.split("test").size() << " test clouds to "
            << a.out << "\n";
}

// ---- train-source -------------------------------------------------------

struct TrainArgs {
  std::string manifest, out;
  int epochs = 30, batch_size = 16;
  double lr = 1e-3, weight_decay = 1e-4, gate = 0.95;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_train_source(const TrainArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  const auto train = load_split(m, "train");
  const auto test = load_split(m, "test");
  if (train.empty()) throw UsageError("manifest has no training clouds");
  if (test.empty()) throw UsageError("manifest has no clean test clouds for the accuracy gate");
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr = a.lr;
  cfg.weight_decay = a.weight_decay;
  cfg.seed = a.seed;
  if (cfg.epochs < 1) throw UsageError("no training performed: --epochs must be at least 1");
  g_out.open(a.out, a.force);

  std::ostringstream log;
  log << "epoch,loss,train_accuracy\n";
  const ClassifierState model = train_source(train, cfg, [&](const EpochLog& e) {
    log << e.epoch << ',' << format_real(e.loss) << ',' << format_real(e.train_accuracy) << '\n';
    std::cerr << "epoch " << e.epoch << " loss " << e.loss << " train accuracy " << e.train_accuracy << "\n";
  });
  save_checkpoint(model, g_out.file("model.ckpt"));
  write_text(g_out.file("train_log.csv"), log.str());
  const double acc = accuracy(model, test);
  json c;
  c["manifest"] = a.manifest;
  c["epochs"] = a.epochs;
  c["batch_size"] = a.batch_size;
  c["lr"] = a.lr;
  c["weight_decay"] = a.weight_decay;
  c["seed"] = a.seed;
  c["gate"] = a.gate;
  c["clean_test_accuracy"] = acc;
  write_run_json("train-source", c);
  std::cout << "clean test accuracy " << acc << "\n";
  if (acc < a.gate) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "clean test accuracy %.4f is below the %.4f gate", acc, a.gate);
    throw GateError(buf);
  }
}

// ---- corrupt ------------------------------------------------------------

struct CorruptArgs {
  std::string manifest, out, kinds = "all", split = "test";
  double severity = 0.0;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_corrupt(const CorruptArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  std::vector<CorruptionKind> kinds;
  if (a.kinds == "all") {
    for (auto k : all_corruptions()) kinds.push_back(k);
  } else {
    for (const auto& name : split_list(a.kinds)) kinds.push_back(parse_corruption(name));
  }
  if (kinds.empty()) throw UsageError("no corruption kinds given");
  const auto clean = load_split(m, a.split);
  if (clean.empty()) throw UsageError("manifest has no '" + a.split + "' clouds");
  const std::optional<double> severity = a.severity > 0.0 ? std::optional<double>(a.severity) : std::nullopt;
  g_out.open(a.out, a.force);
  const auto items = make_corrupted_set(clean, kinds, a.seed, severity);

  Manifest out;
  out.base_dir = a.out;
  std::size_t index = 0;
  for (const auto& item : items) {
    const CorruptionKind kind = parse_corruption(item.group);
    if (index == 0 || out.entries.back().corruption != kind) g_out.file(item.group);
    fs::create_directories(fs::path(a.out) / item.group);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.xyz", index++);
    const std::string rel = item.group + "/" + name;
    save_xyz(item.cloud, fs::path(a.out) / rel);
    out.entries.push_back({rel, item.cloud.label().value_or(-1), "test", kind, severity.value_or(default_severity(kind))});
  }
  write_manifest(out, g_out.file("manifest.json"));
  json c;
  c["manifest"] = a.manifest;
  c["kinds"] = a.kinds;
  c["split"] = a.split;
  c["severity"] = severity ? json(*severity) : json("default");
  c["seed"] = a.seed;
  write_run_json("corrupt", c);
  std::cout << "wrote " << items.size() << " corrupted clouds to " << a.out << "\n";
}

// ---- adapt / eval -------------------------------------------------------

struct AdaptArgs {
  std::string checkpoint, manifest, out, config, split = "test";
  std::vector<std::string> sets;
  bool no_gsdps = false, no_gsgma = false, no_eigenmap = false, ablation = false, force = false;
};

AdaptConfig resolve_config(const AdaptArgs& a) {
  AdaptConfig cfg = a.config.empty() ? AdaptConfig{} : load_adapt_config(a.config);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.no_gsdps) cfg.enable_gsdps = false;
  if (a.no_gsgma) cfg.enable_gsgma = false;
  if (a.no_eigenmap) cfg.eigenmap_guided = false;
  cfg.validate();
  return cfg;
}

json adapt_run_config(const AdaptArgs& a, const AdaptConfig& cfg) {
  json c;
  c["checkpoint"] = a.checkpoint;
  c["manifest"] = a.manifest;
  c["split"] = a.split;
  c["adapt"] = to_json(cfg);
  return c;
}

void cmd_adapt(const AdaptArgs& a) {
  const AdaptConfig cfg = resolve_config(a);
  const ClassifierState model = load_checkpoint(a.checkpoint);
  const auto items = load_tagged(read_manifest(a.manifest), a.split);
  g_out.open(a.out, a.force);
  const StreamReport report = adapt_stream(items, model, cfg);
  write_text(g_out.file("report.json"), report_json(report, cfg).dump(2) + "\n");
  write_text(g_out.file("diagnostics.csv"), diagnostics_csv(report));
  write_text(g_out.file("accuracy.csv"), accuracy_csv(report));
  write_text(g_out.file("accuracy.md"), accuracy_markdown(report));
  write_run_json("adapt", adapt_run_config(a, cfg));
  std::cout << accuracy_markdown(report);
}

void cmd_eval(const AdaptArgs& a) {
  const AdaptConfig cfg = resolve_config(a);
  const ClassifierState model = load_checkpoint(a.checkpoint);
  const auto items = load_tagged(read_manifest(a.manifest), a.split);
  g_out.open(a.out, a.force);
  if (a.ablation) {
    const AblationTable table = ablation_suite(items, model, cfg);
    write_text(g_out.file("ablation.csv"), ablation_csv(table));
    write_text(g_out.file("ablation.md"), ablation_markdown(table));
    std::cout << ablation_markdown(table);
  } else {
    const StreamReport report = adapt_stream(items, model, cfg);
    write_text(g_out.file("accuracy.csv"), accuracy_csv(report));
    write_text(g_out.file("accuracy.md"), accuracy_markdown(report));
    std::cout << accuracy_markdown(report);
  }
  write_run_json(a.ablation ? "eval --ablation" : "eval", adapt_run_config(a, cfg));
}

// ---- spectrum / graph ---------------------------------------------------

struct GraphArgs {
  int k = 10;
  double delta = 0.1, gamma = 0.6;
  std::string kernel = "gaussian";
  GraphConfig config() const {
    AdaptConfig tmp;
    set_config_value(tmp, "weight_kernel", kernel);
    GraphConfig g;
    g.k = k;
    g.delta = delta;
    g.gamma = gamma;
    g.kernel = tmp.graph.kernel;
    return g;
  }
};

struct SpectrumArgs {
  std::string input, shape, out;
  int points = 1024;
  double fraction = 0.1;
  std::uint64_t seed = 0;
  bool force = false;
  GraphArgs graph;
};

PointCloud spectrum_input(const SpectrumArgs& a) {
  const int sources = !a.input.empty() + !a.shape.empty();
  if (sources != 1) throw UsageError("give exactly one of --input or --shape");
  if (!a.input.empty()) return load_xyz(a.input).centered();
  if (a.shape == "chair") return synth_chair(a.points, a.seed);
  return synth_shape({parse_family(a.shape), a.points}, a.seed).centered();
}

void cmd_spectrum(const SpectrumArgs& a) {
  if (!(a.fraction > 0.0 && a.fraction <= 1.0)) throw UsageError("--fraction must lie in (0, 1]");
  const PointCloud cloud = spectrum_input(a);
  const GraphConfig gcfg = a.graph.config();
  gcfg.validate(cloud.size());
  g_out.open(a.out, a.force);
  const SpectralBasis basis = spectral_basis(cloud, gcfg, cloud.size());
  const SpectralCoefficients c = gft(cloud.points(), basis);
  const Eigen::Index ac = basis.size() - basis.n_zero;
  if (ac < 1) throw NumericError("graph has no non-zero frequencies");
  const Eigen::VectorXd profile = energy_profile({c.coeffs.bottomRows(ac)});

  std::ostringstream csv;
  csv << "component,eigenvalue,cumulative_energy\n";
  for (Eigen::Index i = 0; i < ac; ++i)
    csv << i + 1 << ',' << format_real(basis.eigenvalues(basis.n_zero + i)) << ',' << format_real(profile(i)) << '\n';
  write_text(g_out.file("energy.csv"), csv.str());
  const auto keep = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(a.fraction * static_cast<double>(ac))));
  json cfg;
  cfg["input"] = a.input.empty() ? a.shape : a.input;
  cfg["points"] = cloud.size();
  cfg["seed"] = a.seed;
  cfg["k"] = gcfg.k;
  cfg["delta"] = gcfg.delta;
  cfg["gamma"] = gcfg.gamma;
  cfg["weight_kernel"] = to_string(gcfg.kernel);
  cfg["fraction"] = a.fraction;
  write_run_json("spectrum", cfg);
  std::printf("cumulative AC energy in the lowest %lld of %lld components: %.6f (%lld zero modes)\n",
              static_cast<long long>(keep), static_cast<long long>(ac), profile(keep - 1),
              static_cast<long long>(basis.n_zero));
}

struct GraphDumpArgs {
  std::string input, out;
  GraphArgs graph;
};

void cmd_graph(const GraphDumpArgs& a) {
  const PointCloud cloud = load_xyz(a.input).centered();
  const OutlierAwareGraph g = build_outlier_aware_graph(cloud, a.graph.config());
  const fs::path out(a.out);
  try {
    write_adjacency_csv(g, out);
  } catch (...) {
    std::error_code ec;
    fs::remove(out, ec);
    throw;
  }
  std::cout << g.size() << " vertices, " << g.adjacency.nonZeros() / 2 << " edges, " << g.num_masked()
            << " masked (tau " << g.tau << ")\n";
}

void add_graph_options(CLI::App* cmd, GraphArgs& g) {
  cmd->add_option("--k", g.k, "neighbours per vertex")->capture_default_str();
  cmd->add_option("--delta", g.delta, "kernel bandwidth")->capture_default_str();
  cmd->add_option("--gamma", g.gamma, "outlier threshold factor")->capture_default_str();
  cmd->add_option("--kernel", g.kernel, "gaussian or literal_quartic")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph spectral test-time adaptation for point-cloud classification"};
  app.require_subcommand(1);
  int threads = gsdtta::default_threads();
  app.add_option("--threads", threads, "worker threads (default: GSDTTA_THREADS or all processors)")
      ->check(CLI::PositiveNumber);

  MakeDatasetArgs md;
  auto* make = app.add_subcommand("make-dataset", "synthesize labelled train/test clouds");
  make->add_option("--out", md.out, "output directory")->required();
  make->add_option("--classes", md.classes, "comma-separated families (default: all)");
  make->add_option("--train-per-class", md.train_per_class)->capture_default_str();
  make->add_option("--test-per-class", md.test_per_class)->capture_default_str();
  make->add_option("--points", md.points)->capture_default_str();
  make->add_option("--seed", md.seed)->capture_default_str();
  make->add_flag("--force", md.force, "overwrite a non-empty output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train-source", "train the source classifier");
  train->add_option("--manifest", tr.manifest)->required();
  train->add_option("--out", tr.out, "output directory")->required();
  train->add_option("--epochs", tr.epochs)->capture_default_str();
  train->add_option("--batch-size", tr.batch_size)->capture_default_str();
  train->add_option("--lr", tr.lr)->capture_default_str();
  train->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--gate", tr.gate, "minimum clean test accuracy")->capture_default_str();
  train->add_flag("--force", tr.force);

  CorruptArgs co;
  auto* corr = app.add_subcommand("corrupt", "write corrupted copies of a split");
  corr->add_option("--manifest", co.manifest)->required();
  corr->add_option("--out", co.out)->required();
  corr->add_option("--kinds", co.kinds, "comma-separated kinds or 'all'")->capture_default_str();
  corr->add_option("--severity", co.severity, "override every kind's severity");
  corr->add_option("--split", co.split)->capture_default_str();
  corr->add_option("--seed", co.seed)->capture_default_str();
  corr->add_flag("--force", co.force);

  AdaptArgs ad;
  auto* adapt = app.add_subcommand("adapt", "adapt over a corrupted stream and write the full report");
  AdaptArgs ev;
  auto* eval = app.add_subcommand("eval", "per-corruption accuracy table (or the ablation table)");
  for (auto [cmd, args] : {std::pair{adapt, &ad}, std::pair{eval, &ev}}) {
    cmd->add_option("--checkpoint", args->checkpoint)->required();
    cmd->add_option("--manifest", args->manifest)->required();
    cmd->add_option("--out", args->out)->required();
    cmd->add_option("--config", args->config, "key=value or JSON config file");
    cmd->add_option("--set", args->sets, "override one config key (key=value)");
    cmd->add_option("--split", args->split)->capture_default_str();
    cmd->add_flag("--no-gsdps", args->no_gsdps, "disable input adaptation");
    cmd->add_flag("--no-gsgma", args->no_gsgma, "disable model adaptation");
    cmd->add_flag("--no-eigenmap", args->no_eigenmap, "pseudo-labels from deep descriptors only");
    cmd->add_flag("--force", args->force);
  }
  eval->add_flag("--ablation", ev.ablation, "five-variant ablation table");

  SpectrumArgs sp;
  auto* spec = app.add_subcommand("spectrum", "graph spectral energy profile of one cloud");
  spec->add_option("--input", sp.input, "XYZ file");
  spec->add_option("--shape", sp.shape, "synthetic family name or 'chair'");
  spec->add_option("--points", sp.points)->capture_default_str();
  spec->add_option("--seed", sp.seed)->capture_default_str();
  spec->add_option("--fraction", sp.fraction, "component fraction for the summary line")->capture_default_str();
  spec->add_option("--out", sp.out)->required();
  spec->add_flag("--force", sp.force);
  add_graph_options(spec, sp.graph);

  GraphDumpArgs gd;
  auto* graph = app.add_subcommand("graph", "dump the outlier-aware adjacency as i,j,w CSV");
  graph->add_option("--input", gd.input, "XYZ file")->required();
  graph->add_option("--out", gd.out, "CSV path")->required();
  add_graph_options(graph, gd.graph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(gsdtta::ExitCode::kUsage);
  }

  try {
    gsdtta::set_num_threads(threads);
    if (*make) cmd_make_dataset(md);
    else if (*train) cmd_train_source(tr);
    else if (*corr) cmd_corrupt(co);
    else if (*adapt) cmd_adapt(ad);
    else if (*eval) cmd_eval(ev);
    else if (*spec) cmd_spectrum(sp);
    else if (*graph) cmd_graph(gd);
  } catch (const gsdtta::GateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const gsdtta::Error& e) {
    g_out.cleanup();
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    g_out.cleanup();
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(gsdtta::ExitCode::kNumeric);
  }
  return 0;
}

#include "gsdtta/dataset.hpp"

#include "gsdtta/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

namespace gsdtta {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ManifestEntry> Manifest::split(std::string_view name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  return out;
}

PointCloud Manifest::load(const ManifestEntry& entry) const {
  PointCloud cloud = load_xyz(base_dir / entry.path);
  return cloud.with_label(entry.label >= 0 ? std::optional<int>(entry.label) : std::nullopt);
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.value("format", "") != "gsdtta-manifest" || doc.value("version", 0) != 1)
    throw IoError("manifest " + path.string() + " has an unsupported format or version");
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    for (const auto& c : doc.at("clouds")) {
      ManifestEntry e;
      e.path = c.at("path").get<std::string>();
      e.label = c.value("label", -1);
      e.split = c.value("split", "");
      if (c.contains("corruption")) {
        e.corruption = parse_corruption(c.at("corruption").get<std::string>());
        e.severity = c.value("severity", 0.0);
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  json clouds = json::array();
  for (const auto& e : manifest.entries) {
    json c = {{"path", e.path}, {"label", e.label}, {"split", e.split}};
    if (e.corruption) {
      c["corruption"] = std::string(to_string(*e.corruption));
      c["severity"] = e.severity;
    }
    clouds.push_back(std::move(c));
  }
  const json doc = {{"format", "gsdtta-manifest"}, {"version", 1}, {"clouds", std::move(clouds)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

Dataset make_dataset(const DatasetConfig& config) {
  std::vector<ShapeFamily> families = config.families;
  if (families.empty()) {
    const auto all = all_families();
    families.assign(all.begin(), all.end());
  }
  Dataset d;
  for (ShapeFamily f : families) {
    const auto fam = static_cast<std::uint64_t>(f);
    for (int i = 0; i < config.train_per_class; ++i)
      d.train.push_back(synth_shape({f, config.n_points}, mix_seed(config.seed, mix_seed(fam, 2 * i))));
    for (int i = 0; i < config.test_per_class; ++i)
      d.test.push_back(synth_shape({f, config.n_points}, mix_seed(config.seed, mix_seed(fam, 2 * i + 1))));
  }
  return d;
}

Manifest write_dataset(const Dataset& dataset, const fs::path& out, bool force) {
  std::error_code ec;
  if (fs::exists(out, ec) && !fs::is_empty(out, ec) && !force)
    throw UsageError("output directory " + out.string() + " is not empty (pass --force to overwrite)");
  fs::create_directories(out / "train", ec);
  fs::create_directories(out / "test", ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  Manifest m;
  m.base_dir = out;
  auto emit = [&](const std::vector<PointCloud>& clouds, const std::string& split) {
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      const int label = clouds[i].label().value_or(-1);
      char name[64];
      std::snprintf(name, sizeof name, "%s/%05zu_%s.xyz", split.c_str(), i,
                    std::string(to_string(static_cast<ShapeFamily>(label))).c_str());
      save_xyz(clouds[i], out / name);
      m.entries.push_back({name, label, split, std::nullopt, 0.0});
    }
  };
  emit(dataset.train, "train");
  emit(dataset.test, "test");
  write_manifest(m, out / "manifest.json");
  return m;
}

std::vector<TaggedCloud> make_corrupted_set(const std::vector<PointCloud>& clean,
                                            const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                                            std::optional<double> severity) {
  std::vector<TaggedCloud> out;
  out.reserve(clean.size() * kinds.size());
  for (CorruptionKind kind : kinds) {
    const auto k = static_cast<std::uint64_t>(kind);
    std::vector<TaggedCloud> group;
    group.reserve(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const CorruptionSpec spec{kind, severity.value_or(default_severity(kind)), mix_seed(seed, mix_seed(k, i))};
      group.push_back({corrupt(clean[i], spec), std::string(to_string(kind))});
    }
    std::mt19937_64 rng(mix_seed(seed, 0x5eed + k));
    std::shuffle(group.begin(), group.end(), rng);
    std::move(group.begin(), group.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace gsdtta

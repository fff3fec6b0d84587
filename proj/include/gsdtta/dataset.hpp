#pragma once

#include "gsdtta/pointcloud.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gsdtta {

/// One cloud in a manifest. `path` is relative to the manifest's directory.
struct ManifestEntry {
  std::string path;
  int label = -1;
  std::string split;
  std::optional<CorruptionKind> corruption;
  double severity = 0.0;
};

/// JSON manifest: {"format": "gsdtta-manifest", "version": 1, "clouds": [...]}.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::vector<ManifestEntry> split(std::string_view name) const;
  PointCloud load(const ManifestEntry& entry) const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct DatasetConfig {
  std::vector<ShapeFamily> families;  // empty = all eight
  int train_per_class = 200;
  int test_per_class = 50;
  int n_points = 1024;
  std::uint64_t seed = 0;
};

/// Clouds carry their label. Test clouds are ordered by class.
struct Dataset {
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

Dataset make_dataset(const DatasetConfig& config);

/// Writes `<out>/train/*.xyz`, `<out>/test/*.xyz` and `<out>/manifest.json`.
/// Refuses a non-empty `out` unless `force`.
Manifest write_dataset(const Dataset& dataset, const std::filesystem::path& out, bool force);

/// A test cloud tagged with the corruption that produced it ("clean" when none).
struct TaggedCloud {
  PointCloud cloud;
  std::string group;
};

/// Applies each kind (at its benchmark severity unless overridden) to every
/// clean cloud; within a kind the order is shuffled with `seed`.
std::vector<TaggedCloud> make_corrupted_set(const std::vector<PointCloud>& clean,
                                            const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                                            std::optional<double> severity = std::nullopt);

}  // namespace gsdtta

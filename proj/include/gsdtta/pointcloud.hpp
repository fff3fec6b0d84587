#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace gsdtta {

/// N x 3 coordinate matrix, one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

inline constexpr Eigen::Index kMinPoints = 4;

/// An immutable point set with an optional class label.
///
/// Construction enforces N >= 4 and finite coordinates; every other module
/// can rely on both.
class PointCloud {
 public:
  explicit PointCloud(Points points, std::optional<int> label = std::nullopt);

  const Points& points() const noexcept { return points_; }
  Eigen::Index size() const noexcept { return points_.rows(); }
  std::optional<int> label() const noexcept { return label_; }

  /// Same label, new coordinates.
  PointCloud with_points(Points points) const { return PointCloud(std::move(points), label_); }
  PointCloud with_label(std::optional<int> label) const { return PointCloud(points_, label); }

  /// Copy translated so the coordinate mean is zero.
  PointCloud centered() const;

 private:
  Points points_;
  std::optional<int> label_;
};

enum class ShapeFamily : int { kSphere = 0, kCube, kCylinder, kCone, kTorus, kPlane, kHelix, kCross };
inline constexpr int kNumFamilies = 8;

struct ShapeSpec {
  ShapeFamily family = ShapeFamily::kSphere;
  int n_points = 1024;
};

enum class CorruptionKind : int {
  kUniform = 0,
  kGaussian,
  kBackground,
  kImpulse,
  kUpsampling,
  kShear,
  kRotation,
  kCutout,
  kDensityDec,
  kDistortion,
};
inline constexpr int kNumCorruptions = 10;

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussian;
  double severity = 0.0;
  std::uint64_t seed = 0;
};

std::string_view to_string(ShapeFamily family);
std::string_view to_string(CorruptionKind kind);
/// Throws UsageError on unknown names.
ShapeFamily parse_family(std::string_view name);
CorruptionKind parse_corruption(std::string_view name);

std::array<ShapeFamily, kNumFamilies> all_families();
std::array<CorruptionKind, kNumCorruptions> all_corruptions();

/// Severity used by the synthetic benchmark for each kind.
double default_severity(CorruptionKind kind);

/// Reads an ASCII XYZ file (three reals per nonempty line).
PointCloud load_xyz(const std::filesystem::path& path);
/// Writes 17 significant digits per coordinate, LF endings, no header.
void save_xyz(const PointCloud& cloud, const std::filesystem::path& path);

/// Deterministic sample of a parametric shape, centered on the origin by
/// construction and scaled to unit max radius. Label is the family index.
PointCloud synth_shape(const ShapeSpec& spec, std::uint64_t seed);

/// Chair-like composite (seat, back rest, four legs) sampled on box
/// surfaces, mean-centred and scaled to unit max radius. Unlabelled.
PointCloud synth_chair(Eigen::Index n_points, std::uint64_t seed);

/// Applies one corruption. The label is preserved; only background,
/// upsampling, cutout and density_dec change the point count.
///
/// Severity scales (r = max radius about the centroid):
///   uniform      per-axis noise U(-s, s)
///   gaussian     per-axis noise N(0, s^2)
///   background   round(s*N) points uniform in [-2r, 2r]^3 with norm >= 1.5r
///   impulse      round(s*N) points pushed by +-0.1r per axis
///   upsampling   round(s*N) extra points, jittered copies (+-0.05r)
///   shear        off-diagonal shear coefficients U(-s, s)
///   rotation     rotation by s radians about a random axis
///   cutout       removes the round(s*N) nearest points of one random seed
///   density_dec  in 4 patches of 0.1N points each, drops points w.p. s
///   distortion   smooth sinusoidal warp with amplitude s*r
PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec);

/// Deterministic 64-bit seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace gsdtta

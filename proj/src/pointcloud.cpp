#include "gsdtta/pointcloud.hpp"

#include "gsdtta/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace gsdtta {

namespace {

constexpr std::array<std::string_view, kNumFamilies> kFamilyNames = {
    "sphere", "cube", "cylinder", "cone", "torus", "plane", "helix", "cross"};

constexpr std::array<std::string_view, kNumCorruptions> kCorruptionNames = {
    "uniform", "gaussian", "background", "impulse", "upsampling",
    "shear", "rotation", "cutout", "density_dec", "distortion"};

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::RowVector3d random_unit(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVector3d v;
  do {
    v = Eigen::RowVector3d(normal(rng), normal(rng), normal(rng));
  } while (v.squaredNorm() < 1e-24);
  return v / v.norm();
}

double max_radius(const Points& p, const Eigen::RowVector3d& center) {
  return (p.rowwise() - center).rowwise().norm().maxCoeff();
}

Points scale_to_unit(Points p) {
  const double r = p.rowwise().norm().maxCoeff();
  if (r > 0.0) p /= r;
  return p;
}

Points sample_box_surface(Rng& rng, int n, const Eigen::Vector3d& half) {
  // Face pairs normal to x, y, z weighted by area.
  const std::array<double, 3> area = {half.y() * half.z(), half.x() * half.z(), half.x() * half.y()};
  std::discrete_distribution<int> face(area.begin(), area.end());
  Points p(n, 3);
  for (int i = 0; i < n; ++i) {
    const int axis = face(rng);
    Eigen::RowVector3d q;
    for (int a = 0; a < 3; ++a) q(a) = uniform(rng, -half(a), half(a));
    q(axis) = (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * half(axis);
    p.row(i) = q;
  }
  return p;
}

Points sample_family(ShapeFamily family, int n, Rng& rng) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  Points p(n, 3);
  switch (family) {
    case ShapeFamily::kSphere: {
      for (int i = 0; i < n; ++i) p.row(i) = random_unit(rng);
      return p;
    }
    case ShapeFamily::kCube: {
      const Eigen::Vector3d half(uniform(rng, 0.8, 1.2), uniform(rng, 0.8, 1.2), uniform(rng, 0.8, 1.2));
      return sample_box_surface(rng, n, half);
    }
    case ShapeFamily::kCylinder: {
      const double r = uniform(rng, 0.35, 0.55);
      const double h = uniform(rng, 1.6, 2.4);
      const double lateral = kTwoPi * r * h;
      const double caps = kTwoPi * r * r;
      for (int i = 0; i < n; ++i) {
        const double t = uniform(rng, 0.0, kTwoPi);
        if (uniform(rng, 0.0, lateral + caps) < lateral) {
          p.row(i) = Eigen::RowVector3d(r * std::cos(t), r * std::sin(t), uniform(rng, -h / 2, h / 2));
        } else {
          const double rho = r * std::sqrt(uniform(rng, 0.0, 1.0));
          const double z = uniform(rng, 0.0, 1.0) < 0.5 ? -h / 2 : h / 2;
          p.row(i) = Eigen::RowVector3d(rho * std::cos(t), rho * std::sin(t), z);
        }
      }
      return p;
    }
    case ShapeFamily::kCone: {
      const double radius = uniform(rng, 0.6, 0.9);
      const double height = uniform(rng, 1.4, 2.0);
      const double slant = std::hypot(radius, height);
      const double lateral = std::numbers::pi * radius * slant;
      const double base = std::numbers::pi * radius * radius;
      for (int i = 0; i < n; ++i) {
        const double t = uniform(rng, 0.0, kTwoPi);
        if (uniform(rng, 0.0, lateral + base) < lateral) {
          // Fraction of the way from apex to base; sqrt gives uniform area.
          const double f = std::sqrt(uniform(rng, 0.0, 1.0));
          p.row(i) = Eigen::RowVector3d(f * radius * std::cos(t), f * radius * std::sin(t),
                                        height / 2 - f * height);
        } else {
          const double rho = radius * std::sqrt(uniform(rng, 0.0, 1.0));
          p.row(i) = Eigen::RowVector3d(rho * std::cos(t), rho * std::sin(t), -height / 2);
        }
      }
      return p;
    }
    case ShapeFamily::kTorus: {
      const double big = 1.0;
      const double small = uniform(rng, 0.25, 0.4);
      for (int i = 0; i < n;) {
        const double theta = uniform(rng, 0.0, kTwoPi);
        const double phi = uniform(rng, 0.0, kTwoPi);
        if (uniform(rng, 0.0, big + small) > big + small * std::cos(phi)) continue;
        const double ring = big + small * std::cos(phi);
        p.row(i++) = Eigen::RowVector3d(ring * std::cos(theta), ring * std::sin(theta), small * std::sin(phi));
      }
      return p;
    }
    case ShapeFamily::kPlane: {
      const double a = uniform(rng, 0.8, 1.2);
      const double b = uniform(rng, 0.8, 1.2);
      for (int i = 0; i < n; ++i) p.row(i) = Eigen::RowVector3d(uniform(rng, -a, a), uniform(rng, -b, b), 0.0);
      return p;
    }
    case ShapeFamily::kHelix: {
      const double turns = uniform(rng, 2.5, 3.5);
      const double radius = 0.5;
      const double tube = 0.04;
      for (int i = 0; i < n; ++i) {
        const double t = uniform(rng, 0.0, 1.0);
        const double angle = kTwoPi * turns * t;
        const double psi = uniform(rng, 0.0, kTwoPi);
        const double ring = radius + tube * std::cos(psi);
        p.row(i) = Eigen::RowVector3d(ring * std::cos(angle), ring * std::sin(angle), 2.0 * t - 1.0 + tube * std::sin(psi));
      }
      return p;
    }
    case ShapeFamily::kCross: {
      const double width = uniform(rng, 0.12, 0.2);
      const double thick = uniform(rng, 0.1, 0.16);
      for (int i = 0; i < n; ++i) {
        const double along = uniform(rng, -1.0, 1.0);
        const double across = uniform(rng, -width, width);
        const double z = uniform(rng, -thick, thick);
        p.row(i) = uniform(rng, 0.0, 1.0) < 0.5 ? Eigen::RowVector3d(along, across, z)
                                                 : Eigen::RowVector3d(across, along, z);
      }
      return p;
    }
  }
  throw UsageError("unknown shape family");
}

// Indices of the `count` points nearest to `seed_index` (including itself),
// ties broken by index.
std::vector<Eigen::Index> nearest_indices(const Points& p, Eigen::Index seed_index, Eigen::Index count) {
  const Eigen::Index n = p.rows();
  std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) d[j] = {(p.row(j) - p.row(seed_index)).squaredNorm(), j};
  count = std::min(count, n);
  std::partial_sort(d.begin(), d.begin() + count, d.end());
  std::vector<Eigen::Index> out(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) out[i] = d[i].second;
  return out;
}

Points keep_rows(const Points& p, const std::vector<bool>& drop) {
  const auto kept = static_cast<Eigen::Index>(std::count(drop.begin(), drop.end(), false));
  Points out(kept, 3);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    if (!drop[i]) out.row(r++) = p.row(i);
  return out;
}

Eigen::Index severity_count(double severity, Eigen::Index n) {
  return static_cast<Eigen::Index>(std::llround(severity * static_cast<double>(n)));
}

}  // namespace

PointCloud::PointCloud(Points points, std::optional<int> label) : points_(std::move(points)), label_(label) {
  if (points_.rows() < kMinPoints)
    throw UsageError("point cloud has fewer than 4 points (got " + std::to_string(points_.rows()) + ")");
  if (!points_.allFinite()) throw NumericError("point cloud has non-finite coordinates");
}

PointCloud PointCloud::centered() const {
  const Eigen::RowVector3d mean = points_.colwise().mean();
  return with_points(points_.rowwise() - mean);
}

std::string_view to_string(ShapeFamily family) { return kFamilyNames.at(static_cast<std::size_t>(family)); }
std::string_view to_string(CorruptionKind kind) { return kCorruptionNames.at(static_cast<std::size_t>(kind)); }

ShapeFamily parse_family(std::string_view name) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
    if (kFamilyNames[i] == name) return static_cast<ShapeFamily>(i);
  throw UsageError("unknown shape family '" + std::string(name) + "'");
}

CorruptionKind parse_corruption(std::string_view name) {
  for (std::size_t i = 0; i < kCorruptionNames.size(); ++i)
    if (kCorruptionNames[i] == name) return static_cast<CorruptionKind>(i);
  throw UsageError("unknown corruption kind '" + std::string(name) + "'");
}

std::array<ShapeFamily, kNumFamilies> all_families() {
  std::array<ShapeFamily, kNumFamilies> out{};
  for (int i = 0; i < kNumFamilies; ++i) out[i] = static_cast<ShapeFamily>(i);
  return out;
}

std::array<CorruptionKind, kNumCorruptions> all_corruptions() {
  std::array<CorruptionKind, kNumCorruptions> out{};
  for (int i = 0; i < kNumCorruptions; ++i) out[i] = static_cast<CorruptionKind>(i);
  return out;
}

double default_severity(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kUniform: return 0.24;
    case CorruptionKind::kGaussian: return 0.1;
    case CorruptionKind::kBackground: return 0.002;
    case CorruptionKind::kImpulse: return 0.1;
    case CorruptionKind::kUpsampling: return 0.5;
    case CorruptionKind::kShear: return 0.5;
    case CorruptionKind::kRotation: return 0.45;
    case CorruptionKind::kCutout: return 0.5;
    case CorruptionKind::kDensityDec: return 0.75;
    case CorruptionKind::kDistortion: return 0.25;
  }
  return 0.0;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2) + b * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* it = line.data();
    const char* end = line.data() + line.size();
    auto skip_ws = [&] {
      while (it != end && (*it == ' ' || *it == '\t')) ++it;
    };
    skip_ws();
    if (it == end) continue;
    for (int axis = 0; axis < 3; ++axis) {
      skip_ws();
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(it, end, v);
      if (ec != std::errc() || (ptr != end && *ptr != ' ' && *ptr != '\t'))
        throw ParseError(path.string(), line_no, "expected 3 reals, got '" + line + "'");
      values.push_back(v);
      it = ptr;
    }
    skip_ws();
    if (it != end) throw ParseError(path.string(), line_no, "trailing data in '" + line + "'");
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  const auto n = static_cast<Eigen::Index>(values.size() / 3);
  if (n < kMinPoints) throw IoError(path.string() + ": fewer than 4 points");
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) p(i, a) = values[static_cast<std::size_t>(3 * i + a)];
  return PointCloud(std::move(p));
}

void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(cloud.size()) * 72);
  char buf[40];
  const Points& p = cloud.points();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const auto res = std::to_chars(buf, buf + sizeof buf, p(i, a), std::chars_format::general, 17);
      out.append(buf, res.ptr);
      out.push_back(a == 2 ? '\n' : ' ');
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failure on " + path.string());
}

PointCloud synth_shape(const ShapeSpec& spec, std::uint64_t seed) {
  if (spec.n_points < 64) throw UsageError("synth_shape needs at least 64 points");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(spec.family)));
  Points p = scale_to_unit(sample_family(spec.family, spec.n_points, rng));
  return PointCloud(std::move(p), static_cast<int>(spec.family));
}

PointCloud synth_chair(Eigen::Index n_points, std::uint64_t seed) {
  if (n_points < 64) throw UsageError("synth_chair needs at least 64 points");
  Rng rng(mix_seed(seed, 0x636861697275ULL));
  // Seat, back rest and four legs as box surfaces, points split by area.
  struct Part {
    Eigen::Vector3d half, center;
  };
  const double leg = 0.04;
  const std::array<Part, 6> parts = {{
      {{0.40, 0.05, 0.40}, {0.0, 0.0, 0.0}},
      {{0.40, 0.40, 0.04}, {0.0, 0.45, -0.36}},
      {{leg, 0.35, leg}, {-0.34, -0.40, -0.34}},
      {{leg, 0.35, leg}, {0.34, -0.40, -0.34}},
      {{leg, 0.35, leg}, {-0.34, -0.40, 0.34}},
      {{leg, 0.35, leg}, {0.34, -0.40, 0.34}},
  }};
  std::array<double, 6> area{};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& h = parts[i].half;
    area[i] = h.x() * h.y() + h.y() * h.z() + h.x() * h.z();
  }
  std::discrete_distribution<int> pick(area.begin(), area.end());
  std::array<int, 6> counts{};
  for (Eigen::Index i = 0; i < n_points; ++i) ++counts[static_cast<std::size_t>(pick(rng))];
  Points p(n_points, 3);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (counts[i] == 0) continue;
    Points part = sample_box_surface(rng, counts[i], parts[i].half);
    part.rowwise() += parts[i].center.transpose();
    p.middleRows(row, counts[i]) = part;
    row += counts[i];
  }
  p.rowwise() -= p.colwise().mean();
  return PointCloud(scale_to_unit(std::move(p)));
}

// Occlusion and LiDAR corruptions need a scene and sensor model and are not
// provided; cutout (one removed kNN ball) stands in for structural removal.
PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec) {
  if (!(spec.severity > 0.0) || !std::isfinite(spec.severity))
    throw UsageError("corruption severity must be positive and finite");
  Rng rng(mix_seed(spec.seed, 0xc0ffee + static_cast<std::uint64_t>(spec.kind)));
  const Points& src = cloud.points();
  const Eigen::Index n = src.rows();
  const Eigen::RowVector3d center = src.colwise().mean();
  const double r = max_radius(src, center);
  const double s = spec.severity;
  Points p = src;

  switch (spec.kind) {
    case CorruptionKind::kUniform: {
      for (Eigen::Index i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) p(i, a) += uniform(rng, -s, s);
      break;
    }
    case CorruptionKind::kGaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) p(i, a) += s * normal(rng);
      break;
    }
    case CorruptionKind::kBackground: {
      const Eigen::Index count = severity_count(s, n);
      p.conservativeResize(n + count, 3);
      for (Eigen::Index i = 0; i < count;) {
        const Eigen::RowVector3d q(uniform(rng, -2 * r, 2 * r), uniform(rng, -2 * r, 2 * r), uniform(rng, -2 * r, 2 * r));
        if (q.norm() < 1.5 * r) continue;
        p.row(n + i++) = center + q;
      }
      break;
    }
    case CorruptionKind::kImpulse: {
      const Eigen::Index count = std::min(severity_count(s, n), n);
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (Eigen::Index t = 0; t < count; ++t)
        for (int a = 0; a < 3; ++a) p(idx[t], a) += (uniform(rng, 0.0, 1.0) < 0.5 ? -0.1 : 0.1) * r;
      break;
    }
    case CorruptionKind::kUpsampling: {
      const Eigen::Index count = severity_count(s, n);
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      p.conservativeResize(n + count, 3);
      for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::Index j = pick(rng);
        Eigen::RowVector3d q = src.row(j);
        for (int a = 0; a < 3; ++a) q(a) += uniform(rng, -0.05 * r, 0.05 * r);
        p.row(n + i) = q;
      }
      break;
    }
    case CorruptionKind::kShear: {
      Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if (a != b) m(a, b) = uniform(rng, -s, s);
      p = ((src.rowwise() - center) * m.transpose()).rowwise() + center;
      break;
    }
    case CorruptionKind::kRotation: {
      const Eigen::Vector3d axis = random_unit(rng).transpose();
      const Eigen::Matrix3d rot = Eigen::AngleAxisd(s, axis).toRotationMatrix();
      p = ((src.rowwise() - center) * rot.transpose()).rowwise() + center;
      break;
    }
    case CorruptionKind::kCutout: {
      const Eigen::Index count = std::min(severity_count(s, n), n - kMinPoints);
      const Eigen::Index seed_index = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
      std::vector<bool> drop(static_cast<std::size_t>(n), false);
      for (Eigen::Index j : nearest_indices(src, seed_index, count)) drop[j] = true;
      p = keep_rows(src, drop);
      break;
    }
    case CorruptionKind::kDensityDec: {
      constexpr int kPatches = 4;
      const Eigen::Index patch = std::max<Eigen::Index>(1, n / 10);
      std::vector<bool> drop(static_cast<std::size_t>(n), false);
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      for (int t = 0; t < kPatches; ++t)
        for (Eigen::Index j : nearest_indices(src, pick(rng), patch))
          if (uniform(rng, 0.0, 1.0) < s) drop[j] = true;
      // Always leave a valid cloud.
      for (Eigen::Index j = 0; std::count(drop.begin(), drop.end(), false) < kMinPoints; ++j) drop[j] = false;
      p = keep_rows(src, drop);
      break;
    }
    case CorruptionKind::kDistortion: {
      const double omega = std::numbers::pi / r;
      const Eigen::RowVector3d phase(uniform(rng, 0.0, 2 * std::numbers::pi), uniform(rng, 0.0, 2 * std::numbers::pi),
                                     uniform(rng, 0.0, 2 * std::numbers::pi));
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVector3d q = src.row(i) - center;
        p(i, 0) += s * r * std::sin(omega * q(1) + phase(0));
        p(i, 1) += s * r * std::sin(omega * q(2) + phase(1));
        p(i, 2) += s * r * std::sin(omega * q(0) + phase(2));
      }
      break;
    }
  }
  return cloud.with_points(std::move(p));
}

}  // namespace gsdtta

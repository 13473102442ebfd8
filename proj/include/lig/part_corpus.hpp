#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lig/binary_io.hpp"
#include "lig/common.hpp"
#include "lig/geometry.hpp"

namespace lig {

/// Truncation band of the part TSDF, in unit-cube units.
inline constexpr double kTsdfTruncation = 3.0 / 255.0;

/// Dense SDF samples at voxel centers: value(i,j,k) = sdf(origin + (ijk + 0.5) * voxel_size).
struct SdfGrid {
  int resolution = 0;
  Point3 origin = Point3::Zero();
  double voxel_size = 0;
  std::vector<double> values;

  double at(int i, int j, int k) const {
    return values[(static_cast<std::size_t>(k) * resolution + j) * resolution + i];
  }
  Point3 voxel_center(int i, int j, int k) const {
    return origin + voxel_size * Point3(i + 0.5, j + 0.5, k + 0.5);
  }
};

/// Samples the shape on a resolution^3 grid spanning the unit cube.
inline SdfGrid build_sdf_grid(const AnalyticShape& shape, int resolution) {
  if (resolution < 2) throw InvalidArgument("SDF grid resolution must be >= 2");
  SdfGrid g;
  g.resolution = resolution;
  g.voxel_size = 1.0 / resolution;
  g.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  std::size_t n = 0;
  for (int k = 0; k < resolution; ++k)
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i) g.values[n++] = shape.sdf(g.voxel_center(i, j, k));
  return g;
}

/// Clamps to +-3/255 and maps affinely to [0,1]: deep interior -> 0, surface -> 0.5, deep exterior -> 1.
inline double truncate_normalize(double v) {
  const double c = std::clamp(v, -kTsdfTruncation, kTsdfTruncation);
  return (c + kTsdfTruncation) / (2 * kTsdfTruncation);
}

inline std::vector<float> truncate_normalize(const SdfGrid& grid) {
  std::vector<float> out(grid.values.size());
  std::transform(grid.values.begin(), grid.values.end(), out.begin(),
                 [](double v) { return static_cast<float>(truncate_normalize(v)); });
  return out;
}

/// One window of the TSDF grid.
struct PartCrop {
  int window = 0;
  std::array<int, 3> offset{};  // voxel offset of the window's first voxel
  std::vector<float> tsdf;      // window^3 values in [0,1], x fastest

  /// World-space box covered by the window, given the grid it was cut from.
  std::pair<Point3, Point3> bounds(const SdfGrid& grid) const {
    const Point3 lo = grid.origin + grid.voxel_size * Point3(offset[0], offset[1], offset[2]);
    return {lo, lo + Point3::Constant(grid.voxel_size * window)};
  }
};

inline std::vector<std::array<int, 3>> crop_offsets(int resolution, int window, int stride) {
  std::vector<std::array<int, 3>> out;
  for (int c = 0; c + window <= resolution; c += stride)
    for (int b = 0; b + window <= resolution; b += stride)
      for (int a = 0; a + window <= resolution; a += stride) out.push_back({a, b, c});
  return out;
}

inline bool window_near_surface(const SdfGrid& grid, const std::array<int, 3>& off, int window) {
  for (int k = 0; k < window; ++k)
    for (int j = 0; j < window; ++j)
      for (int i = 0; i < window; ++i)
        if (std::abs(grid.at(off[0] + i, off[1] + j, off[2] + k)) < kTsdfTruncation) return true;
  return false;
}

inline PartCrop cut_crop(const SdfGrid& grid, const std::array<int, 3>& off, int window) {
  PartCrop crop;
  crop.window = window;
  crop.offset = off;
  crop.tsdf.reserve(static_cast<std::size_t>(window) * window * window);
  for (int k = 0; k < window; ++k)
    for (int j = 0; j < window; ++j)
      for (int i = 0; i < window; ++i)
        crop.tsdf.push_back(static_cast<float>(truncate_normalize(grid.at(off[0] + i, off[1] + j, off[2] + k))));
  return crop;
}

/// All window^3 crops on the stride lattice with at least one voxel within the truncation band.
inline std::vector<PartCrop> extract_parts(const SdfGrid& grid, int window = 32, int stride = 16) {
  require(window >= 1 && stride >= 1, "window and stride must be positive");
  require(grid.resolution >= window, "grid resolution smaller than part window");
  std::vector<PartCrop> parts;
  for (const auto& off : crop_offsets(grid.resolution, window, stride))
    if (window_near_surface(grid, off, window)) parts.push_back(cut_crop(grid, off, window));
  return parts;
}

// ---------------------------------------------------------------------------
// Signed point samples

/// A point with a binary occupancy label (1 = interior, 0 = exterior).
struct SignedSample {
  Point3 position = Point3::Zero();
  std::uint8_t label = 0;
};

inline std::uint8_t label_of_sdf(double sdf) { return sdf < 0 ? 1 : 0; }

struct SignedSamplingOptions {
  double sigma = 3.0 / 64.0;      // offset std along the gradient, in field units
  double uniform_fraction = 0.0;  // share of samples drawn uniformly in the region
  int max_attempts_per_sample = 64;
};

/// Near-surface samples for an SDF field inside the box [lo, hi]: a random point is projected onto
/// the zero set along the gradient, then offset by d ~ N(0, sigma) along the unit gradient. Labels
/// come from the field sign at the final position. A uniform_fraction share is drawn uniformly.
template <class Field>
std::vector<SignedSample> sample_signed_points(const Field& sdf, const Point3& lo, const Point3& hi, std::size_t n,
                                               const SignedSamplingOptions& opt, std::uint64_t seed) {
  require(n >= 1, "sample count must be >= 1");
  require((hi.array() > lo.array()).all(), "sampling region is empty");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> offset(0.0, opt.sigma);
  const Vec3 ext = hi - lo;
  auto draw_uniform = [&] { return Point3(lo + Vec3(uni(rng), uni(rng), uni(rng)).cwiseProduct(ext)); };
  auto inside = [&](const Point3& p) { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); };
  const double h = 1e-6 * ext.maxCoeff();
  const double surf_tol = 1e-7 * ext.maxCoeff();

  std::vector<SignedSample> out;
  out.reserve(n);
  const auto n_uniform = static_cast<std::size_t>(std::llround(opt.uniform_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n_uniform; ++i) {
    const Point3 p = draw_uniform();
    out.push_back({p, label_of_sdf(sdf(p))});
  }
  std::size_t failures = 0;
  const std::size_t max_failures = static_cast<std::size_t>(opt.max_attempts_per_sample) * n;
  while (out.size() < n) {
    Point3 p = draw_uniform();
    bool ok = false;
    for (int it = 0; it < 8; ++it) {
      const double v = sdf(p);
      const Vec3 g = field_gradient(sdf, p, h);
      const double gn2 = g.squaredNorm();
      if (gn2 < 1e-12) break;
      p -= v * g / gn2;
      if (std::abs(sdf(p)) <= surf_tol) {
        ok = true;
        break;
      }
    }
    if (ok) {
      const Vec3 g = field_gradient(sdf, p, h);
      if (g.norm() > 1e-6) {
        const Point3 q = p + offset(rng) * g.normalized();
        if (inside(q)) {
          out.push_back({q, label_of_sdf(sdf(q))});
          continue;
        }
      }
    }
    if (++failures > max_failures) {
      // Surface barely touches the region: fill with uniform samples.
      const Point3 q = draw_uniform();
      out.push_back({q, label_of_sdf(sdf(q))});
    }
  }
  return out;
}

/// Maps world positions in [lo, hi] to the local cube [-1, 1]^3.
inline std::vector<SignedSample> to_local_frame(std::vector<SignedSample> samples, const Point3& lo, const Point3& hi) {
  const Point3 center = 0.5 * (lo + hi);
  const Vec3 half = 0.5 * (hi - lo);
  for (auto& s : samples) s.position = (s.position - center).cwiseQuotient(half);
  return samples;
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusPart {
  PartCrop crop;
  std::vector<SignedSample> samples;  // local frame [-1,1]^3
};

struct CorpusConfig {
  int resolution = 64;
  int window = 32;
  int stride = 16;
  std::size_t samples_per_part = 2048;
  double sigma_voxels = 3.0;          // sigma_train in part-grid voxels
  double uniform_fraction = 0.125;
  bool include_empty = true;          // keep some surface-free windows so empty space is learned
  double empty_probability = 1e-3;
};

/// Builds the crops and samples for one unit-cube shape.
inline std::vector<CorpusPart> make_shape_parts(const AnalyticShape& shape, const CorpusConfig& cfg, std::uint64_t seed) {
  const SdfGrid grid = build_sdf_grid(shape, cfg.resolution);
  Rng rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<CorpusPart> parts;
  const auto field = [&shape](const Point3& p) { return shape.sdf(p); };
  std::uint64_t stream = 1;
  for (const auto& off : crop_offsets(grid.resolution, cfg.window, cfg.stride)) {
    const bool near = window_near_surface(grid, off, cfg.window);
    const bool keep_empty = !near && cfg.include_empty && uni(rng) < cfg.empty_probability;
    if (!near && !keep_empty) continue;
    CorpusPart part;
    part.crop = cut_crop(grid, off, cfg.window);
    const auto [lo, hi] = part.crop.bounds(grid);
    SignedSamplingOptions opt;
    opt.sigma = cfg.sigma_voxels * grid.voxel_size;
    opt.uniform_fraction = near ? cfg.uniform_fraction : 1.0;
    part.samples = to_local_frame(
        sample_signed_points(field, lo, hi, cfg.samples_per_part, opt, mix_seed(seed, stream++)), lo, hi);
    parts.push_back(std::move(part));
  }
  return parts;
}

/// Random unit-cube training shape: sphere, box, slanted cut box, wedge, or a small union.
inline AnalyticShape random_training_shape(Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double a, double b) { return a + (b - a) * uni(rng); };
  auto rand_dir = [&] {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 d;
    do d = Vec3(g(rng), g(rng), g(rng));
    while (d.norm() < 1e-6);
    return Vec3(d.normalized());
  };
  auto sphere = [&] {
    const double r = range(0.12, 0.38);
    const Point3 c = Point3(range(0.1 + r, 0.9 - r), range(0.1 + r, 0.9 - r), range(0.1 + r, 0.9 - r));
    return AnalyticShape::sphere(c, r);
  };
  auto box = [&] {
    const Vec3 h(range(0.08, 0.38), range(0.08, 0.38), range(0.08, 0.38));
    Point3 c;
    for (int a = 0; a < 3; ++a) c[a] = range(0.1 + h[a], 0.9 - h[a]);
    return AnalyticShape::box(c, h);
  };
  const int kind = static_cast<int>(uni(rng) * 5.0);
  switch (kind) {
    case 0:
      return sphere();
    case 1:
      return box();
    case 2: {
      // Slab of the margin cube cut by a random plane.
      const AnalyticShape bounds = AnalyticShape::box(Point3::Constant(0.5), Vec3::Constant(0.4));
      const Point3 through(range(0.35, 0.65), range(0.35, 0.65), range(0.35, 0.65));
      return AnalyticShape::intersect({bounds, AnalyticShape::plane(through, rand_dir())});
    }
    case 3: {
      // Wedge: two planes give a sharp edge.
      const AnalyticShape bounds = AnalyticShape::box(Point3::Constant(0.5), Vec3::Constant(0.4));
      const Point3 through(range(0.4, 0.6), range(0.4, 0.6), range(0.4, 0.6));
      return AnalyticShape::intersect(
          {bounds, AnalyticShape::plane(through, rand_dir()), AnalyticShape::plane(through, rand_dir())});
    }
    default: {
      std::vector<AnalyticShape> kids;
      const int count = 2 + static_cast<int>(uni(rng) * 2.0);
      for (int i = 0; i < count; ++i) kids.push_back(uni(rng) < 0.5 ? sphere() : box());
      return AnalyticShape::unite(std::move(kids));
    }
  }
}

/// Corpus container holding every part of every shape: "LIGC", u32 version, u32 window, u32 part count, then per
/// part: i32[3] offset, window^3 f32 tsdf, u32 sample count, per sample f32[3] local position + u8 label.
inline constexpr std::uint32_t kCorpusFileVersion = 1;

inline void save_corpus_parts(const std::vector<CorpusPart>& parts, int window, const std::string& path) {
  auto os = bin::open_out(path);
  bin::put_magic(os, "LIGC");
  bin::put_u32(os, kCorpusFileVersion);
  bin::put_u32(os, static_cast<std::uint32_t>(window));
  bin::put_u32(os, static_cast<std::uint32_t>(parts.size()));
  for (const auto& p : parts) {
    for (int a = 0; a < 3; ++a) bin::put_i32(os, p.crop.offset[a]);
    for (float v : p.crop.tsdf) bin::put_f32(os, v);
    bin::put_u32(os, static_cast<std::uint32_t>(p.samples.size()));
    for (const auto& s : p.samples) {
      for (int a = 0; a < 3; ++a) bin::put_f32(os, static_cast<float>(s.position[a]));
      bin::put_u8(os, s.label);
    }
  }
  bin::finish(os, path);
}

inline std::vector<CorpusPart> load_corpus_parts(const std::string& path) {
  auto is = bin::open_in(path);
  bin::Reader rd(is, path);
  rd.expect_magic("LIGC");
  const auto version = rd.u32();
  if (version != kCorpusFileVersion) throw FormatError(path + ": unsupported corpus version " + std::to_string(version));
  const auto window = rd.u32();
  const auto count = rd.u32();
  if (window == 0 || window > 256) throw FormatError(path + ": implausible window");
  std::vector<CorpusPart> parts(count);
  for (auto& p : parts) {
    p.crop.window = static_cast<int>(window);
    for (int a = 0; a < 3; ++a) p.crop.offset[a] = rd.i32();
    p.crop.tsdf.resize(static_cast<std::size_t>(window) * window * window);
    for (float& v : p.crop.tsdf) v = rd.f32();
    const auto ns = rd.u32();
    p.samples.resize(ns);
    for (auto& s : p.samples) {
      for (int a = 0; a < 3; ++a) s.position[a] = rd.f32();
      s.label = rd.u8();
      if (s.label > 1) throw FormatError(path + ": bad sample label");
    }
  }
  return parts;
}

}  // namespace lig

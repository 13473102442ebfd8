#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lig/binary_io.hpp"
#include "lig/common.hpp"
#include "lig/decoder.hpp"

namespace lig {

/// Integer lattice coordinate of an overlapping cell.
struct CellIndex {
  std::int32_t i = 0, j = 0, k = 0;
  auto operator<=>(const CellIndex&) const = default;
  CellIndex operator+(const CellIndex& o) const { return {i + o.i, j + o.j, k + o.k}; }
};

struct CellIndexHash {
  std::size_t operator()(const CellIndex& c) const {
    std::uint64_t h = static_cast<std::uint32_t>(c.i);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c.j);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c.k);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Sparse lattice of latent codes. Cell centers sit at origin + index * (s/2); each cell spans a
/// cube of edge s around its center, so neighbours overlap by half the part scale.
class LatentGrid {
 public:
  static constexpr float kDefaultExteriorLogit = -10.0f;

  LatentGrid() = default;
  LatentGrid(const Point3& origin, double part_scale, int latent_dim, float exterior_logit = kDefaultExteriorLogit)
      : origin_(origin), part_scale_(part_scale), latent_dim_(latent_dim), exterior_logit_(exterior_logit) {
    require(part_scale > 0 && std::isfinite(part_scale), "part scale must be positive");
    require(latent_dim >= 1, "latent_dim must be >= 1");
    require(is_finite(origin), "grid origin must be finite");
  }

  const Point3& origin() const { return origin_; }
  double part_scale() const { return part_scale_; }
  double spacing() const { return 0.5 * part_scale_; }
  int latent_dim() const { return latent_dim_; }
  float exterior_logit() const { return exterior_logit_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  Point3 cell_center(const CellIndex& c) const { return origin_ + spacing() * Point3(c.i, c.j, c.k); }

  /// Slot of a stored cell, or -1.
  std::int32_t find(const CellIndex& c) const {
    auto it = slots_.find(c);
    return it == slots_.end() ? -1 : it->second;
  }

  /// Stores (or overwrites) a latent and returns its slot.
  std::int32_t set(const CellIndex& c, std::span<const float> latent) {
    if (static_cast<int>(latent.size()) != latent_dim_) throw InvalidArgument("latent length does not match grid latent_dim");
    auto [it, inserted] = slots_.emplace(c, static_cast<std::int32_t>(cells_.size()));
    if (inserted) {
      cells_.push_back(c);
      latents_.insert(latents_.end(), latent.begin(), latent.end());
    } else {
      std::copy(latent.begin(), latent.end(), latents_.begin() + static_cast<std::ptrdiff_t>(it->second) * latent_dim_);
    }
    return it->second;
  }

  const CellIndex& cell(std::size_t slot) const { return cells_[slot]; }
  const std::vector<CellIndex>& cells() const { return cells_; }

  std::span<float> latent(std::size_t slot) {
    return {latents_.data() + slot * static_cast<std::size_t>(latent_dim_), static_cast<std::size_t>(latent_dim_)};
  }
  std::span<const float> latent(std::size_t slot) const {
    return {latents_.data() + slot * static_cast<std::size_t>(latent_dim_), static_cast<std::size_t>(latent_dim_)};
  }
  /// All latents, slot-major.
  std::span<float> latent_data() { return latents_; }
  std::span<const float> latent_data() const { return latents_; }

  /// Slots ordered by cell index.
  std::vector<std::size_t> sorted_slots() const {
    std::vector<std::size_t> order(cells_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cells_[a] < cells_[b]; });
    return order;
  }

  /// Lattice cube containing x, as (lower corner index, fractional position in [0,1]^3).
  std::pair<CellIndex, Vec3> locate(const Point3& x) const {
    Vec3 u = (x - origin_) / spacing();
    // a position within rounding error of a lattice point lands exactly on it, so cell centers get weight 1
    for (int a = 0; a < 3; ++a) {
      const double r = std::round(u[a]);
      if (std::abs(u[a] - r) <= 8 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(r))) u[a] = r;
    }
    const Vec3 base = u.array().floor();
    CellIndex c{static_cast<std::int32_t>(base.x()), static_cast<std::int32_t>(base.y()),
                static_cast<std::int32_t>(base.z())};
    return {c, u - base};
  }

 private:
  Point3 origin_ = Point3::Zero();
  double part_scale_ = 1.0;
  int latent_dim_ = 1;
  float exterior_logit_ = kDefaultExteriorLogit;
  std::vector<CellIndex> cells_;
  std::vector<float> latents_;
  std::unordered_map<CellIndex, std::int32_t, CellIndexHash> slots_;
};

/// The 8 cells overlapping a position, their trilinear weights and local coordinates.
/// Corners are ordered lexicographically by cell index.
struct CellQuery {
  std::array<CellIndex, 8> cells{};
  std::array<double, 8> weights{};
  std::array<Vec3, 8> local{};
};

inline CellQuery cells_containing(const LatentGrid& grid, const Point3& x) {
  const auto [base, t] = grid.locate(x);
  CellQuery q;
  const double to_local = 2.0 / grid.part_scale();
  int c = 0;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < 2; ++dk, ++c) {
        q.cells[c] = base + CellIndex{di, dj, dk};
        q.weights[c] = (di ? t.x() : 1 - t.x()) * (dj ? t.y() : 1 - t.y()) * (dk ? t.z() : 1 - t.z());
        q.local[c] = to_local * (x - grid.cell_center(q.cells[c]));
      }
  return q;
}

// ---------------------------------------------------------------------------
// Blended evaluation

/// Non-zero-weight corners of one query, with slot -1 for cells that are not stored.
struct Stencil {
  struct Entry {
    std::int32_t slot = -1;
    double weight = 0;
    Eigen::Vector3f local = Eigen::Vector3f::Zero();
  };
  std::array<Entry, 8> entries{};
  int count = 0;
};

inline Stencil make_stencil(const LatentGrid& grid, const Point3& x) {
  const CellQuery q = cells_containing(grid, x);
  Stencil s;
  for (int c = 0; c < 8; ++c) {
    if (q.weights[c] == 0.0) continue;
    auto& e = s.entries[s.count++];
    e.slot = grid.find(q.cells[c]);
    e.weight = q.weights[c];
    e.local = q.local[c].cast<float>();
  }
  return s;
}

/// Batched Sum_j w_j * D(c_j, local_j) with missing cells replaced by the exterior logit.
class BlendEvaluator {
 public:
  /// Logits for the stencils; keeps what backward() needs.
  std::span<const double> forward(const LatentGrid& grid, const DecoderParams& params,
                                  std::span<const Stencil* const> stencils) {
    if (grid.latent_dim() != params.latent_dim())
      throw InvalidArgument("grid latent_dim " + std::to_string(grid.latent_dim()) + " does not match decoder latent_dim " +
                            std::to_string(params.latent_dim()));
    stencils_.assign(stencils.begin(), stencils.end());
    std::size_t pairs = 0;
    for (const Stencil* s : stencils_)
      for (int e = 0; e < s->count; ++e) pairs += s->entries[e].slot >= 0;
    cache_.input.resize(params.arch().input_dim(), static_cast<Eigen::Index>(pairs));
    Eigen::Index col = 0;
    for (const Stencil* s : stencils_)
      for (int e = 0; e < s->count; ++e)
        if (s->entries[e].slot >= 0)
          write_input_column(cache_.input, col++, grid.latent(static_cast<std::size_t>(s->entries[e].slot)),
                             s->entries[e].local);
    ::lig::forward(params, cache_);
    const auto D = cache_.logits();
    logits_.resize(stencils_.size());
    col = 0;
    const double ext = grid.exterior_logit();
    for (std::size_t i = 0; i < stencils_.size(); ++i) {
      const Stencil& s = *stencils_[i];
      double sum = 0;
      for (int e = 0; e < s.count; ++e) {
        const auto& en = s.entries[e];
        sum += en.weight * (en.slot >= 0 ? static_cast<double>(D[col++]) : ext);
      }
      logits_[i] = sum;
    }
    return logits_;
  }

  /// Accumulates d(loss)/d(latent) into grad (slot-major, grid.latent_data() layout), given
  /// d(loss)/d(logit) per stencil of the last forward().
  void backward(const LatentGrid& grid, const DecoderParams& params, std::span<const double> d_logits,
                std::span<float> grad) {
    require(d_logits.size() == stencils_.size(), "upstream gradient size mismatch");
    std::vector<float> dD(static_cast<std::size_t>(cache_.count()));
    std::size_t col = 0;
    for (std::size_t i = 0; i < stencils_.size(); ++i) {
      const Stencil& s = *stencils_[i];
      for (int e = 0; e < s.count; ++e)
        if (s.entries[e].slot >= 0) dD[col++] = static_cast<float>(s.entries[e].weight * d_logits[i]);
    }
    ::lig::backward(params, cache_, dD, &d_input_, nullptr);
    const int d = grid.latent_dim();
    col = 0;
    for (const Stencil* s : stencils_)
      for (int e = 0; e < s->count; ++e) {
        const auto slot = s->entries[e].slot;
        if (slot < 0) continue;
        float* g = grad.data() + static_cast<std::size_t>(slot) * static_cast<std::size_t>(d);
        const float* src = d_input_.col(static_cast<Eigen::Index>(col++)).data();
        for (int k = 0; k < d; ++k) g[k] += src[k];
      }
  }

 private:
  std::vector<const Stencil*> stencils_;
  DecoderCache cache_;
  Eigen::MatrixXf d_input_;
  std::vector<double> logits_;
};

/// Blended logit at x; positive means interior.
inline double query(const LatentGrid& grid, const DecoderParams& params, const Point3& x) {
  const Stencil s = make_stencil(grid, x);
  const Stencil* p = &s;
  BlendEvaluator ev;
  return ev.forward(grid, params, std::span<const Stencil* const>(&p, 1))[0];
}

/// Logits for many positions, evaluated in fixed-size chunks (results independent of thread count).
inline std::vector<double> query_batch(const LatentGrid& grid, const DecoderParams& params, std::span<const Point3> xs) {
  std::vector<double> out(xs.size());
  parallel_ranges(xs.size(), 4096, [&](std::size_t lo, std::size_t hi) {
    std::vector<Stencil> st(hi - lo);
    std::vector<const Stencil*> ptr(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      st[i - lo] = make_stencil(grid, xs[i]);
      ptr[i - lo] = &st[i - lo];
    }
    BlendEvaluator ev;
    const auto l = ev.forward(grid, params, ptr);
    std::copy(l.begin(), l.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
  });
  return out;
}

struct CellGradient {
  CellIndex cell;
  bool stored = false;
  Eigen::VectorXf d_latent;  // zero for missing or zero-weight cells
};

/// upstream * d(logit)/d(c_j) for the 8 overlapping cells of x, in CellQuery order.
inline std::array<CellGradient, 8> query_gradient(const LatentGrid& grid, const DecoderParams& params, const Point3& x,
                                                  double upstream = 1.0) {
  const CellQuery q = cells_containing(grid, x);
  std::array<CellGradient, 8> out;
  const int d = grid.latent_dim();
  for (int c = 0; c < 8; ++c) {
    out[c].cell = q.cells[c];
    out[c].stored = grid.find(q.cells[c]) >= 0;
    out[c].d_latent = Eigen::VectorXf::Zero(d);
  }
  const Stencil s = make_stencil(grid, x);
  const Stencil* p = &s;
  BlendEvaluator ev;
  ev.forward(grid, params, std::span<const Stencil* const>(&p, 1));
  std::vector<float> grad(grid.latent_data().size(), 0.0f);
  const double up[1] = {upstream};
  ev.backward(grid, params, up, grad);
  for (int c = 0; c < 8; ++c) {
    const auto slot = grid.find(q.cells[c]);
    if (slot < 0 || q.weights[c] == 0.0) continue;
    out[c].d_latent = Eigen::Map<const Eigen::VectorXf>(grad.data() + static_cast<std::size_t>(slot) * d, d);
  }
  return out;
}

/// Allocates the 8 enclosing cells of every point, latents ~ N(0, init_std^2). The origin is the
/// point bounding-box minimum minus one lattice spacing.
inline LatentGrid allocate_from_points(std::span<const Point3> points, double part_scale, int latent_dim,
                                       std::uint64_t seed, double init_std = 1e-2,
                                       float exterior_logit = LatentGrid::kDefaultExteriorLogit) {
  if (points.empty()) throw InvalidArgument("cannot allocate a latent grid from an empty point set");
  require(part_scale > 0, "part scale must be positive");
  Point3 lo = points[0];
  for (const Point3& p : points) {
    if (!is_finite(p)) throw InvalidArgument("non-finite input point");
    lo = lo.cwiseMin(p);
  }
  LatentGrid grid(lo - Point3::Constant(0.5 * part_scale), part_scale, latent_dim, exterior_logit);
  std::set<CellIndex> cells;
  for (const Point3& p : points) {
    const CellIndex base = grid.locate(p).first;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj)
        for (int dk = 0; dk < 2; ++dk) cells.insert(base + CellIndex{di, dj, dk});
  }
  Rng rng(seed);
  std::normal_distribution<float> g(0.0f, static_cast<float>(init_std));
  std::vector<float> latent(static_cast<std::size_t>(latent_dim));
  for (const CellIndex& c : cells) {
    for (float& v : latent) v = g(rng);
    grid.set(c, latent);
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Grid file: "LIGG", u32 version, f64 part scale, f64[3] origin, f64 exterior logit, u32 latent_dim,
// u64 cell count, then per cell (sorted by index) i32[3] index + latent_dim f32. Little-endian.

inline constexpr std::uint32_t kGridFileVersion = 1;

inline void save_grid(const LatentGrid& grid, std::ostream& os) {
  bin::put_magic(os, "LIGG");
  bin::put_u32(os, kGridFileVersion);
  bin::put_f64(os, grid.part_scale());
  for (int a = 0; a < 3; ++a) bin::put_f64(os, grid.origin()[a]);
  bin::put_f64(os, grid.exterior_logit());
  bin::put_u32(os, static_cast<std::uint32_t>(grid.latent_dim()));
  bin::put_u64(os, grid.size());
  for (std::size_t slot : grid.sorted_slots()) {
    const CellIndex& c = grid.cell(slot);
    bin::put_i32(os, c.i);
    bin::put_i32(os, c.j);
    bin::put_i32(os, c.k);
    for (float v : grid.latent(slot)) bin::put_f32(os, v);
  }
}

inline void save_grid(const LatentGrid& grid, const std::string& path) {
  auto os = bin::open_out(path);
  save_grid(grid, os);
  bin::finish(os, path);
}

inline LatentGrid load_grid(std::istream& is, const std::string& what = "grid", int expected_latent_dim = -1) {
  bin::Reader rd(is, what);
  rd.expect_magic("LIGG");
  const auto version = rd.u32();
  if (version != kGridFileVersion) throw FormatError(what + ": unsupported grid file version " + std::to_string(version));
  const double s = rd.f64();
  Point3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = rd.f64();
  const double ext = rd.f64();
  const auto d = rd.u32();
  const auto count = rd.u64();
  if (!(s > 0) || !std::isfinite(s) || !is_finite(origin) || d == 0 || d > (1u << 16))
    throw FormatError(what + ": implausible header");
  if (expected_latent_dim >= 0 && static_cast<int>(d) != expected_latent_dim)
    throw FormatError(what + ": latent_dim mismatch (grid has " + std::to_string(d) + ", decoder expects " +
                      std::to_string(expected_latent_dim) + ")");
  LatentGrid grid(origin, s, static_cast<int>(d), static_cast<float>(ext));
  std::vector<float> latent(d);
  for (std::uint64_t n = 0; n < count; ++n) {
    CellIndex c{rd.i32(), rd.i32(), rd.i32()};
    for (float& v : latent) v = rd.f32();
    if (grid.find(c) >= 0) throw FormatError(what + ": duplicate cell index");
    grid.set(c, latent);
  }
  return grid;
}

inline LatentGrid load_grid(const std::string& path, int expected_latent_dim = -1) {
  auto is = bin::open_in(path);
  return load_grid(is, path, expected_latent_dim);
}

/// Bitwise equality of geometry, index set and latents (slot order ignored).
inline bool grids_identical(const LatentGrid& a, const LatentGrid& b) {
  if (a.size() != b.size() || a.latent_dim() != b.latent_dim() || a.part_scale() != b.part_scale() ||
      a.origin() != b.origin() || a.exterior_logit() != b.exterior_logit())
    return false;
  for (std::size_t s = 0; s < a.size(); ++s) {
    const auto t = b.find(a.cell(s));
    if (t < 0) return false;
    const auto la = a.latent(s);
    const auto lb = b.latent(static_cast<std::size_t>(t));
    if (std::memcmp(la.data(), lb.data(), la.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace lig

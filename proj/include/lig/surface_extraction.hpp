#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>
#include <vector>

#include "lig/common.hpp"
#include "lig/decoder.hpp"
#include "lig/geometry.hpp"
#include "lig/grid_optimizer.hpp"
#include "lig/latent_grid.hpp"
#include "lig/mc_tables.hpp"

namespace lig {

/// Scalar values on a regular corner lattice, stored in sparse cubic blocks. Corners outside
/// every stored block read as the fill value.
class EvalLattice {
 public:
  static constexpr int kBlock = 16;
  using BlockKey = std::array<std::int32_t, 3>;

  EvalLattice() = default;
  EvalLattice(const Point3& origin, double voxel_size, std::array<std::int64_t, 3> corners, double fill)
      : origin_(origin), voxel_(voxel_size), corners_(corners), fill_(fill) {
    require(voxel_size > 0 && std::isfinite(voxel_size), "voxel size must be positive");
    for (auto c : corners) require(c >= 1, "lattice needs at least one corner per axis");
  }

  const Point3& origin() const { return origin_; }
  double voxel_size() const { return voxel_; }
  const std::array<std::int64_t, 3>& corners() const { return corners_; }
  double fill() const { return fill_; }

  Point3 position(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return origin_ + voxel_ * Point3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
  }

  bool in_range(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < corners_[0] && j < corners_[1] && k < corners_[2];
  }

  double value(std::int64_t i, std::int64_t j, std::int64_t k) const {
    if (!in_range(i, j, k)) return fill_;
    const BlockKey key{static_cast<std::int32_t>(i / kBlock), static_cast<std::int32_t>(j / kBlock),
                       static_cast<std::int32_t>(k / kBlock)};
    auto it = blocks_.find(key);
    if (it == blocks_.end()) return fill_;
    return it->second[local_index(i % kBlock, j % kBlock, k % kBlock)];
  }

  static std::size_t local_index(std::int64_t a, std::int64_t b, std::int64_t c) {
    return static_cast<std::size_t>((a * kBlock + b) * kBlock + c);
  }

  /// Block storage (created filled) for direct writes.
  std::vector<double>& block(const BlockKey& key) {
    auto it = blocks_.find(key);
    if (it == blocks_.end())
      it = blocks_.emplace(key, std::vector<double>(static_cast<std::size_t>(kBlock * kBlock * kBlock), fill_)).first;
    return it->second;
  }
  const std::map<BlockKey, std::vector<double>>& blocks() const { return blocks_; }

  std::size_t dense_corner_count() const {
    return static_cast<std::size_t>(corners_[0] * corners_[1] * corners_[2]);
  }

  /// Corners whose value came from an actual field evaluation.
  std::size_t evaluated_corners = 0;

 private:
  Point3 origin_ = Point3::Zero();
  double voxel_ = 1.0;
  std::array<std::int64_t, 3> corners_{1, 1, 1};
  double fill_ = 0.0;
  std::map<BlockKey, std::vector<double>> blocks_;
};

/// Dense lattice over [lo, hi] sampling an arbitrary field (every block stored).
inline EvalLattice sample_field(const Point3& lo, const Point3& hi, double voxel_size,
                                const std::function<double(const Point3&)>& field, double fill) {
  require(voxel_size > 0, "voxel size must be positive");
  std::array<std::int64_t, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / voxel_size)) + 1;
  EvalLattice lat(lo, voxel_size, n, fill);
  const int B = EvalLattice::kBlock;
  for (std::int32_t bi = 0; bi * B < n[0]; ++bi)
    for (std::int32_t bj = 0; bj * B < n[1]; ++bj)
      for (std::int32_t bk = 0; bk * B < n[2]; ++bk) {
        auto& blk = lat.block({bi, bj, bk});
        for (int a = 0; a < B; ++a)
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < B; ++c) {
              const std::int64_t i = bi * B + a, j = bj * B + b, k = bk * B + c;
              if (!lat.in_range(i, j, k)) continue;
              blk[EvalLattice::local_index(a, b, c)] = field(lat.position(i, j, k));
              ++lat.evaluated_corners;
            }
      }
  return lat;
}

/// Lattice of blended logits around the allocated cells of grid. Corners whose 8 overlapping
/// cells are all unallocated are left at the exterior logit without decoding.
inline EvalLattice evaluate_lattice(const LatentGrid& grid, const DecoderParams& params, double voxel_size) {
  require(voxel_size > 0 && std::isfinite(voxel_size), "voxel size must be positive");
  const double fill = grid.exterior_logit();
  if (grid.empty()) return EvalLattice(grid.origin(), voxel_size, {1, 1, 1}, fill);
  if (grid.latent_dim() != params.latent_dim())
    throw InvalidArgument("grid latent_dim does not match decoder latent_dim");

  Point3 cmin = grid.cell_center(grid.cell(0)), cmax = cmin;
  for (const CellIndex& c : grid.cells()) {
    cmin = cmin.cwiseMin(grid.cell_center(c));
    cmax = cmax.cwiseMax(grid.cell_center(c));
  }
  // Region influenced by stored cells, plus one voxel of apron on each side.
  const double h = grid.spacing();
  const Point3 lo = cmin - Point3::Constant(h + voxel_size);
  const Point3 hi = cmax + Point3::Constant(h + voxel_size);
  std::array<std::int64_t, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / voxel_size)) + 1;
  EvalLattice lat(lo, voxel_size, n, fill);

  const int B = EvalLattice::kBlock;
  std::set<EvalLattice::BlockKey> active;
  for (const CellIndex& c : grid.cells()) {
    const Point3 center = grid.cell_center(c);
    std::array<std::int64_t, 3> b0{}, b1{};
    for (int a = 0; a < 3; ++a) {
      const auto i0 = static_cast<std::int64_t>(std::floor((center[a] - h - lo[a]) / voxel_size)) - 1;
      const auto i1 = static_cast<std::int64_t>(std::ceil((center[a] + h - lo[a]) / voxel_size)) + 1;
      b0[a] = std::clamp<std::int64_t>(i0, 0, n[a] - 1) / B;
      b1[a] = std::clamp<std::int64_t>(i1, 0, n[a] - 1) / B;
    }
    for (auto bi = b0[0]; bi <= b1[0]; ++bi)
      for (auto bj = b0[1]; bj <= b1[1]; ++bj)
        for (auto bk = b0[2]; bk <= b1[2]; ++bk)
          active.insert({static_cast<std::int32_t>(bi), static_cast<std::int32_t>(bj), static_cast<std::int32_t>(bk)});
  }
  const std::vector<EvalLattice::BlockKey> keys(active.begin(), active.end());
  std::vector<std::vector<double>> values(keys.size());
  std::vector<std::size_t> counts(keys.size(), 0);
  parallel_chunks(keys.size(), [&](std::size_t b) {
    const auto& key = keys[b];
    auto& out = values[b];
    out.assign(static_cast<std::size_t>(B * B * B), fill);
    std::vector<Stencil> st;
    std::vector<std::size_t> where;
    st.reserve(out.size());
    for (int x = 0; x < B; ++x)
      for (int y = 0; y < B; ++y)
        for (int z = 0; z < B; ++z) {
          const std::int64_t i = key[0] * B + x, j = key[1] * B + y, k = key[2] * B + z;
          if (!lat.in_range(i, j, k)) continue;
          Stencil s = make_stencil(grid, lat.position(i, j, k));
          bool any = false;
          for (int e = 0; e < s.count; ++e) any |= s.entries[e].slot >= 0;
          if (!any) continue;
          st.push_back(s);
          where.push_back(EvalLattice::local_index(x, y, z));
        }
    std::vector<const Stencil*> ptr(st.size());
    for (std::size_t i = 0; i < st.size(); ++i) ptr[i] = &st[i];
    BlendEvaluator ev;
    const auto z = ev.forward(grid, params, ptr);
    for (std::size_t i = 0; i < z.size(); ++i) out[where[i]] = z[i];
    counts[b] = st.size();
  });
  for (std::size_t b = 0; b < keys.size(); ++b) {
    lat.block(keys[b]) = std::move(values[b]);
    lat.evaluated_corners += counts[b];
  }
  return lat;
}

/// Table-driven marching cubes; a corner is inside when its value exceeds isolevel. Faces wind
/// counter-clockwise seen from outside. Vertices are numbered by sorted edge key.
inline TriMesh marching_cubes(const EvalLattice& lat, double isolevel = 0.0) {
  const int B = EvalLattice::kBlock;
  const auto& n = lat.corners();
  for (const auto& [key, blk] : lat.blocks())
    for (double v : blk)
      if (!std::isfinite(v)) throw NumericalError("non-finite value in evaluation lattice");
  if (!std::isfinite(lat.fill())) throw NumericalError("non-finite lattice fill value");

  // Blocks whose voxels may straddle stored corners: every stored block and its lower neighbours.
  std::set<EvalLattice::BlockKey> visit;
  for (const auto& [key, blk] : lat.blocks())
    for (int a = -1; a <= 0; ++a)
      for (int b = -1; b <= 0; ++b)
        for (int c = -1; c <= 0; ++c) visit.insert({key[0] + a, key[1] + b, key[2] + c});

  auto edge_key = [&](std::int64_t i, std::int64_t j, std::int64_t k, int axis) {
    // Corners range over [-1, n] so shift by one.
    const auto sy = static_cast<std::uint64_t>(n[1] + 2), sz = static_cast<std::uint64_t>(n[2] + 2);
    const std::uint64_t lin = (static_cast<std::uint64_t>(i + 1) * sy + static_cast<std::uint64_t>(j + 1)) * sz +
                              static_cast<std::uint64_t>(k + 1);
    return lin * 3 + static_cast<std::uint64_t>(axis);
  };

  std::vector<std::array<std::uint64_t, 3>> tri_keys;
  std::unordered_map<std::uint64_t, Point3> vertex_at;
  for (const auto& key : visit) {
    for (int x = 0; x < B; ++x)
      for (int y = 0; y < B; ++y)
        for (int z = 0; z < B; ++z) {
          const std::int64_t i = static_cast<std::int64_t>(key[0]) * B + x, j = static_cast<std::int64_t>(key[1]) * B + y,
                             k = static_cast<std::int64_t>(key[2]) * B + z;
          if (i < -1 || j < -1 || k < -1 || i >= n[0] || j >= n[1] || k >= n[2]) continue;
          std::array<double, 8> v{};
          int cube = 0;
          for (int c = 0; c < 8; ++c) {
            const int* o = &detail::kMcCornerOffsets[3 * c];
            v[c] = lat.value(i + o[0], j + o[1], k + o[2]);
            if (!(v[c] > isolevel)) cube |= 1 << c;
          }
          if (detail::kMcEdgeTable[cube] == 0) continue;
          std::array<std::uint64_t, 12> ek{};
          for (int e = 0; e < 12; ++e) {
            if (!(detail::kMcEdgeTable[cube] & (1 << e))) continue;
            const int c0 = detail::kMcEdgeCorners[e][0], c1 = detail::kMcEdgeCorners[e][1];
            const int* o0 = &detail::kMcCornerOffsets[3 * c0];
            const int* o1 = &detail::kMcCornerOffsets[3 * c1];
            // Canonical edge: lower corner plus axis, so neighbouring voxels share the vertex.
            std::array<std::int64_t, 3> lo{i + std::min(o0[0], o1[0]), j + std::min(o0[1], o1[1]),
                                           k + std::min(o0[2], o1[2])};
            int axis = o0[0] != o1[0] ? 0 : (o0[1] != o1[1] ? 1 : 2);
            ek[e] = edge_key(lo[0], lo[1], lo[2], axis);
            if (vertex_at.count(ek[e])) continue;
            const bool forward = (o0[axis] < o1[axis]);
            const double va = forward ? v[c0] : v[c1], vb = forward ? v[c1] : v[c0];
            double t = (isolevel - va) / (vb - va);
            t = std::clamp(t, 1e-3, 1.0 - 1e-3);
            Point3 p = lat.position(lo[0], lo[1], lo[2]);
            p[axis] += t * lat.voxel_size();
            vertex_at.emplace(ek[e], p);
          }
          const auto& row = detail::kMcTriTable[cube];
          for (int t = 0; row[t] != -1; t += 3) tri_keys.push_back({ek[row[t]], ek[row[t + 1]], ek[row[t + 2]]});
        }
  }

  std::vector<std::uint64_t> keys;
  keys.reserve(vertex_at.size());
  for (const auto& kv : vertex_at) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  std::unordered_map<std::uint64_t, std::uint32_t> index;
  index.reserve(keys.size());
  std::vector<Point3> verts(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    index.emplace(keys[i], static_cast<std::uint32_t>(i));
    verts[i] = vertex_at.at(keys[i]);
  }
  std::vector<Face> faces;
  faces.reserve(tri_keys.size());
  for (const auto& t : tri_keys) faces.push_back({index.at(t[0]), index.at(t[1]), index.at(t[2])});
  return TriMesh(std::move(verts), std::move(faces));
}

struct ReconstructConfig {
  double part_scale = 0.35;
  /// 0 selects min(1/64, largest point-cloud extent / 128).
  double voxel_size = 0.0;
  double isolevel = 0.0;
  double latent_init_std = 1e-2;
  OptimConfig optim;
};

struct ReconstructResult {
  TriMesh mesh;
  LatentGrid grid;
  std::vector<OptimStep> trace;
  double voxel_size = 0;
  std::size_t evaluated_corners = 0;
  std::size_t dense_corners = 0;
};

inline double auto_voxel_size(const OrientedPointCloud& points) {
  Point3 lo = points.front().position, hi = lo;
  for (const auto& p : points) {
    lo = lo.cwiseMin(p.position);
    hi = hi.cwiseMax(p.position);
  }
  const double extent = (hi - lo).maxCoeff();
  return extent > 0 ? std::min(1.0 / 64.0, extent / 128.0) : 1.0 / 64.0;
}

/// Allocate, sample signs, optimize latents, evaluate and polygonize.
inline ReconstructResult reconstruct(const OrientedPointCloud& points, const DecoderParams& params,
                                     const ReconstructConfig& cfg) {
  if (points.empty()) throw InvalidArgument("empty point cloud");
  check_unit_normals(points);
  const std::uint64_t seed = cfg.optim.seed;
  std::vector<Point3> pos(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) pos[i] = points[i].position;
  LatentGrid grid = allocate_from_points(pos, cfg.part_scale, params.latent_dim(), mix_seed(seed, 1), cfg.latent_init_std);
  const auto samples = make_sign_samples(points, cfg.optim.samples_per_point, cfg.optim.sigma, mix_seed(seed, 2));
  OptimConfig oc = cfg.optim;
  oc.seed = mix_seed(seed, 3);
  auto opt = optimize(std::move(grid), params, samples, oc);
  ReconstructResult res;
  res.voxel_size = cfg.voxel_size > 0 ? cfg.voxel_size : auto_voxel_size(points);
  const EvalLattice lat = evaluate_lattice(opt.grid, params, res.voxel_size);
  res.mesh = marching_cubes(lat, cfg.isolevel);
  res.evaluated_corners = lat.evaluated_corners;
  res.dense_corners = lat.dense_corner_count();
  res.grid = std::move(opt.grid);
  res.trace = std::move(opt.trace);
  return res;
}

}  // namespace lig

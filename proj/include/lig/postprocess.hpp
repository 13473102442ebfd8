#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lig/common.hpp"
#include "lig/geometry.hpp"
#include "lig/kdtree.hpp"

namespace lig {

struct PostprocessConfig {
  std::size_t k = 3;
  double threshold = -0.75;
  double lambda = 0.5;
  std::size_t iterations = 50;
  double min_component_area = 1.0;

  void validate() const {
    require(k >= 1, "k must be >= 1");
    require(lambda > 0 && lambda <= 1, "lambda must lie in (0, 1]");
    require(threshold >= -1 && threshold <= 1, "threshold must lie in [-1, 1]");
    require(min_component_area >= 0, "minimum component area must be non-negative");
  }
};

/// Per face: mean of dot(face normal, point normal) over the k input points nearest its centroid.
inline std::vector<double> face_alignment_signal(const TriMesh& mesh, const OrientedPointCloud& points, std::size_t k) {
  if (mesh.empty()) throw InvalidArgument("face alignment needs a non-empty mesh");
  if (points.empty()) throw InvalidArgument("face alignment needs a non-empty point cloud");
  require(k >= 1, "k must be >= 1");
  const KdTree tree = KdTree::from(points, [](const OrientedPoint& p) { return p.position; });
  std::vector<double> s(mesh.num_faces());
  parallel_ranges(s.size(), 4096, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t f = lo; f < hi; ++f) {
      const Vec3 n = mesh.face_normal(f);
      const auto nb = tree.knn(mesh.face_centroid(f), k);
      double acc = 0;
      for (const auto& q : nb) acc += n.dot(points[q.index].normal);
      s[f] = acc / static_cast<double>(nb.size());
    }
  });
  return s;
}

/// Faces sharing an edge with each face, ascending.
inline std::vector<std::vector<std::uint32_t>> face_neighbors(const TriMesh& mesh) {
  std::vector<std::vector<std::uint32_t>> nb(mesh.num_faces());
  for (const auto& [edge, faces] : edge_face_map(mesh))
    for (auto a : faces)
      for (auto b : faces)
        if (a != b) nb[a].push_back(b);
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

/// s <- s + lambda * (mean of edge-adjacent s - s), applied synchronously `iterations` times.
inline std::vector<double> laplacian_smooth_signal(const TriMesh& mesh, std::vector<double> signal, double lambda,
                                                   std::size_t iterations) {
  require(signal.size() == mesh.num_faces(), "signal length must equal the face count");
  require(lambda > 0 && lambda <= 1, "lambda must lie in (0, 1]");
  if (iterations == 0) return signal;
  const auto nb = face_neighbors(mesh);
  std::vector<double> next(signal.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t f = 0; f < signal.size(); ++f) {
      if (nb[f].empty()) {
        next[f] = signal[f];
        continue;
      }
      double m = 0;
      for (auto g : nb[f]) m += signal[g];
      m /= static_cast<double>(nb[f].size());
      next[f] = signal[f] + lambda * (m - signal[f]);
    }
    signal.swap(next);
  }
  return signal;
}

/// Edge-connected component id per face, numbered in order of first face.
inline std::vector<std::uint32_t> face_components(const TriMesh& mesh) {
  const auto nb = face_neighbors(mesh);
  constexpr auto unset = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> comp(mesh.num_faces(), unset);
  std::uint32_t next = 0;
  std::vector<std::uint32_t> stack;
  for (std::size_t f = 0; f < comp.size(); ++f) {
    if (comp[f] != unset) continue;
    comp[f] = next;
    stack.assign(1, static_cast<std::uint32_t>(f));
    while (!stack.empty()) {
      const auto g = stack.back();
      stack.pop_back();
      for (auto h : nb[g])
        if (comp[h] == unset) {
          comp[h] = next;
          stack.push_back(h);
        }
    }
    ++next;
  }
  return comp;
}

struct PostprocessResult {
  TriMesh mesh;
  std::vector<double> raw_signal;
  std::vector<double> smoothed_signal;
  std::vector<std::size_t> kept_faces;  // indices into the input mesh
};

/// Drops faces whose smoothed alignment is below the threshold, then edge-connected components
/// with area below min_component_area.
inline PostprocessResult remove_backfaces_detailed(const TriMesh& mesh, const OrientedPointCloud& points,
                                                   const PostprocessConfig& cfg) {
  cfg.validate();
  PostprocessResult res;
  if (mesh.empty()) return res;
  res.raw_signal = face_alignment_signal(mesh, points, cfg.k);
  res.smoothed_signal = laplacian_smooth_signal(mesh, res.raw_signal, cfg.lambda, cfg.iterations);
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f)
    if (res.smoothed_signal[f] >= cfg.threshold) keep.push_back(f);
  const TriMesh thresholded = mesh.subset(keep);
  const auto comp = face_components(thresholded);
  const std::size_t ncomp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  std::vector<double> area(ncomp, 0.0);
  for (std::size_t f = 0; f < comp.size(); ++f) area[comp[f]] += thresholded.face_area(f);
  for (std::size_t f = 0; f < comp.size(); ++f)
    if (area[comp[f]] >= cfg.min_component_area) res.kept_faces.push_back(keep[f]);
  res.mesh = mesh.subset(res.kept_faces);
  return res;
}

inline TriMesh remove_backfaces(const TriMesh& mesh, const OrientedPointCloud& points, const PostprocessConfig& cfg) {
  return remove_backfaces_detailed(mesh, points, cfg).mesh;
}

}  // namespace lig

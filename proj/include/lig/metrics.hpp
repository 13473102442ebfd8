#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "lig/common.hpp"
#include "lig/geometry.hpp"
#include "lig/kdtree.hpp"

namespace lig {

namespace detail {

inline KdTree tree_of(const OrientedPointCloud& pts) {
  return KdTree::from(pts, [](const OrientedPoint& p) { return p.position; });
}

/// Nearest neighbour of every point of `from` in `to_tree`.
inline std::vector<Neighbor> all_nearest(const OrientedPointCloud& from, const KdTree& to_tree) {
  std::vector<Neighbor> out(from.size());
  parallel_ranges(from.size(), 8192, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = to_tree.nearest(from[i].position);
  });
  return out;
}

inline void require_nonempty(const OrientedPointCloud& a, const OrientedPointCloud& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("metric needs two non-empty point sets");
}

}  // namespace detail

/// Nearest-neighbour correspondences in both directions, computed once and shared by the metrics.
struct Correspondence {
  std::vector<Neighbor> a_to_b, b_to_a;
};

inline Correspondence correspond(const OrientedPointCloud& a, const OrientedPointCloud& b) {
  detail::require_nonempty(a, b);
  return {detail::all_nearest(a, detail::tree_of(b)), detail::all_nearest(b, detail::tree_of(a))};
}

namespace detail {

inline double mean_distance(const std::vector<Neighbor>& nn) {
  double s = 0;
  for (const auto& n : nn) s += n.distance;
  return s / static_cast<double>(nn.size());
}

inline double within_fraction(const std::vector<Neighbor>& nn, double tau) {
  std::size_t c = 0;
  for (const auto& n : nn) c += n.distance < tau;
  return static_cast<double>(c) / static_cast<double>(nn.size());
}

inline double mean_abs_cos(const OrientedPointCloud& from, const OrientedPointCloud& to, const std::vector<Neighbor>& nn) {
  double s = 0;
  for (std::size_t i = 0; i < from.size(); ++i) s += std::abs(from[i].normal.dot(to[nn[i].index].normal));
  return s / static_cast<double>(from.size());
}

}  // namespace detail

/// Symmetric mean (unsquared) nearest-neighbour distance.
inline double chamfer_distance(const OrientedPointCloud& a, const OrientedPointCloud& b) {
  const auto c = correspond(a, b);
  return 0.5 * (detail::mean_distance(c.a_to_b) + detail::mean_distance(c.b_to_a));
}

/// Symmetric mean |cos| between normals of nearest-neighbour pairs.
inline double normal_alignment(const OrientedPointCloud& a, const OrientedPointCloud& b) {
  detail::require_nonempty(a, b);
  check_unit_normals(a);
  check_unit_normals(b);
  const auto c = correspond(a, b);
  return 0.5 * (detail::mean_abs_cos(a, b, c.a_to_b) + detail::mean_abs_cos(b, a, c.b_to_a));
}

inline double harmonic_f(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

/// F-score of a reconstruction sample set against a target sample set; distances strictly below
/// tau count as matched.
inline double f_score(const OrientedPointCloud& recon, const OrientedPointCloud& target, double tau) {
  require(tau > 0, "tau must be positive");
  const auto c = correspond(recon, target);
  const double recall = detail::within_fraction(c.a_to_b, tau);
  const double precision = detail::within_fraction(c.b_to_a, tau);
  return harmonic_f(precision, recall);
}

struct MetricsConfig {
  std::size_t samples = 100000;
  double tau = 0.025;
  std::uint64_t seed = 0;
  /// Report distances in units of 1/10 of the target's largest bounding-box edge.
  bool object_units = false;
};

struct MetricsReport {
  double chamfer = 0;
  double normal_alignment = 0;
  double fscore = 0;
  double tau = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

using EvalTarget = std::variant<TriMesh, AnalyticShape>;

inline OrientedPointCloud sample_target(const EvalTarget& target, std::size_t count, std::uint64_t seed) {
  if (const auto* m = std::get_if<TriMesh>(&target)) {
    if (m->empty()) throw InvalidArgument("target mesh is empty");
    return sample_surface_count(*m, count, seed);
  }
  return sample_analytic_surface(std::get<AnalyticShape>(target), count, seed);
}

/// All three metrics from sample sets (distances in the sets' own units).
inline MetricsReport evaluate_samples(const OrientedPointCloud& recon, const OrientedPointCloud& target, double tau,
                                      double unit = 1.0) {
  require(tau > 0, "tau must be positive");
  check_unit_normals(recon);
  check_unit_normals(target);
  const auto c = correspond(recon, target);
  MetricsReport r;
  r.chamfer = 0.5 * (detail::mean_distance(c.a_to_b) + detail::mean_distance(c.b_to_a)) / unit;
  r.normal_alignment = 0.5 * (detail::mean_abs_cos(recon, target, c.a_to_b) + detail::mean_abs_cos(target, recon, c.b_to_a));
  r.fscore = harmonic_f(detail::within_fraction(c.b_to_a, tau * unit), detail::within_fraction(c.a_to_b, tau * unit));
  r.tau = tau;
  r.samples = recon.size();
  return r;
}

/// Samples both surfaces and computes Chamfer, normal alignment and F-score. Both meshes are
/// sampled with the same seed, so a mesh compared with itself scores exactly CD 0, N 1, F 1.
inline MetricsReport evaluate(const TriMesh& recon, const EvalTarget& target, const MetricsConfig& cfg) {
  if (recon.empty()) throw InvalidArgument("reconstruction mesh is empty");
  require(cfg.samples >= 1, "sample count must be >= 1");
  const auto a = sample_surface_count(recon, cfg.samples, mix_seed(cfg.seed, 11));
  const auto b = sample_target(target, cfg.samples, mix_seed(cfg.seed, 11));
  double unit = 1.0;
  if (cfg.object_units) {
    Point3 lo = b.front().position, hi = lo;
    for (const auto& p : b) {
      lo = lo.cwiseMin(p.position);
      hi = hi.cwiseMax(p.position);
    }
    unit = (hi - lo).maxCoeff() / 10.0;
    require(unit > 0, "target has zero extent");
  }
  auto r = evaluate_samples(a, b, cfg.tau, unit);
  r.seed = cfg.seed;
  return r;
}

namespace detail {

inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

inline void write_report_csv(const MetricsReport& r, std::ostream& os) {
  os << "metric,value,tau,samples,seed\n";
  const std::pair<const char*, double> rows[] = {
      {"chamfer", r.chamfer}, {"normal_alignment", r.normal_alignment}, {"fscore", r.fscore}};
  for (const auto& [name, v] : rows)
    os << name << ',' << detail::fmt_real(v) << ',' << detail::fmt_real(r.tau) << ',' << r.samples << ',' << r.seed
       << '\n';
}

inline void write_report_jsonl(const MetricsReport& r, std::ostream& os) {
  const std::pair<const char*, double> rows[] = {
      {"chamfer", r.chamfer}, {"normal_alignment", r.normal_alignment}, {"fscore", r.fscore}};
  for (const auto& [name, v] : rows)
    os << "{\"metric\":\"" << name << "\",\"value\":" << detail::fmt_real(v) << ",\"tau\":" << detail::fmt_real(r.tau)
       << ",\"samples\":" << r.samples << ",\"seed\":" << r.seed << "}\n";
}

}  // namespace lig

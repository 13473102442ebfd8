#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "lig/common.hpp"

namespace lig {

/// Surface sample with an outward unit normal.
struct OrientedPoint {
  Point3 position = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

using OrientedPointCloud = std::vector<OrientedPoint>;

inline void check_unit_normals(const OrientedPointCloud& cloud, double tol = 1e-6) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!is_finite(cloud[i].position) || std::abs(cloud[i].normal.norm() - 1.0) > tol)
      throw InvalidArgument("point " + std::to_string(i) + " has a non-finite position or non-unit normal");
  }
}

using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh with outward (counter-clockwise) winding.
class TriMesh {
 public:
  TriMesh() = default;

  /// Validates indices (throws on out-of-range) and drops zero-area faces.
  TriMesh(std::vector<Point3> vertices, std::vector<Face> faces) : vertices_(std::move(vertices)) {
    faces_.reserve(faces.size());
    for (const Face& f : faces) {
      for (auto idx : f)
        if (idx >= vertices_.size()) throw InvalidArgument("face index out of range");
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
      if (area_of(f) <= 0.0) continue;
      faces_.push_back(f);
    }
  }

  const std::vector<Point3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t num_faces() const { return faces_.size(); }
  bool empty() const { return faces_.empty(); }

  Vec3 face_cross(std::size_t f) const { return cross_of(faces_[f]); }
  double face_area(std::size_t f) const { return 0.5 * face_cross(f).norm(); }

  Vec3 face_normal(std::size_t f) const {
    Vec3 c = face_cross(f);
    const double n = c.norm();
    return n > 0 ? Vec3(c / n) : Vec3::Zero();
  }

  Point3 face_centroid(std::size_t f) const {
    const Face& t = faces_[f];
    return (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
  }

  double total_area() const {
    double a = 0;
    for (std::size_t f = 0; f < faces_.size(); ++f) a += face_area(f);
    return a;
  }

  /// Signed enclosed volume (positive for a closed outward-wound surface).
  double signed_volume() const {
    double v = 0;
    for (const Face& f : faces_)
      v += vertices_[f[0]].dot(vertices_[f[1]].cross(vertices_[f[2]])) / 6.0;
    return v;
  }

  std::pair<Point3, Point3> bounds() const {
    Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
    Point3 hi = -lo;
    for (const Point3& p : vertices_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return {lo, hi};
  }

  /// Keeps the listed faces and drops vertices no face references. Surviving vertices keep their relative order,
  /// so keeping every face returns an identical mesh.
  TriMesh subset(const std::vector<std::size_t>& keep) const {
    std::vector<std::uint8_t> used(vertices_.size(), 0);
    for (std::size_t f : keep)
      for (int c = 0; c < 3; ++c) used[faces_[f][c]] = 1;
    std::vector<std::uint32_t> remap(vertices_.size(), 0);
    std::vector<Point3> verts;
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      if (used[v]) {
        remap[v] = static_cast<std::uint32_t>(verts.size());
        verts.push_back(vertices_[v]);
      }
    std::vector<Face> faces;
    faces.reserve(keep.size());
    for (std::size_t f : keep) faces.push_back({remap[faces_[f][0]], remap[faces_[f][1]], remap[faces_[f][2]]});
    return TriMesh(std::move(verts), std::move(faces));
  }

  /// Same mesh with every face wound the other way.
  TriMesh flipped() const {
    std::vector<Face> faces = faces_;
    for (Face& f : faces) std::swap(f[1], f[2]);
    return TriMesh(vertices_, std::move(faces));
  }

 private:
  Vec3 cross_of(const Face& f) const {
    return (vertices_[f[1]] - vertices_[f[0]]).cross(vertices_[f[2]] - vertices_[f[0]]);
  }
  double area_of(const Face& f) const { return 0.5 * cross_of(f).norm(); }

  std::vector<Point3> vertices_;
  std::vector<Face> faces_;
};

using Edge = std::pair<std::uint32_t, std::uint32_t>;

inline Edge make_edge(std::uint32_t a, std::uint32_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Undirected edge -> incident faces, in face order.
inline std::map<Edge, std::vector<std::uint32_t>> edge_face_map(const TriMesh& mesh) {
  std::map<Edge, std::vector<std::uint32_t>> edges;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.faces()[f];
    for (int c = 0; c < 3; ++c)
      edges[make_edge(t[c], t[(c + 1) % 3])].push_back(static_cast<std::uint32_t>(f));
  }
  return edges;
}

/// True when every edge has exactly two incident faces traversed in opposite directions.
inline bool is_closed_manifold(const TriMesh& mesh) {
  if (mesh.empty()) return false;
  std::map<Edge, int> directed;
  for (const Face& t : mesh.faces())
    for (int c = 0; c < 3; ++c) {
      const std::uint32_t a = t[c], b = t[(c + 1) % 3];
      directed[make_edge(a, b)] += a < b ? 1 : 16;
    }
  return std::all_of(directed.begin(), directed.end(), [](const auto& e) { return e.second == 17; });
}

// ---------------------------------------------------------------------------
// Analytic shapes

/// Closed-form signed distance shapes: negative inside, positive outside.
class AnalyticShape {
 public:
  enum class Kind { Sphere, Box, Plane, Union, Intersection };

  static AnalyticShape sphere(const Point3& center, double radius) {
    require(radius > 0, "sphere radius must be positive");
    AnalyticShape s(Kind::Sphere);
    s.a_ = center;
    s.radius_ = radius;
    return s;
  }

  static AnalyticShape box(const Point3& center, const Vec3& half_extents) {
    require((half_extents.array() > 0).all(), "box half-extents must be positive");
    AnalyticShape s(Kind::Box);
    s.a_ = center;
    s.b_ = half_extents;
    return s;
  }

  /// Half-space bounded by the plane; the normal points to the exterior side.
  static AnalyticShape plane(const Point3& point, const Vec3& normal) {
    require(normal.norm() > 0, "plane normal must be nonzero");
    AnalyticShape s(Kind::Plane);
    s.a_ = point;
    s.b_ = normal.normalized();
    return s;
  }

  static AnalyticShape unite(std::vector<AnalyticShape> children) {
    require(!children.empty(), "union needs at least one child");
    AnalyticShape s(Kind::Union);
    s.children_ = std::move(children);
    return s;
  }

  static AnalyticShape intersect(std::vector<AnalyticShape> children) {
    require(!children.empty(), "intersection needs at least one child");
    AnalyticShape s(Kind::Intersection);
    s.children_ = std::move(children);
    return s;
  }

  Kind kind() const { return kind_; }
  const Point3& center() const { return a_; }
  double radius() const { return radius_; }
  const Vec3& half_extents() const { return b_; }
  const Vec3& normal() const { return b_; }
  const std::vector<AnalyticShape>& children() const { return children_; }

  double sdf(const Point3& p) const {
    switch (kind_) {
      case Kind::Sphere:
        return (p - a_).norm() - radius_;
      case Kind::Box: {
        const Vec3 q = (p - a_).cwiseAbs() - b_;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
      }
      case Kind::Plane:
        return (p - a_).dot(b_);
      case Kind::Union: {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& c : children_) d = std::min(d, c.sdf(p));
        return d;
      }
      case Kind::Intersection: {
        double d = -std::numeric_limits<double>::infinity();
        for (const auto& c : children_) d = std::max(d, c.sdf(p));
        return d;
      }
    }
    return 0.0;
  }

 private:
  explicit AnalyticShape(Kind k) : kind_(k) {}

  Kind kind_;
  Point3 a_ = Point3::Zero();
  Vec3 b_ = Vec3::Zero();
  double radius_ = 0;
  std::vector<AnalyticShape> children_;
};

inline double sdf_eval(const AnalyticShape& shape, const Point3& p) { return shape.sdf(p); }

/// Central-difference gradient of any scalar field.
template <class Field>
Vec3 field_gradient(const Field& f, const Point3& p, double h = 1e-5) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Point3 hi = p, lo = p;
    hi[a] += h;
    lo[a] -= h;
    g[a] = (f(hi) - f(lo)) / (2 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Surface sampling

/// Area-weighted uniform samples on a mesh; count = round(density * area), normals are face normals.
inline OrientedPointCloud sample_surface_count(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cumulative(mesh.num_faces());
  double total = 0;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  require(total > 0, "mesh has zero surface area");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  OrientedPointCloud out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = uni(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    const std::size_t f = std::min<std::size_t>(it - cumulative.begin(), mesh.num_faces() - 1);
    const double su = std::sqrt(uni(rng));
    const double v = uni(rng);
    const Face& t = mesh.faces()[f];
    const auto& V = mesh.vertices();
    OrientedPoint p;
    p.position = (1 - su) * V[t[0]] + su * (1 - v) * V[t[1]] + su * v * V[t[2]];
    p.normal = mesh.face_normal(f);
    out.push_back(p);
  }
  return out;
}

inline OrientedPointCloud sample_surface(const TriMesh& mesh, double density, std::uint64_t seed) {
  require(density > 0, "density must be positive");
  const double area = mesh.total_area();
  require(area > 0, "mesh has zero surface area");
  return sample_surface_count(mesh, static_cast<std::size_t>(std::llround(density * area)), seed);
}

/// Surface area of a sphere or box shape.
inline double analytic_surface_area(const AnalyticShape& shape) {
  switch (shape.kind()) {
    case AnalyticShape::Kind::Sphere:
      return 4 * M_PI * shape.radius() * shape.radius();
    case AnalyticShape::Kind::Box: {
      const Vec3 e = 2 * shape.half_extents();
      return 2 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
    }
    default:
      throw InvalidArgument("surface area only available for sphere and box shapes");
  }
}

/// Uniform samples on the exact surface of a sphere or box with outward normals.
inline OrientedPointCloud sample_analytic_surface(const AnalyticShape& shape, std::size_t count,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  OrientedPointCloud out;
  out.reserve(count);
  if (shape.kind() == AnalyticShape::Kind::Sphere) {
    for (std::size_t i = 0; i < count; ++i) {
      Vec3 d;
      do {
        d = Vec3(gauss(rng), gauss(rng), gauss(rng));
      } while (d.norm() < 1e-12);
      d.normalize();
      out.push_back({shape.center() + shape.radius() * d, d});
    }
    return out;
  }
  if (shape.kind() == AnalyticShape::Kind::Box) {
    const Vec3 h = shape.half_extents();
    // faces: +x,-x,+y,-y,+z,-z; area of an axis-a face = 4 * h[b] * h[c]
    std::array<double, 6> area{};
    for (int f = 0; f < 6; ++f) {
      const int a = f / 2;
      area[f] = 4 * h[(a + 1) % 3] * h[(a + 2) % 3];
    }
    std::discrete_distribution<int> pick(area.begin(), area.end());
    for (std::size_t i = 0; i < count; ++i) {
      const int f = pick(rng);
      const int a = f / 2;
      const double sign = (f % 2 == 0) ? 1.0 : -1.0;
      Vec3 local;
      local[a] = sign * h[a];
      local[(a + 1) % 3] = (2 * uni(rng) - 1) * h[(a + 1) % 3];
      local[(a + 2) % 3] = (2 * uni(rng) - 1) * h[(a + 2) % 3];
      Vec3 n = Vec3::Zero();
      n[a] = sign;
      out.push_back({shape.center() + local, n});
    }
    return out;
  }
  throw InvalidArgument("analytic surface sampling supports sphere and box shapes only");
}

// ---------------------------------------------------------------------------
// Simple mesh builders, used for fixtures and demos

/// Axis-aligned box surface, each face split into n x n quads, outward winding.
inline TriMesh make_box_mesh(const Point3& center, const Vec3& half, int n = 1) {
  require(n >= 1, "box subdivision must be >= 1");
  std::vector<Point3> verts;
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? 1.0 : -1.0;
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const auto base = static_cast<std::uint32_t>(verts.size());
      for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) {
          Point3 p = center;
          p[axis] += sign * half[axis];
          p[u] += (2.0 * i / n - 1) * half[u];
          p[v] += (2.0 * j / n - 1) * half[v];
          verts.push_back(p);
        }
      auto id = [&](int i, int j) { return base + static_cast<std::uint32_t>(j * (n + 1) + i); };
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          // (u x v) == +axis, so CCW in (u,v) faces +axis.
          Face a{id(i, j), id(i + 1, j), id(i + 1, j + 1)};
          Face b{id(i, j), id(i + 1, j + 1), id(i, j + 1)};
          if (sign < 0) {
            std::swap(a[1], a[2]);
            std::swap(b[1], b[2]);
          }
          faces.push_back(a);
          faces.push_back(b);
        }
    }
  }
  // Weld the duplicated edge vertices so faces share edges.
  std::map<std::array<long long, 3>, std::uint32_t> weld;
  std::vector<Point3> unique;
  std::vector<std::uint32_t> remap(verts.size());
  const double q = 1e9 / std::max({half.x(), half.y(), half.z()});
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec3 r = (verts[i] - center) * q;
    std::array<long long, 3> key{std::llround(r.x()), std::llround(r.y()), std::llround(r.z())};
    auto [it, inserted] = weld.emplace(key, static_cast<std::uint32_t>(unique.size()));
    if (inserted) unique.push_back(verts[i]);
    remap[i] = it->second;
  }
  for (Face& f : faces)
    for (auto& v : f) v = remap[v];
  return TriMesh(std::move(unique), std::move(faces));
}

/// Flat rectangle in the plane z = height spanning [-hx, hx] x [-hy, hy], normal +z (or -z if flipped).
inline TriMesh make_plane_mesh(double hx, double hy, double height, int n, bool facing_down = false) {
  std::vector<Point3> verts;
  std::vector<Face> faces;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      verts.emplace_back((2.0 * i / n - 1) * hx, (2.0 * j / n - 1) * hy, height);
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>(j * (n + 1) + i); };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      Face a{id(i, j), id(i + 1, j), id(i + 1, j + 1)};
      Face b{id(i, j), id(i + 1, j + 1), id(i, j + 1)};
      if (facing_down) {
        std::swap(a[1], a[2]);
        std::swap(b[1], b[2]);
      }
      faces.push_back(a);
      faces.push_back(b);
    }
  return TriMesh(std::move(verts), std::move(faces));
}

/// Concatenates meshes without welding.
inline TriMesh merge_meshes(const std::vector<TriMesh>& parts) {
  std::vector<Point3> verts;
  std::vector<Face> faces;
  for (const TriMesh& m : parts) {
    const auto base = static_cast<std::uint32_t>(verts.size());
    verts.insert(verts.end(), m.vertices().begin(), m.vertices().end());
    for (Face f : m.faces()) {
      for (auto& v : f) v += base;
      faces.push_back(f);
    }
  }
  return TriMesh(std::move(verts), std::move(faces));
}

}  // namespace lig

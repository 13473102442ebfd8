#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lig/mesh_io.hpp"
#include "lig/surface_extraction.hpp"
#include "oracles.hpp"

using namespace lig;

namespace {

DecoderArch small_arch() {
  DecoderArch a;
  a.latent_dim = 6;
  a.hidden = {16, 8};
  return a;
}

const DecoderParams& demo_decoder() {
  static const DecoderParams p = load_params(std::string(LIG_DATA_DIR) + "/demo_decoder.ligw");
  return p;
}

std::set<std::array<std::uint32_t, 3>> rotated_faces(const TriMesh& m, bool reverse) {
  std::set<std::array<std::uint32_t, 3>> out;
  for (auto f : m.faces()) {
    if (reverse) std::swap(f[1], f[2]);
    // canonical rotation: smallest index first
    while (f[0] > f[1] || f[0] > f[2]) f = {f[1], f[2], f[0]};
    out.insert(f);
  }
  return out;
}

const ReconstructResult& small_sphere() {
  static const ReconstructResult r = [] {
    const auto pts = sample_analytic_surface(AnalyticShape::sphere(Point3::Zero(), 0.3), 565, 4);
    ReconstructConfig cfg;
    cfg.voxel_size = 1.0 / 64;
    cfg.optim.steps = 300;
    cfg.optim.batch_size = 2048;
    return reconstruct(pts, demo_decoder(), cfg);
  }();
  return r;
}

}  // namespace

TEST(Lattice, EmptyGridGivesEmptyMesh) {
  const auto p = DecoderParams::random(small_arch(), 1);
  const LatentGrid g(Point3::Zero(), 0.5, 6);
  const auto lat = evaluate_lattice(g, p, 0.05);
  EXPECT_EQ(lat.evaluated_corners, 0u);
  EXPECT_TRUE(marching_cubes(lat).empty());
}

TEST(Lattice, CornersEqualBlendedQuery) {
  const auto p = DecoderParams::random(small_arch(), 2);
  LatentGrid g(Point3(0.05, 0.1, -0.2), 0.3, 6);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 0.5f);
  for (const CellIndex c : {CellIndex{0, 0, 0}, CellIndex{1, 0, 0}, CellIndex{1, 1, 0}, CellIndex{4, 4, 4}}) {
    std::vector<float> l(6);
    for (float& v : l) v = n(rng);
    g.set(c, l);
  }
  const auto lat = evaluate_lattice(g, p, 0.02);
  std::size_t decoded = 0;
  const auto& n3 = lat.corners();
  for (std::int64_t i = 0; i < n3[0]; ++i)
    for (std::int64_t j = 0; j < n3[1]; ++j)
      for (std::int64_t k = 0; k < n3[2]; ++k) {
        const Point3 x = lat.position(i, j, k);
        const double want = query(g, p, x);
        const double got = lat.value(i, j, k);
        if (got == want) ++decoded;
        EXPECT_NEAR(got, want, 1e-9) << i << " " << j << " " << k;
      }
  EXPECT_GE(decoded, lat.evaluated_corners);
  EXPECT_GT(lat.evaluated_corners, 0u);
}

TEST(Lattice, SparseEvaluationOnDemoScene) {
  const auto pts = load_points(std::string(LIG_DATA_DIR) + "/demo_scene.ply");
  const auto g = allocate_from_points(oracle::positions(pts), 0.35, demo_decoder().latent_dim(), 5);
  const auto lat = evaluate_lattice(g, demo_decoder(), 1.0 / 64);
  const double frac = static_cast<double>(lat.evaluated_corners) / static_cast<double>(lat.dense_corner_count());
  EXPECT_LT(frac, 0.5) << lat.evaluated_corners << " of " << lat.dense_corner_count();
}

TEST(MarchingCubes, NegativeFieldGivesEmptyMesh) {
  const auto lat = sample_field(Point3::Zero(), Point3::Ones(), 0.1, [](const Point3&) { return -1.0; }, -1.0);
  EXPECT_TRUE(marching_cubes(lat).empty());
}

TEST(MarchingCubes, SphereIsClosedAndAccurate) {
  const auto sphere = AnalyticShape::sphere(Point3(0.03, -0.02, 0.01), 0.4);
  const double voxel = 1.0 / 40;
  const auto lat = sample_field(Point3::Constant(-0.5), Point3::Constant(0.5), voxel,
                                [&](const Point3& x) { return -sphere.sdf(x); }, -1.0);
  const auto m = marching_cubes(lat);
  ASSERT_FALSE(m.empty());
  EXPECT_TRUE(oracle::closed_two_manifold(m));
  for (const auto& v : m.vertices()) EXPECT_LE(std::abs(sphere.sdf(v)), std::sqrt(3.0) * voxel);
  EXPECT_NEAR(m.signed_volume(), 4.0 / 3.0 * M_PI * 0.064, 0.02 * 0.268);
  // outward: face normals point away from the center
  std::size_t outward = 0;
  for (std::size_t f = 0; f < m.num_faces(); ++f)
    outward += m.face_normal(f).dot(m.face_centroid(f) - sphere.center()) > 0;
  EXPECT_EQ(outward, m.num_faces());
}

TEST(MarchingCubes, SurfaceTouchingLatticeBoundaryStaysClosed) {
  // the fill value is inside, so the lattice border is capped
  const auto lat = sample_field(Point3::Zero(), Point3::Ones(), 0.1, [](const Point3& x) { return 0.55 - x.z(); }, 1.0);
  const auto m = marching_cubes(lat);
  EXPECT_TRUE(oracle::closed_two_manifold(m));
}

TEST(MarchingCubes, SignFlipReversesWinding) {
  // faces kept off the lattice planes, where a zero corner would classify differently under negation
  const auto box = AnalyticShape::box(Point3::Zero(), Vec3(0.31, 0.21, 0.26));
  const auto a = marching_cubes(sample_field(Point3::Constant(-0.5), Point3::Constant(0.5), 0.05,
                                             [&](const Point3& x) { return -box.sdf(x); }, -1.0));
  const auto b = marching_cubes(sample_field(Point3::Constant(-0.5), Point3::Constant(0.5), 0.05,
                                             [&](const Point3& x) { return box.sdf(x); }, 1.0),
                                0.0);
  EXPECT_GT(a.signed_volume(), 0.0);
  EXPECT_LT(b.signed_volume(), 0.0);
  EXPECT_EQ(a.vertices(), b.vertices());
  EXPECT_EQ(rotated_faces(a, false), rotated_faces(b, true));
}

TEST(MarchingCubes, IsolevelShiftsSurface) {
  const auto sphere = AnalyticShape::sphere(Point3::Zero(), 0.3);
  const auto lat = sample_field(Point3::Constant(-0.5), Point3::Constant(0.5), 0.02,
                                [&](const Point3& x) { return -sphere.sdf(x); }, -1.0);
  const auto m = marching_cubes(lat, 0.1);
  for (const auto& v : m.vertices()) EXPECT_NEAR(v.norm(), 0.2, 0.02);
}

TEST(Reconstruct, VerticesLieOnZeroLevel) {
  const auto& r = small_sphere();
  ASSERT_FALSE(r.mesh.empty());
  EXPECT_TRUE(oracle::closed_two_manifold(r.mesh));
  // each vertex is within half a voxel of the zero level, judged by the local slope of the field
  const double h = r.voxel_size;
  const auto z = query_batch(r.grid, demo_decoder(), r.mesh.vertices());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double slope = 0;
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e[a] = h;
      const auto& v = r.mesh.vertices()[i];
      slope = std::max(slope, std::abs(query(r.grid, demo_decoder(), v + e) - query(r.grid, demo_decoder(), v - e)) / (2 * h));
    }
    EXPECT_LE(std::abs(z[i]), 0.5 * h * slope);
  }
  EXPECT_EQ(r.voxel_size, 1.0 / 64);
  EXPECT_LE(r.evaluated_corners, r.dense_corners);
}

TEST(Reconstruct, Deterministic) {
  const auto pts = sample_analytic_surface(AnalyticShape::sphere(Point3::Zero(), 0.3), 565, 4);
  ReconstructConfig cfg;
  cfg.voxel_size = 1.0 / 32;
  cfg.optim.steps = 20;
  cfg.optim.batch_size = 1024;
  cfg.optim.seed = 9;
  const auto a = reconstruct(pts, demo_decoder(), cfg);
  const auto b = reconstruct(pts, demo_decoder(), cfg);
  EXPECT_TRUE(grids_identical(a.grid, b.grid));
  EXPECT_EQ(a.mesh.vertices(), b.mesh.vertices());
  EXPECT_EQ(a.mesh.faces(), b.mesh.faces());
}

TEST(Reconstruct, AutoVoxelSize) {
  OrientedPointCloud pts{{Point3(0, 0, 0), Vec3(0, 0, 1)}, {Point3(0.5, 0.1, 0), Vec3(0, 0, 1)}};
  EXPECT_DOUBLE_EQ(auto_voxel_size(pts), 0.5 / 128);
  pts.push_back({Point3(0, 4, 0), Vec3(0, 0, 1)});
  EXPECT_DOUBLE_EQ(auto_voxel_size(pts), 1.0 / 64);
}

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lig/metrics.hpp"
#include "lig/surface_extraction.hpp"
#include "oracles.hpp"

using namespace lig;

namespace {

OrientedPointCloud random_cloud(std::size_t n, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  std::normal_distribution<double> g(0.0, 1.0);
  OrientedPointCloud out(n);
  for (auto& p : out) {
    p.position = Point3(u(rng), u(rng), u(rng));
    p.normal = Vec3(g(rng), g(rng), g(rng)).normalized();
  }
  return out;
}

}  // namespace

TEST(Metrics, SelfComparison) {
  const auto a = random_cloud(300, 1);
  EXPECT_EQ(chamfer_distance(a, a), 0.0);
  EXPECT_NEAR(normal_alignment(a, a), 1.0, 1e-12);
  EXPECT_EQ(f_score(a, a, 0.01), 1.0);
}

TEST(Metrics, SinglePair) {
  const OrientedPointCloud a{{Point3(0, 0, 0), Vec3(0, 0, 1)}};
  const OrientedPointCloud b{{Point3(1, 0, 0), Vec3(0, 0, -1)}};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 1.0);
  EXPECT_DOUBLE_EQ(normal_alignment(a, b), 1.0);
  EXPECT_EQ(f_score(a, b, 1.0), 0.0);
  EXPECT_EQ(f_score(a, b, 1.0 + 1e-12), 1.0);
}

TEST(Metrics, OrthogonalNormals) {
  const OrientedPointCloud a{{Point3(0, 0, 0), Vec3(0, 0, 1)}, {Point3(1, 0, 0), Vec3(0, 0, 1)}};
  const OrientedPointCloud b{{Point3(0, 0, 0.1), Vec3(1, 0, 0)}, {Point3(1, 0, 0.1), Vec3(0, 1, 0)}};
  EXPECT_NEAR(normal_alignment(a, b), 0.0, 1e-15);
}

TEST(Metrics, MatchBruteForce) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = random_cloud(100 + 80 * s, 10 + s), b = random_cloud(500 - 60 * s, 20 + s, 1.2);
    EXPECT_NEAR(chamfer_distance(a, b), oracle::chamfer(a, b), 1e-9);
    EXPECT_NEAR(normal_alignment(a, b), oracle::normal_alignment(a, b), 1e-9);
    for (double tau : {0.05, 0.1, 0.3}) EXPECT_NEAR(f_score(a, b, tau), oracle::fscore(a, b, tau), 1e-9);
    const auto r = evaluate_samples(a, b, 0.1);
    EXPECT_NEAR(r.chamfer, oracle::chamfer(a, b), 1e-9);
    EXPECT_NEAR(r.fscore, oracle::fscore(a, b, 0.1), 1e-9);
  }
}

TEST(Metrics, SeparatedAndHalfMatched) {
  auto a = random_cloud(50, 3, 0.1);
  auto far = a;
  for (auto& p : far) p.position.x() += 10;
  EXPECT_EQ(f_score(a, far, 0.5), 0.0);
  // half of b sits on a, the other half far away: recall 1 (a -> b), precision 1/2
  OrientedPointCloud b = a;
  b.insert(b.end(), far.begin(), far.end());
  EXPECT_NEAR(f_score(a, b, 0.01), 2 * 0.5 / 1.5, 1e-12);
  EXPECT_NEAR(f_score(b, a, 0.01), 2 * 0.5 / 1.5, 1e-12);
}

TEST(Metrics, MonotoneInTauAndSymmetric) {
  const auto a = random_cloud(200, 4), b = random_cloud(250, 5);
  double prev = 0;
  for (double tau = 0.01; tau < 1.0; tau *= 1.5) {
    const double f = f_score(a, b, tau);
    EXPECT_GE(f, prev);
    prev = f;
    EXPECT_DOUBLE_EQ(f, f_score(b, a, tau));
  }
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), chamfer_distance(b, a));
  EXPECT_DOUBLE_EQ(normal_alignment(a, b), normal_alignment(b, a));
}

TEST(Metrics, EmptyInputsRejected) {
  const auto a = random_cloud(5, 6);
  EXPECT_THROW(chamfer_distance(a, {}), InvalidArgument);
  EXPECT_THROW(f_score({}, a, 0.1), InvalidArgument);
  EXPECT_THROW(evaluate(TriMesh{}, make_box_mesh(Point3::Zero(), Vec3::Ones()), MetricsConfig{}), InvalidArgument);
}

TEST(Metrics, PolygonizedSphereIsClose) {
  const auto sphere = AnalyticShape::sphere(Point3::Zero(), 0.5);
  const double voxel = 1.0 / 64;
  const auto mesh = marching_cubes(sample_field(Point3::Constant(-0.6), Point3::Constant(0.6), voxel,
                                                [&](const Point3& x) { return -sphere.sdf(x); }, -1.0));
  MetricsConfig cfg;
  cfg.samples = 100000;
  cfg.tau = 0.01;
  const auto r = evaluate(mesh, sphere, cfg);
  EXPECT_LE(r.chamfer, std::sqrt(3.0) * voxel);
  EXPECT_GT(r.normal_alignment, 0.99);
  EXPECT_GT(r.fscore, 0.9);
  EXPECT_EQ(r.samples, 100000u);
  const auto same = evaluate(mesh, sphere, cfg);
  EXPECT_EQ(r.chamfer, same.chamfer);
}

TEST(Metrics, ObjectUnitsScaleDistances) {
  const auto box = make_box_mesh(Point3::Zero(), Vec3::Constant(1.0), 2);
  const auto shifted = make_box_mesh(Point3(0.02, 0, 0), Vec3::Constant(1.0), 2);
  MetricsConfig cfg;
  cfg.samples = 5000;
  const auto meters = evaluate(shifted, box, cfg);
  cfg.object_units = true;
  const auto obj = evaluate(shifted, box, cfg);
  // the box is 2 m wide, so one object unit is 0.2 m
  EXPECT_NEAR(obj.chamfer, meters.chamfer / 0.2, 0.01 * meters.chamfer / 0.2);
}

TEST(Metrics, ReportFormats) {
  MetricsReport r;
  r.chamfer = 0.5;
  r.normal_alignment = 0.25;
  r.fscore = 1;
  r.tau = 0.01;
  r.samples = 7;
  r.seed = 3;
  std::ostringstream csv, js;
  write_report_csv(r, csv);
  EXPECT_EQ(csv.str(),
            "metric,value,tau,samples,seed\n"
            "chamfer,0.5,0.01,7,3\n"
            "normal_alignment,0.25,0.01,7,3\n"
            "fscore,1,0.01,7,3\n");
  write_report_jsonl(r, js);
  EXPECT_EQ(js.str(),
            "{\"metric\":\"chamfer\",\"value\":0.5,\"tau\":0.01,\"samples\":7,\"seed\":3}\n"
            "{\"metric\":\"normal_alignment\",\"value\":0.25,\"tau\":0.01,\"samples\":7,\"seed\":3}\n"
            "{\"metric\":\"fscore\",\"value\":1,\"tau\":0.01,\"samples\":7,\"seed\":3}\n");
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <set>
#include <sstream>

#include "lig/geometry.hpp"
#include "lig/latent_grid.hpp"
#include "oracles.hpp"

using namespace lig;

namespace {

DecoderArch small_arch() {
  DecoderArch a;
  a.latent_dim = 6;
  a.hidden = {16, 8};
  return a;
}

std::vector<float> random_latent(int d, std::mt19937_64& rng, float scale = 0.5f) {
  std::normal_distribution<float> g(0.0f, scale);
  std::vector<float> c(static_cast<std::size_t>(d));
  for (float& v : c) v = g(rng);
  return c;
}

/// Grid with every cell of an n^3 block filled with random latents.
LatentGrid block_grid(int n, int d, std::uint64_t seed, const Point3& origin = Point3(0.1, -0.2, 0.3)) {
  LatentGrid g(origin, 0.4, d);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) g.set({i, j, k}, random_latent(d, rng));
  return g;
}

Point3 random_inside(const LatentGrid& g, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, n - 1.0);
  return g.origin() + g.spacing() * Point3(u(rng), u(rng), u(rng));
}

}  // namespace

TEST(Weights, CenterAndCentroid) {
  const LatentGrid g(Point3::Zero(), 1.0, 4);
  const auto at_center = cells_containing(g, g.cell_center({2, 3, 4}));
  EXPECT_EQ(at_center.cells[0], (CellIndex{2, 3, 4}));
  EXPECT_EQ(at_center.weights[0], 1.0);
  for (int c = 1; c < 8; ++c) EXPECT_EQ(at_center.weights[c], 0.0);
  EXPECT_EQ(at_center.local[0], Vec3::Zero());

  const auto mid = cells_containing(g, Point3(0.25, 0.25, 0.25));
  for (int c = 0; c < 8; ++c) {
    EXPECT_DOUBLE_EQ(mid.weights[c], 0.125);
    EXPECT_NEAR(mid.local[c].cwiseAbs().maxCoeff(), 0.5, 1e-15);
  }
}

TEST(Weights, SumToOneAndMatchOracle) {
  const LatentGrid g(Point3(-0.3, 0.7, 1.1), 0.35, 4);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int n = 0; n < 1000; ++n) {
    const Point3 x(u(rng), u(rng), u(rng));
    const auto q = cells_containing(g, x);
    const auto o = oracle::corners(g, x);
    double sum = 0;
    for (int c = 0; c < 8; ++c) {
      sum += q.weights[c];
      EXPECT_GE(q.weights[c], 0.0);
      EXPECT_EQ(q.cells[c], o[c].cell);
      EXPECT_NEAR(q.weights[c], o[c].weight, 1e-12);
      EXPECT_NEAR((q.local[c] - o[c].local).norm(), 0.0, 1e-12);
      EXPECT_LE(q.local[c].cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Query, CenterEqualsDecodeAndEmptyIsExterior) {
  const auto p = DecoderParams::random(small_arch(), 2);
  auto g = block_grid(3, 6, 3);
  const auto slot = g.find({1, 1, 1});
  const double z = query(g, p, g.cell_center({1, 1, 1}));
  EXPECT_FLOAT_EQ(static_cast<float>(z), decode(p, g.latent(static_cast<std::size_t>(slot)), Eigen::Vector3f::Zero()));

  const LatentGrid empty(Point3::Zero(), 0.5, 6);
  EXPECT_EQ(query(empty, p, Point3(0.3, 0.1, 0.2)), -10.0);
  const LatentGrid custom(Point3::Zero(), 0.5, 6, -4.0f);
  EXPECT_EQ(query(custom, p, Point3(0.3, 0.1, 0.2)), -4.0);
}

TEST(Query, MatchesOracleComposition) {
  const auto p = DecoderParams::random(small_arch(), 4);
  const auto g = block_grid(4, 6, 5);
  std::mt19937_64 rng(6);
  std::vector<Point3> xs;
  for (int n = 0; n < 300; ++n) xs.push_back(random_inside(g, 4, rng));
  // partly outside the block so missing cells are exercised
  std::uniform_real_distribution<double> u(-0.5, 2.0);
  for (int n = 0; n < 300; ++n) xs.push_back(Point3(u(rng), u(rng), u(rng)));
  const auto batch = query_batch(g, p, xs);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double want = oracle::query(g, p, xs[n]);
    EXPECT_NEAR(batch[n], want, 1e-5 * (1 + std::abs(want)));
    EXPECT_EQ(batch[n], query(g, p, xs[n]));
  }
}

TEST(Query, GradientMatchesFiniteDifferences) {
  const auto p = DecoderParams::random(small_arch(), 7);
  auto g = block_grid(3, 6, 8);
  std::mt19937_64 rng(9);
  const double h = 1e-3;
  int checked = 0;
  for (int n = 0; n < 40; ++n) {
    const Point3 x = random_inside(g, 3, rng);
    const auto grads = query_gradient(g, p, x);
    std::vector<bool> base;
    oracle::query(g, p, x, &base);
    for (const auto& cg : grads) {
      const auto slot = g.find(cg.cell);
      ASSERT_GE(slot, 0);
      auto lat = g.latent(static_cast<std::size_t>(slot));
      for (int k = 0; k < 6; ++k) {
        const float keep = lat[k];
        lat[k] = static_cast<float>(keep + h);
        const double hp = static_cast<double>(lat[k]) - keep;
        std::vector<bool> sp;
        const double zp = oracle::query(g, p, x, &sp);
        lat[k] = static_cast<float>(keep - h);
        const double hm = keep - static_cast<double>(lat[k]);
        std::vector<bool> sm;
        const double zm = oracle::query(g, p, x, &sm);
        lat[k] = keep;
        if (sp != base || sm != base) continue;
        EXPECT_NEAR(cg.d_latent[k], (zp - zm) / (hp + hm), 1e-4);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Query, GradientZeroForWeightlessAndMissingCells) {
  const auto p = DecoderParams::random(small_arch(), 10);
  auto g = block_grid(3, 6, 11);
  const auto at_center = query_gradient(g, p, g.cell_center({1, 1, 1}));
  EXPECT_GT(at_center[0].d_latent.norm(), 0.0f);
  for (int c = 1; c < 8; ++c) EXPECT_EQ(at_center[c].d_latent.norm(), 0.0f);
  const auto outside = query_gradient(g, p, g.cell_center({2, 2, 2}) + Point3::Constant(0.05));
  for (const auto& cg : outside) {
    EXPECT_EQ(cg.stored, g.find(cg.cell) >= 0);
    if (!cg.stored) EXPECT_EQ(cg.d_latent.norm(), 0.0f);
  }
}

TEST(Query, GradientLinearInUpstream) {
  const auto p = DecoderParams::random(small_arch(), 12);
  auto g = block_grid(3, 6, 13);
  const Point3 x = g.origin() + Point3(0.31, 0.22, 0.17);
  const auto a = query_gradient(g, p, x, 1.0), b = query_gradient(g, p, x, 3.0);
  for (int c = 0; c < 8; ++c) EXPECT_LE((b[c].d_latent - 3.0f * a[c].d_latent).norm(), 1e-5f * (1 + a[c].d_latent.norm()));
}

TEST(Query, ContinuousAcrossCellBoundaries) {
  const auto p = DecoderParams::random(small_arch(), 14);
  auto g = block_grid(4, 6, 15);
  g.set({7, 7, 7}, std::vector<float>(6, 0.3f));
  std::mt19937_64 rng(16);
  for (int n = 0; n < 200; ++n) {
    Point3 x = random_inside(g, 4, rng);
    const int axis = static_cast<int>(n % 3);
    // snap to a lattice plane
    x[axis] = g.origin()[axis] + g.spacing() * std::round((x[axis] - g.origin()[axis]) / g.spacing());
    Vec3 e = Vec3::Zero();
    e[axis] = 1e-7;
    EXPECT_NEAR(query(g, p, x - e), query(g, p, x + e), 1e-4);
  }
  // the border between stored and missing cells is continuous too
  const Point3 border = g.cell_center({3, 1, 1}) + Point3(0, 0.01, 0.02);
  const Vec3 e(1e-7, 0, 0);
  EXPECT_NEAR(query(g, p, border - e), query(g, p, border + e), 1e-4);
}

TEST(Query, IndependentOfInsertionOrder) {
  const auto p = DecoderParams::random(small_arch(), 17);
  const auto a = block_grid(3, 6, 18);
  LatentGrid b(a.origin(), a.part_scale(), 6);
  auto order = a.sorted_slots();
  std::reverse(order.begin(), order.end());
  std::mt19937_64 shuffle(3);
  std::shuffle(order.begin(), order.end(), shuffle);
  for (auto s : order) b.set(a.cell(s), a.latent(s));
  EXPECT_TRUE(grids_identical(a, b));
  std::mt19937_64 rng(19);
  for (int n = 0; n < 100; ++n) {
    const Point3 x = random_inside(a, 3, rng);
    EXPECT_EQ(query(a, p, x), query(b, p, x));
  }
}

TEST(Allocation, SinglePointGetsEightCells) {
  const std::vector<Point3> pts{Point3(0.3, -0.2, 1.0)};
  const auto g = allocate_from_points(pts, 0.5, 4, 1);
  EXPECT_EQ(g.size(), 8u);
  EXPECT_NEAR((g.origin() - Point3(0.05, -0.45, 0.75)).norm(), 0.0, 1e-15);
  for (const auto& c : oracle::corners(g, pts[0])) EXPECT_GE(g.find(c.cell), 0);
  EXPECT_EQ(allocate_from_points(std::vector<Point3>{pts[0], pts[0], pts[0]}, 0.5, 4, 1).size(), 8u);
  EXPECT_THROW(allocate_from_points(std::vector<Point3>{}, 0.5, 4, 1), InvalidArgument);
}

TEST(Allocation, CoversEveryPointAndInitStd) {
  const auto cloud = sample_analytic_surface(AnalyticShape::sphere(Point3::Zero(), 1.0), 20000, 5);
  const auto pts = oracle::positions(cloud);
  const auto g = allocate_from_points(pts, 0.1, 32, 6);
  std::set<CellIndex> want;
  for (const auto& p : pts)
    for (const auto& c : oracle::corners(g, p)) want.insert(c.cell);
  EXPECT_EQ(g.size(), want.size());
  for (const auto& c : want) EXPECT_GE(g.find(c), 0);
  const auto v = g.latent_data();
  ASSERT_GE(v.size(), 100000u);
  double s = 0, s2 = 0;
  for (float x : v) {
    s += x;
    s2 += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(v.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_GE(sd, 0.009);
  EXPECT_LE(sd, 0.011);
}

TEST(GridFile, RoundTrip) {
  auto g = block_grid(3, 5, 20, Point3(0.125, -3.5, 2.0));
  g.set({-4, 9, 100}, std::vector<float>(5, -1.5f));
  std::stringstream ss;
  save_grid(g, ss);
  const auto back = load_grid(ss, "mem", 5);
  EXPECT_TRUE(grids_identical(g, back));
  LatentGrid other(Point3::Zero(), 0.5, 5, -3.0f);
  std::stringstream s2;
  save_grid(other, s2);
  const auto o2 = load_grid(s2);
  EXPECT_EQ(o2.exterior_logit(), -3.0f);
  EXPECT_TRUE(o2.empty());
}

TEST(GridFile, Errors) {
  const auto g = block_grid(2, 5, 21);
  std::stringstream ss;
  save_grid(g, ss);
  const std::string bytes = ss.str();
  {
    std::stringstream in(bytes);
    EXPECT_THROW(load_grid(in, "mem", 32), FormatError);
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 2));
    EXPECT_THROW(load_grid(in), FormatError);
  }
  {
    std::string v = bytes;
    v[4] = 9;
    std::stringstream in(v);
    EXPECT_THROW(load_grid(in), FormatError);
  }
  {
    // duplicate the last record and bump the count
    const std::size_t record = 12 + 5 * 4;
    std::string v = bytes + bytes.substr(bytes.size() - record);
    const std::size_t count_at = 4 + 4 + 8 + 24 + 8 + 4;
    std::uint64_t count = 0;
    std::memcpy(&count, v.data() + count_at, 8);
    ++count;
    std::memcpy(v.data() + count_at, &count, 8);
    std::stringstream in(v);
    EXPECT_THROW(load_grid(in), FormatError);
  }
}

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lig/grid_optimizer.hpp"
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

OrientedPointCloud plane_points(double half, double density, std::uint64_t seed) {
  return sample_surface(make_plane_mesh(half, half, 0.0, 1), density, seed);
}

}  // namespace

TEST(SignSamples, LabelsFollowOffsetSign) {
  const OrientedPointCloud pts{{Point3(0, 0, 0), Vec3(0, 0, 1)}};
  const auto s = make_sign_samples(pts, 500, 0.01, 1);
  ASSERT_EQ(s.size(), 500u);
  for (const auto& x : s) {
    EXPECT_EQ(x.position.x(), 0.0);
    EXPECT_NE(x.position.z(), 0.0);
    EXPECT_EQ(x.label, x.position.z() < 0 ? 1 : 0);
  }
  // a sample 5 mm along the normal is outside
  const OrientedPointCloud tilted{{Point3(1, 2, 3), Vec3(0, 1, 0)}};
  for (const auto& x : make_sign_samples(tilted, 200, 0.01, 2))
    if (std::abs(x.position.y() - 2.005) < 1e-3) EXPECT_EQ(x.label, 0);
}

TEST(SignSamples, CountAndOffsetDistribution) {
  const auto pts = plane_points(0.5, 100, 3);
  ASSERT_EQ(pts.size(), 100u);
  const auto s = make_sign_samples(pts, 10, 0.01, 4);
  ASSERT_EQ(s.size(), 1000u);
  std::vector<double> mag;
  for (const auto& x : s) mag.push_back(std::abs(x.position.z()));
  const double d = oracle::ks_statistic(mag, [](double v) { return std::erf(v / (0.01 * std::sqrt(2.0))); });
  EXPECT_GT(oracle::ks_pvalue(d, mag.size()), 0.01);
}

TEST(SignSamples, RejectsNonUnitNormals) {
  const OrientedPointCloud pts{{Point3(0, 0, 0), Vec3(0, 0, 2)}};
  EXPECT_THROW(make_sign_samples(pts, 10, 0.01, 1), InvalidArgument);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  const auto p = DecoderParams::random(small_arch(), 5);
  const auto pts = plane_points(0.3, 200, 6);
  auto grid = allocate_from_points(oracle::positions(pts), 0.25, 6, 7, 0.3);
  const auto batch = make_sign_samples(pts, 2, 0.02, 8);
  const double lambda = 0.5;
  std::vector<float> grad(grid.latent_data().size());
  const double f = grid_objective(grid, p, batch, lambda, grad);
  EXPECT_NEAR(f, oracle::objective(grid, p, batch, lambda), 1e-5);
  std::vector<bool> base;
  oracle::objective(grid, p, batch, lambda, &base);
  std::mt19937_64 rng(9);
  auto data = grid.latent_data();
  int checked = 0;
  for (int n = 0; n < 60; ++n) {
    const std::size_t i = rng() % data.size();
    const float keep = data[i];
    const double h = 1e-3;
    data[i] = static_cast<float>(keep + h);
    const double hp = static_cast<double>(data[i]) - keep;
    std::vector<bool> sp, sm;
    const double fp = oracle::objective(grid, p, batch, lambda, &sp);
    data[i] = static_cast<float>(keep - h);
    const double hm = keep - static_cast<double>(data[i]);
    const double fm = oracle::objective(grid, p, batch, lambda, &sm);
    data[i] = keep;
    if (sp != base || sm != base) continue;
    EXPECT_NEAR(grad[i], (fp - fm) / (hp + hm), 1e-3) << "latent entry " << i;
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(Optimize, ExteriorOnlySamplesDescend) {
  const auto p = DecoderParams::random(small_arch(), 10);
  const auto pts = plane_points(0.3, 100, 11);
  auto grid = allocate_from_points(oracle::positions(pts), 0.25, 6, 12);
  std::vector<SignedSample> outside;
  for (const auto& s : make_sign_samples(pts, 5, 0.02, 13)) outside.push_back({s.position, 0});
  OptimConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 256;
  cfg.learning_rate = 1e-2;
  const auto res = optimize(grid, p, outside, cfg);
  ASSERT_EQ(res.trace.size(), 200u);
  EXPECT_LT(grid_objective(res.grid, p, outside, cfg.latent_penalty), grid_objective(grid, p, outside, cfg.latent_penalty));
  EXPECT_LT(res.trace.back().loss, res.trace.front().loss);
}

TEST(Optimize, ZeroPenaltyLeavesUntouchedCellsBitwise) {
  const auto p = DecoderParams::random(small_arch(), 14);
  const auto pts = plane_points(0.2, 100, 15);
  auto grid = allocate_from_points(oracle::positions(pts), 0.25, 6, 16);
  std::vector<float> far(6, 0.7f);
  grid.set({40, 40, 40}, far);
  OptimConfig cfg;
  cfg.steps = 50;
  cfg.batch_size = 128;
  cfg.latent_penalty = 0;
  const auto res = optimize(grid, p, make_sign_samples(pts, 2, 0.01, 17), cfg);
  const auto slot = res.grid.find({40, 40, 40});
  ASSERT_GE(slot, 0);
  const auto after = res.grid.latent(static_cast<std::size_t>(slot));
  EXPECT_EQ(std::vector<float>(after.begin(), after.end()), far);
}

TEST(Optimize, DeterministicAcrossRunsAndThreads) {
  const auto p = DecoderParams::random(small_arch(), 18);
  const auto pts = plane_points(0.4, 300, 19);
  const auto grid = allocate_from_points(oracle::positions(pts), 0.25, 6, 20);
  const auto samples = make_sign_samples(pts, 10, 0.01, 21);
  OptimConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 5000;
  cfg.seed = 3;
  const auto a = optimize(grid, p, samples, cfg);
  const auto b = optimize(grid, p, samples, cfg);
  EXPECT_TRUE(grids_identical(a.grid, b.grid));
  set_thread_count(3);
  const auto c = optimize(grid, p, samples, cfg);
  set_thread_count(0);
  EXPECT_TRUE(grids_identical(a.grid, c.grid));
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].loss, c.trace[i].loss);
  std::ostringstream csv;
  write_trace_csv(a.trace, csv);
  EXPECT_EQ(csv.str().substr(0, 19), "step,loss,accuracy\n");
}

TEST(Optimize, RejectsNonFiniteLoss) {
  const auto p = DecoderParams::random(small_arch(), 22);
  const auto pts = plane_points(0.2, 100, 23);
  auto grid = allocate_from_points(oracle::positions(pts), 0.25, 6, 24);
  grid.latent_data()[0] = std::numeric_limits<float>::quiet_NaN();
  OptimConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 100000;
  EXPECT_THROW(optimize(grid, p, make_sign_samples(pts, 10, 0.01, 25), cfg), NumericalError);
}

TEST(Optimize, SingleCubeFitsExactly) {
  const auto& p = demo_decoder();
  LatentGrid grid(Point3::Zero(), 0.5, p.latent_dim());
  std::mt19937_64 rng(26);
  std::normal_distribution<float> g(0.0f, 0.01f);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        std::vector<float> c(static_cast<std::size_t>(p.latent_dim()));
        for (float& v : c) v = g(rng);
        grid.set({i, j, k}, c);
      }
  // points inside the one fully covered cube, labelled by a plane with a margin
  std::uniform_real_distribution<double> u(0.0, 0.25);
  std::vector<SignedSample> samples;
  while (samples.size() < 200) {
    const Point3 x(u(rng), u(rng), u(rng));
    const double d = x.z() - 0.125;
    if (std::abs(d) < 0.01) continue;
    samples.push_back({x, static_cast<std::uint8_t>(d < 0 ? 1 : 0)});
  }
  OptimConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 200;
  cfg.latent_penalty = 0;
  cfg.learning_rate = 1e-2;
  const auto res = optimize(grid, p, samples, cfg);
  EXPECT_EQ(grid_accuracy(res.grid, p, samples), 1.0);
}

TEST(Optimize, PlaneSceneGeneralizesToFreshSamples) {
  const auto& p = demo_decoder();
  const auto pts = plane_points(0.35, 500, 27);
  const auto grid = allocate_from_points(oracle::positions(pts), 0.35, p.latent_dim(), 28);
  OptimConfig cfg;
  cfg.steps = 500;
  cfg.batch_size = 2048;
  const auto train = make_sign_samples(pts, 10, 0.01, 29);
  const auto res = optimize(grid, p, train, cfg);
  const auto held_out = make_sign_samples(plane_points(0.35, 500, 30), 10, 0.01, 31);
  const double fit = grid_accuracy(res.grid, p, train), fresh = grid_accuracy(res.grid, p, held_out);
  EXPECT_GE(fresh, 0.94);
  EXPECT_LE(fit - fresh, 0.03);
}

TEST(PartScale, AnchorsAndInterpolation) {
  EXPECT_EQ(choose_part_scale(20), 0.75);
  EXPECT_EQ(choose_part_scale(100), 0.50);
  EXPECT_EQ(choose_part_scale(500), 0.35);
  EXPECT_EQ(choose_part_scale(1000), 0.25);
  EXPECT_EQ(choose_part_scale(300), 0.35);
  EXPECT_EQ(choose_part_scale(1), 0.75);
  EXPECT_EQ(choose_part_scale(1e6), 0.25);
  EXPECT_EQ(choose_part_scale(200), 0.50);
  EXPECT_EQ(choose_part_scale(240), 0.35);
  EXPECT_THROW(choose_part_scale(0), InvalidArgument);
  EXPECT_THROW(choose_part_scale(-5), InvalidArgument);
}

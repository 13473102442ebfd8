#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lig/part_corpus.hpp"
#include "oracles.hpp"

using namespace lig;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("lig_corpus_" + name)).string();
}

Point3 to_world(const CorpusPart& part, const SdfGrid& grid, const Point3& local) {
  const auto [lo, hi] = part.crop.bounds(grid);
  return 0.5 * (lo + hi) + local.cwiseProduct(0.5 * (hi - lo));
}

}  // namespace

TEST(SdfGridTest, SphereValuesAtCenterAndCorner) {
  const auto g = build_sdf_grid(AnalyticShape::sphere(Point3::Constant(0.5), 0.3), 64);
  const double diag = std::sqrt(3.0) / 64;
  EXPECT_NEAR(g.at(31, 31, 31), -0.3, diag);
  EXPECT_NEAR(g.at(32, 32, 32), -0.3, diag);
  EXPECT_GT(g.at(0, 0, 0), 0.0);
  EXPECT_GT(g.at(63, 0, 63), 0.0);
}

TEST(SdfGridTest, ResamplingErrorBoundedByHalfVoxelDiagonal) {
  const auto shape = AnalyticShape::unite(
      {AnalyticShape::sphere(Point3(0.4, 0.5, 0.5), 0.2), AnalyticShape::box(Point3(0.6, 0.5, 0.4), Vec3(0.1, 0.3, 0.2))});
  const auto g = build_sdf_grid(shape, 32);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 2000; ++n) {
    const Point3 p(u(rng), u(rng), u(rng));
    const int i = std::min(31, static_cast<int>(p.x() * 32)), j = std::min(31, static_cast<int>(p.y() * 32)),
              k = std::min(31, static_cast<int>(p.z() * 32));
    EXPECT_LE(std::abs(g.at(i, j, k) - shape.sdf(p)), 0.5 * std::sqrt(3.0) / 32 + 1e-12);
  }
}

TEST(TruncateNormalize, Examples) {
  EXPECT_DOUBLE_EQ(truncate_normalize(0.0), 0.5);
  EXPECT_DOUBLE_EQ(truncate_normalize(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(truncate_normalize(1.0), 1.0);
  EXPECT_DOUBLE_EQ(truncate_normalize(kTsdfTruncation), 1.0);
  EXPECT_DOUBLE_EQ(truncate_normalize(-kTsdfTruncation / 2), 0.25);
}

TEST(ExtractParts, ConstantGridHasNoParts) {
  SdfGrid g;
  g.resolution = 64;
  g.voxel_size = 1.0 / 64;
  g.values.assign(64 * 64 * 64, 1.0);
  EXPECT_TRUE(extract_parts(g).empty());
  EXPECT_EQ(crop_offsets(64, 32, 16).size(), 27u);
}

TEST(ExtractParts, CountMatchesWindowScan) {
  Rng rng(21);
  for (int s = 0; s < 6; ++s) {
    const auto shape = random_training_shape(rng);
    const auto g = build_sdf_grid(shape, 64);
    EXPECT_EQ(extract_parts(g, 32, 16).size(), oracle::window_scan_count(g, 32, 16));
    EXPECT_EQ(extract_parts(g, 16, 8).size(), oracle::window_scan_count(g, 16, 8));
  }
}

TEST(ExtractParts, CropCopiesNormalizedValues) {
  const auto g = build_sdf_grid(AnalyticShape::sphere(Point3::Constant(0.5), 0.3), 64);
  const auto parts = extract_parts(g);
  ASSERT_FALSE(parts.empty());
  const auto& p = parts.back();
  const int w = p.window;
  for (int k = 0; k < w; k += 5)
    for (int j = 0; j < w; j += 7)
      for (int i = 0; i < w; i += 3)
        EXPECT_EQ(p.tsdf[(static_cast<std::size_t>(k) * w + j) * w + i],
                  static_cast<float>(truncate_normalize(g.at(p.offset[0] + i, p.offset[1] + j, p.offset[2] + k))));
}

TEST(ShapeParts, LabelsFollowFieldSign) {
  const auto shape = AnalyticShape::box(Point3(0.5, 0.45, 0.55), Vec3(0.3, 0.2, 0.25));
  CorpusConfig cfg;
  cfg.samples_per_part = 512;
  const auto parts = make_shape_parts(shape, cfg, 3);
  const auto g = build_sdf_grid(shape, cfg.resolution);
  ASSERT_EQ(parts.size(), oracle::window_scan_count(g, 32, 16));
  std::size_t checked = 0;
  for (const auto& part : parts) {
    ASSERT_EQ(part.samples.size(), 512u);
    for (const auto& s : part.samples) {
      EXPECT_LE(s.position.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
      const double d = shape.sdf(to_world(part, g, s.position));
      if (std::abs(d) < 1e-9) continue;
      EXPECT_EQ(s.label, d < 0 ? 1 : 0);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(ShapeParts, UniformSamplesMatchInteriorVolume) {
  const auto sphere = AnalyticShape::sphere(Point3::Constant(0.5), 0.3);
  SignedSamplingOptions opt;
  opt.uniform_fraction = 1.0;
  const auto samples = sample_signed_points([&](const Point3& p) { return sphere.sdf(p); }, Point3::Zero(),
                                            Point3::Ones(), 20000, opt, 8);
  double inside = 0;
  for (const auto& s : samples) inside += s.label;
  const double expected = 4.0 / 3.0 * M_PI * 0.027;
  EXPECT_NEAR(inside / 20000.0, expected, 0.02);
}

TEST(ShapeParts, NearSurfaceOffsetsAreCentered) {
  // near-surface samples fall on both sides of the surface about equally
  const auto plane = AnalyticShape::plane(Point3(0, 0, 0.5), Vec3(0, 0, 1));
  SignedSamplingOptions opt;
  opt.sigma = 0.05;
  const auto samples =
      sample_signed_points([&](const Point3& p) { return plane.sdf(p); }, Point3::Zero(), Point3::Ones(), 4000, opt, 2);
  std::vector<double> d;
  double inside = 0;
  for (const auto& s : samples) {
    d.push_back(plane.sdf(s.position));
    inside += s.label;
  }
  EXPECT_NEAR(inside / 4000.0, 0.5, 0.03);
  const double ks = oracle::ks_statistic(d, [](double x) { return 0.5 * std::erfc(-x / (0.05 * std::sqrt(2.0))); });
  EXPECT_GT(oracle::ks_pvalue(ks, d.size()), 0.01);
}

TEST(ShapeParts, Deterministic) {
  Rng rng(9);
  const auto shape = random_training_shape(rng);
  CorpusConfig cfg;
  cfg.samples_per_part = 64;
  const auto a = make_shape_parts(shape, cfg, 17), b = make_shape_parts(shape, cfg, 17);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].crop.offset, b[i].crop.offset);
    EXPECT_EQ(a[i].crop.tsdf, b[i].crop.tsdf);
    for (std::size_t s = 0; s < a[i].samples.size(); ++s) {
      EXPECT_EQ(a[i].samples[s].position, b[i].samples[s].position);
      EXPECT_EQ(a[i].samples[s].label, b[i].samples[s].label);
    }
  }
}

TEST(CorpusFile, RoundTrip) {
  CorpusConfig cfg;
  cfg.samples_per_part = 32;
  const auto parts = make_shape_parts(AnalyticShape::sphere(Point3::Constant(0.5), 0.25), cfg, 1);
  const auto path = temp_path("rt.ligc");
  save_corpus_parts(parts, cfg.window, path);
  const auto back = load_corpus_parts(path);
  ASSERT_EQ(back.size(), parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    EXPECT_EQ(back[i].crop.window, cfg.window);
    EXPECT_EQ(back[i].crop.offset, parts[i].crop.offset);
    EXPECT_EQ(back[i].crop.tsdf, parts[i].crop.tsdf);
    ASSERT_EQ(back[i].samples.size(), parts[i].samples.size());
    for (std::size_t s = 0; s < parts[i].samples.size(); ++s) {
      EXPECT_EQ(back[i].samples[s].position, parts[i].samples[s].position.cast<float>().cast<double>());
      EXPECT_EQ(back[i].samples[s].label, parts[i].samples[s].label);
    }
  }
  std::filesystem::remove(path);
}

TEST(CorpusFile, RejectsBadInput) {
  const auto path = temp_path("bad.ligc");
  {
    std::ofstream os(path, std::ios::binary);
    os << "LIGX0000";
  }
  EXPECT_THROW(load_corpus_parts(path), FormatError);
  CorpusConfig cfg;
  cfg.samples_per_part = 8;
  save_corpus_parts(make_shape_parts(AnalyticShape::sphere(Point3::Constant(0.5), 0.25), cfg, 1), cfg.window, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(load_corpus_parts(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_corpus_parts(path), IoError);
}

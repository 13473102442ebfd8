#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "lig/mesh_io.hpp"

using namespace lig;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("lig_io_" + name)).string();
}

TriMesh odd_mesh() {
  // coordinates that do not survive a short decimal print
  return make_box_mesh(Point3(0.1, 1.0 / 3.0, -2.0 / 7.0), Vec3(0.3, std::sqrt(2.0) / 10, 0.2), 2);
}

}  // namespace

TEST(Obj, RoundTripExact) {
  const auto m = odd_mesh();
  std::stringstream ss;
  write_obj(m, ss);
  const auto back = read_obj(ss);
  EXPECT_EQ(back.vertices(), m.vertices());
  EXPECT_EQ(back.faces(), m.faces());
}

TEST(Obj, PolygonsNegativeIndicesAndAttributes) {
  std::stringstream ss(
      "# quad\n"
      "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
      "vn 0 0 1\nvt 0 0\n"
      "f 1/1/1 2/1/1 3/1/1 4/1/1\n"
      "f -4 -2 -1\n");
  const auto m = read_obj(ss);
  ASSERT_EQ(m.num_faces(), 3u);
  EXPECT_EQ(m.faces()[0], (Face{0, 1, 2}));
  EXPECT_EQ(m.faces()[1], (Face{0, 2, 3}));
  EXPECT_EQ(m.faces()[2], (Face{0, 2, 3}));
}

TEST(Obj, Errors) {
  std::stringstream bad_index("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  EXPECT_THROW(read_obj(bad_index), FormatError);
  std::stringstream bad_vertex("v 0 zero 0\n");
  EXPECT_THROW(read_obj(bad_vertex), FormatError);
}

TEST(Ply, MeshRoundTripExact) {
  const auto m = odd_mesh();
  std::stringstream ss;
  write_ply(m, ss);
  const auto back = read_ply_mesh(ss);
  EXPECT_EQ(back.vertices(), m.vertices());
  EXPECT_EQ(back.faces(), m.faces());
}

TEST(Ply, PointsBinaryAndAscii) {
  const auto pts = sample_surface(odd_mesh(), 200, 3);
  for (bool binary : {true, false}) {
    std::stringstream ss;
    write_ply_points(pts, ss, binary);
    const auto back = read_ply_points(ss);
    ASSERT_EQ(back.size(), pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_EQ(back[i].position, pts[i].position);
      EXPECT_EQ(back[i].normal, pts[i].normal);
    }
  }
}

TEST(Ply, ReadsFloatAsciiWithExtraProperties) {
  std::stringstream ss(
      "ply\nformat ascii 1.0\ncomment scanner output\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\nproperty uchar red\n"
      "property float nx\nproperty float ny\nproperty float nz\nend_header\n"
      "0 0 0 255 0 0 1\n1 2 3 12 1 0 0\n");
  const auto pts = read_ply_points(ss);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1].position, Point3(1, 2, 3));
  EXPECT_EQ(pts[1].normal, Vec3(1, 0, 0));
}

TEST(Ply, Errors) {
  std::stringstream no_normals(
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
      "0 0 0\n");
  EXPECT_THROW(read_ply_points(no_normals), FormatError);
  std::stringstream not_ply("obj\n");
  EXPECT_THROW(read_ply_mesh(not_ply), FormatError);
  std::stringstream big_endian("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n");
  EXPECT_THROW(read_ply_mesh(big_endian), FormatError);
  std::stringstream truncated;
  write_ply(odd_mesh(), truncated);
  std::stringstream cut(truncated.str().substr(0, truncated.str().size() - 10));
  EXPECT_THROW(read_ply_mesh(cut), FormatError);
}

TEST(Files, DispatchByExtension) {
  const auto m = odd_mesh();
  for (const char* ext : {".obj", ".ply", ".PLY"}) {
    const auto path = temp_path(std::string("mesh") + ext);
    save_mesh(m, path);
    const auto back = load_mesh(path);
    EXPECT_EQ(back.faces(), m.faces());
    std::filesystem::remove(path);
  }
  EXPECT_THROW(save_mesh(m, temp_path("mesh.stl")), FormatError);
  EXPECT_THROW(load_mesh(temp_path("missing.obj")), IoError);
  const auto pts = sample_surface(m, 50, 1);
  const auto path = temp_path("pts.ply");
  save_points(pts, path);
  EXPECT_EQ(load_points(path).size(), pts.size());
  std::filesystem::remove(path);
}

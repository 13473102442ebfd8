// Writes the small demo scene: a 2 m x 2 m floor with a box hovering above it.
//   make_demo_scene <points.ply> <target.obj>
#include <cstdio>

#include "lig/lig.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: make_demo_scene <points.ply> <target.obj>\n");
    return 1;
  }
  const auto floor = lig::make_plane_mesh(1.0, 1.0, 0.0, 8);
  const auto box = lig::make_box_mesh(lig::Point3(-0.35, -0.3, 0.45), lig::Vec3(0.3, 0.3, 0.3), 4);
  const auto scene = lig::merge_meshes({floor, box});
  const auto points = lig::sample_surface(scene, 500.0, 2024);
  lig::save_points(points, argv[1]);
  lig::save_mesh(scene, argv[2]);
  std::printf("%zu points, area %.3f m^2\n", points.size(), scene.total_area());
  return 0;
}

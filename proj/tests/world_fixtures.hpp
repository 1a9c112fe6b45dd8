#pragma once

#include "skyloc/database.hpp"
#include "skyloc/terrain.hpp"

#include <filesystem>
#include <numbers>
#include <string>
#include <unistd.h>

namespace skyloc::testing {

/// A 2 x 2 x 1 x 4 x 1 grid (16 views) over a small seeded terrain, seen by a
/// 320 x 240 camera. Large enough for end-to-end localization, cheap enough to
/// build in every test process.
struct SmallWorld {
  Terrain terrain;
  GridSpec grid;
  CameraModel camera;
  Codebook codebook;
};

inline const SmallWorld &small_world() {
  static const SmallWorld world = [] {
    constexpr double deg = std::numbers::pi / 180.0;
    SmallWorld w;
    TerrainOptions opts;
    opts.origin = LocalPoint(-390, -390, 0);
    opts.texel_size = 0.25;
    w.terrain = generate_terrain(21, 800, 800, 2.0, opts);
    w.grid.area = {0, 0, 20, 20};
    w.grid.spacing_xy = 10;
    w.grid.elevations = {70};
    w.grid.headings = 4;
    w.grid.pitches = {45 * deg};
    w.camera = camera_from_fov(320, 240, 84 * deg);
    w.codebook = train_codebook(w.terrain, w.grid, w.camera, 16, 1, 16);
    return w;
  }();
  return world;
}

/// Fresh per-process scratch directory.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("skyloc_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline DescriptorDatabase build_small_db(const std::filesystem::path &dir, int threads = 1,
                                         BuildReport *report = nullptr) {
  const SmallWorld &w = small_world();
  BuildOptions opts;
  opts.threads = threads;
  opts.force = true;
  LocalFrame frame;
  frame.origin = {46.5, 7.25, 500.0};
  return build_database(w.terrain, w.grid, w.camera, frame, w.codebook, dir, opts, report);
}

}  // namespace skyloc::testing

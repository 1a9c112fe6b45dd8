#pragma once

#include "skyloc/geodesy.hpp"
#include "skyloc/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>

namespace skyloc {

/// Textured heightfield. Height sample (row j, col i) sits at
/// (origin.x + i * cell_size, origin.y + j * cell_size); the texture covers the
/// same extent with its first row along the northern edge, like a map.
struct Terrain {
  Raster<float> heights;
  RgbImage texture;
  double cell_size = 1.0;
  /// South-west grid corner; z is added to every stored height.
  LocalPoint origin = LocalPoint::Zero();

  int grid_width() const { return static_cast<int>(heights.cols()); }
  int grid_height() const { return static_cast<int>(heights.rows()); }
  double extent_x() const { return (grid_width() - 1) * cell_size; }
  double extent_y() const { return (grid_height() - 1) * cell_size; }
  double min_x() const { return origin.x(); }
  double min_y() const { return origin.y(); }
  double max_x() const { return origin.x() + extent_x(); }
  double max_y() const { return origin.y() + extent_y(); }
  bool contains(double x, double y) const { return x >= min_x() && x <= max_x() && y >= min_y() && y <= max_y(); }

  /// Height range including the vertical origin offset.
  float min_height() const { return static_cast<float>(heights.minCoeff() + origin.z()); }
  float max_height() const { return static_cast<float>(heights.maxCoeff() + origin.z()); }

  friend bool operator==(const Terrain &a, const Terrain &b) {
    return a.cell_size == b.cell_size && a.origin == b.origin && a.heights.rows() == b.heights.rows() &&
           a.heights.cols() == b.heights.cols() && (a.heights == b.heights).all() && a.texture == b.texture;
  }
};

struct TerrainOptions {
  /// South-west corner; by default the terrain is centered on the frame origin.
  std::optional<LocalPoint> origin;
  double texel_size = 0.25;
  /// Peak-to-peak height variation, meters.
  double relief = 8.0;
};

/// Seeded synthetic terrain: smooth rolling heights, a field/road/building
/// texture with both uniform and high-detail areas. Deterministic per seed.
Terrain generate_terrain(std::uint64_t seed, double extent_x, double extent_y, double cell_size,
                         const TerrainOptions &options = {});

/// Constant-height terrain with a coarse checker texture, mostly for tests.
Terrain flat_terrain(double extent_x, double extent_y, double cell_size, double height = 0.0,
                     double texel_size = 1.0);

/// Bilinear height; throws std::out_of_range outside the grid.
double sample_height(const Terrain &terrain, double x, double y);

/// Bilinear height without bounds checks (x, y must be inside the grid).
inline double sample_height_unchecked(const Terrain &t, double x, double y) {
  const double gx = (x - t.origin.x()) / t.cell_size;
  const double gy = (y - t.origin.y()) / t.cell_size;
  const int i0 = std::min(static_cast<int>(gx), t.grid_width() - 2);
  const int j0 = std::min(static_cast<int>(gy), t.grid_height() - 2);
  const double a = gx - i0, b = gy - j0;
  const float *row0 = t.heights.data() + static_cast<std::ptrdiff_t>(j0) * t.grid_width() + i0;
  const float *row1 = row0 + t.grid_width();
  return t.origin.z() + (1 - b) * ((1 - a) * row0[0] + a * row0[1]) + b * ((1 - a) * row1[0] + a * row1[1]);
}

/// Diffuse surface color at (x, y): a bilinear texture lookup that depends on
/// the ground position only.
std::array<float, 3> surface_color(const Terrain &terrain, double x, double y);

/// Heightmap as "SLTR" binary, texture as a PPM next to it (`.ppm` extension).
void write_terrain(const std::filesystem::path &heightmap_path, const Terrain &terrain);
Terrain read_terrain(const std::filesystem::path &heightmap_path);
std::filesystem::path texture_path_for(const std::filesystem::path &heightmap_path);

}  // namespace skyloc

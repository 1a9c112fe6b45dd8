#pragma once

#include "skyloc/camera.hpp"
#include "skyloc/raster.hpp"
#include "skyloc/terrain.hpp"

#include <array>
#include <cstdint>

namespace skyloc {

struct RenderedView {
  RgbImage color;
  DepthMap depth;
  PoseSE3 pose;
  CameraModel camera;
};

struct RenderOptions {
  /// Rays longer than this (meters along the ray) count as no hit.
  double max_range = 1000.0;
  std::array<std::uint8_t, 3> sky_color{150, 170, 200};
  /// Upper limit on root-polishing steps once the march brackets the surface.
  int refinements = 16;
};

/// Ideal (undistorted) raycast of the terrain. Each pixel marches its ray
/// until it crosses the bilinear heightfield, skipping regions that lie
/// wholly below the ray and stepping at least half a grid cell elsewhere,
/// then polishes the crossing to about 1e-7 m in height. Depth is the camera-frame Z of the hit; color is the surface
/// texture at the hit with no lighting. Throws std::invalid_argument when the
/// camera sits at or below the terrain surface.
RenderedView render(const Terrain &terrain, const PoseSE3 &pose, const CameraModel &camera,
                    const RenderOptions &options = {});

/// Fraction of pixels with no terrain hit.
double sky_fraction(const DepthMap &depth);

}  // namespace skyloc

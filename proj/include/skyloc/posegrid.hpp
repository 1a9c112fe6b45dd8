#pragma once

#include "skyloc/camera.hpp"

#include <utility>
#include <vector>

namespace skyloc {

/// Axis-aligned rectangle in the local frame, meters.
struct Area {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  friend bool operator==(const Area &, const Area &) = default;
};

/// Quantized pose grid: half-open sampling of the area at `spacing_xy`,
/// crossed with elevations, uniformly spaced headings and pitches (radians).
struct GridSpec {
  Area area;
  double spacing_xy = 10.0;
  std::vector<double> elevations;
  int headings = 12;
  std::vector<double> pitches;

  void validate() const;
  int samples_x() const;
  int samples_y() const;
  std::size_t pose_count() const;

  friend bool operator==(const GridSpec &, const GridSpec &) = default;
};

/// Ground rectangle (width, height) seen by a nadir camera over level ground.
std::pair<double, double> nadir_footprint(const CameraModel &cam, double elevation);

/// A quarter of the footprint's shorter side.
double suggest_spacing(const CameraModel &cam, double elevation);

/// Smallest heading count whose spacing keeps at least 50% horizontal overlap.
int suggest_heading_count(const CameraModel &cam);

/// Working altitude band of one rendered layer: 0.71x to 1.29x nominal.
std::pair<double, double> elevation_band(const CameraModel &cam, double nominal);

/// All grid poses, x fastest, then y, elevation, heading, pitch. Roll is 0.
std::vector<PoseSE3> enumerate_poses(const GridSpec &grid);

/// The pose at a given enumeration index, without materializing the list.
PoseSE3 pose_at(const GridSpec &grid, std::size_t index);

}  // namespace skyloc

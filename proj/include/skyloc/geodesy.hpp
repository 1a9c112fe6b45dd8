#pragma once

#include <Eigen/Core>

namespace skyloc {

/// Geographic position: decimal degrees and meters.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  double alt = 0.0;
};

/// Local metric frame anchored at a geographic origin. Coordinates are
/// east-north-up meters; the earth is treated as a sphere of fixed radius.
struct LocalFrame {
  static constexpr double kMeanEarthRadius = 6371008.8;

  GeoPoint origin;
  double earth_radius = kMeanEarthRadius;
};

/// East, north, up in meters.
using LocalPoint = Eigen::Vector3d;

bool is_valid(const GeoPoint &p);
bool is_valid(const LocalFrame &f);

/// Equirectangular projection about the frame origin.
LocalPoint geo_to_local(const GeoPoint &p, const LocalFrame &frame);

/// Exact inverse of geo_to_local for the same frame.
GeoPoint local_to_geo(const LocalPoint &q, const LocalFrame &frame);

}  // namespace skyloc

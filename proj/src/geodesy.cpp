#include "skyloc/geodesy.hpp"

#include <cmath>
#include <numbers>

namespace skyloc {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

bool is_valid(const GeoPoint &p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && std::isfinite(p.alt) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon < 180.0;
}

bool is_valid(const LocalFrame &f) { return is_valid(f.origin) && f.earth_radius > 0.0; }

LocalPoint geo_to_local(const GeoPoint &p, const LocalFrame &frame) {
  const double r = frame.earth_radius;
  const double cos_lat0 = std::cos(frame.origin.lat * kDegToRad);
  return {r * cos_lat0 * (p.lon - frame.origin.lon) * kDegToRad, r * (p.lat - frame.origin.lat) * kDegToRad,
          p.alt - frame.origin.alt};
}

GeoPoint local_to_geo(const LocalPoint &q, const LocalFrame &frame) {
  const double r = frame.earth_radius;
  const double cos_lat0 = std::cos(frame.origin.lat * kDegToRad);
  return {frame.origin.lat + q.y() / r / kDegToRad, frame.origin.lon + q.x() / (r * cos_lat0) / kDegToRad,
          frame.origin.alt + q.z()};
}

}  // namespace skyloc

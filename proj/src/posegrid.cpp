#include "skyloc/posegrid.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skyloc {
namespace {

int half_open_count(double lo, double hi, double step) {
  int n = 0;
  while (lo + n * step < hi - 1e-9 * step) ++n;
  return n;
}

}  // namespace

void GridSpec::validate() const {
  if (!(spacing_xy > 0)) throw std::invalid_argument("grid spacing must be positive");
  if (headings < 1) throw std::invalid_argument("grid needs at least one heading");
  if (elevations.empty()) throw std::invalid_argument("grid needs at least one elevation");
  if (pitches.empty()) throw std::invalid_argument("grid needs at least one pitch");
  if (area.x1 - area.x0 < spacing_xy - 1e-9 * spacing_xy || area.y1 - area.y0 < spacing_xy - 1e-9 * spacing_xy)
    throw std::invalid_argument("grid area is smaller than one step");
}

int GridSpec::samples_x() const { return half_open_count(area.x0, area.x1, spacing_xy); }
int GridSpec::samples_y() const { return half_open_count(area.y0, area.y1, spacing_xy); }

std::size_t GridSpec::pose_count() const {
  return static_cast<std::size_t>(samples_x()) * samples_y() * elevations.size() * headings * pitches.size();
}

std::pair<double, double> nadir_footprint(const CameraModel &cam, double elevation) {
  return {2.0 * elevation * std::tan(0.5 * cam.hfov()), 2.0 * elevation * std::tan(0.5 * cam.vfov())};
}

double suggest_spacing(const CameraModel &cam, double elevation) {
  const auto [w, h] = nadir_footprint(cam, elevation);
  return 0.25 * std::min(w, h);
}

int suggest_heading_count(const CameraModel &cam) {
  // 2*pi/count <= hfov/2
  return static_cast<int>(std::ceil(4.0 * std::numbers::pi / cam.hfov() - 1e-9));
}

std::pair<double, double> elevation_band(const CameraModel &, double nominal) {
  return {0.71 * nominal, 1.29 * nominal};
}

PoseSE3 pose_at(const GridSpec &grid, std::size_t index) {
  const std::size_t nx = grid.samples_x(), ny = grid.samples_y();
  const std::size_t ne = grid.elevations.size(), nh = grid.headings;
  PoseSE3 p;
  const std::size_t ix = index % nx;
  index /= nx;
  const std::size_t iy = index % ny;
  index /= ny;
  const std::size_t ie = index % ne;
  index /= ne;
  const std::size_t ih = index % nh;
  index /= nh;
  if (index >= grid.pitches.size()) throw std::out_of_range("pose index beyond grid");
  p.position = LocalPoint(grid.area.x0 + ix * grid.spacing_xy, grid.area.y0 + iy * grid.spacing_xy,
                          grid.elevations[ie]);
  p.heading = 2.0 * std::numbers::pi * static_cast<double>(ih) / static_cast<double>(nh);
  p.pitch = grid.pitches[index];
  p.roll = 0.0;
  return p;
}

std::vector<PoseSE3> enumerate_poses(const GridSpec &grid) {
  grid.validate();
  std::vector<PoseSE3> poses;
  const std::size_t n = grid.pose_count();
  poses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) poses.push_back(pose_at(grid, i));
  return poses;
}

}  // namespace skyloc

#include "skyloc/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skyloc {
namespace {

constexpr int kBlockCells = 8;

/// Parameter interval where origin + t*dir lies inside [lo, hi] on one axis.
void clip_axis(double origin, double dir, double lo, double hi, double &t0, double &t1) {
  if (dir == 0.0) {
    if (origin < lo || origin > hi) t1 = -1.0;
    return;
  }
  double a = (lo - origin) / dir, b = (hi - origin) / dir;
  if (a > b) std::swap(a, b);
  t0 = std::max(t0, a);
  t1 = std::min(t1, b);
}

struct Hit {
  double t = 0.0;
  double x = 0.0, y = 0.0;
};

/// Per-render acceleration data: the highest height sample touching each
/// block of kBlockCells x kBlockCells cells (edges shared with neighbours are
/// included), and a bound on the heightfield gradient.
struct MarchContext {
  const Terrain &terrain;
  Raster<float> block_max;
  double block_size;
  double slope;
  double lo, hi;
  int refinements;
  const float *heights;
  std::ptrdiff_t stride;
  int last_col, last_row;
  double x0, y0, z0, inv_cell;

  explicit MarchContext(const Terrain &t, int refinements_) : terrain(t), refinements(refinements_) {
    const auto &h = t.heights;
    const int cells_x = t.grid_width() - 1, cells_y = t.grid_height() - 1;
    const int bx = (cells_x + kBlockCells - 1) / kBlockCells, by = (cells_y + kBlockCells - 1) / kBlockCells;
    block_max.resize(by, bx);
    for (int j = 0; j < by; ++j)
      for (int i = 0; i < bx; ++i) {
        const int r0 = j * kBlockCells, c0 = i * kBlockCells;
        const int rn = std::min(kBlockCells, cells_y - r0) + 1, cn = std::min(kBlockCells, cells_x - c0) + 1;
        block_max(j, i) = h.block(r0, c0, rn, cn).maxCoeff() + static_cast<float>(t.origin.z());
      }
    block_size = kBlockCells * t.cell_size;
    float sx = 0.0f, sy = 0.0f;
    if (h.cols() > 1) sx = (h.rightCols(h.cols() - 1) - h.leftCols(h.cols() - 1)).abs().maxCoeff();
    if (h.rows() > 1) sy = (h.bottomRows(h.rows() - 1) - h.topRows(h.rows() - 1)).abs().maxCoeff();
    slope = std::hypot(static_cast<double>(sx), static_cast<double>(sy)) / t.cell_size;
    lo = t.min_height();
    hi = t.max_height();
    heights = h.data();
    stride = h.cols();
    last_col = t.grid_width() - 2;
    last_row = t.grid_height() - 2;
    x0 = t.origin.x();
    y0 = t.origin.y();
    z0 = t.origin.z();
    inv_cell = 1.0 / t.cell_size;
  }

  /// Ray height above the bilinear surface; the ray must be over the grid.
  double gap(const Eigen::Vector3d &c, const Eigen::Vector3d &d, double t) const {
    const double gx = (c.x() + t * d.x() - x0) * inv_cell, gy = (c.y() + t * d.y() - y0) * inv_cell;
    const int i = std::min(static_cast<int>(gx), last_col), j = std::min(static_cast<int>(gy), last_row);
    const double a = gx - i, b = gy - j;
    const float *r0 = heights + static_cast<std::ptrdiff_t>(j) * stride + i;
    const float *r1 = r0 + stride;
    return c.z() + t * d.z() - z0 - ((1 - b) * ((1 - a) * r0[0] + a * r0[1]) + b * ((1 - a) * r1[0] + a * r1[1]));
  }

  /// Illinois false position on a bracket with gap(a) > 0 >= gap(b).
  double polish(const Eigen::Vector3d &c, const Eigen::Vector3d &d, double a, double ga, double b, double gb) const {
    int side = 0;
    for (int i = 0; i < refinements && b - a > 1e-12 * b; ++i) {
      const double m = (a * gb - b * ga) / (gb - ga);
      const double gm = gap(c, d, m);
      if (gm > 0.0) {
        a = m, ga = gm;
        if (side == 1) gb *= 0.5;
        side = 1;
      } else {
        b = m, gb = gm;
        if (side == -1) ga *= 0.5;
        side = -1;
      }
      if (std::abs(gm) < 1e-7) break;
    }
    return std::abs(ga) < std::abs(gb) ? a : b;
  }

  /// First crossing of the ray c + t*d (t is camera Z-depth) with the
  /// heightfield. Blocks whose maximum stays below the ray are skipped whole;
  /// inside the others the march advances by the larger of half a cell and
  /// the slope-bounded distance to the first possible contact.
  bool cast(const Eigen::Vector3d &c, const Eigen::Vector3d &d, double t_max, Hit &hit) const {
    double t0 = 0.0, t1 = t_max;
    if (c.z() > hi) {
      if (d.z() >= 0.0) return false;
      t0 = (c.z() - hi) / -d.z();
    } else if (c.z() < lo && d.z() <= 0.0) {
      return false;
    }
    if (d.z() < 0.0) t1 = std::min(t1, (c.z() - lo) / -d.z() + 1e-9);
    // Nudge the box inward so bilinear lookups stay in the last cell.
    const double eps = 1e-9 * terrain.cell_size;
    clip_axis(c.x(), d.x(), terrain.min_x() + eps, terrain.max_x() - eps, t0, t1);
    clip_axis(c.y(), d.y(), terrain.min_y() + eps, terrain.max_y() - eps, t0, t1);
    if (!(t1 >= t0)) return false;

    const double dt = 0.5 * terrain.cell_size / d.norm();
    const double closing = std::max(0.0, -d.z()) + slope * d.head<2>().norm();
    constexpr double inf = std::numeric_limits<double>::infinity();

    const int nbx = static_cast<int>(block_max.cols()), nby = static_cast<int>(block_max.rows());
    auto block_of = [&](double pos, double origin, int n) {
      return std::clamp(static_cast<int>(std::floor((pos - origin) / block_size)), 0, n - 1);
    };
    int bx = block_of(c.x() + t0 * d.x(), terrain.min_x(), nbx);
    int by = block_of(c.y() + t0 * d.y(), terrain.min_y(), nby);
    const int sx = d.x() > 0 ? 1 : (d.x() < 0 ? -1 : 0), sy = d.y() > 0 ? 1 : (d.y() < 0 ? -1 : 0);
    const double tdx = sx ? block_size / std::abs(d.x()) : inf, tdy = sy ? block_size / std::abs(d.y()) : inf;
    double tnx = sx ? (terrain.min_x() + (bx + (sx > 0)) * block_size - c.x()) / d.x() : inf;
    double tny = sy ? (terrain.min_y() + (by + (sy > 0)) * block_size - c.y()) / d.y() : inf;

    double t = t0;
    bool have_prev = false;
    double g_prev = 0.0;
    for (;;) {
      const double tb = std::min({tnx, tny, t1});
      const double z_low = c.z() + (d.z() < 0 ? tb : t) * d.z();
      if (z_low > block_max(by, bx)) {
        have_prev = false;
      } else {
        if (!have_prev) {
          g_prev = gap(c, d, t);
          if (g_prev <= 0.0) {
            hit = {t, c.x() + t * d.x(), c.y() + t * d.y()};
            return true;
          }
          have_prev = true;
        }
        while (t < tb) {
          const double step = closing > 0.0 ? std::max(dt, g_prev / closing) : dt;
          const double tn = std::min(t + step, tb);
          const double g = gap(c, d, tn);
          if (g <= 0.0) {
            const double th = polish(c, d, t, g_prev, tn, g);
            hit = {th, c.x() + th * d.x(), c.y() + th * d.y()};
            return true;
          }
          t = tn;
          g_prev = g;
        }
      }
      if (tb >= t1) return false;
      t = tb;
      if (tnx <= tny) {
        bx += sx;
        tnx += tdx;
      } else {
        by += sy;
        tny += tdy;
      }
      if (bx < 0 || bx >= nbx || by < 0 || by >= nby) return false;
    }
  }
};

}  // namespace

RenderedView render(const Terrain &terrain, const PoseSE3 &pose, const CameraModel &camera,
                    const RenderOptions &options) {
  if (!camera.valid()) throw std::invalid_argument("render: invalid camera model");
  const Eigen::Vector3d c = pose.position;
  if (terrain.contains(c.x(), c.y()) && c.z() <= sample_height(terrain, c.x(), c.y()))
    throw std::invalid_argument("render: camera below terrain surface");

  RenderedView view;
  view.pose = pose;
  view.camera = camera;
  view.color = RgbImage(camera.width, camera.height);
  view.depth.setZero(camera.height, camera.width);

  const MarchContext march(terrain, options.refinements);
  const Eigen::Matrix3d Rwc = camera_to_world_rotation(pose);
  for (int v = 0; v < camera.height; ++v) {
    const double yn = (v - camera.cy) / camera.fy;
    for (int u = 0; u < camera.width; ++u) {
      const double xn = (u - camera.cx) / camera.fx;
      const Eigen::Vector3d d = Rwc * Eigen::Vector3d(xn, yn, 1.0);
      const double t_max = options.max_range / d.norm();
      Hit hit;
      if (march.cast(c, d, t_max, hit)) {
        view.depth(v, u) = static_cast<float>(hit.t);
        const auto col = surface_color(terrain, hit.x, hit.y);
        for (int k = 0; k < 3; ++k)
          view.color.channel[k](v, u) = static_cast<std::uint8_t>(std::clamp(std::lround(col[k]), 0L, 255L));
      } else {
        for (int k = 0; k < 3; ++k) view.color.channel[k](v, u) = options.sky_color[k];
      }
    }
  }
  return view;
}

double sky_fraction(const DepthMap &depth) {
  if (depth.size() == 0) return 0.0;
  return static_cast<double>((depth <= 0.0f).count()) / static_cast<double>(depth.size());
}

}  // namespace skyloc

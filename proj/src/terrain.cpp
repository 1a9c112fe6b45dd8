#include "skyloc/terrain.hpp"

#include "skyloc/binary_io.hpp"
#include "skyloc/image_io.hpp"
#include "skyloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skyloc {
namespace {

constexpr std::uint32_t kTerrainVersion = 1;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Lattice value noise in [0, 1] with smoothstep blending.
class ValueNoise {
 public:
  ValueNoise(std::uint64_t seed, double wavelength) : seed_(splitmix(seed)), inv_wavelength_(1.0 / wavelength) {}

  double operator()(double x, double y) const {
    const double gx = x * inv_wavelength_, gy = y * inv_wavelength_;
    const double fx = std::floor(gx), fy = std::floor(gy);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double a = smooth(gx - fx), b = smooth(gy - fy);
    const double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
    const double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
    return (1 - b) * ((1 - a) * v00 + a * v10) + b * ((1 - a) * v01 + a * v11);
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double lattice(std::int64_t ix, std::int64_t iy) const {
    const std::uint64_t h = splitmix(seed_ ^ splitmix(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL +
                                                      static_cast<std::uint64_t>(iy)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }
  std::uint64_t seed_;
  double inv_wavelength_;
};

using Color = std::array<float, 3>;

/// Float RGB canvas in world coordinates, quantized to the texture at the end.
class Canvas {
 public:
  Canvas(int width, int height, double x0, double y1, double texel)
      : w_(width), h_(height), x0_(x0), y1_(y1), texel_(texel), data_(3 * static_cast<std::size_t>(width) * height) {}

  double texel_x(int c) const { return x0_ + (c + 0.5) * texel_; }
  double texel_y(int r) const { return y1_ - (r + 0.5) * texel_; }
  int width() const { return w_; }
  int height() const { return h_; }

  void set(int r, int c, const Color &col) {
    float *p = &data_[3 * (static_cast<std::size_t>(r) * w_ + c)];
    p[0] = col[0];
    p[1] = col[1];
    p[2] = col[2];
  }

  /// Blends an antialiased shape given its signed distance function (meters).
  template <typename Sdf>
  void fill(double xmin, double xmax, double ymin, double ymax, const Color &col, Sdf &&sdf) {
    const int c0 = std::max(0, static_cast<int>(std::floor((xmin - x0_) / texel_)) - 1);
    const int c1 = std::min(w_ - 1, static_cast<int>(std::ceil((xmax - x0_) / texel_)) + 1);
    const int r0 = std::max(0, static_cast<int>(std::floor((y1_ - ymax) / texel_)) - 1);
    const int r1 = std::min(h_ - 1, static_cast<int>(std::ceil((y1_ - ymin) / texel_)) + 1);
    for (int r = r0; r <= r1; ++r) {
      const double y = texel_y(r);
      for (int c = c0; c <= c1; ++c) {
        const double cover = std::clamp(0.5 - sdf(texel_x(c), y) / texel_, 0.0, 1.0);
        if (cover <= 0.0) continue;
        float *p = &data_[3 * (static_cast<std::size_t>(r) * w_ + c)];
        for (int k = 0; k < 3; ++k) p[k] = static_cast<float>(p[k] * (1.0 - cover) + col[k] * cover);
      }
    }
  }

  RgbImage quantize() const {
    RgbImage out(w_, h_);
    for (int r = 0; r < h_; ++r)
      for (int c = 0; c < w_; ++c)
        for (int k = 0; k < 3; ++k)
          out.channel[k](r, c) = static_cast<std::uint8_t>(
              std::clamp(std::lround(data_[3 * (static_cast<std::size_t>(r) * w_ + c) + k]), 0L, 255L));
    return out;
  }

 private:
  int w_, h_;
  double x0_, y1_, texel_;
  std::vector<float> data_;
};

/// Rotated rectangle: center, half sizes, rotation angle.
struct Box {
  double cx, cy, hx, hy, angle;

  double sdf(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double lx = std::abs(c * dx + s * dy) - hx;
    const double ly = std::abs(-s * dx + c * dy) - hy;
    return std::hypot(std::max(lx, 0.0), std::max(ly, 0.0)) + std::min(std::max(lx, ly), 0.0);
  }
  double radius() const { return std::hypot(hx, hy); }
};

Color jitter(Rng &rng, const Color &base, double amount) {
  Color out;
  const double common = rng.uniform(-amount, amount);
  for (int k = 0; k < 3; ++k)
    out[k] = static_cast<float>(std::clamp(base[k] + common + rng.uniform(-0.3 * amount, 0.3 * amount), 0.0, 255.0));
  return out;
}

void fill_box(Canvas &canvas, const Box &b, const Color &col) {
  const double r = b.radius();
  canvas.fill(b.cx - r, b.cx + r, b.cy - r, b.cy + r, col, [&](double x, double y) { return b.sdf(x, y); });
}

void paint_texture(Canvas &canvas, std::uint64_t seed, double x0, double y0, double ex, double ey) {
  const ValueNoise broad(seed ^ 0x11, 70.0), mid(seed ^ 0x12, 17.0), fine(seed ^ 0x13, 4.0);
  const Color grass{88, 118, 62}, dry{158, 146, 98}, soil{118, 92, 68};
  for (int r = 0; r < canvas.height(); ++r) {
    const double y = canvas.texel_y(r);
    for (int c = 0; c < canvas.width(); ++c) {
      const double x = canvas.texel_x(c);
      const double a = 0.7 * broad(x, y) + 0.3 * mid(x, y);
      const double b = fine(x, y);
      Color col;
      for (int k = 0; k < 3; ++k) {
        const double base = a < 0.5 ? grass[k] + (dry[k] - grass[k]) * (a / 0.5)
                                    : dry[k] + (soil[k] - dry[k]) * ((a - 0.5) / 0.5);
        col[k] = static_cast<float>(base + 18.0 * (b - 0.5));
      }
      canvas.set(r, c, col);
    }
  }

  Rng rng(splitmix(seed ^ 0x5eed));
  const double area = ex * ey;
  const double two_pi = 2.0 * std::numbers::pi;

  // Fields: large uniform patches.
  const std::array<Color, 5> field_palette{Color{96, 132, 58}, Color{172, 160, 104}, Color{128, 100, 72},
                                           Color{70, 96, 50}, Color{190, 178, 130}};
  const int fields = static_cast<int>(area / 2500.0);
  for (int i = 0; i < fields; ++i) {
    const Box b{x0 + rng.uniform() * ex, y0 + rng.uniform() * ey, rng.uniform(8, 25), rng.uniform(8, 25),
                rng.uniform() * two_pi};
    fill_box(canvas, b, jitter(rng, field_palette[rng.below(field_palette.size())], 12));
  }

  // Roads: long thin strips.
  const int roads = static_cast<int>(area / 40000.0) + 1;
  for (int i = 0; i < roads; ++i) {
    const Box b{x0 + rng.uniform() * ex, y0 + rng.uniform() * ey, rng.uniform(60, 220), rng.uniform(1.5, 3.0),
                rng.uniform() * two_pi};
    fill_box(canvas, b, jitter(rng, Color{128, 126, 122}, 15));
  }

  // Trees: dark discs.
  const int trees = static_cast<int>(area / 90.0);
  for (int i = 0; i < trees; ++i) {
    const double cx = x0 + rng.uniform() * ex, cy = y0 + rng.uniform() * ey, rad = rng.uniform(0.8, 2.5);
    const Color col = jitter(rng, Color{46, 70, 38}, 12);
    canvas.fill(cx - rad, cx + rad, cy - rad, cy + rad, col,
                [&](double x, double y) { return std::hypot(x - cx, y - cy) - rad; });
  }

  // Buildings: rectangles with an inset roof section of a different shade.
  const std::array<Color, 6> roof_palette{Color{176, 74, 60}, Color{200, 200, 196}, Color{82, 84, 90},
                                          Color{150, 120, 96}, Color{226, 214, 180}, Color{60, 92, 130}};
  const int buildings = static_cast<int>(area / 70.0);
  for (int i = 0; i < buildings; ++i) {
    const Box outer{x0 + rng.uniform() * ex, y0 + rng.uniform() * ey, rng.uniform(1.2, 5.5), rng.uniform(1.2, 5.5),
                    rng.uniform() * two_pi};
    const Color roof = jitter(rng, roof_palette[rng.below(roof_palette.size())], 20);
    fill_box(canvas, outer, roof);
    if (rng.uniform() < 0.6) {
      const double f = rng.uniform(0.3, 0.7);
      const Box inner{outer.cx + rng.uniform(-0.3, 0.3) * outer.hx, outer.cy + rng.uniform(-0.3, 0.3) * outer.hy,
                      outer.hx * f, outer.hy * (1.0 - 0.5 * f), outer.angle};
      Color shade = roof;
      const double k = rng.uniform() < 0.5 ? 0.6 : 1.35;
      for (auto &v : shade) v = static_cast<float>(std::clamp(v * k, 0.0, 255.0));
      fill_box(canvas, inner, shade);
    }
  }
}

void check_extent(double extent_x, double extent_y, double cell_size) {
  if (!(cell_size > 0)) throw std::invalid_argument("cell_size must be positive");
  if (!(extent_x >= cell_size) || !(extent_y >= cell_size))
    throw std::invalid_argument("terrain extent is smaller than one cell");
}

}  // namespace

Terrain generate_terrain(std::uint64_t seed, double extent_x, double extent_y, double cell_size,
                         const TerrainOptions &options) {
  check_extent(extent_x, extent_y, cell_size);
  if (!(options.texel_size > 0)) throw std::invalid_argument("texel_size must be positive");
  if (!(options.relief >= 0) || options.relief > 30.0) throw std::invalid_argument("relief must be within [0, 30] m");

  Terrain t;
  t.cell_size = cell_size;
  const int nx = static_cast<int>(std::floor(extent_x / cell_size + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(extent_y / cell_size + 1e-9)) + 1;
  t.origin = options.origin.value_or(LocalPoint(-0.5 * (nx - 1) * cell_size, -0.5 * (ny - 1) * cell_size, 0.0));

  const ValueNoise hills(seed ^ 0x21, 260.0), rolls(seed ^ 0x22, 90.0), bumps(seed ^ 0x23, 30.0);
  t.heights.resize(ny, nx);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x = t.origin.x() + i * cell_size, y = t.origin.y() + j * cell_size;
      t.heights(j, i) = static_cast<float>(0.6 * hills(x, y) + 0.3 * rolls(x, y) + 0.1 * bumps(x, y));
    }
  const float lo = t.heights.minCoeff(), hi = t.heights.maxCoeff();
  const float span = hi > lo ? hi - lo : 1.0f;
  const float relief = static_cast<float>(options.relief);
  t.heights = (t.heights - lo) / span * relief - 0.5f * relief;

  const double ex = t.extent_x(), ey = t.extent_y();
  const int tw = std::max(1, static_cast<int>(std::lround(ex / options.texel_size)));
  const int th = std::max(1, static_cast<int>(std::lround(ey / options.texel_size)));
  Canvas canvas(tw, th, t.min_x(), t.max_y(), ex / tw);
  paint_texture(canvas, seed, t.min_x(), t.min_y(), ex, ey);
  t.texture = canvas.quantize();
  return t;
}

Terrain flat_terrain(double extent_x, double extent_y, double cell_size, double height, double texel_size) {
  check_extent(extent_x, extent_y, cell_size);
  Terrain t;
  t.cell_size = cell_size;
  const int nx = static_cast<int>(std::floor(extent_x / cell_size + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(extent_y / cell_size + 1e-9)) + 1;
  t.origin = LocalPoint(-0.5 * (nx - 1) * cell_size, -0.5 * (ny - 1) * cell_size, height);
  t.heights.setZero(ny, nx);
  const int tw = std::max(1, static_cast<int>(std::lround(t.extent_x() / texel_size)));
  const int th = std::max(1, static_cast<int>(std::lround(t.extent_y() / texel_size)));
  t.texture = RgbImage(tw, th);
  for (int r = 0; r < th; ++r)
    for (int c = 0; c < tw; ++c) {
      const std::uint8_t v = ((r / 4 + c / 4) % 2) ? 200 : 60;
      for (int k = 0; k < 3; ++k) t.texture.channel[k](r, c) = v;
    }
  return t;
}

double sample_height(const Terrain &terrain, double x, double y) {
  if (!terrain.contains(x, y)) throw std::out_of_range("sample_height: point outside terrain extent");
  return sample_height_unchecked(terrain, x, y);
}

std::array<float, 3> surface_color(const Terrain &terrain, double x, double y) {
  const RgbImage &tex = terrain.texture;
  const double u = (x - terrain.min_x()) / terrain.extent_x() * tex.width() - 0.5;
  const double v = (terrain.max_y() - y) / terrain.extent_y() * tex.height() - 0.5;
  return {sample_bilinear(tex.channel[0].cast<float>(), u, v), sample_bilinear(tex.channel[1].cast<float>(), u, v),
          sample_bilinear(tex.channel[2].cast<float>(), u, v)};
}

std::filesystem::path texture_path_for(const std::filesystem::path &heightmap_path) {
  auto p = heightmap_path;
  return p.replace_extension(".ppm");
}

void write_terrain(const std::filesystem::path &heightmap_path, const Terrain &terrain) {
  ByteWriter w;
  w.magic("SLTR");
  w.u32(kTerrainVersion);
  w.u32(static_cast<std::uint32_t>(terrain.grid_width()));
  w.u32(static_cast<std::uint32_t>(terrain.grid_height()));
  w.f64(terrain.cell_size);
  w.f64(terrain.origin.x());
  w.f64(terrain.origin.y());
  w.f64(terrain.origin.z());
  w.f32s(std::span<const float>(terrain.heights.data(), static_cast<std::size_t>(terrain.heights.size())));
  write_file(heightmap_path, w.bytes());
  write_ppm(texture_path_for(heightmap_path), terrain.texture);
}

Terrain read_terrain(const std::filesystem::path &heightmap_path) {
  const auto bytes = read_file(heightmap_path);
  ByteReader r(bytes, heightmap_path.filename().string());
  r.expect_magic("SLTR");
  if (const auto version = r.u32(); version != kTerrainVersion)
    throw CorruptFileError(r.name(), "unsupported terrain version " + std::to_string(version));
  Terrain t;
  const std::uint32_t w = r.u32(), h = r.u32();
  if (w < 2 || h < 2) throw CorruptFileError(r.name(), "terrain grid smaller than 2x2");
  t.cell_size = r.f64();
  t.origin.x() = r.f64();
  t.origin.y() = r.f64();
  t.origin.z() = r.f64();
  if (!(t.cell_size > 0)) throw CorruptFileError(r.name(), "non-positive cell size");
  t.heights.resize(h, w);
  r.f32s(std::span<float>(t.heights.data(), static_cast<std::size_t>(t.heights.size())));
  if (!t.heights.allFinite()) throw CorruptFileError(r.name(), "non-finite height");
  t.texture = read_ppm(texture_path_for(heightmap_path));
  return t;
}

}  // namespace skyloc

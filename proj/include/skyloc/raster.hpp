#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdint>

namespace skyloc {

/// Row-major 2D raster; rows index image v (top to bottom), cols index u.
template <typename T>
using Raster = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Raster<float>;
/// Camera-frame Z-depth in meters, 0 marks pixels without a terrain hit.
using DepthMap = Raster<float>;

struct RgbImage {
  std::array<Raster<std::uint8_t>, 3> channel;

  RgbImage() = default;
  RgbImage(int width, int height) {
    for (auto &c : channel) c.setZero(height, width);
  }

  int width() const { return static_cast<int>(channel[0].cols()); }
  int height() const { return static_cast<int>(channel[0].rows()); }

  friend bool operator==(const RgbImage &a, const RgbImage &b) {
    for (int k = 0; k < 3; ++k) {
      if (a.channel[k].rows() != b.channel[k].rows() ||
          a.channel[k].cols() != b.channel[k].cols() ||
          !(a.channel[k] == b.channel[k]).all())
        return false;
    }
    return true;
  }
};

/// Luma in [0, 255] using Rec.601 weights.
GrayImage to_gray(const RgbImage &image);

/// Bilinear lookup with clamp-to-edge addressing; pixel centers at integers.
template <typename Derived>
inline float sample_bilinear(const Eigen::ArrayBase<Derived> &img, double u, double v) {
  const Eigen::Index w = img.cols(), h = img.rows();
  const double uc = std::clamp(u, 0.0, static_cast<double>(w - 1));
  const double vc = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const Eigen::Index u0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(uc), w - 1);
  const Eigen::Index v0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(vc), h - 1);
  const Eigen::Index u1 = std::min<Eigen::Index>(u0 + 1, w - 1);
  const Eigen::Index v1 = std::min<Eigen::Index>(v0 + 1, h - 1);
  const double a = uc - static_cast<double>(u0), b = vc - static_cast<double>(v0);
  const double top = (1 - a) * img(v0, u0) + a * img(v0, u1);
  const double bot = (1 - a) * img(v1, u0) + a * img(v1, u1);
  return static_cast<float>((1 - b) * top + b * bot);
}

}  // namespace skyloc

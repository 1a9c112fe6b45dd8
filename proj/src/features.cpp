#include "skyloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skyloc {
namespace {

constexpr int kPatch = 16;
constexpr int kPooled = 8;
constexpr int kMargin = 8;

/// Max over a (2r+1)-wide window along rows then columns.
Raster<float> dilate(const Raster<float> &in, int r) {
  const Eigen::Index h = in.rows(), w = in.cols();
  Raster<float> tmp(h, w), out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, x - r), hi = std::min<Eigen::Index>(w - 1, x + r);
      tmp(y, x) = in.row(y).segment(lo, hi - lo + 1).maxCoeff();
    }
  for (Eigen::Index y = 0; y < h; ++y) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, y - r), hi = std::min<Eigen::Index>(h - 1, y + r);
    out.row(y) = tmp.middleRows(lo, hi - lo + 1).colwise().maxCoeff();
  }
  return out;
}

Raster<float> harris_response(const GrayImage &img, double k) {
  const Eigen::Index h = img.rows(), w = img.cols();
  Raster<float> ixx = Raster<float>::Zero(h, w), iyy = ixx, ixy = ixx;
  for (Eigen::Index y = 1; y < h - 1; ++y)
    for (Eigen::Index x = 1; x < w - 1; ++x) {
      const float gx = (img(y - 1, x + 1) + 2 * img(y, x + 1) + img(y + 1, x + 1) - img(y - 1, x - 1) -
                        2 * img(y, x - 1) - img(y + 1, x - 1)) /
                       8.0f;
      const float gy = (img(y + 1, x - 1) + 2 * img(y + 1, x) + img(y + 1, x + 1) - img(y - 1, x - 1) -
                        2 * img(y - 1, x) - img(y - 1, x + 1)) /
                       8.0f;
      ixx(y, x) = gx * gx;
      iyy(y, x) = gy * gy;
      ixy(y, x) = gx * gy;
    }
  auto smooth = [&](const Raster<float> &in) {
    Raster<float> tmp = Raster<float>::Zero(h, w), out = Raster<float>::Zero(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 1; x < w - 1; ++x) tmp(y, x) = 0.25f * in(y, x - 1) + 0.5f * in(y, x) + 0.25f * in(y, x + 1);
    for (Eigen::Index y = 1; y < h - 1; ++y) out.row(y) = 0.25f * tmp.row(y - 1) + 0.5f * tmp.row(y) + 0.25f * tmp.row(y + 1);
    return out;
  };
  const Raster<float> sxx = smooth(ixx), syy = smooth(iyy), sxy = smooth(ixy);
  const float kf = static_cast<float>(k);
  return sxx * syy - sxy * sxy - kf * (sxx + syy).square();
}

/// Offset of the vertex of a parabola through (-1, a), (0, b), (1, c).
float parabolic_offset(float a, float b, float c) {
  const float denom = a - 2 * b + c;
  if (denom >= 0.0f) return 0.0f;
  return std::clamp(0.5f * (a - c) / denom, -0.5f, 0.5f);
}

}  // namespace

std::vector<Keypoint> detect_keypoints(const GrayImage &image, int max_count, const HarrisOptions &options) {
  if (image.rows() < 32 || image.cols() < 32) throw std::invalid_argument("detect_keypoints: image smaller than 32x32");
  std::vector<Keypoint> out;
  if (max_count <= 0) return out;

  const Raster<float> response = harris_response(image, options.k);
  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  const int border = std::max(options.border, 2);
  if (2 * border >= w || 2 * border >= h) return out;
  const float peak = response.block(border, border, h - 2 * border, w - 2 * border).maxCoeff();
  if (!(peak > 0.0f)) return out;
  const float threshold = static_cast<float>(options.relative_threshold) * peak;
  const Raster<float> local_max = dilate(response, options.nms_radius);

  struct Candidate {
    float score;
    int v, u;
  };
  std::vector<Candidate> candidates;
  for (int v = border; v < h - border; ++v)
    for (int u = border; u < w - border; ++u) {
      const float r = response(v, u);
      if (r >= threshold && r > 0.0f && r == local_max(v, u)) candidates.push_back({r, v, u});
    }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.v != b.v) return a.v < b.v;
    return a.u < b.u;
  });

  // Plateaus leave equal maxima within one window; keep the first in order.
  const int radius = options.nms_radius;
  std::vector<std::pair<int, int>> accepted;
  for (const auto &c : candidates) {
    const bool suppressed = std::any_of(accepted.begin(), accepted.end(), [&](const auto &a) {
      const int du = a.second - c.u, dv = a.first - c.v;
      return du * du + dv * dv <= radius * radius;
    });
    if (suppressed) continue;
    accepted.emplace_back(c.v, c.u);
    const float du = parabolic_offset(response(c.v, c.u - 1), c.score, response(c.v, c.u + 1));
    const float dv = parabolic_offset(response(c.v - 1, c.u), c.score, response(c.v + 1, c.u));
    out.push_back({static_cast<float>(c.u) + du, static_cast<float>(c.v) + dv, c.score});
    if (static_cast<int>(out.size()) >= max_count) break;
  }
  return out;
}

FeatureSet describe_local(const GrayImage &image, const std::vector<Keypoint> &keypoints) {
  FeatureSet set;
  const double w = static_cast<double>(image.cols()), h = static_cast<double>(image.rows());
  std::vector<Eigen::Matrix<float, 1, kPooled * kPooled>> rows;
  for (const auto &kp : keypoints) {
    if (kp.u < kMargin || kp.v < kMargin || kp.u > w - 1 - kMargin || kp.v > h - 1 - kMargin) continue;
    Eigen::Matrix<double, kPooled, kPooled> pooled = Eigen::Matrix<double, kPooled, kPooled>::Zero();
    for (int j = 0; j < kPatch; ++j)
      for (int i = 0; i < kPatch; ++i)
        pooled(j / 2, i / 2) += sample_bilinear(image, kp.u + (i - 7.5), kp.v + (j - 7.5));
    pooled /= 4.0;
    pooled.array() -= pooled.mean();
    const double norm = pooled.norm();
    Eigen::Matrix<float, 1, kPooled * kPooled> row = Eigen::Matrix<float, 1, kPooled * kPooled>::Zero();
    if (norm >= 1e-12) {
      for (int j = 0; j < kPooled; ++j)
        for (int i = 0; i < kPooled; ++i) row(j * kPooled + i) = static_cast<float>(pooled(j, i) / norm);
    }
    set.keypoints.push_back(kp);
    rows.push_back(row);
  }
  set.descriptors.resize(static_cast<Eigen::Index>(rows.size()), kPooled * kPooled);
  for (std::size_t i = 0; i < rows.size(); ++i) set.descriptors.row(static_cast<Eigen::Index>(i)) = rows[i];
  return set;
}

FeatureSet extract_features(const GrayImage &image, int max_count) {
  return describe_local(image, detect_keypoints(image, max_count));
}

}  // namespace skyloc

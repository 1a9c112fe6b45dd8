#pragma once

#include "skyloc/raster.hpp"

#include <Eigen/Core>

#include <vector>

namespace skyloc {

struct Keypoint {
  float u = 0.0f;
  float v = 0.0f;
  float score = 0.0f;

  friend bool operator==(const Keypoint &, const Keypoint &) = default;
};

/// Descriptor rows, one per feature.
using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Local features of one image: keypoint i owns descriptor row i. Each row is
/// unit norm, or all zero for a textureless patch.
struct FeatureSet {
  std::vector<Keypoint> keypoints;
  DescriptorMatrix descriptors;

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
  int dimension() const { return static_cast<int>(descriptors.cols()); }

  friend bool operator==(const FeatureSet &a, const FeatureSet &b) {
    return a.keypoints == b.keypoints && a.descriptors.rows() == b.descriptors.rows() &&
           a.descriptors.cols() == b.descriptors.cols() && a.descriptors == b.descriptors;
  }
};

struct HarrisOptions {
  double k = 0.04;
  double relative_threshold = 0.01;
  int nms_radius = 8;
  /// Pixels closer than this to the border are never reported.
  int border = 8;
};

/// Harris corners (Sobel gradients, 3x3 Gaussian window) above a fraction of
/// the strongest response, thinned by non-maximum suppression and capped at
/// `max_count`. Sorted by score, ties in (v, u) raster order. Positions are
/// refined to sub-pixel accuracy with a parabolic fit.
std::vector<Keypoint> detect_keypoints(const GrayImage &image, int max_count = 500,
                                       const HarrisOptions &options = {});

/// 64-dim patch descriptor: 16x16 bilinear patch, 2x2 average pooled to 8x8,
/// mean removed, L2 normalized. Keypoints closer than 8 px to the border are
/// dropped.
FeatureSet describe_local(const GrayImage &image, const std::vector<Keypoint> &keypoints);

/// Detection plus description with default settings.
FeatureSet extract_features(const GrayImage &image, int max_count = 500);

}  // namespace skyloc

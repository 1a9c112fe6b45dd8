#pragma once

#include "skyloc/camera.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace skyloc {

/// A query pixel paired with the map point it observes.
struct Correspondence2D3D {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  LocalPoint point = LocalPoint::Zero();
};

struct PnPConfig {
  double reproj_threshold = 1.0;  // pixels
  int iterations = 1000;
  int min_inliers = 12;
  int refine_max_steps = 20;
};

/// Increment (rotation vector, translation) applied on the left of a
/// world-to-camera transform: R' = exp(w) R, t' = exp(w) t + v.
using Tangent6 = Eigen::Matrix<double, 6, 1>;

WorldToCamera apply_increment(const WorldToCamera &T, const Tangent6 &delta);

/// Projected minus observed pixel; nullopt when the point is not in front.
std::optional<Eigen::Vector2d> reprojection_residual(const CameraModel &cam, const WorldToCamera &T,
                                                     const Correspondence2D3D &c);

/// d(residual)/d(increment) at zero increment.
Eigen::Matrix<double, 2, 6> reprojection_jacobian(const CameraModel &cam, const WorldToCamera &T,
                                                  const LocalPoint &point);

/// Sum of squared reprojection errors; +inf if any point is behind the camera.
double reprojection_cost(const CameraModel &cam, const WorldToCamera &T, std::span<const Correspondence2D3D> pairs);

/// Grunert's three-point solution: up to four world-to-camera transforms that
/// map each point onto its (unit) bearing ray.
std::vector<WorldToCamera> solve_p3p(const std::array<Eigen::Vector3d, 3> &bearings,
                                     const std::array<Eigen::Vector3d, 3> &points);

struct RefinementResult {
  WorldToCamera pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int steps = 0;
};

/// Gauss-Newton over SE(3) on squared reprojection error. Each step is halved
/// until the cost decreases, so the cost never goes up.
RefinementResult refine_pose(const CameraModel &cam, const WorldToCamera &initial,
                             std::span<const Correspondence2D3D> pairs, int max_steps = 20);

struct PnPSolution {
  WorldToCamera world_to_camera;
  PoseSE3 pose;
  std::vector<int> inliers;
  /// Sum of inlier reprojection errors, pixels.
  double inlier_error = 0.0;
};

/// RANSAC over 4-point samples (P3P on three, the fourth picks among the
/// roots), followed by refinement on the best inlier set and a recount.
/// Returns nullopt when fewer than `min_inliers` survive. Throws
/// std::invalid_argument for fewer than four pairs.
std::optional<PnPSolution> solve_pnp_ransac(std::span<const Correspondence2D3D> pairs, const CameraModel &cam,
                                            const PnPConfig &config, std::uint64_t seed);

}  // namespace skyloc

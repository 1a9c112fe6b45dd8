#pragma once

#include "skyloc/geodesy.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>

namespace skyloc {

/// Pinhole intrinsics with two-term radial distortion. Pixel centers sit at
/// integer coordinates.
struct CameraModel {
  int width = 0;
  int height = 0;
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0;

  bool valid() const {
    return width > 0 && height > 0 && fx > 0 && fy > 0 && cx > 0 && cx < width && cy > 0 && cy < height;
  }
  bool has_distortion() const { return k1 != 0.0 || k2 != 0.0; }

  double hfov() const { return 2.0 * std::atan(0.5 * width / fx); }
  double vfov() const { return 2.0 * std::atan(0.5 * height / fy); }

  Eigen::Matrix3d K() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  /// Same field of view at a different resolution.
  CameraModel scaled_to(int new_width, int new_height) const;

  friend bool operator==(const CameraModel &, const CameraModel &) = default;
};

/// fx = fy = (width/2)/tan(hfov/2), principal point at the image center.
CameraModel camera_from_fov(int width, int height, double hfov_rad);

/// Camera pose in the local frame.
///
/// Heading is clockwise from north, pitch tilts the optical axis below the
/// horizon, roll turns about the optical axis. The camera frame is x right,
/// y down, z forward; the world frame is east-north-up. Rotations compose as
/// heading, then pitch, then roll.
struct PoseSE3 {
  LocalPoint position = LocalPoint::Zero();
  double heading = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  friend bool operator==(const PoseSE3 &, const PoseSE3 &) = default;
};

/// Rotation taking camera-frame vectors into the world frame.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> camera_to_world_rotation(Scalar heading, Scalar pitch, Scalar roll) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  using std::cos;
  using std::sin;
  // Level camera looking north: x east, y down, z north.
  Mat3 base;
  base << Scalar(1), Scalar(0), Scalar(0), Scalar(0), Scalar(0), Scalar(1), Scalar(0), Scalar(-1), Scalar(0);
  const Scalar ch = cos(heading), sh = sin(heading);
  Mat3 yaw;  // clockwise about world up
  yaw << ch, sh, Scalar(0), -sh, ch, Scalar(0), Scalar(0), Scalar(0), Scalar(1);
  const Scalar cp = cos(pitch), sp = sin(pitch);
  Mat3 tilt;  // optical axis toward +y (down)
  tilt << Scalar(1), Scalar(0), Scalar(0), Scalar(0), cp, sp, Scalar(0), -sp, cp;
  const Scalar cr = cos(roll), sr = sin(roll);
  Mat3 spin;
  spin << cr, -sr, Scalar(0), sr, cr, Scalar(0), Scalar(0), Scalar(0), Scalar(1);
  return yaw * base * tilt * spin;
}

inline Eigen::Matrix3d camera_to_world_rotation(const PoseSE3 &pose) {
  return camera_to_world_rotation(pose.heading, pose.pitch, pose.roll);
}

/// Rigid world-to-camera transform, p_cam = R * p_world + t.
struct WorldToCamera {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d operator()(const Eigen::Vector3d &p) const { return R * p + t; }
  Eigen::Vector3d center() const { return -R.transpose() * t; }
};

WorldToCamera world_to_camera(const PoseSE3 &pose);

/// Recovers heading/pitch/roll and position; at exact nadir the heading
/// absorbs the whole yaw and roll is reported as zero.
PoseSE3 pose_from_world_to_camera(const WorldToCamera &T);

/// Ideal pinhole projection of a camera-frame point (distortion ignored).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project_pinhole(const CameraModel &cam, const Eigen::Matrix<Scalar, 3, 1> &p_cam) {
  return {Scalar(cam.fx) * p_cam.x() / p_cam.z() + Scalar(cam.cx), Scalar(cam.fy) * p_cam.y() / p_cam.z() + Scalar(cam.cy)};
}

/// Camera-frame point at Z-depth `depth` behind pixel (u, v).
inline Eigen::Vector3d unproject_pinhole(const CameraModel &cam, double u, double v, double depth) {
  return {depth * (u - cam.cx) / cam.fx, depth * (v - cam.cy) / cam.fy, depth};
}

/// Radial distortion factor 1 + k1 r^2 + k2 r^4 for normalized radius r.
inline double radial_factor(const CameraModel &cam, double r2) { return 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2; }

/// Normalized undistorted coordinates from normalized distorted ones, by
/// fixed-point iteration on the radial model.
Eigen::Vector2d undistort_normalized(const CameraModel &cam, const Eigen::Vector2d &distorted);

/// Geodesic angle (radians) between two rotations.
double rotation_angle_between(const Eigen::Matrix3d &a, const Eigen::Matrix3d &b);

}  // namespace skyloc

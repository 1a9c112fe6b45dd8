#include "skyloc/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace skyloc {

CameraModel CameraModel::scaled_to(int new_width, int new_height) const {
  CameraModel out = *this;
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  out.width = new_width;
  out.height = new_height;
  out.fx = fx * sx;
  out.fy = fy * sy;
  out.cx = cx * sx;
  out.cy = cy * sy;
  return out;
}

CameraModel camera_from_fov(int width, int height, double hfov_rad) {
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * hfov_rad);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

WorldToCamera world_to_camera(const PoseSE3 &pose) {
  WorldToCamera T;
  T.R = camera_to_world_rotation(pose).transpose();
  T.t = -T.R * pose.position;
  return T;
}

PoseSE3 pose_from_world_to_camera(const WorldToCamera &T) {
  const Eigen::Matrix3d Rwc = T.R.transpose();
  const Eigen::Vector3d forward = Rwc.col(2);
  PoseSE3 pose;
  pose.position = T.center();
  pose.pitch = std::asin(std::clamp(-forward.z(), -1.0, 1.0));
  const double horizontal = std::hypot(forward.x(), forward.y());
  if (horizontal > 1e-12) {
    pose.heading = std::atan2(forward.x(), forward.y());
    const Eigen::Matrix3d without_roll = camera_to_world_rotation(pose.heading, pose.pitch, 0.0);
    const Eigen::Matrix3d spin = without_roll.transpose() * Rwc;
    pose.roll = std::atan2(spin(1, 0), spin(0, 0));
  } else {
    // Optical axis vertical: camera y axis encodes heading.
    const Eigen::Vector3d down_axis = Rwc.col(1);
    const double sign = forward.z() < 0 ? -1.0 : 1.0;
    pose.heading = std::atan2(sign * down_axis.x(), sign * down_axis.y());
    pose.roll = 0.0;
  }
  if (pose.heading < 0) pose.heading += 2.0 * std::numbers::pi;
  return pose;
}

Eigen::Vector2d undistort_normalized(const CameraModel &cam, const Eigen::Vector2d &distorted) {
  Eigen::Vector2d x = distorted;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d next = distorted / radial_factor(cam, x.squaredNorm());
    if ((next - x).norm() < 1e-15) return next;
    x = next;
  }
  return x;
}

double rotation_angle_between(const Eigen::Matrix3d &a, const Eigen::Matrix3d &b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

}  // namespace skyloc

#include "skyloc/pnp.hpp"

#include "skyloc/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skyloc {
namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d &v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Matrix3d exp_so3(const Eigen::Vector3d &w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Eigen::Matrix3d::Identity() + skew(w);
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

/// Real roots of c[0] x^n + ... + c[n], polished with Newton steps.
std::vector<double> real_roots(std::array<double, 5> coeffs) {
  int start = 0;
  const double scale = std::max({std::abs(coeffs[0]), std::abs(coeffs[1]), std::abs(coeffs[2]), std::abs(coeffs[3]),
                                 std::abs(coeffs[4])});
  if (scale == 0.0) return {};
  while (start < 4 && std::abs(coeffs[start]) < 1e-14 * scale) ++start;
  const int degree = 4 - start;
  if (degree == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) companion(0, i) = -coeffs[start + 1 + i] / coeffs[start];
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < degree; ++i) {
    const std::complex<double> z = solver.eigenvalues()(i);
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {
      double p = 0.0, dp = 0.0;
      for (int k = start; k <= 4; ++k) {
        dp = dp * x + p;
        p = p * x + coeffs[k];
      }
      if (dp == 0.0) break;
      x -= p / dp;
    }
    roots.push_back(x);
  }
  return roots;
}

/// Orthonormal frame spanned by a triangle (columns).
std::optional<Eigen::Matrix3d> triangle_frame(const Eigen::Vector3d &a, const Eigen::Vector3d &b,
                                              const Eigen::Vector3d &c) {
  const Eigen::Vector3d e1 = b - a;
  Eigen::Vector3d e3 = e1.cross(c - a);
  const double n1 = e1.norm(), n3 = e3.norm();
  if (n1 < 1e-12 || n3 < 1e-12 * n1 * n1) return std::nullopt;
  Eigen::Matrix3d f;
  f.col(0) = e1 / n1;
  f.col(2) = e3 / n3;
  f.col(1) = f.col(2).cross(f.col(0));
  return f;
}

double reprojection_error(const CameraModel &cam, const WorldToCamera &T, const Correspondence2D3D &c) {
  const Eigen::Vector3d p = T(c.point);
  if (!(p.z() > 0.0)) return std::numeric_limits<double>::infinity();
  return (project_pinhole(cam, p) - c.pixel).norm();
}

Eigen::Vector3d bearing(const CameraModel &cam, const Eigen::Vector2d &px) {
  return Eigen::Vector3d((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0).normalized();
}

struct Score {
  int inliers = 0;
  double error = std::numeric_limits<double>::infinity();

  bool better_than(const Score &o) const { return inliers > o.inliers || (inliers == o.inliers && error < o.error); }
};

Score score_pose(const CameraModel &cam, const WorldToCamera &T, std::span<const Correspondence2D3D> pairs,
                 double threshold, std::vector<int> *inliers = nullptr) {
  Score s;
  s.error = 0.0;
  if (inliers) inliers->clear();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double e = reprojection_error(cam, T, pairs[i]);
    if (e <= threshold) {
      ++s.inliers;
      s.error += e;
      if (inliers) inliers->push_back(static_cast<int>(i));
    }
  }
  return s;
}

}  // namespace

WorldToCamera apply_increment(const WorldToCamera &T, const Tangent6 &delta) {
  const Eigen::Matrix3d dR = exp_so3(delta.head<3>());
  WorldToCamera out;
  out.R = dR * T.R;
  out.t = dR * T.t + delta.tail<3>();
  return out;
}

std::optional<Eigen::Vector2d> reprojection_residual(const CameraModel &cam, const WorldToCamera &T,
                                                     const Correspondence2D3D &c) {
  const Eigen::Vector3d p = T(c.point);
  if (!(p.z() > 0.0)) return std::nullopt;
  return Eigen::Vector2d(project_pinhole(cam, p) - c.pixel);
}

Eigen::Matrix<double, 2, 6> reprojection_jacobian(const CameraModel &cam, const WorldToCamera &T,
                                                  const LocalPoint &point) {
  const Eigen::Vector3d p = T(point);
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  Eigen::Matrix<double, 3, 6> dpoint;
  dpoint << -skew(p), Eigen::Matrix3d::Identity();
  return dproj * dpoint;
}

double reprojection_cost(const CameraModel &cam, const WorldToCamera &T, std::span<const Correspondence2D3D> pairs) {
  double cost = 0.0;
  for (const auto &c : pairs) {
    const auto r = reprojection_residual(cam, T, c);
    if (!r) return std::numeric_limits<double>::infinity();
    cost += r->squaredNorm();
  }
  return cost;
}

std::vector<WorldToCamera> solve_p3p(const std::array<Eigen::Vector3d, 3> &bearings,
                                     const std::array<Eigen::Vector3d, 3> &points) {
  std::vector<WorldToCamera> out;
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  if (b2 < 1e-18 || a2 < 1e-18 || c2 < 1e-18) return out;
  const double ca = bearings[1].dot(bearings[2]);
  const double cb = bearings[0].dot(bearings[2]);
  const double cg = bearings[0].dot(bearings[1]);

  const double m = (a2 - c2) / b2, p = (a2 + c2) / b2;
  const std::array<double, 5> coeffs{
      (m - 1) * (m - 1) - 4 * c2 / b2 * ca * ca,
      4 * (m * (1 - m) * cb - (1 - p) * ca * cg + 2 * c2 / b2 * ca * ca * cb),
      2 * (m * m - 1 + 2 * m * m * cb * cb + 2 * (b2 - c2) / b2 * ca * ca - 4 * p * ca * cb * cg +
           2 * (b2 - a2) / b2 * cg * cg),
      4 * (-m * (1 + m) * cb + 2 * a2 / b2 * cg * cg * cb - (1 - p) * ca * cg),
      (1 + m) * (1 + m) - 4 * a2 / b2 * cg * cg,
  };

  const auto world_frame = triangle_frame(points[0], points[1], points[2]);
  if (!world_frame) return out;
  for (const double v : real_roots(coeffs)) {
    if (!(v > 0.0)) continue;
    const double denom = 2 * (cg - v * ca);
    if (std::abs(denom) < 1e-14) continue;
    const double u = ((m - 1) * v * v - 2 * m * cb * v + 1 + m) / denom;
    if (!(u > 0.0)) continue;
    const double q = 1 + v * v - 2 * v * cb;
    if (!(q > 0.0)) continue;
    const double s1 = std::sqrt(b2 / q);
    const Eigen::Vector3d c0 = s1 * bearings[0], c1 = u * s1 * bearings[1], c2v = v * s1 * bearings[2];
    const auto cam_frame = triangle_frame(c0, c1, c2v);
    if (!cam_frame) continue;
    WorldToCamera T;
    T.R = *cam_frame * world_frame->transpose();
    T.t = c0 - T.R * points[0];
    out.push_back(T);
  }
  return out;
}

RefinementResult refine_pose(const CameraModel &cam, const WorldToCamera &initial,
                             std::span<const Correspondence2D3D> pairs, int max_steps) {
  RefinementResult result;
  result.pose = initial;
  double cost = reprojection_cost(cam, initial, pairs);
  result.initial_cost = cost;
  result.final_cost = cost;
  if (!std::isfinite(cost) || pairs.size() < 3) return result;

  for (int step = 0; step < max_steps; ++step) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Tangent6 g = Tangent6::Zero();
    for (const auto &c : pairs) {
      const Eigen::Matrix<double, 2, 6> J = reprojection_jacobian(cam, result.pose, c.point);
      const Eigen::Vector2d r = *reprojection_residual(cam, result.pose, c);
      H.noalias() += J.transpose() * J;
      g.noalias() += J.transpose() * r;
    }
    const Tangent6 delta = H.ldlt().solve(-g);
    if (!delta.allFinite()) break;

    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      if (scale * delta.norm() < 1e-10) break;
      const WorldToCamera trial = apply_increment(result.pose, scale * delta);
      const double trial_cost = reprojection_cost(cam, trial, pairs);
      if (trial_cost < cost) {
        result.pose = trial;
        cost = trial_cost;
        improved = true;
        break;
      }
    }
    result.steps = step + 1;
    if (!improved || scale * delta.norm() < 1e-10) break;
  }
  result.final_cost = cost;
  return result;
}

std::optional<PnPSolution> solve_pnp_ransac(std::span<const Correspondence2D3D> pairs, const CameraModel &cam,
                                            const PnPConfig &config, std::uint64_t seed) {
  const std::size_t n = pairs.size();
  if (n < 4) throw std::invalid_argument("solve_pnp_ransac: need at least 4 correspondences");

  std::vector<Eigen::Vector3d> bearings(n);
  for (std::size_t i = 0; i < n; ++i) bearings[i] = bearing(cam, pairs[i].pixel);

  Rng rng(seed);
  std::vector<std::size_t> pool(n);
  std::optional<WorldToCamera> best_pose;
  Score best;
  best.inliers = 0;
  for (int iter = 0; iter < config.iterations; ++iter) {
    // Partial Fisher-Yates: first four entries are the sample.
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < 4; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);

    const auto candidates = solve_p3p({bearings[pool[0]], bearings[pool[1]], bearings[pool[2]]},
                                      {pairs[pool[0]].point, pairs[pool[1]].point, pairs[pool[2]].point});
    const WorldToCamera *pick = nullptr;
    double pick_error = std::numeric_limits<double>::infinity();
    for (const auto &T : candidates) {
      const double e = reprojection_error(cam, T, pairs[pool[3]]);
      if (e < pick_error) {
        pick_error = e;
        pick = &T;
      }
    }
    if (!pick) continue;
    const Score s = score_pose(cam, *pick, pairs, config.reproj_threshold);
    if (s.inliers > 0 && s.better_than(best)) {
      best = s;
      best_pose = *pick;
    }
  }
  if (!best_pose || best.inliers < 4) return std::nullopt;

  std::vector<int> inliers;
  score_pose(cam, *best_pose, pairs, config.reproj_threshold, &inliers);
  std::vector<Correspondence2D3D> subset;
  subset.reserve(inliers.size());
  for (const int i : inliers) subset.push_back(pairs[static_cast<std::size_t>(i)]);
  const RefinementResult refined = refine_pose(cam, *best_pose, subset, config.refine_max_steps);

  PnPSolution solution;
  solution.world_to_camera = refined.pose;
  const Score final_score = score_pose(cam, refined.pose, pairs, config.reproj_threshold, &solution.inliers);
  if (final_score.inliers < config.min_inliers) return std::nullopt;
  solution.inlier_error = final_score.error;
  solution.pose = pose_from_world_to_camera(refined.pose);
  return solution;
}

}  // namespace skyloc

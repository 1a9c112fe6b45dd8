#include "skyloc/localize.hpp"

#include "skyloc/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skyloc {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Box-filter resize where every output pixel averages the source area it covers.
Raster<float> area_resize(const Raster<float> &src, int out_w, int out_h) {
  const double sx = static_cast<double>(src.cols()) / out_w, sy = static_cast<double>(src.rows()) / out_h;
  Raster<float> out(out_h, out_w);
  for (int v = 0; v < out_h; ++v) {
    const double y0 = v * sy, y1 = (v + 1) * sy;
    for (int u = 0; u < out_w; ++u) {
      const double x0 = u * sx, x1 = (u + 1) * sx;
      double acc = 0.0, weight = 0.0;
      for (auto y = static_cast<Eigen::Index>(y0); y < std::min<double>(y1, src.rows()); ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (auto x = static_cast<Eigen::Index>(x0); x < std::min<double>(x1, src.cols()); ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          acc += wx * wy * src(y, x);
          weight += wx * wy;
        }
      }
      out(v, u) = static_cast<float>(weight > 0 ? acc / weight : 0.0);
    }
  }
  return out;
}

}  // namespace

std::string to_string(LocalizeStatus status) {
  switch (status) {
    case LocalizeStatus::kLocalized: return "localized";
    case LocalizeStatus::kNoCandidates: return "no-candidates";
    case LocalizeStatus::kNoConvergence: return "no-convergence";
    case LocalizeStatus::kAllGated: return "all-gated";
  }
  return "unknown";
}

std::vector<RetrievedCandidate> retrieve_top_n(const GlobalDescriptor &query, const GlobalMatrix &globals, int n) {
  if (query.size() != globals.cols()) throw std::invalid_argument("retrieve_top_n: descriptor dimension mismatch");
  const Eigen::Index rows = globals.rows();
  const auto keep = static_cast<std::size_t>(std::clamp<Eigen::Index>(n, 0, rows));
  if (keep == 0) return {};

  // Single-precision scan, then a double-precision rescore of every row whose
  // float distance could still place it in the top `keep`.
  std::vector<std::pair<float, std::size_t>> coarse(static_cast<std::size_t>(rows));
  const Eigen::RowVectorXf q = query.transpose();
  for (Eigen::Index i = 0; i < rows; ++i)
    coarse[static_cast<std::size_t>(i)] = {(globals.row(i) - q).squaredNorm(), static_cast<std::size_t>(i)};
  std::nth_element(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(keep - 1), coarse.end());
  const float kth = coarse[keep - 1].first;
  // Float rounding of a D-term sum stays far below this relative margin.
  const float cutoff = kth * (1.0f + 1e-3f) + 1e-6f;

  const Eigen::RowVectorXd qd = q.cast<double>();
  std::vector<std::pair<double, std::size_t>> fine;
  for (const auto &[d, id] : coarse)
    if (d <= cutoff)
      fine.emplace_back((globals.row(static_cast<Eigen::Index>(id)).cast<double>() - qd).squaredNorm(), id);
  std::partial_sort(fine.begin(), fine.begin() + static_cast<std::ptrdiff_t>(keep), fine.end());

  std::vector<RetrievedCandidate> out(keep);
  for (std::size_t k = 0; k < keep; ++k)
    out[k] = {fine[k].second, static_cast<float>(std::sqrt(fine[k].first))};
  return out;
}

RgbImage undistort(const RgbImage &image, const CameraModel &source, const CameraModel &target) {
  if (!source.valid() || !target.valid()) throw std::invalid_argument("undistort: invalid camera");
  if (image.width() != source.width || image.height() != source.height)
    throw std::invalid_argument("undistort: image size does not match camera");
  if (!source.has_distortion() && source.width == target.width && source.height == target.height) return image;

  // Remove distortion at source resolution with the source intrinsics.
  std::array<Raster<float>, 3> planes;
  for (int k = 0; k < 3; ++k) planes[k] = image.channel[k].cast<float>();
  if (source.has_distortion()) {
    std::array<Raster<float>, 3> corrected;
    for (auto &c : corrected) c.setZero(source.height, source.width);
    for (int v = 0; v < source.height; ++v)
      for (int u = 0; u < source.width; ++u) {
        const double xu = (u - source.cx) / source.fx, yu = (v - source.cy) / source.fy;
        const double f = radial_factor(source, xu * xu + yu * yu);
        const double us = source.fx * xu * f + source.cx, vs = source.fy * yu * f + source.cy;
        if (us < 0 || vs < 0 || us > source.width - 1 || vs > source.height - 1) continue;
        for (int k = 0; k < 3; ++k) corrected[k](v, u) = sample_bilinear(planes[k], us, vs);
      }
    planes = std::move(corrected);
  }
  RgbImage out(target.width, target.height);
  for (int k = 0; k < 3; ++k) {
    const Raster<float> resized = (source.width == target.width && source.height == target.height)
                                      ? planes[k]
                                      : area_resize(planes[k], target.width, target.height);
    out.channel[k] = resized.round().max(0.0f).min(255.0f).cast<std::uint8_t>();
  }
  return out;
}

std::vector<Correspondence2D3D> lift_correspondences(const std::vector<Match> &matches, const FeatureSet &query,
                                                     const FeatureSet &reference, const StoredDepth &depth,
                                                     const CameraModel &camera, const PoseSE3 &reference_pose) {
  std::vector<Correspondence2D3D> out;
  out.reserve(matches.size());
  const Eigen::Matrix3d Rwc = camera_to_world_rotation(reference_pose);
  for (const auto &m : matches) {
    const Keypoint &ref = reference.keypoints.at(static_cast<std::size_t>(m.index_b));
    const float z = depth.at(ref.u, ref.v);
    if (!(z > 0.0f)) continue;
    const Eigen::Vector3d p_cam = unproject_pinhole(camera, ref.u, ref.v, z);
    const Keypoint &q = query.keypoints.at(static_cast<std::size_t>(m.index_a));
    out.push_back({Eigen::Vector2d(q.u, q.v), Rwc * p_cam + reference_pose.position});
  }
  return out;
}

LocalizationResult select_trial(const std::vector<CandidateTrial> &trials, std::size_t n,
                                const DescriptorDatabase &db, double refine_threshold) {
  LocalizationResult result;
  const std::size_t count = std::min(n, trials.size());
  if (count == 0) {
    result.status = LocalizeStatus::kNoCandidates;
    return result;
  }
  const CandidateTrial *best = nullptr;
  bool any_converged = false;
  for (std::size_t i = 0; i < count; ++i) {
    const CandidateTrial &t = trials[i];
    if (!t.converged) continue;
    any_converged = true;
    if (t.correction > refine_threshold) continue;
    if (!best || t.inliers > best->inliers || (t.inliers == best->inliers && t.correction < best->correction))
      best = &t;
  }
  result.trials.assign(trials.begin(), trials.begin() + static_cast<std::ptrdiff_t>(count));
  if (!best) {
    result.status = any_converged ? LocalizeStatus::kAllGated : LocalizeStatus::kNoConvergence;
    return result;
  }
  result.status = LocalizeStatus::kLocalized;
  result.pose_local = best->pose;
  result.pose_geo = local_to_geo(best->pose.position, db.frame);
  result.inliers = best->inliers;
  result.candidate_id = best->candidate_id;
  result.candidate_position = db.entry(best->candidate_id).pose().position;
  result.correction = best->correction;
  return result;
}

LocalizationResult localize(const RgbImage &query, const CameraModel &query_camera, const DescriptorDatabase &db,
                            const LocalizeConfig &config, std::uint64_t seed) {
  const auto start = Clock::now();
  StageTimings timings;

  auto t0 = Clock::now();
  const RgbImage ideal = undistort(query, query_camera, db.camera);
  timings.undistort_ms = ms_since(t0);

  t0 = Clock::now();
  const FeatureSet features = extract_features(to_gray(ideal), db.max_features);
  timings.features_ms = ms_since(t0);

  t0 = Clock::now();
  const GlobalDescriptor global = encode_global(features, db.codebook);
  timings.global_ms = ms_since(t0);

  t0 = Clock::now();
  const auto candidates = retrieve_top_n(global, db.globals, config.retrieval.n);
  timings.retrieval_ms = ms_since(t0);

  std::vector<CandidateTrial> trials(candidates.size());
  parallel_for(candidates.size(), config.threads, [&](std::size_t k) {
    CandidateTrial &trial = trials[k];
    trial.candidate_id = candidates[k].id;
    trial.rank = static_cast<int>(k);
    trial.global_distance = candidates[k].distance;
    const DatabaseEntry &entry = db.entry(candidates[k].id);

    auto tm = Clock::now();
    const auto reference = entry.features();
    const auto matches = match_local(features, *reference, config.matching);
    const auto depth = entry.depth();
    const auto pairs = lift_correspondences(matches, features, *reference, *depth, db.camera, entry.pose());
    trial.match_ms = ms_since(tm);
    trial.matches = matches.size();
    trial.correspondences = pairs.size();
    if (pairs.size() < 4) return;

    tm = Clock::now();
    const auto solution = solve_pnp_ransac(pairs, db.camera, config.pnp, seed ^ static_cast<std::uint64_t>(entry.id()));
    trial.pnp_ms = ms_since(tm);
    if (!solution) return;
    trial.converged = true;
    trial.pose = solution->pose;
    trial.inliers = static_cast<int>(solution->inliers.size());
    trial.correction = (solution->pose.position.head<2>() - entry.pose().position.head<2>()).norm();
    trial.gated = trial.correction > config.refine_threshold;
  });
  for (const auto &t : trials) {
    timings.matching_ms += t.match_ms;
    timings.pnp_ms += t.pnp_ms;
  }

  LocalizationResult result = select_trial(trials, trials.size(), db, config.refine_threshold);
  result.trials = std::move(trials);
  timings.total_ms = ms_since(start);
  result.timings = timings;
  return result;
}

nlohmann::json to_json(const LocalizationResult &r) {
  nlohmann::json j;
  j["status"] = r.localized() ? "localized" : "unlocalized";
  j["reason"] = to_string(r.status);
  if (r.localized()) {
    j["lat"] = r.pose_geo.lat;
    j["lon"] = r.pose_geo.lon;
    j["alt"] = r.pose_geo.alt;
    j["heading_deg"] = degrees(r.pose_local.heading);
    j["pitch_deg"] = degrees(r.pose_local.pitch);
    j["roll_deg"] = degrees(r.pose_local.roll);
    j["inliers"] = r.inliers;
    j["candidate_id"] = r.candidate_id;
    j["correction_m"] = r.correction;
  } else {
    for (const char *key : {"lat", "lon", "alt", "heading_deg", "pitch_deg", "roll_deg", "candidate_id", "correction_m"})
      j[key] = nullptr;
    j["inliers"] = 0;
  }
  j["stage_timings_ms"] = {{"undistort", r.timings.undistort_ms}, {"features", r.timings.features_ms},
                           {"global", r.timings.global_ms},       {"retrieval", r.timings.retrieval_ms},
                           {"matching", r.timings.matching_ms},   {"pnp", r.timings.pnp_ms},
                           {"total", r.timings.total_ms}};
  return j;
}

}  // namespace skyloc

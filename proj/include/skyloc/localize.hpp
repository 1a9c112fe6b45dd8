#pragma once

#include "skyloc/database.hpp"
#include "skyloc/matching.hpp"
#include "skyloc/pnp.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace skyloc {

struct RetrievalConfig {
  int n = 3;
};

struct LocalizeConfig {
  RetrievalConfig retrieval;
  PnPConfig pnp;
  MatchOptions matching;
  /// Largest horizontal distance between a refined position and the grid
  /// position of its candidate, meters.
  double refine_threshold = 20.0;
  /// Candidate trials run on this many threads; results do not depend on it.
  int threads = 1;
};

/// Gate matching the usual two-grid-step rule.
inline double default_refine_threshold(const GridSpec &grid) { return 2.0 * grid.spacing_xy; }

struct RetrievedCandidate {
  std::size_t id = 0;
  float distance = 0.0f;

  friend bool operator==(const RetrievedCandidate &, const RetrievedCandidate &) = default;
};

/// Exact L2 ranking of every row against `query`, ascending, ties to the
/// lower id; the order is that of double-precision distances. Returns
/// min(n, N) entries.
std::vector<RetrievedCandidate> retrieve_top_n(const GlobalDescriptor &query, const GlobalMatrix &globals, int n);

/// Removes radial distortion and resamples into `target` (area averaging
/// when the source is larger). Distortion-free input of the same size comes
/// back unchanged.
RgbImage undistort(const RgbImage &image, const CameraModel &source, const CameraModel &target);
inline RgbImage undistort(const RgbImage &image, const CameraModel &camera) {
  CameraModel ideal = camera;
  ideal.k1 = ideal.k2 = 0.0;
  return undistort(image, camera, ideal);
}

/// Back-projects each database keypoint with its stored depth through the
/// entry pose and pairs it with the matched query pixel. Matches landing on
/// pixels without depth are skipped.
std::vector<Correspondence2D3D> lift_correspondences(const std::vector<Match> &matches, const FeatureSet &query,
                                                     const FeatureSet &reference, const StoredDepth &depth,
                                                     const CameraModel &camera, const PoseSE3 &reference_pose);

enum class LocalizeStatus { kLocalized, kNoCandidates, kNoConvergence, kAllGated };

std::string to_string(LocalizeStatus status);

/// Outcome of matching the query against one retrieved candidate.
struct CandidateTrial {
  std::size_t candidate_id = 0;
  int rank = 0;
  float global_distance = 0.0f;
  std::size_t matches = 0;
  std::size_t correspondences = 0;
  bool converged = false;
  bool gated = false;
  PoseSE3 pose;
  int inliers = 0;
  double correction = 0.0;
  double match_ms = 0.0;
  double pnp_ms = 0.0;
};

struct StageTimings {
  double undistort_ms = 0.0;
  double features_ms = 0.0;
  double global_ms = 0.0;
  double retrieval_ms = 0.0;
  double matching_ms = 0.0;
  double pnp_ms = 0.0;
  double total_ms = 0.0;
};

struct LocalizationResult {
  LocalizeStatus status = LocalizeStatus::kNoCandidates;
  PoseSE3 pose_local;
  GeoPoint pose_geo;
  int inliers = 0;
  std::size_t candidate_id = 0;
  LocalPoint candidate_position = LocalPoint::Zero();
  double correction = 0.0;
  StageTimings timings;
  std::vector<CandidateTrial> trials;

  bool localized() const { return status == LocalizeStatus::kLocalized; }
};

/// Picks among the first `n` trials: converged, inside the gate, most
/// inliers, then smallest correction.
LocalizationResult select_trial(const std::vector<CandidateTrial> &trials, std::size_t n,
                                const DescriptorDatabase &db, double refine_threshold);

/// Full online pipeline for one query image. `query_camera` describes the
/// raw capture (resolution, distortion); the database camera is the target.
/// The RANSAC seed for a candidate is seed ^ candidate_id.
LocalizationResult localize(const RgbImage &query, const CameraModel &query_camera, const DescriptorDatabase &db,
                            const LocalizeConfig &config, std::uint64_t seed);

/// JSON record: position, attitude in degrees, inliers, candidate,
/// correction, per-stage timings and status.
nlohmann::json to_json(const LocalizationResult &result);

}  // namespace skyloc

#pragma once

#include "skyloc/database.hpp"
#include "skyloc/localize.hpp"
#include "skyloc/terrain.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace skyloc {

enum class HeadingMode { kAlongTrack, kFixed };

struct FlightSpec {
  std::vector<LocalPoint> waypoints;
  double speed = 5.0;         // m/s
  double capture_rate = 0.5;  // Hz
  HeadingMode heading_mode = HeadingMode::kAlongTrack;
  double fixed_heading = 0.0;  // radians, used in kFixed mode
  /// Pitch for sample i is pitch_profile[i % size].
  std::vector<double> pitch_profile{0.7853981633974483};
  std::uint64_t seed = 0;

  void validate() const;
};

struct FlightSample {
  double time = 0.0;
  double distance = 0.0;  // along the path, meters
  PoseSE3 pose;
};

/// Constant-speed sampling of the waypoint polyline at the capture rate,
/// including both endpoints when they fall on the sampling grid.
std::vector<FlightSample> generate_flight(const FlightSpec &flight);

struct Flare {
  double u = 0.0, v = 0.0;  // center, pixels
  double radius = 50.0;     // pixels
  double strength = 0.5;    // fraction of full scale at the center
};

/// Photometric interference applied to a rendered query, in this order:
/// contrast/brightness, horizontal motion blur, flare, Gaussian noise. Every
/// stage clamps to [0, 255].
struct InterferenceSpec {
  double brightness_scale = 1.0;
  double contrast_scale = 1.0;
  double noise_sigma = 0.0;
  double blur_len = 0.0;
  std::optional<Flare> flare;
  /// Per-query brightness factor drawn from [1 - j, 1 + j] on top of
  /// brightness_scale; 0 keeps every query identical.
  double brightness_jitter = 0.0;

  void validate() const;
  bool is_identity() const;
};

RgbImage perturb_image(const RgbImage &image, const InterferenceSpec &spec, std::uint64_t seed);

/// The spec actually applied to query `index` (jitter resolved).
InterferenceSpec resolve_interference(const InterferenceSpec &spec, std::uint64_t query_seed);

struct QueryRecord {
  int n = 0;
  int query = 0;
  double time = 0.0;
  double distance = 0.0;
  LocalPoint truth = LocalPoint::Zero();
  bool localized = false;
  std::string status;
  LocalPoint estimate = LocalPoint::Zero();
  LocalPoint candidate = LocalPoint::Zero();
  long candidate_id = -1;
  int inliers = 0;
  double error_3d = 0.0;
  double error_2d = 0.0;
};

struct MetricsRow {
  int n = 0;
  std::optional<double> rmse_3d;
  std::optional<double> rmse_2d;
  double recall = 0.0;  // percent
  int localized = 0;
  int total = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<QueryRecord> log;

  const MetricsRow *row_for(int n) const;
};

/// Per-n RMSE (localized queries only) and recall from a query log.
std::vector<MetricsRow> compute_metrics(const std::vector<QueryRecord> &log, const std::vector<int> &n_values);

struct ExperimentOptions {
  LocalizeConfig localize;
  /// Raw capture camera; defaults to the database camera.
  std::optional<CameraModel> query_camera;
  int threads = 1;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Renders every flight sample, perturbs it and localizes it once with the
/// largest n; smaller n reuse the leading trials, since the top-n list is a
/// prefix and trial seeds depend only on the candidate id.
MetricsTable run_experiment(const DescriptorDatabase &db, const Terrain &terrain, const FlightSpec &flight,
                            const InterferenceSpec &interference, const std::vector<int> &n_values, std::uint64_t seed,
                            const ExperimentOptions &options = {});

/// Writes metrics.csv, queries.csv, trajectory.svg and altitude.svg. The
/// plots use `plot_n` (3 when swept, else the smallest n).
void export_report(const MetricsTable &table, const std::filesystem::path &out_dir);

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path &path);
std::vector<QueryRecord> read_queries_csv(const std::filesystem::path &path);

FlightSpec flight_from_json(const nlohmann::json &j);
nlohmann::json flight_to_json(const FlightSpec &flight);
InterferenceSpec interference_from_json(const nlohmann::json &j);
nlohmann::json interference_to_json(const InterferenceSpec &spec);

}  // namespace skyloc

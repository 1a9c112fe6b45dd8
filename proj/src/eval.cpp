#include "skyloc/eval.hpp"

#include "skyloc/parallel.hpp"
#include "skyloc/rng.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skyloc {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * std::numbers::pi);
  return a < 0 ? a + 2.0 * std::numbers::pi : a;
}

/// Simulates a raw capture: each distorted pixel looks up the ideal render
/// through the inverse radial model.
RgbImage distort_image(const RgbImage &ideal, const CameraModel &camera) {
  if (!camera.has_distortion()) return ideal;
  std::array<Raster<float>, 3> planes;
  for (int k = 0; k < 3; ++k) planes[k] = ideal.channel[k].cast<float>();
  RgbImage out(camera.width, camera.height);
  for (int v = 0; v < camera.height; ++v)
    for (int u = 0; u < camera.width; ++u) {
      const Eigen::Vector2d xu =
          undistort_normalized(camera, {(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy});
      const double us = camera.fx * xu.x() + camera.cx, vs = camera.fy * xu.y() + camera.cy;
      if (us < 0 || vs < 0 || us > camera.width - 1 || vs > camera.height - 1) continue;
      for (int k = 0; k < 3; ++k)
        out.channel[k](v, u) = static_cast<std::uint8_t>(std::clamp(std::lround(sample_bilinear(planes[k], us, vs)), 0L, 255L));
    }
  return out;
}

}  // namespace

void FlightSpec::validate() const {
  if (waypoints.size() < 2) throw std::invalid_argument("flight needs at least two waypoints");
  if (!(speed > 0) || !(capture_rate > 0)) throw std::invalid_argument("flight speed and capture rate must be positive");
  if (pitch_profile.empty()) throw std::invalid_argument("flight pitch profile is empty");
}

std::vector<FlightSample> generate_flight(const FlightSpec &flight) {
  flight.validate();
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < flight.waypoints.size(); ++i)
    cumulative.push_back(cumulative.back() + (flight.waypoints[i] - flight.waypoints[i - 1]).norm());
  const double length = cumulative.back();
  const double duration = length / flight.speed;
  const auto count = static_cast<std::size_t>(std::floor(duration * flight.capture_rate + 1e-9)) + 1;

  std::vector<FlightSample> samples;
  samples.reserve(count);
  double last_heading = flight.fixed_heading;
  for (std::size_t i = 0; i < count; ++i) {
    FlightSample s;
    s.time = static_cast<double>(i) / flight.capture_rate;
    s.distance = std::min(length, flight.speed * s.time);
    std::size_t seg = 1;
    while (seg + 1 < cumulative.size() && cumulative[seg] < s.distance) ++seg;
    const LocalPoint &a = flight.waypoints[seg - 1], &b = flight.waypoints[seg];
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const double f = seg_len > 0 ? std::clamp((s.distance - cumulative[seg - 1]) / seg_len, 0.0, 1.0) : 0.0;
    s.pose.position = a + f * (b - a);
    if (flight.heading_mode == HeadingMode::kAlongTrack) {
      const Eigen::Vector2d dir = (b - a).head<2>();
      if (dir.norm() > 1e-9) last_heading = wrap_angle(std::atan2(dir.x(), dir.y()));
      s.pose.heading = last_heading;
    } else {
      s.pose.heading = wrap_angle(flight.fixed_heading);
    }
    s.pose.pitch = flight.pitch_profile[i % flight.pitch_profile.size()];
    samples.push_back(s);
  }
  return samples;
}

void InterferenceSpec::validate() const {
  if (!(brightness_scale > 0) || !(contrast_scale > 0)) throw std::invalid_argument("interference scales must be positive");
  if (noise_sigma < 0 || blur_len < 0 || brightness_jitter < 0 || brightness_jitter >= 1)
    throw std::invalid_argument("interference noise, blur and jitter must be non-negative (jitter < 1)");
  if (flare && (flare->radius <= 0 || flare->strength < 0)) throw std::invalid_argument("invalid flare");
}

bool InterferenceSpec::is_identity() const {
  return brightness_scale == 1.0 && contrast_scale == 1.0 && noise_sigma == 0.0 && blur_len <= 1.0 && !flare &&
         brightness_jitter == 0.0;
}

InterferenceSpec resolve_interference(const InterferenceSpec &spec, std::uint64_t query_seed) {
  InterferenceSpec out = spec;
  if (spec.brightness_jitter > 0) {
    Rng rng(query_seed ^ 0xb419c7e5ULL);
    out.brightness_scale *= rng.uniform(1.0 - spec.brightness_jitter, 1.0 + spec.brightness_jitter);
  }
  out.brightness_jitter = 0.0;
  return out;
}

RgbImage perturb_image(const RgbImage &image, const InterferenceSpec &spec, std::uint64_t seed) {
  spec.validate();
  const int w = image.width(), h = image.height();
  std::array<Raster<float>, 3> planes;
  for (int k = 0; k < 3; ++k) planes[k] = image.channel[k].cast<float>();

  if (spec.contrast_scale != 1.0 || spec.brightness_scale != 1.0) {
    const auto c = static_cast<float>(spec.contrast_scale), b = static_cast<float>(spec.brightness_scale);
    for (auto &p : planes) p = (((p - 128.0f) * c + 128.0f) * b).max(0.0f).min(255.0f);
  }
  if (const long taps = std::lround(spec.blur_len); taps > 1) {
    const long before = (taps - 1) / 2;
    for (auto &p : planes) {
      Raster<float> blurred(h, w);
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          float acc = 0.0f;
          for (long t = 0; t < taps; ++t) acc += p(v, std::clamp<long>(u - before + t, 0, w - 1));
          blurred(v, u) = acc / static_cast<float>(taps);
        }
      p = blurred.max(0.0f).min(255.0f);
    }
  }
  if (spec.flare) {
    const Flare &f = *spec.flare;
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const double r2 = ((u - f.u) * (u - f.u) + (v - f.v) * (v - f.v)) / (f.radius * f.radius);
        if (r2 >= 1.0) continue;
        const auto add = static_cast<float>(255.0 * f.strength * (1.0 - r2) * (1.0 - r2));
        for (auto &p : planes) p(v, u) = std::min(255.0f, p(v, u) + add);
      }
  }
  if (spec.noise_sigma > 0) {
    Rng rng(seed);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        for (auto &p : planes)
          p(v, u) = std::clamp(p(v, u) + static_cast<float>(spec.noise_sigma * rng.normal()), 0.0f, 255.0f);
  }
  RgbImage out(w, h);
  for (int k = 0; k < 3; ++k) out.channel[k] = planes[k].round().cast<std::uint8_t>();
  return out;
}

const MetricsRow *MetricsTable::row_for(int n) const {
  for (const auto &r : rows)
    if (r.n == n) return &r;
  return nullptr;
}

std::vector<MetricsRow> compute_metrics(const std::vector<QueryRecord> &log, const std::vector<int> &n_values) {
  std::vector<MetricsRow> rows;
  for (const int n : n_values) {
    MetricsRow row;
    row.n = n;
    double sum3 = 0.0, sum2 = 0.0;
    for (const auto &q : log) {
      if (q.n != n) continue;
      ++row.total;
      if (!q.localized) continue;
      ++row.localized;
      sum3 += q.error_3d * q.error_3d;
      sum2 += q.error_2d * q.error_2d;
    }
    if (row.localized > 0) {
      row.rmse_3d = std::sqrt(sum3 / row.localized);
      row.rmse_2d = std::sqrt(sum2 / row.localized);
    }
    row.recall = row.total > 0 ? 100.0 * row.localized / row.total : 0.0;
    rows.push_back(row);
  }
  return rows;
}

MetricsTable run_experiment(const DescriptorDatabase &db, const Terrain &terrain, const FlightSpec &flight,
                            const InterferenceSpec &interference, const std::vector<int> &n_values, std::uint64_t seed,
                            const ExperimentOptions &options) {
  if (n_values.empty()) throw std::invalid_argument("run_experiment: no candidate counts given");
  interference.validate();
  const auto samples = generate_flight(flight);
  const int n_max = *std::max_element(n_values.begin(), n_values.end());
  const CameraModel query_camera = options.query_camera.value_or(db.camera);
  CameraModel ideal_camera = query_camera;
  ideal_camera.k1 = ideal_camera.k2 = 0.0;

  LocalizeConfig cfg = options.localize;
  cfg.retrieval.n = n_max;
  cfg.threads = 1;

  std::vector<std::vector<QueryRecord>> per_query(samples.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(samples.size(), options.threads, [&](std::size_t i) {
    const FlightSample &s = samples[i];
    const std::uint64_t query_seed = seed ^ static_cast<std::uint64_t>(i);
    const RenderedView view = render(terrain, s.pose, ideal_camera, db.render);
    const RgbImage raw = distort_image(view.color, query_camera);
    const RgbImage perturbed = perturb_image(raw, resolve_interference(interference, query_seed), query_seed);
    const LocalizationResult full = localize(perturbed, query_camera, db, cfg, query_seed);

    for (const int n : n_values) {
      const LocalizationResult r = select_trial(full.trials, static_cast<std::size_t>(std::max(n, 0)), db,
                                                cfg.refine_threshold);
      QueryRecord rec;
      rec.n = n;
      rec.query = static_cast<int>(i);
      rec.time = s.time;
      rec.distance = s.distance;
      rec.truth = s.pose.position;
      rec.localized = r.localized();
      rec.status = to_string(r.status);
      if (rec.localized) {
        rec.estimate = r.pose_local.position;
        rec.candidate = r.candidate_position;
        rec.candidate_id = static_cast<long>(r.candidate_id);
        rec.inliers = r.inliers;
        rec.error_3d = (rec.estimate - rec.truth).norm();
        rec.error_2d = (rec.estimate - rec.truth).head<2>().norm();
      }
      per_query[i].push_back(rec);
    }
    for (const auto &t : full.trials) db.entry(t.candidate_id).release();
    const std::size_t finished = ++done;
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      options.progress(finished, samples.size());
    }
  });

  MetricsTable table;
  // Log ordered by n (as given), then query index.
  for (const int n : n_values)
    for (const auto &records : per_query)
      for (const auto &r : records)
        if (r.n == n) table.log.push_back(r);
  table.rows = compute_metrics(table.log, n_values);
  return table;
}

FlightSpec flight_from_json(const nlohmann::json &j) {
  FlightSpec f;
  for (const auto &w : j.at("waypoints")) {
    const auto v = w.get<std::vector<double>>();
    if (v.size() != 3) throw std::invalid_argument("waypoint needs [x, y, z]");
    f.waypoints.emplace_back(v[0], v[1], v[2]);
  }
  f.speed = j.value("speed", f.speed);
  f.capture_rate = j.value("capture_rate", f.capture_rate);
  const std::string mode = j.value("heading_mode", std::string("along-track"));
  if (mode == "along-track") {
    f.heading_mode = HeadingMode::kAlongTrack;
  } else if (mode == "fixed") {
    f.heading_mode = HeadingMode::kFixed;
  } else {
    throw std::invalid_argument("heading_mode must be 'along-track' or 'fixed'");
  }
  f.fixed_heading = j.value("fixed_heading_deg", 0.0) * kDeg;
  if (j.contains("pitch_profile_deg")) {
    f.pitch_profile.clear();
    for (const double p : j.at("pitch_profile_deg").get<std::vector<double>>()) f.pitch_profile.push_back(p * kDeg);
  }
  f.seed = j.value("seed", std::uint64_t{0});
  f.validate();
  return f;
}

nlohmann::json flight_to_json(const FlightSpec &f) {
  nlohmann::json j;
  j["waypoints"] = nlohmann::json::array();
  for (const auto &w : f.waypoints) j["waypoints"].push_back({w.x(), w.y(), w.z()});
  j["speed"] = f.speed;
  j["capture_rate"] = f.capture_rate;
  j["heading_mode"] = f.heading_mode == HeadingMode::kAlongTrack ? "along-track" : "fixed";
  j["fixed_heading_deg"] = f.fixed_heading / kDeg;
  std::vector<double> pitches;
  for (const double p : f.pitch_profile) pitches.push_back(p / kDeg);
  j["pitch_profile_deg"] = pitches;
  j["seed"] = f.seed;
  return j;
}

InterferenceSpec interference_from_json(const nlohmann::json &j) {
  InterferenceSpec s;
  s.brightness_scale = j.value("brightness_scale", 1.0);
  s.contrast_scale = j.value("contrast_scale", 1.0);
  s.noise_sigma = j.value("noise_sigma", 0.0);
  s.blur_len = j.value("blur_len", 0.0);
  s.brightness_jitter = j.value("brightness_jitter", 0.0);
  if (j.contains("flare") && !j.at("flare").is_null()) {
    const auto &f = j.at("flare");
    s.flare = Flare{f.at("u").get<double>(), f.at("v").get<double>(), f.at("radius").get<double>(),
                    f.at("strength").get<double>()};
  }
  s.validate();
  return s;
}

nlohmann::json interference_to_json(const InterferenceSpec &s) {
  nlohmann::json j{{"brightness_scale", s.brightness_scale}, {"contrast_scale", s.contrast_scale},
                   {"noise_sigma", s.noise_sigma},           {"blur_len", s.blur_len},
                   {"brightness_jitter", s.brightness_jitter}};
  if (s.flare) {
    j["flare"] = {{"u", s.flare->u}, {"v", s.flare->v}, {"radius", s.flare->radius}, {"strength", s.flare->strength}};
  } else {
    j["flare"] = nullptr;
  }
  return j;
}

}  // namespace skyloc

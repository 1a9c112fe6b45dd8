#include "world_fixtures.hpp"

#include "skyloc/eval.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

using namespace skyloc;
using skyloc::testing::build_small_db;
using skyloc::testing::scratch_dir;
using skyloc::testing::small_world;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

RgbImage gray_image(int w, int h, std::uint8_t value) {
  RgbImage img(w, h);
  for (auto &c : img.channel) c.setConstant(value);
  return img;
}

RgbImage ramp_image(int w, int h) {
  RgbImage img(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      img.channel[0](v, u) = static_cast<std::uint8_t>((u * 7 + v * 3) % 256);
      img.channel[1](v, u) = static_cast<std::uint8_t>((u * u + v) % 256);
      img.channel[2](v, u) = static_cast<std::uint8_t>((v * 11) % 256);
    }
  return img;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string &text, const std::string &needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

QueryRecord record(int n, int q, bool localized, LocalPoint truth, LocalPoint estimate) {
  QueryRecord r;
  r.n = n;
  r.query = q;
  r.time = 2.0 * q;
  r.distance = 10.0 * q;
  r.truth = truth;
  r.localized = localized;
  r.status = localized ? "localized" : "no-convergence";
  if (localized) {
    r.estimate = estimate;
    r.candidate = {std::round(truth.x() / 10) * 10, std::round(truth.y() / 10) * 10, 70};
    r.candidate_id = 4 + q;
    r.inliers = 40 + q;
    r.error_3d = (estimate - truth).norm();
    r.error_2d = (estimate - truth).head<2>().norm();
  }
  return r;
}

}  // namespace

TEST(GenerateFlight, StraightLegSampleCount) {
  FlightSpec f;
  f.waypoints = {{0, 0, 70}, {100, 0, 70}};
  f.speed = 5;
  f.capture_rate = 0.5;
  const auto s = generate_flight(f);
  ASSERT_EQ(s.size(), 11u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s[i].time, 2.0 * i, 1e-12);
    EXPECT_NEAR(s[i].distance, 10.0 * i, 1e-9);
    EXPECT_NEAR(s[i].pose.position.x(), 10.0 * i, 1e-9);
    // Due east is 90 degrees clockwise from north.
    EXPECT_NEAR(s[i].pose.heading, 90 * kDeg, 1e-12);
    EXPECT_NEAR(s[i].pose.pitch, 45 * kDeg, 1e-12);
  }
  EXPECT_EQ(s.back().pose.position, LocalPoint(100, 0, 70));
}

TEST(GenerateFlight, PolylineHeadingsAltitudesAndPitchProfile) {
  FlightSpec f;
  f.waypoints = {{0, 0, 50}, {0, 30, 90}, {-40, 30, 90}};
  f.speed = 10;
  f.capture_rate = 1;
  f.pitch_profile = {30 * kDeg, 60 * kDeg};
  const auto s = generate_flight(f);
  ASSERT_EQ(s.size(), 10u);  // 50 m + 40 m at 10 m/s
  EXPECT_NEAR(s[0].pose.heading, 0.0, 1e-12);
  EXPECT_NEAR(s[2].pose.position.z(), 50 + 40 * 20.0 / 50.0, 1e-9);
  EXPECT_NEAR(s[7].pose.heading, 270 * kDeg, 1e-12);
  EXPECT_NEAR(s[7].pose.position.x(), -20, 1e-9);
  EXPECT_NEAR(s[1].pose.pitch, 60 * kDeg, 1e-12);
  EXPECT_NEAR(s[4].pose.pitch, 30 * kDeg, 1e-12);
  EXPECT_EQ(generate_flight(f).size(), s.size());
  f.heading_mode = HeadingMode::kFixed;
  f.fixed_heading = 1.0;
  for (const auto &x : generate_flight(f)) EXPECT_EQ(x.pose.heading, 1.0);
}

TEST(GenerateFlight, Errors) {
  FlightSpec f;
  f.waypoints = {{0, 0, 70}};
  EXPECT_THROW(generate_flight(f), std::invalid_argument);
  f.waypoints.push_back({1, 0, 70});
  f.speed = 0;
  EXPECT_THROW(generate_flight(f), std::invalid_argument);
}

TEST(PerturbImage, IdentityLeavesImageUnchanged) {
  const RgbImage img = ramp_image(50, 40);
  InterferenceSpec s;
  EXPECT_TRUE(s.is_identity());
  EXPECT_EQ(perturb_image(img, s, 3), img);
}

TEST(PerturbImage, BrightnessClampsAtFullScale) {
  InterferenceSpec s;
  s.brightness_scale = 2.0;
  const RgbImage out = perturb_image(gray_image(8, 8, 128), s, 0);
  for (const auto &c : out.channel) EXPECT_TRUE((c == 255).all());
  s.brightness_scale = 0.5;
  const RgbImage half = perturb_image(gray_image(8, 8, 100), s, 0);
  for (const auto &c : half.channel) EXPECT_TRUE((c == 50).all());
}

TEST(PerturbImage, ContrastPivotsAroundMidGray) {
  InterferenceSpec s;
  s.contrast_scale = 0.5;
  const RgbImage out = perturb_image(gray_image(4, 4, 28), s, 0);
  for (const auto &c : out.channel) EXPECT_TRUE((c == 78).all());
}

TEST(PerturbImage, NoiseIsSeededWithTheRequestedSpread) {
  InterferenceSpec s;
  s.noise_sigma = 5;
  const RgbImage img = gray_image(200, 100, 128);
  const RgbImage a = perturb_image(img, s, 17);
  EXPECT_EQ(perturb_image(img, s, 17), a);
  EXPECT_FALSE(perturb_image(img, s, 18) == a);
  double sum = 0, sq = 0;
  const auto n = static_cast<double>(a.channel[0].size());
  for (Eigen::Index i = 0; i < a.channel[0].size(); ++i) {
    const double d = a.channel[0].data()[i] - 128.0;
    sum += d;
    sq += d * d;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.2);
  // Rounding adds 1/12 to the variance.
  EXPECT_NEAR(std::sqrt(sq / n), std::sqrt(25.0 + 1.0 / 12.0), 0.15);
}

TEST(PerturbImage, BlurAndFlare) {
  InterferenceSpec s;
  s.blur_len = 3;
  RgbImage stripes(30, 5);
  for (int u = 0; u < 30; ++u)
    for (auto &c : stripes.channel) c.col(u).setConstant(u % 3 == 0 ? 255 : 0);
  const RgbImage blurred = perturb_image(stripes, s, 0);
  // A 3-tap box over a period-3 pattern is flat away from the edges.
  for (int u = 2; u < 28; ++u) EXPECT_EQ(blurred.channel[1](2, u), 85) << u;

  InterferenceSpec f;
  f.flare = Flare{10, 10, 8, 0.5};
  const RgbImage flared = perturb_image(gray_image(21, 21, 0), f, 0);
  EXPECT_EQ(flared.channel[0](10, 10), 128);  // 255 * 0.5, rounded
  EXPECT_EQ(flared.channel[0](10, 18), 0);
  EXPECT_EQ(flared.channel[0](0, 0), 0);
  EXPECT_GT(flared.channel[0](10, 13), flared.channel[0](10, 15));
}

TEST(Interference, ValidationAndJitter) {
  InterferenceSpec s;
  s.noise_sigma = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.brightness_jitter = 0.1;
  EXPECT_FALSE(s.is_identity());
  for (std::uint64_t q = 0; q < 50; ++q) {
    const InterferenceSpec r = resolve_interference(s, q);
    EXPECT_GE(r.brightness_scale, 0.9);
    EXPECT_LE(r.brightness_scale, 1.1);
    EXPECT_EQ(r.brightness_jitter, 0.0);
    EXPECT_EQ(resolve_interference(s, q).brightness_scale, r.brightness_scale);
  }
}

TEST(Metrics, ThreeFourFive) {
  const auto rows = compute_metrics({record(3, 0, true, {0, 0, 70}, {3, 4, 70})}, {3});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(*rows[0].rmse_2d, 5.0);
  EXPECT_DOUBLE_EQ(*rows[0].rmse_3d, 5.0);
  EXPECT_DOUBLE_EQ(rows[0].recall, 100.0);
}

TEST(Metrics, RecallAndRmseOverLocalizedOnly) {
  const std::vector<QueryRecord> log{record(1, 0, true, {0, 0, 70}, {1, 0, 70}),
                                     record(1, 1, false, {10, 0, 70}, {}),
                                     record(1, 2, true, {20, 0, 70}, {20, 0, 73}),
                                     record(1, 3, false, {30, 0, 70}, {})};
  const auto rows = compute_metrics(log, {1});
  EXPECT_DOUBLE_EQ(rows[0].recall, 50.0);
  EXPECT_EQ(rows[0].localized, 2);
  EXPECT_EQ(rows[0].total, 4);
  EXPECT_DOUBLE_EQ(*rows[0].rmse_3d, std::sqrt((1.0 + 9.0) / 2.0));
  EXPECT_DOUBLE_EQ(*rows[0].rmse_2d, std::sqrt(0.5));
  const auto none = compute_metrics({record(1, 1, false, {0, 0, 0}, {})}, {1});
  EXPECT_FALSE(none[0].rmse_3d);
  EXPECT_EQ(none[0].recall, 0.0);
}

TEST(Report, CsvRoundTripAndSvgMarkers) {
  const fs::path dir = scratch_dir("report");
  MetricsTable t;
  for (int n : {3, 1})
    for (int q = 0; q < 5; ++q)
      t.log.push_back(record(n, q, q % 2 == 0 || n == 3, {q * 10.0 + 0.1, 1.0 / 3.0, 70.0 + q},
                             {q * 10.0 + 0.7, 0.2, 69.5 + q}));
  t.rows = compute_metrics(t.log, {3, 1});
  export_report(t, dir);

  const auto rows = read_metrics_csv(dir / "metrics.csv");
  ASSERT_EQ(rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(rows[i].n, t.rows[i].n);
    EXPECT_EQ(rows[i].recall, t.rows[i].recall);
    EXPECT_EQ(rows[i].rmse_3d, t.rows[i].rmse_3d);
    EXPECT_EQ(rows[i].rmse_2d, t.rows[i].rmse_2d);
  }
  const auto log = read_queries_csv(dir / "queries.csv");
  ASSERT_EQ(log.size(), t.log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].n, t.log[i].n);
    EXPECT_EQ(log[i].query, t.log[i].query);
    EXPECT_EQ(log[i].truth, t.log[i].truth);
    EXPECT_EQ(log[i].localized, t.log[i].localized);
    EXPECT_EQ(log[i].status, t.log[i].status);
    EXPECT_EQ(log[i].estimate, t.log[i].estimate);
    EXPECT_EQ(log[i].candidate_id, t.log[i].candidate_id);
    EXPECT_EQ(log[i].error_3d, t.log[i].error_3d);
  }

  // Plots show n = 3, where all five queries localized.
  const std::string traj = slurp(dir / "trajectory.svg");
  EXPECT_EQ(count_of(traj, "class=\"refined\""), 5u);
  EXPECT_EQ(count_of(traj, "class=\"initial-match\""), 5u);
  EXPECT_EQ(count_of(traj, "class=\"correspondence\""), 5u);
  EXPECT_EQ(count_of(traj, "class=\"ground-truth\""), 1u);
  const std::string alt = slurp(dir / "altitude.svg");
  EXPECT_EQ(count_of(alt, "class=\"inferred-altitude\""), 5u);
  fs::remove_all(dir);
}

TEST(Report, EmptyLocalizationRun) {
  const fs::path dir = scratch_dir("report_empty");
  MetricsTable t;
  for (int q = 0; q < 3; ++q) t.log.push_back(record(3, q, false, {q * 1.0, 0, 70}, {}));
  t.rows = compute_metrics(t.log, {3});
  export_report(t, dir);
  const std::string csv = slurp(dir / "metrics.csv");
  EXPECT_EQ(csv, "n,rmse3d_m,rmse2d_m,recall_pct\n3,,,0\n");
  const auto rows = read_metrics_csv(dir / "metrics.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].rmse_3d);
  EXPECT_EQ(count_of(slurp(dir / "trajectory.svg"), "class=\"refined\""), 0u);
  fs::remove_all(dir);
}

TEST(Json, FlightAndInterferenceRoundTrip) {
  FlightSpec f;
  f.waypoints = {{1, 2, 3}, {4, 5, 6.5}};
  f.speed = 7;
  f.capture_rate = 0.25;
  f.heading_mode = HeadingMode::kFixed;
  f.fixed_heading = 30 * kDeg;
  f.pitch_profile = {35 * kDeg, 55 * kDeg};
  const FlightSpec g = flight_from_json(nlohmann::json::parse(flight_to_json(f).dump()));
  EXPECT_EQ(g.waypoints, f.waypoints);
  EXPECT_EQ(g.speed, f.speed);
  EXPECT_EQ(g.heading_mode, f.heading_mode);
  EXPECT_NEAR(g.fixed_heading, f.fixed_heading, 1e-15);
  ASSERT_EQ(g.pitch_profile.size(), 2u);
  EXPECT_NEAR(g.pitch_profile[1], f.pitch_profile[1], 1e-15);

  InterferenceSpec s;
  s.noise_sigma = 3;
  s.brightness_jitter = 0.1;
  s.flare = Flare{1, 2, 3, 0.4};
  const InterferenceSpec t = interference_from_json(nlohmann::json::parse(interference_to_json(s).dump()));
  EXPECT_EQ(t.noise_sigma, 3);
  EXPECT_EQ(t.brightness_jitter, 0.1);
  ASSERT_TRUE(t.flare);
  EXPECT_EQ(t.flare->strength, 0.4);
  EXPECT_TRUE(interference_from_json(nlohmann::json::object()).is_identity());
}

TEST(RunExperiment, SweepReusesTrialsAndIsDeterministic) {
  const fs::path dir = scratch_dir("exp");
  const DescriptorDatabase db = build_small_db(dir / "db");
  FlightSpec f;
  // Roughly east, so the four-heading grid covers the view direction.
  f.waypoints = {{2, 8, 60}, {18, 10, 80}};
  f.speed = 5;
  f.capture_rate = 1;  // 25.7 m at 5 m/s: 6 samples
  InterferenceSpec s;
  s.noise_sigma = 3;
  s.brightness_jitter = 0.1;
  const auto a = run_experiment(db, small_world().terrain, f, s, {5, 3, 1}, 42);
  ASSERT_EQ(a.rows.size(), 3u);
  ASSERT_EQ(a.log.size(), 18u);
  EXPECT_EQ(a.log[0].n, 5);
  EXPECT_EQ(a.log[6].n, 3);
  EXPECT_EQ(a.log[7].query, 1);
  EXPECT_GE(a.row_for(5)->recall, a.row_for(3)->recall);
  EXPECT_GE(a.row_for(3)->recall, a.row_for(1)->recall);
  EXPECT_GT(a.row_for(3)->recall, 50.0);
  for (const auto &r : a.log)
    if (r.localized) EXPECT_LT(r.error_3d, 3.0);

  // A direct n = 1 localization of the same perturbed query matches the reused trial.
  const auto samples = generate_flight(f);
  const std::uint64_t qseed = 42 ^ 2u;
  const RgbImage img =
      perturb_image(render(small_world().terrain, samples[2].pose, db.camera).color, resolve_interference(s, qseed), qseed);
  LocalizeConfig cfg;
  cfg.retrieval.n = 1;
  const auto direct = localize(img, db.camera, db, cfg, qseed);
  const QueryRecord &reused = a.log[12 + 2];
  ASSERT_EQ(reused.n, 1);
  EXPECT_EQ(reused.localized, direct.localized());
  if (direct.localized()) EXPECT_EQ(reused.estimate, direct.pose_local.position);

  ExperimentOptions threaded;
  threaded.threads = 3;
  const auto b = run_experiment(db, small_world().terrain, f, s, {5, 3, 1}, 42, threaded);
  ASSERT_EQ(b.log.size(), a.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(b.log[i].estimate, a.log[i].estimate);
    EXPECT_EQ(b.log[i].status, a.log[i].status);
  }
  fs::remove_all(dir);
}

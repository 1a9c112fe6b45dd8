// Command-line front end: database build, single-image query, flight
// evaluation, terrain generation and debug rendering. Angles on the command
// line are degrees; exit status is 0 on success, 2 for an unlocalized query
// and 1 for any error.

#include "skyloc/binary_io.hpp"
#include "skyloc/database.hpp"
#include "skyloc/eval.hpp"
#include "skyloc/image_io.hpp"
#include "skyloc/localize.hpp"
#include "skyloc/posegrid.hpp"
#include "skyloc/render.hpp"
#include "skyloc/terrain.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace skyloc;

constexpr double kDeg = std::numbers::pi / 180.0;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string &text, const std::string &what, std::size_t min_count,
                               std::size_t max_count) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw UsageError(what + ": '" + item + "' is not a number");
    }
  }
  if (values.size() < min_count || values.size() > max_count) {
    std::ostringstream msg;
    msg << what << ": expected ";
    if (min_count == max_count)
      msg << min_count;
    else
      msg << min_count << " to " << max_count;
    msg << " comma-separated values, got " << values.size();
    throw UsageError(msg.str());
  }
  return values;
}

CameraModel parse_camera(const std::string &text, double k1, double k2) {
  const auto v = parse_list(text, "--camera", 3, 3);
  if (v[0] < 1 || v[1] < 1 || v[2] <= 0 || v[2] >= 180) throw UsageError("--camera: need width,height,hfov_deg");
  CameraModel cam = camera_from_fov(static_cast<int>(v[0]), static_cast<int>(v[1]), v[2] * kDeg);
  cam.k1 = k1;
  cam.k2 = k2;
  return cam;
}

nlohmann::json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(in);
}

struct BuildArgs {
  std::string terrain_file;
  std::optional<std::uint64_t> terrain_seed;
  double terrain_margin = 500.0;
  double terrain_cell = 2.0;
  double terrain_relief = 8.0;
  std::string area, elevations, pitches = "45";
  double spacing = 10.0;
  int headings = 12;
  std::string camera = "640,480,84";
  std::string codebook_file;
  bool train = false;
  int clusters = 64;
  std::uint64_t codebook_seed = 1;
  std::string origin = "0,0,0";
  std::string out;
  std::string import_dir;
  int threads = 1;
  int depth_stride = 2;
  int max_features = 500;
  bool force = false;
  bool dry_run = false;
};

int run_build(const BuildArgs &a) {
  GridSpec grid;
  const auto area = parse_list(a.area, "--area", 4, 4);
  grid.area = {area[0], area[1], area[2], area[3]};
  grid.spacing_xy = a.spacing;
  grid.elevations = parse_list(a.elevations, "--elevations", 1, 1000);
  grid.headings = a.headings;
  for (const double p : parse_list(a.pitches, "--pitches", 1, 1000)) grid.pitches.push_back(p * kDeg);
  try {
    grid.validate();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const CameraModel camera = parse_camera(a.camera, 0.0, 0.0);
  const auto origin = parse_list(a.origin, "--origin", 2, 3);
  LocalFrame frame;
  frame.origin = {origin[0], origin[1], origin.size() > 2 ? origin[2] : 0.0};

  const std::size_t n = grid.pose_count();
  const int local_dim = 64;
  const std::uint64_t estimate =
      estimate_database_bytes(n, a.clusters * local_dim, local_dim, a.max_features, camera, a.depth_stride);
  std::printf("N = %zu poses\n", n);
  std::printf("estimated size = %.1f MB\n", static_cast<double>(estimate) / 1e6);
  if (a.dry_run) return 0;

  if (a.terrain_file.empty() == !a.terrain_seed) throw UsageError("give exactly one of --terrain or --terrain-seed");
  if (a.codebook_file.empty() == !a.train) throw UsageError("give exactly one of --codebook or --train-codebook");

  Terrain terrain;
  if (a.terrain_seed) {
    TerrainOptions opts;
    opts.relief = a.terrain_relief;
    opts.origin = LocalPoint(grid.area.x0 - a.terrain_margin, grid.area.y0 - a.terrain_margin, 0.0);
    terrain = generate_terrain(*a.terrain_seed, grid.area.x1 - grid.area.x0 + 2 * a.terrain_margin,
                               grid.area.y1 - grid.area.y0 + 2 * a.terrain_margin, a.terrain_cell, opts);
  } else {
    terrain = read_terrain(a.terrain_file);
  }

  Codebook codebook;
  if (a.train) {
    std::printf("training codebook (K = %d)\n", a.clusters);
    codebook = train_codebook(terrain, grid, camera, a.clusters, a.codebook_seed, 48, 20000, a.threads);
  } else {
    codebook = read_codebook(a.codebook_file);
  }

  BuildOptions options;
  options.threads = a.threads;
  options.depth_stride = a.depth_stride;
  options.max_features = a.max_features;
  options.force = a.force;
  if (!a.import_dir.empty()) options.import_dir = a.import_dir;
  const std::size_t tick = std::max<std::size_t>(1, n / 20);
  options.progress = [tick](std::size_t done, std::size_t total) {
    if (done % tick == 0 || done == total) std::fprintf(stderr, "\rbuilt %zu / %zu", done, total);
    if (done == total) std::fprintf(stderr, "\n");
  };
  BuildReport report;
  build_database(terrain, grid, camera, frame, codebook, a.out, options, &report);
  std::printf("wrote %zu entries, %.1f MB to %s\n", report.entries, static_cast<double>(report.written_bytes) / 1e6,
              a.out.c_str());
  if (report.sky_warnings > 0)
    std::fprintf(stderr, "warning: %zu views have more than 20%% sky; enlarge the terrain\n", report.sky_warnings);
  return 0;
}

struct QueryArgs {
  std::string db, image, json_out;
  int candidates = 3;
  std::uint64_t seed = 0;
  double k1 = 0.0, k2 = 0.0;
  std::optional<double> hfov;
  std::optional<double> refine_threshold;
};

int run_query(const QueryArgs &a) {
  const DescriptorDatabase db = load_database(a.db);
  const RgbImage image = read_image(a.image);
  CameraModel camera = db.camera.scaled_to(image.width(), image.height());
  if (a.hfov) camera = camera_from_fov(image.width(), image.height(), *a.hfov * kDeg);
  camera.k1 = a.k1;
  camera.k2 = a.k2;

  LocalizeConfig cfg;
  cfg.retrieval.n = a.candidates;
  cfg.refine_threshold = a.refine_threshold.value_or(default_refine_threshold(db.grid));
  const LocalizationResult result = localize(image, camera, db, cfg, a.seed);
  const std::string text = to_json(result).dump(2);
  std::cout << text << '\n';
  if (!a.json_out.empty()) {
    std::ofstream out(a.json_out);
    if (!out) throw std::runtime_error("cannot write " + a.json_out);
    out << text << '\n';
  }
  return result.localized() ? 0 : 2;
}

struct EvalArgs {
  std::string db, flight, interference, out, terrain;
  std::string sweep = "50,30,20,10,3,1";
  std::uint64_t seed = 0;
  int threads = 1;
  double k1 = 0.0, k2 = 0.0;
  std::optional<double> refine_threshold;
};

int run_eval(const EvalArgs &a) {
  const DescriptorDatabase db = load_database(a.db);
  const std::filesystem::path terrain_path =
      a.terrain.empty() ? std::filesystem::path(a.db) / "terrain" / "terrain.bin" : std::filesystem::path(a.terrain);
  const Terrain terrain = read_terrain(terrain_path);
  const FlightSpec flight = flight_from_json(read_json(a.flight));
  const InterferenceSpec interference =
      a.interference.empty() ? InterferenceSpec{} : interference_from_json(read_json(a.interference));
  std::vector<int> sweep;
  for (const double n : parse_list(a.sweep, "--candidates-sweep", 1, 100)) {
    if (n < 1 || n != static_cast<int>(n)) throw UsageError("--candidates-sweep: counts must be positive integers");
    sweep.push_back(static_cast<int>(n));
  }

  ExperimentOptions options;
  options.threads = a.threads;
  options.localize.refine_threshold = a.refine_threshold.value_or(default_refine_threshold(db.grid));
  if (a.k1 != 0.0 || a.k2 != 0.0) {
    CameraModel cam = db.camera;
    cam.k1 = a.k1;
    cam.k2 = a.k2;
    options.query_camera = cam;
  }
  options.progress = [](std::size_t done, std::size_t total) {
    std::fprintf(stderr, "\rqueries %zu / %zu", done, total);
    if (done == total) std::fprintf(stderr, "\n");
  };
  const MetricsTable table = run_experiment(db, terrain, flight, interference, sweep, a.seed, options);
  export_report(table, a.out);
  std::printf("%6s %12s %12s %10s\n", "n", "RMSE3D [m]", "RMSE2D [m]", "recall %");
  for (const auto &r : table.rows) {
    const auto cell = [](const std::optional<double> &v) {
      char buf[32];
      if (v)
        std::snprintf(buf, sizeof buf, "%.3f", *v);
      else
        std::snprintf(buf, sizeof buf, "-");
      return std::string(buf);
    };
    std::printf("%6d %12s %12s %10.1f\n", r.n, cell(r.rmse_3d).c_str(), cell(r.rmse_2d).c_str(), r.recall);
  }
  return 0;
}

struct RenderArgs {
  std::string terrain, pose, camera = "640,480,84", out, depth;
};

int run_render(const RenderArgs &a) {
  const auto p = parse_list(a.pose, "--pose", 6, 6);
  PoseSE3 pose;
  pose.position = {p[0], p[1], p[2]};
  pose.heading = p[3] * kDeg;
  pose.pitch = p[4] * kDeg;
  pose.roll = p[5] * kDeg;
  const CameraModel camera = parse_camera(a.camera, 0.0, 0.0);
  const Terrain terrain = read_terrain(a.terrain);
  const RenderedView view = render(terrain, pose, camera);
  write_ppm(a.out, view.color);
  if (!a.depth.empty()) write_file(a.depth, encode_depth(StoredDepth{view.depth, 1}));
  std::printf("sky fraction %.3f\n", sky_fraction(view.depth));
  return 0;
}

struct TerrainArgs {
  std::uint64_t seed = 0;
  std::string extent, origin, out;
  double cell = 2.0;
  double relief = 8.0;
};

int run_terrain(const TerrainArgs &a) {
  const auto extent = parse_list(a.extent, "--extent", 2, 2);
  TerrainOptions opts;
  opts.relief = a.relief;
  if (!a.origin.empty()) {
    const auto o = parse_list(a.origin, "--origin", 2, 3);
    opts.origin = LocalPoint(o[0], o[1], o.size() > 2 ? o[2] : 0.0);
  }
  write_terrain(a.out, generate_terrain(a.seed, extent[0], extent[1], a.cell, opts));
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Absolute visual localization against a rendered descriptor database.\n"
               "Angles are given in degrees."};
  app.require_subcommand(1);

  BuildArgs build;
  auto *cmd_build = app.add_subcommand("build-db", "Render the pose grid and write a descriptor database");
  cmd_build->add_option("--terrain", build.terrain_file, "Terrain heightmap (.bin with a .ppm texture beside it)");
  cmd_build->add_option("--terrain-seed", build.terrain_seed, "Generate a synthetic terrain with this seed");
  cmd_build->add_option("--terrain-margin", build.terrain_margin, "Generated terrain margin around the area, meters")
      ->capture_default_str();
  cmd_build->add_option("--terrain-cell", build.terrain_cell, "Generated terrain cell size, meters")
      ->capture_default_str();
  cmd_build->add_option("--terrain-relief", build.terrain_relief, "Generated terrain relief, meters")
      ->capture_default_str();
  cmd_build->add_option("--area", build.area, "Pose area x0,y0,x1,y1 in local meters")->required();
  cmd_build->add_option("--spacing", build.spacing, "Horizontal grid spacing, meters")->capture_default_str();
  cmd_build->add_option("--elevations", build.elevations, "Elevations E1[,E2...] in meters")->required();
  cmd_build->add_option("--headings", build.headings, "Headings per revolution")->capture_default_str();
  cmd_build->add_option("--pitches", build.pitches, "Pitches P1[,P2...] in degrees below the horizon")
      ->capture_default_str();
  cmd_build->add_option("--camera", build.camera, "width,height,hfov_deg")->capture_default_str();
  cmd_build->add_option("--codebook", build.codebook_file, "Existing codebook file");
  cmd_build->add_flag("--train-codebook", build.train, "Train a codebook on a subset of the grid views");
  cmd_build->add_option("--clusters", build.clusters, "Codebook size when training")->capture_default_str();
  cmd_build->add_option("--codebook-seed", build.codebook_seed, "Seed for codebook training")->capture_default_str();
  cmd_build->add_option("--origin", build.origin, "Geographic origin lat,lon[,alt] of the local frame")
      ->capture_default_str();
  cmd_build->add_option("--out", build.out, "Output directory")->required();
  cmd_build->add_option("--import-features", build.import_dir, "Directory with precomputed local/<id>.bin features");
  cmd_build->add_option("--threads", build.threads, "Worker threads")->capture_default_str();
  cmd_build->add_option("--depth-stride", build.depth_stride, "Depth subsampling stride")->capture_default_str();
  cmd_build->add_option("--max-features", build.max_features, "Keypoints per view")->capture_default_str();
  cmd_build->add_flag("--force", build.force, "Overwrite an existing database");
  cmd_build->add_flag("--dry-run", build.dry_run, "Print N and the size estimate only");

  QueryArgs query;
  auto *cmd_query = app.add_subcommand("query", "Localize one image; exit 2 when unlocalized");
  cmd_query->add_option("--db", query.db, "Database directory")->required();
  cmd_query->add_option("--image", query.image, "Query image (PPM or PGM)")->required();
  cmd_query->add_option("--candidates", query.candidates, "Retrieved candidates n")->capture_default_str();
  cmd_query->add_option("--seed", query.seed, "RANSAC seed")->capture_default_str();
  cmd_query->add_option("--json", query.json_out, "Also write the result JSON to this file");
  cmd_query->add_option("--hfov", query.hfov, "Query camera horizontal FOV in degrees (default: database camera)");
  cmd_query->add_option("--k1", query.k1, "Query radial distortion k1")->capture_default_str();
  cmd_query->add_option("--k2", query.k2, "Query radial distortion k2")->capture_default_str();
  cmd_query->add_option("--refine-threshold", query.refine_threshold,
                        "Largest accepted correction, meters (default: two grid spacings)");

  EvalArgs eval;
  auto *cmd_eval = app.add_subcommand("eval", "Fly a synthetic trajectory and report RMSE and recall");
  cmd_eval->add_option("--db", eval.db, "Database directory")->required();
  cmd_eval->add_option("--flight", eval.flight, "Flight JSON")->required();
  cmd_eval->add_option("--interference", eval.interference, "Interference JSON (default: none)");
  cmd_eval->add_option("--candidates-sweep", eval.sweep, "Candidate counts n")->capture_default_str();
  cmd_eval->add_option("--seed", eval.seed, "Run seed")->capture_default_str();
  cmd_eval->add_option("--out", eval.out, "Report directory")->required();
  cmd_eval->add_option("--terrain", eval.terrain, "Terrain heightmap (default: the database copy)");
  cmd_eval->add_option("--threads", eval.threads, "Worker threads")->capture_default_str();
  cmd_eval->add_option("--k1", eval.k1, "Raw capture distortion k1")->capture_default_str();
  cmd_eval->add_option("--k2", eval.k2, "Raw capture distortion k2")->capture_default_str();
  cmd_eval->add_option("--refine-threshold", eval.refine_threshold,
                       "Largest accepted correction, meters (default: two grid spacings)");

  RenderArgs rend;
  auto *cmd_render = app.add_subcommand("render", "Render one view of a terrain");
  cmd_render->add_option("--terrain", rend.terrain, "Terrain heightmap")->required();
  cmd_render->add_option("--pose", rend.pose, "x,y,z,heading,pitch,roll (meters, degrees)")->required();
  cmd_render->add_option("--camera", rend.camera, "width,height,hfov_deg")->capture_default_str();
  cmd_render->add_option("--out", rend.out, "Output PPM")->required();
  cmd_render->add_option("--depth", rend.depth, "Output depth file (SLDM, stride 1)");

  TerrainArgs terr;
  auto *cmd_terrain = app.add_subcommand("terrain", "Generate a synthetic terrain");
  cmd_terrain->add_option("--seed", terr.seed, "Terrain seed")->capture_default_str();
  cmd_terrain->add_option("--extent", terr.extent, "Extent x,y in meters")->required();
  cmd_terrain->add_option("--cell", terr.cell, "Cell size, meters")->capture_default_str();
  cmd_terrain->add_option("--relief", terr.relief, "Peak-to-peak relief, meters")->capture_default_str();
  cmd_terrain->add_option("--origin", terr.origin, "South-west corner x,y[,z] (default: centered)");
  cmd_terrain->add_option("--out", terr.out, "Output heightmap path (.bin)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*cmd_build) return run_build(build);
    if (*cmd_query) return run_query(query);
    if (*cmd_eval) return run_eval(eval);
    if (*cmd_render) return run_render(rend);
    if (*cmd_terrain) return run_terrain(terr);
  } catch (const UsageError &e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

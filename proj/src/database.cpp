#include "skyloc/database.hpp"

#include "skyloc/binary_io.hpp"
#include "skyloc/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace skyloc {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kLocalVersion = 1;
constexpr std::uint32_t kDepthVersion = 1;
constexpr std::uint32_t kGlobalsVersion = 1;

std::string entry_file(const char *kind, std::size_t id) { return std::string(kind) + "/" + std::to_string(id) + ".bin"; }

json camera_to_json(const CameraModel &c) {
  return {{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
          {"cx", c.cx},       {"cy", c.cy},         {"k1", c.k1}, {"k2", c.k2}};
}

CameraModel camera_from_json(const json &j) {
  CameraModel c;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.k1 = j.at("k1").get<double>();
  c.k2 = j.at("k2").get<double>();
  return c;
}

json grid_to_json(const GridSpec &g) {
  return {{"area", {g.area.x0, g.area.y0, g.area.x1, g.area.y1}},
          {"spacing_xy", g.spacing_xy},
          {"elevations", g.elevations},
          {"headings", g.headings},
          {"pitches_rad", g.pitches}};
}

GridSpec grid_from_json(const json &j) {
  GridSpec g;
  const auto area = j.at("area").get<std::vector<double>>();
  if (area.size() != 4) throw std::runtime_error("grid area needs 4 values");
  g.area = {area[0], area[1], area[2], area[3]};
  g.spacing_xy = j.at("spacing_xy").get<double>();
  g.elevations = j.at("elevations").get<std::vector<double>>();
  g.headings = j.at("headings").get<int>();
  g.pitches = j.at("pitches_rad").get<std::vector<double>>();
  return g;
}

FeatureSet load_features_file(const fs::path &path, const std::string &name, std::optional<std::uint32_t> crc) {
  const auto bytes = read_file(path);
  if (crc && crc32(bytes) != *crc) throw CorruptFileError(name, "checksum mismatch");
  return decode_local_features(bytes, name);
}

}  // namespace

float StoredDepth::at(double u, double v) const {
  const auto i = std::clamp<long>(std::lround(u / stride), 0L, static_cast<long>(values.cols()) - 1);
  const auto j = std::clamp<long>(std::lround(v / stride), 0L, static_cast<long>(values.rows()) - 1);
  return values(j, i);
}

StoredDepth downsample_depth(const DepthMap &full, int stride) {
  if (stride < 1) throw std::invalid_argument("depth stride must be >= 1");
  StoredDepth out;
  out.stride = stride;
  const Eigen::Index h = (full.rows() + stride - 1) / stride, w = (full.cols() + stride - 1) / stride;
  out.values.resize(h, w);
  for (Eigen::Index j = 0; j < h; ++j)
    for (Eigen::Index i = 0; i < w; ++i) out.values(j, i) = full(j * stride, i * stride);
  return out;
}

std::vector<std::uint8_t> encode_local_features(const FeatureSet &features) {
  ByteWriter w;
  w.magic("SLLF");
  w.u32(kLocalVersion);
  w.u32(static_cast<std::uint32_t>(features.size()));
  w.u32(static_cast<std::uint32_t>(features.descriptors.cols()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto &kp = features.keypoints[i];
    w.f32(kp.u);
    w.f32(kp.v);
    w.f32(kp.score);
    const auto row = features.descriptors.row(static_cast<Eigen::Index>(i));
    w.f32s(std::span<const float>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return w.bytes();
}

FeatureSet decode_local_features(std::span<const std::uint8_t> bytes, const std::string &name) {
  ByteReader r(bytes, name);
  r.expect_magic("SLLF");
  if (const auto v = r.u32(); v != kLocalVersion) throw VersionMismatchError(name + ": unsupported version " + std::to_string(v));
  const std::uint32_t count = r.u32(), dim = r.u32();
  r.need(static_cast<std::size_t>(count) * (3 + dim) * 4);
  FeatureSet fs;
  fs.keypoints.resize(count);
  fs.descriptors.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    fs.keypoints[i].u = r.f32();
    fs.keypoints[i].v = r.f32();
    fs.keypoints[i].score = r.f32();
    for (std::uint32_t k = 0; k < dim; ++k) fs.descriptors(i, k) = r.f32();
  }
  if (r.remaining() != 0) throw CorruptFileError(name, "trailing bytes");
  return fs;
}

std::vector<std::uint8_t> encode_depth(const StoredDepth &depth) {
  ByteWriter w;
  w.magic("SLDM");
  w.u32(kDepthVersion);
  w.u32(static_cast<std::uint32_t>(depth.values.cols()));
  w.u32(static_cast<std::uint32_t>(depth.values.rows()));
  w.u32(static_cast<std::uint32_t>(depth.stride));
  w.f32s(std::span<const float>(depth.values.data(), static_cast<std::size_t>(depth.values.size())));
  return w.bytes();
}

StoredDepth decode_depth(std::span<const std::uint8_t> bytes, const std::string &name) {
  ByteReader r(bytes, name);
  r.expect_magic("SLDM");
  if (const auto v = r.u32(); v != kDepthVersion) throw VersionMismatchError(name + ": unsupported version " + std::to_string(v));
  const std::uint32_t w = r.u32(), h = r.u32();
  StoredDepth d;
  d.stride = static_cast<int>(r.u32());
  if (d.stride < 1) throw CorruptFileError(name, "invalid stride");
  d.values.resize(h, w);
  r.f32s(std::span<float>(d.values.data(), static_cast<std::size_t>(d.values.size())));
  if (r.remaining() != 0) throw CorruptFileError(name, "trailing bytes");
  return d;
}

std::vector<std::uint8_t> encode_globals(const GlobalMatrix &globals) {
  ByteWriter w;
  w.magic("SLGD");
  w.u32(kGlobalsVersion);
  w.u64(static_cast<std::uint64_t>(globals.rows()));
  w.u32(static_cast<std::uint32_t>(globals.cols()));
  w.f32s(std::span<const float>(globals.data(), static_cast<std::size_t>(globals.size())));
  return w.bytes();
}

GlobalMatrix decode_globals(std::span<const std::uint8_t> bytes, const std::string &name) {
  ByteReader r(bytes, name);
  r.expect_magic("SLGD");
  if (const auto v = r.u32(); v != kGlobalsVersion) throw VersionMismatchError(name + ": unsupported version " + std::to_string(v));
  const std::uint64_t n = r.u64();
  const std::uint32_t d = r.u32();
  if (r.remaining() != n * d * 4) throw CorruptFileError(name, r.remaining() < n * d * 4 ? "truncated" : "trailing bytes");
  GlobalMatrix g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(g.data(), bytes.data() + (bytes.size() - r.remaining()), n * d * 4);
  } else {
    r.f32s(std::span<float>(g.data(), static_cast<std::size_t>(g.size())));
  }
  return g;
}

DatabaseEntry::DatabaseEntry(std::size_t id, PoseSE3 pose, fs::path root, std::optional<std::uint32_t> local_crc,
                             std::optional<std::uint32_t> depth_crc)
    : id_(id), pose_(std::move(pose)), root_(std::move(root)), local_crc_(local_crc), depth_crc_(depth_crc) {}

std::shared_ptr<const FeatureSet> DatabaseEntry::features() const {
  std::lock_guard lock(mutex_);
  if (!features_) {
    const std::string name = entry_file("local", id_);
    features_ = std::make_shared<const FeatureSet>(load_features_file(root_ / name, name, local_crc_));
  }
  return features_;
}

std::shared_ptr<const StoredDepth> DatabaseEntry::depth() const {
  std::lock_guard lock(mutex_);
  if (!depth_) {
    const std::string name = entry_file("depth", id_);
    const auto bytes = read_file(root_ / name);
    if (depth_crc_ && crc32(bytes) != *depth_crc_) throw CorruptFileError(name, "checksum mismatch");
    depth_ = std::make_shared<const StoredDepth>(decode_depth(bytes, name));
  }
  return depth_;
}

void DatabaseEntry::release() const {
  std::lock_guard lock(mutex_);
  features_.reset();
  depth_.reset();
}

void DescriptorDatabase::release_cache() const {
  for (const auto &e : entries) e->release();
}

std::uint64_t estimate_database_bytes(std::size_t entries, int global_dim, int local_dim, int max_features,
                                      const CameraModel &camera, int depth_stride) {
  const std::uint64_t dw = (camera.width + depth_stride - 1) / depth_stride;
  const std::uint64_t dh = (camera.height + depth_stride - 1) / depth_stride;
  const std::uint64_t per_entry = static_cast<std::uint64_t>(global_dim) * 4 +
                                  static_cast<std::uint64_t>(max_features) * (3 + local_dim) * 4 + 16 +
                                  dw * dh * 4 + 20;
  return entries * per_entry + 20;
}

DescriptorDatabase build_database(const Terrain &terrain, const GridSpec &grid, const CameraModel &camera,
                                  const LocalFrame &frame, const Codebook &codebook, const fs::path &out_dir,
                                  const BuildOptions &options, BuildReport *report) {
  grid.validate();
  if (!camera.valid()) throw std::invalid_argument("build_database: invalid camera");
  if (!is_valid(frame)) throw std::invalid_argument("build_database: invalid local frame");
  if (options.depth_stride < 1) throw std::invalid_argument("build_database: depth stride must be >= 1");

  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!options.force) throw std::runtime_error("output directory " + out_dir.string() + " is not empty (use force)");
    // Invalidate first so an interrupted rebuild is never mistaken for a database.
    fs::remove(out_dir / "manifest.json");
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir / "local");
  fs::create_directories(out_dir / "depth");

  const std::size_t n = grid.pose_count();
  std::optional<GlobalMatrix> imported_globals;
  if (options.import_dir && fs::exists(*options.import_dir / "globals.bin")) {
    imported_globals = decode_globals(read_file(*options.import_dir / "globals.bin"), "globals.bin");
    if (static_cast<std::size_t>(imported_globals->rows()) != n)
      throw std::invalid_argument("imported globals.bin has " + std::to_string(imported_globals->rows()) +
                                  " rows, grid has " + std::to_string(n) + " poses");
  }
  const int global_dim = imported_globals ? static_cast<int>(imported_globals->cols()) : codebook.global_dimension();

  GlobalMatrix globals(static_cast<Eigen::Index>(n), global_dim);
  std::vector<std::uint32_t> local_crc(n), depth_crc(n);
  std::vector<std::uint64_t> bytes_written(n);
  std::vector<char> sky_heavy(n, 0);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  parallel_for(n, options.threads, [&](std::size_t i) {
    const PoseSE3 pose = pose_at(grid, i);
    const RenderedView view = render(terrain, pose, camera, options.render);
    sky_heavy[i] = sky_fraction(view.depth) > 0.2;

    FeatureSet features;
    if (options.import_dir) {
      const std::string name = entry_file("local", i);
      features = load_features_file(*options.import_dir / name, name, std::nullopt);
    } else {
      features = extract_features(to_gray(view.color), options.max_features);
    }
    if (imported_globals) {
      globals.row(static_cast<Eigen::Index>(i)) = imported_globals->row(static_cast<Eigen::Index>(i));
    } else {
      globals.row(static_cast<Eigen::Index>(i)) = encode_global(features, codebook).transpose();
    }
    const auto local_bytes = encode_local_features(features);
    const auto depth_bytes = encode_depth(downsample_depth(view.depth, options.depth_stride));
    write_file(out_dir / entry_file("local", i), local_bytes);
    write_file(out_dir / entry_file("depth", i), depth_bytes);
    local_crc[i] = crc32(local_bytes);
    depth_crc[i] = crc32(depth_bytes);
    bytes_written[i] = local_bytes.size() + depth_bytes.size();

    const std::size_t finished = ++done;
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      options.progress(finished, n);
    }
  });

  const auto globals_bytes = encode_globals(globals);
  write_file(out_dir / "globals.bin", globals_bytes);
  write_codebook(out_dir / "codebook.bin", codebook);
  const auto codebook_bytes = read_file(out_dir / "codebook.bin");
  if (options.copy_terrain) write_terrain(out_dir / "terrain" / "terrain.bin", terrain);

  const std::uint64_t estimate = estimate_database_bytes(n, global_dim, codebook.dimension(), options.max_features,
                                                         camera, options.depth_stride);
  json manifest;
  manifest["format"] = "skyloc-database";
  manifest["version"] = kDatabaseFormatVersion;
  manifest["camera"] = camera_to_json(camera);
  manifest["frame"] = {{"lat", frame.origin.lat},
                       {"lon", frame.origin.lon},
                       {"alt", frame.origin.alt},
                       {"earth_radius", frame.earth_radius}};
  manifest["grid"] = grid_to_json(grid);
  manifest["N"] = n;
  manifest["D"] = global_dim;
  manifest["local_dim"] = codebook.dimension();
  manifest["max_features"] = options.max_features;
  manifest["depth_stride"] = options.depth_stride;
  manifest["render"] = {{"max_range", options.render.max_range},
                        {"sky_color", options.render.sky_color},
                        {"refinements", options.render.refinements}};
  manifest["imported_features"] = options.import_dir.has_value();
  manifest["has_terrain"] = options.copy_terrain;
  manifest["size_estimate_bytes"] = estimate;
  manifest["checksums"] = {{"globals.bin", crc32(globals_bytes)},
                           {"codebook.bin", crc32(codebook_bytes)},
                           {"local", local_crc},
                           {"depth", depth_crc}};
  const std::string text = manifest.dump(1);
  write_file(out_dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));

  if (report) {
    report->entries = n;
    report->estimated_bytes = estimate;
    report->written_bytes = globals_bytes.size() + codebook_bytes.size();
    for (auto b : bytes_written) report->written_bytes += b;
    report->sky_warnings = static_cast<std::size_t>(std::count(sky_heavy.begin(), sky_heavy.end(), 1));
  }
  return load_database(out_dir);
}

DescriptorDatabase load_database(const fs::path &dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw CorruptFileError("manifest.json", "missing in " + dir.string());
  json manifest;
  try {
    const auto bytes = read_file(manifest_path);
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception &e) {
    throw CorruptFileError("manifest.json", e.what());
  }

  DescriptorDatabase db;
  db.directory = dir;
  std::vector<std::uint32_t> local_crc, depth_crc;
  std::uint32_t globals_crc = 0, codebook_crc = 0;
  std::size_t n = 0;
  int d = 0;
  try {
    if (manifest.at("format").get<std::string>() != "skyloc-database")
      throw CorruptFileError("manifest.json", "not a skyloc database manifest");
    const auto version = manifest.at("version").get<std::uint32_t>();
    if (version != kDatabaseFormatVersion)
      throw VersionMismatchError("manifest.json: database format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kDatabaseFormatVersion));
    db.camera = camera_from_json(manifest.at("camera"));
    const auto &fr = manifest.at("frame");
    db.frame.origin = {fr.at("lat").get<double>(), fr.at("lon").get<double>(), fr.at("alt").get<double>()};
    db.frame.earth_radius = fr.at("earth_radius").get<double>();
    db.grid = grid_from_json(manifest.at("grid"));
    n = manifest.at("N").get<std::size_t>();
    d = manifest.at("D").get<int>();
    db.depth_stride = manifest.at("depth_stride").get<int>();
    db.max_features = manifest.at("max_features").get<int>();
    const auto &rj = manifest.at("render");
    db.render.max_range = rj.at("max_range").get<double>();
    db.render.sky_color = rj.at("sky_color").get<std::array<std::uint8_t, 3>>();
    db.render.refinements = rj.at("refinements").get<int>();
    const auto &sums = manifest.at("checksums");
    globals_crc = sums.at("globals.bin").get<std::uint32_t>();
    codebook_crc = sums.at("codebook.bin").get<std::uint32_t>();
    local_crc = sums.at("local").get<std::vector<std::uint32_t>>();
    depth_crc = sums.at("depth").get<std::vector<std::uint32_t>>();
  } catch (const json::exception &e) {
    throw CorruptFileError("manifest.json", e.what());
  }
  if (n < 1 || n != db.grid.pose_count() || local_crc.size() != n || depth_crc.size() != n)
    throw CorruptFileError("manifest.json", "entry count inconsistent with grid");

  const auto globals_bytes = read_file(dir / "globals.bin");
  if (crc32(globals_bytes) != globals_crc) {
    // Decode first so truncation is reported as such.
    decode_globals(globals_bytes, "globals.bin");
    throw CorruptFileError("globals.bin", "checksum mismatch");
  }
  db.globals = decode_globals(globals_bytes, "globals.bin");
  if (static_cast<std::size_t>(db.globals.rows()) != n || db.globals.cols() != d)
    throw CorruptFileError("globals.bin", "shape disagrees with manifest");

  const auto codebook_bytes = read_file(dir / "codebook.bin");
  if (crc32(codebook_bytes) != codebook_crc) throw CorruptFileError("codebook.bin", "checksum mismatch");
  db.codebook = read_codebook(dir / "codebook.bin");

  db.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    db.entries.push_back(std::make_unique<DatabaseEntry>(i, pose_at(db.grid, i), dir, local_crc[i], depth_crc[i]));
  return db;
}

Codebook train_codebook(const Terrain &terrain, const GridSpec &grid, const CameraModel &camera, int clusters,
                        std::uint64_t seed, int views, int max_samples, int threads,
                        const RenderOptions &render_options) {
  grid.validate();
  const std::size_t n = grid.pose_count();
  const std::size_t count = std::min<std::size_t>(std::max(views, 1), n);
  std::vector<FeatureSet> sets(count);
  parallel_for(count, threads, [&](std::size_t k) {
    // Golden-ratio stride spreads picks over positions, headings and pitches.
    const std::size_t index = static_cast<std::size_t>(std::floor(std::fmod(k * 0.6180339887498949, 1.0) * n));
    const RenderedView view = render(terrain, pose_at(grid, index), camera, render_options);
    sets[k] = extract_features(to_gray(view.color));
  });
  std::size_t total = 0;
  for (const auto &s : sets) total += s.size();
  if (total == 0) throw std::runtime_error("train_codebook: no features found in sampled views");
  const int dim = sets.front().dimension() > 0 ? sets.front().dimension() : 64;
  const std::size_t step = std::max<std::size_t>(1, (total + max_samples - 1) / max_samples);
  DescriptorMatrix samples((total + step - 1) / step, dim);
  std::size_t flat = 0, row = 0;
  for (const auto &s : sets)
    for (Eigen::Index i = 0; i < s.descriptors.rows(); ++i, ++flat)
      if (flat % step == 0) samples.row(static_cast<Eigen::Index>(row++)) = s.descriptors.row(i);
  samples.conservativeResize(static_cast<Eigen::Index>(row), dim);
  return build_codebook(samples, clusters, seed);
}

}  // namespace skyloc

#pragma once

#include "skyloc/codebook.hpp"
#include "skyloc/features.hpp"
#include "skyloc/posegrid.hpp"
#include "skyloc/render.hpp"
#include "skyloc/terrain.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace skyloc {

constexpr std::uint32_t kDatabaseFormatVersion = 1;

/// N x D global descriptor rows.
using GlobalMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class VersionMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Depth raster kept at every `stride`-th pixel of the full image.
struct StoredDepth {
  DepthMap values;
  int stride = 1;

  /// Nearest stored sample to full-resolution pixel (u, v).
  float at(double u, double v) const;

  friend bool operator==(const StoredDepth &a, const StoredDepth &b) {
    return a.stride == b.stride && a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
           (a.values == b.values).all();
  }
};

/// Subsamples a full-resolution depth map.
StoredDepth downsample_depth(const DepthMap &full, int stride);

/// "SLLF" local feature file.
std::vector<std::uint8_t> encode_local_features(const FeatureSet &features);
FeatureSet decode_local_features(std::span<const std::uint8_t> bytes, const std::string &name);

/// "SLDM" depth file.
std::vector<std::uint8_t> encode_depth(const StoredDepth &depth);
StoredDepth decode_depth(std::span<const std::uint8_t> bytes, const std::string &name);

/// "SLGD" global descriptor file.
std::vector<std::uint8_t> encode_globals(const GlobalMatrix &globals);
GlobalMatrix decode_globals(std::span<const std::uint8_t> bytes, const std::string &name);

/// One rendered grid pose. Features and depth come from disk on first use
/// and stay cached; access is thread-safe.
class DatabaseEntry {
 public:
  DatabaseEntry(std::size_t id, PoseSE3 pose, std::filesystem::path root, std::optional<std::uint32_t> local_crc,
                std::optional<std::uint32_t> depth_crc);

  std::size_t id() const { return id_; }
  const PoseSE3 &pose() const { return pose_; }

  std::shared_ptr<const FeatureSet> features() const;
  std::shared_ptr<const StoredDepth> depth() const;

  /// Drops cached payloads; they reload on next access.
  void release() const;

 private:
  std::size_t id_;
  PoseSE3 pose_;
  std::filesystem::path root_;
  std::optional<std::uint32_t> local_crc_, depth_crc_;
  mutable std::mutex mutex_;
  mutable std::shared_ptr<const FeatureSet> features_;
  mutable std::shared_ptr<const StoredDepth> depth_;
};

struct DescriptorDatabase {
  std::filesystem::path directory;
  GlobalMatrix globals;
  std::vector<std::unique_ptr<DatabaseEntry>> entries;
  CameraModel camera;
  LocalFrame frame;
  GridSpec grid;
  Codebook codebook;
  int depth_stride = 2;
  int max_features = 500;
  RenderOptions render;

  std::size_t size() const { return entries.size(); }
  int dimension() const { return static_cast<int>(globals.cols()); }
  const DatabaseEntry &entry(std::size_t i) const { return *entries.at(i); }
  void release_cache() const;
};

struct BuildOptions {
  int threads = 1;
  int depth_stride = 2;
  int max_features = 500;
  RenderOptions render;
  /// Replace an existing database in the output directory.
  bool force = false;
  /// Write a copy of the terrain under terrain/.
  bool copy_terrain = true;
  /// Directory with precomputed local/<id>.bin (and optionally globals.bin)
  /// to use in place of the built-in detector and encoder.
  std::optional<std::filesystem::path> import_dir;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct BuildReport {
  std::size_t entries = 0;
  std::uint64_t estimated_bytes = 0;
  std::uint64_t written_bytes = 0;
  /// Views with more than 20% sky pixels (terrain too small for the grid).
  std::size_t sky_warnings = 0;
};

/// Bytes a database will occupy: N * (D*4 + features + depth) plus headers.
std::uint64_t estimate_database_bytes(std::size_t entries, int global_dim, int local_dim, int max_features,
                                      const CameraModel &camera, int depth_stride);

/// Render, describe and encode every grid pose, writing the database to
/// `out_dir`. The manifest is written last. Output bytes do not depend on
/// the thread count.
DescriptorDatabase build_database(const Terrain &terrain, const GridSpec &grid, const CameraModel &camera,
                                  const LocalFrame &frame, const Codebook &codebook,
                                  const std::filesystem::path &out_dir, const BuildOptions &options = {},
                                  BuildReport *report = nullptr);

/// Loads globals, codebook and manifest; entry payloads load lazily.
/// Throws CorruptFileError naming the bad file or VersionMismatchError.
DescriptorDatabase load_database(const std::filesystem::path &dir);

/// Renders an evenly spread subset of grid poses and clusters their local
/// descriptors (at most `max_samples` of them).
Codebook train_codebook(const Terrain &terrain, const GridSpec &grid, const CameraModel &camera, int clusters,
                        std::uint64_t seed, int views = 48, int max_samples = 20000, int threads = 1,
                        const RenderOptions &render_options = {});

}  // namespace skyloc

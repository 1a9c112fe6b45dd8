#pragma once

#include "skyloc/features.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>

namespace skyloc {

/// K x d cluster centers used for VLAD assignment.
struct Codebook {
  DescriptorMatrix centroids;
  std::uint64_t training_seed = 0;

  int clusters() const { return static_cast<int>(centroids.rows()); }
  int dimension() const { return static_cast<int>(centroids.cols()); }
  /// Width of the global descriptors this codebook produces.
  int global_dimension() const { return clusters() * dimension(); }

  friend bool operator==(const Codebook &a, const Codebook &b) {
    return a.centroids.rows() == b.centroids.rows() && a.centroids.cols() == b.centroids.cols() &&
           a.centroids == b.centroids;
  }
};

using GlobalDescriptor = Eigen::VectorXf;

/// Lloyd's k-means with k-means++ seeding; stops after `max_iterations` or
/// when no assignment changes. Empty clusters keep their previous center.
/// Throws std::invalid_argument if there are fewer (distinct) samples than K.
Codebook build_codebook(const DescriptorMatrix &samples, int clusters, std::uint64_t seed, int max_iterations = 50);

/// Index of the nearest centroid, ties to the lower index.
int nearest_centroid(const Codebook &codebook, const Eigen::Ref<const Eigen::RowVectorXf> &descriptor);

/// VLAD: per-cluster residual sums, intra-normalized, signed square root,
/// then L2 normalized. Empty input or zero residuals give the zero vector.
/// The result does not depend on feature order.
GlobalDescriptor encode_global(const FeatureSet &features, const Codebook &codebook);
GlobalDescriptor encode_global(const DescriptorMatrix &descriptors, const Codebook &codebook);

/// "SLCB" file: version, K, d, then K*d float32, all little endian.
void write_codebook(const std::filesystem::path &path, const Codebook &codebook);
Codebook read_codebook(const std::filesystem::path &path);

}  // namespace skyloc

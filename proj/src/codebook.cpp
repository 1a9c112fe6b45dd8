#include "skyloc/codebook.hpp"

#include "skyloc/binary_io.hpp"
#include "skyloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace skyloc {
namespace {

constexpr std::uint32_t kCodebookVersion = 1;

using MatrixRd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Squared distances from every sample to every center (N x K).
MatrixRd squared_distances(const MatrixRd &x, const MatrixRd &centers) {
  MatrixRd d = -2.0 * x * centers.transpose();
  d.colwise() += x.rowwise().squaredNorm();
  d.rowwise() += centers.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

Codebook build_codebook(const DescriptorMatrix &samples, int clusters, std::uint64_t seed, int max_iterations) {
  if (clusters < 2) throw std::invalid_argument("build_codebook: need at least 2 clusters");
  const Eigen::Index n = samples.rows();
  if (n < clusters) throw std::invalid_argument("build_codebook: fewer samples than clusters");

  const MatrixRd x = samples.cast<double>();
  Rng rng(seed);

  // k-means++ seeding.
  MatrixRd centers(clusters, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd closest = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < clusters; ++k) {
    const double total = closest.sum();
    if (!(total > 0.0)) throw std::invalid_argument("build_codebook: fewer distinct samples than clusters");
    const double target = rng.uniform() * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (closest(i) <= 0.0) continue;
      acc += closest(i);
      pick = i;
      if (acc > target) break;
    }
    centers.row(k) = x.row(pick);
    closest = closest.cwiseMin((x.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }

  // Lloyd iterations.
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const MatrixRd d = squared_distances(x, centers);
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      d.row(i).minCoeff(&best);
      if (assignment[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    MatrixRd sums = MatrixRd::Zero(clusters, x.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(clusters);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts(assignment[static_cast<std::size_t>(i)]);
    }
    for (int k = 0; k < clusters; ++k)
      if (counts(k) > 0) centers.row(k) = sums.row(k) / counts(k);
  }

  Codebook cb;
  cb.centroids = centers.cast<float>();
  cb.training_seed = seed;
  return cb;
}

int nearest_centroid(const Codebook &codebook, const Eigen::Ref<const Eigen::RowVectorXf> &descriptor) {
  int best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (int k = 0; k < codebook.clusters(); ++k) {
    const float d = (codebook.centroids.row(k) - descriptor).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

GlobalDescriptor encode_global(const DescriptorMatrix &descriptors, const Codebook &codebook) {
  const int K = codebook.clusters(), dim = codebook.dimension();
  GlobalDescriptor out = GlobalDescriptor::Zero(static_cast<Eigen::Index>(K) * dim);
  if (descriptors.rows() == 0) return out;
  if (descriptors.cols() != dim) throw std::invalid_argument("encode_global: descriptor dimension mismatch");

  // Sum in a canonical (lexicographic) order so the result is bit-identical
  // under any permutation of the input.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(descriptors.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const float *pa = descriptors.row(a).data(), *pb = descriptors.row(b).data();
    return std::lexicographical_compare(pa, pa + dim, pb, pb + dim);
  });

  Eigen::MatrixXd residuals = Eigen::MatrixXd::Zero(dim, K);
  for (const Eigen::Index i : order) {
    const int k = nearest_centroid(codebook, descriptors.row(i));
    residuals.col(k) += (descriptors.row(i) - codebook.centroids.row(k)).transpose().cast<double>();
  }
  for (int k = 0; k < K; ++k) {
    const double n = residuals.col(k).norm();
    if (n > 0.0) residuals.col(k) /= n;
  }
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(residuals.data(), residuals.size());
  v = v.unaryExpr([](double x) { return std::copysign(std::sqrt(std::abs(x)), x); });
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v.cast<float>();
}

GlobalDescriptor encode_global(const FeatureSet &features, const Codebook &codebook) {
  return encode_global(features.descriptors, codebook);
}

void write_codebook(const std::filesystem::path &path, const Codebook &codebook) {
  ByteWriter w;
  w.magic("SLCB");
  w.u32(kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(codebook.clusters()));
  w.u32(static_cast<std::uint32_t>(codebook.dimension()));
  w.f32s(std::span<const float>(codebook.centroids.data(), static_cast<std::size_t>(codebook.centroids.size())));
  write_file(path, w.bytes());
}

Codebook read_codebook(const std::filesystem::path &path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, path.filename().string());
  r.expect_magic("SLCB");
  if (const auto version = r.u32(); version != kCodebookVersion)
    throw CorruptFileError(r.name(), "unsupported codebook version " + std::to_string(version));
  const std::uint32_t k = r.u32(), d = r.u32();
  if (k < 2 || d == 0) throw CorruptFileError(r.name(), "invalid codebook shape");
  Codebook cb;
  cb.centroids.resize(k, d);
  r.f32s(std::span<float>(cb.centroids.data(), static_cast<std::size_t>(cb.centroids.size())));
  if (r.remaining() != 0) throw CorruptFileError(r.name(), "trailing bytes");
  return cb;
}

}  // namespace skyloc

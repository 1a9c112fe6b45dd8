#include "skyloc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace skyloc {
namespace {

struct Nearest {
  int first = -1;
  int second = -1;
  float d1 = std::numeric_limits<float>::infinity();
  float d2 = std::numeric_limits<float>::infinity();
};

}  // namespace

std::vector<Match> match_local(const DescriptorMatrix &a, const DescriptorMatrix &b, const MatchOptions &options) {
  std::vector<Match> matches;
  const Eigen::Index na = a.rows(), nb = b.rows();
  if (na == 0 || nb == 0 || a.cols() != b.cols()) return matches;

  // Exact squared distances; ties resolve to the lower index via strict <.
  std::vector<Nearest> from_a(static_cast<std::size_t>(na));
  std::vector<int> best_for_b(static_cast<std::size_t>(nb), -1);
  std::vector<float> best_d_b(static_cast<std::size_t>(nb), std::numeric_limits<float>::infinity());
  Eigen::VectorXf row_d(nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    row_d = (b.rowwise() - a.row(i)).rowwise().squaredNorm();
    Nearest &n = from_a[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < nb; ++j) {
      const float d = row_d(j);
      if (d < n.d1) {
        n.second = n.first;
        n.d2 = n.d1;
        n.first = static_cast<int>(j);
        n.d1 = d;
      } else if (d < n.d2) {
        n.second = static_cast<int>(j);
        n.d2 = d;
      }
      if (d < best_d_b[static_cast<std::size_t>(j)]) {
        best_d_b[static_cast<std::size_t>(j)] = d;
        best_for_b[static_cast<std::size_t>(j)] = static_cast<int>(i);
      }
    }
  }

  const bool use_ratio = options.ratio < 1.0;
  for (Eigen::Index i = 0; i < na; ++i) {
    const Nearest &n = from_a[static_cast<std::size_t>(i)];
    if (best_for_b[static_cast<std::size_t>(n.first)] != static_cast<int>(i)) continue;
    const float dist = std::sqrt(n.d1);
    if (dist > options.max_distance) continue;
    if (use_ratio && n.second >= 0) {
      const float second = std::sqrt(n.d2);
      if (!(dist <= options.ratio * second)) continue;
    }
    matches.push_back({static_cast<int>(i), n.first, dist});
  }
  std::sort(matches.begin(), matches.end(), [](const Match &x, const Match &y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    return x.index_a < y.index_a;
  });
  return matches;
}

}  // namespace skyloc

#pragma once

#include "skyloc/features.hpp"

#include <vector>

namespace skyloc {

struct Match {
  int index_a = 0;
  int index_b = 0;
  float distance = 0.0f;

  friend bool operator==(const Match &, const Match &) = default;
};

struct MatchOptions {
  /// Lowe ratio on side a; values >= 1 disable the test.
  double ratio = 0.8;
  double max_distance = 0.9;
};

/// Mutual nearest neighbors under L2, filtered by the ratio test and an
/// absolute distance cutoff. Sorted by distance, then index_a.
std::vector<Match> match_local(const DescriptorMatrix &a, const DescriptorMatrix &b, const MatchOptions &options = {});

inline std::vector<Match> match_local(const FeatureSet &a, const FeatureSet &b, const MatchOptions &options = {}) {
  return match_local(a.descriptors, b.descriptors, options);
}

}  // namespace skyloc

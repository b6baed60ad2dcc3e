#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmslam/raster.hpp"

namespace lmslam {

struct Corner {
  float u = 0;  // level-0 pixel coordinates
  float v = 0;
  float score = 0;
  int level = 0;
  float angle = 0;  // intensity-centroid orientation, radians
};

struct BinaryDescriptor {
  std::array<uint64_t, 4> words{};  // 256 bits

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1u; }
  void set_bit(int i) { words[i >> 6] |= uint64_t(1) << (i & 63); }
  bool operator==(const BinaryDescriptor&) const = default;
};

inline int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

struct FeatureSet {
  std::vector<Corner> corners;
  std::vector<BinaryDescriptor> descriptors;
  std::vector<std::optional<Point3>> points3d;  // camera frame, via backproject

  size_t size() const { return corners.size(); }
};

struct Match {
  int index_a = 0;
  int index_b = 0;
  int hamming = 0;
};

struct MatchSet {
  std::vector<Match> pairs;
};

struct DetectorConfig {
  int n_levels = 8;
  double scale_factor = 1.2;
  int grid = 8;
  int target = 1000;
  int threshold = 20;
  int arc_len = 9;
  int min_accept = 50;
};

struct MatchConfig {
  int max_dist = 64;
  double ratio = 0.8;
};

struct MatchRansacConfig {
  int iterations = 200;
  double inlier_3d = 0.3;
  int min_inliers = 10;
  uint64_t seed = 0;
};

/// Segment-test corner detection over an image pyramid with per-cell
/// retention, plus rotated binary descriptors and 3D back-references for
/// corners that land on lit raster pixels.
FeatureSet detect(const RasterImage& img, const DetectorConfig& cfg);

/// Mutual nearest neighbor under Hamming distance with a ratio test;
/// strictly one-to-one.
MatchSet match(const FeatureSet& a, const FeatureSet& b,
               const MatchConfig& cfg);

/// Keeps the consensus set of the best 3-point rigid model. Matches lacking
/// a 3D point on either side are dropped before sampling.
MatchSet ransac_filter(const MatchSet& matches, const FeatureSet& a,
                       const FeatureSet& b, const MatchRansacConfig& cfg);

std::string serialize_feature_set(const FeatureSet& fs);
FeatureSet deserialize_feature_set(const std::string& bytes);

}  // namespace lmslam

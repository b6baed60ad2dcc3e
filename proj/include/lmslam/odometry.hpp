#pragma once

#include <map>
#include <optional>

#include "lmslam/features.hpp"
#include "lmslam/optim.hpp"
#include "lmslam/raster.hpp"
#include "lmslam/registration.hpp"

namespace lmslam {

struct Keyframe {
  int id = 0;
  Pose pose;  // world <- sensor
  FeatureSet features;
  double stamp = 0;
  std::optional<int> local_map_id;
};

enum class TrackMode { kTracking, kLost };

struct TrackState {
  TrackMode mode = TrackMode::kTracking;
  Pose last_pose;
  int frames_since_kf = 0;
  int shared_with_last_kf = 0;
};

/// Stand-in for the external visual-odometry factor: a relative pose between
/// consecutive frames plus its information weight.
struct OdomPrior {
  Pose relative_pose;
  Matrix6 information = Matrix6::Identity();
};

struct TrackerConfig {
  Intrinsics camera;
  Pose extrinsics = default_lidar_to_camera();
  PlaneRansacConfig ground;
  ElevationEncoding encoding;
  DetectorConfig detector;
  MatchConfig matching;
  MatchRansacConfig ransac;
  int min_track = 30;
  Matrix6 icp_information = Matrix6::Identity();
};

struct TrackResult {
  Pose world_pose;     // world <- current sensor
  Pose relative;       // previous sensor <- current sensor
  FeatureSet features;
  RasterImage image;
  int inliers = 0;
};

/// One tracking step: ground removal, rasterization, detection, matching
/// against the previous frame, RANSAC, correspondence ICP, and optional
/// fusion with the odometry prior. Throws TrackingLost when matching or
/// consensus fails.
TrackResult track_frame(const FeatureSet& prev_features, const Pose& prev_pose,
                        const PointCloud& cur_cloud,
                        const std::optional<OdomPrior>& prior,
                        const TrackerConfig& cfg);

bool select_keyframe(const TrackState& state, int shared_points);

/// RANSAC-inlier match count against a reference feature set; the observable
/// proxy for "points in common".
int count_shared(const FeatureSet& cur, const FeatureSet& reference,
                 const TrackerConfig& cfg);

/// Rigid motion between two feature sets with 3D back-references, expressed
/// in the sensor frame: returns the pose of `cur` relative to `ref` and the
/// inlier matches. Throws NoConsensus / TrackingLost per config.
std::pair<Pose, MatchSet> align_feature_sets(const FeatureSet& ref,
                                             const FeatureSet& cur,
                                             const TrackerConfig& cfg);

/// Text format: one line per frame, "frame_id tx ty tz qx qy qz qw w".
std::map<int64_t, OdomPrior> load_odom_priors(const std::string& path);

}  // namespace lmslam

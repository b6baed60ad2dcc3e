#include "lmslam/odometry.hpp"

#include <fstream>
#include <sstream>

namespace lmslam {

std::pair<Pose, MatchSet> align_feature_sets(const FeatureSet& ref,
                                             const FeatureSet& cur,
                                             const TrackerConfig& cfg) {
  const MatchSet raw = match(ref, cur, cfg.matching);
  if (static_cast<int>(raw.pairs.size()) < cfg.min_track) {
    throw Error(ErrorCode::TrackingLost,
                "align_feature_sets: only " + std::to_string(raw.pairs.size()) +
                    " matches");
  }
  MatchSet inliers;
  try {
    inliers = ransac_filter(raw, ref, cur, cfg.ransac);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoConsensus) {
      throw Error(ErrorCode::TrackingLost, e.what());
    }
    throw;
  }
  if (static_cast<int>(inliers.pairs.size()) < cfg.min_track) {
    throw Error(ErrorCode::TrackingLost,
                "align_feature_sets: only " +
                    std::to_string(inliers.pairs.size()) + " inliers");
  }

  // Camera-frame correspondences; conjugate by the extrinsics afterwards so
  // the relative pose lives in the sensor frame.
  std::vector<Point3> p, q;
  p.reserve(inliers.pairs.size());
  q.reserve(inliers.pairs.size());
  for (const auto& m : inliers.pairs) {
    p.push_back(*cur.points3d[m.index_b]);
    q.push_back(*ref.points3d[m.index_a]);
  }
  Pose t_cam = estimate_rigid_transform(p, q);
  // The consensus tolerance has to admit the sampling slop of rasterized
  // correspondences, but the estimate tightens noticeably when refit on the
  // pairs that agree most closely with the model.
  for (const double tol : {0.20, 0.12}) {
    std::vector<Point3> rp, rq;
    for (size_t i = 0; i < p.size(); ++i) {
      if ((q[i] - t_cam.apply(p[i])).norm() < tol) {
        rp.push_back(p[i]);
        rq.push_back(q[i]);
      }
    }
    if (static_cast<int>(rp.size()) < cfg.min_track) break;
    try {
      t_cam = estimate_rigid_transform(rp, rq);
    } catch (const Error&) {
      break;
    }
  }
  const Pose t_sensor =
      compose(cfg.extrinsics.inverse(), compose(t_cam, cfg.extrinsics));
  return {t_sensor, inliers};
}

TrackResult track_frame(const FeatureSet& prev_features, const Pose& prev_pose,
                        const PointCloud& cur_cloud,
                        const std::optional<OdomPrior>& prior,
                        const TrackerConfig& cfg) {
  const GroundRemovalResult ground =
      remove_ground_plane(sanitize(cur_cloud), cfg.ground);

  TrackResult out;
  out.image = rasterize(ground.cloud, cfg.extrinsics, cfg.camera, cfg.encoding);
  try {
    out.features = detect(out.image, cfg.detector);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TooFewFeatures) {
      throw Error(ErrorCode::TrackingLost, e.what());
    }
    throw;
  }

  auto [relative, inliers] = align_feature_sets(prev_features, out.features, cfg);
  out.inliers = static_cast<int>(inliers.pairs.size());

  if (prior) {
    relative = fuse_two_poses(relative, cfg.icp_information,
                              prior->relative_pose, prior->information);
  }
  out.relative = relative;
  out.world_pose = compose(prev_pose, relative);
  return out;
}

bool select_keyframe(const TrackState& state, int shared_points) {
  return state.frames_since_kf >= 5 && shared_points >= 100;
}

int count_shared(const FeatureSet& cur, const FeatureSet& reference,
                 const TrackerConfig& cfg) {
  const MatchSet raw = match(reference, cur, cfg.matching);
  try {
    return static_cast<int>(
        ransac_filter(raw, reference, cur, cfg.ransac).pairs.size());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoConsensus) return 0;
    throw;
  }
}

std::map<int64_t, OdomPrior> load_odom_priors(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::map<int64_t, OdomPrior> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    int64_t frame_id;
    double tx, ty, tz, qx, qy, qz, qw, w;
    if (!(is >> frame_id >> tx >> ty >> tz >> qx >> qy >> qz >> qw >> w)) {
      throw Error(ErrorCode::MalformedFile, "bad odometry prior line: " + line);
    }
    OdomPrior prior;
    prior.relative_pose.translation = {tx, ty, tz};
    prior.relative_pose.rotation =
        Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
    prior.information = w * Matrix6::Identity();
    out[frame_id] = prior;
  }
  return out;
}

}  // namespace lmslam

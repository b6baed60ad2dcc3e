#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lmslam/geometry.hpp"

namespace lmslam {

struct TrajectoryEntry {
  int64_t frame_id = 0;
  double stamp = 0;
  Pose pose;
};

struct Trajectory {
  std::vector<TrajectoryEntry> entries;  // frame_ids strictly increasing
};

struct RelativeError {
  double length = 0;   // evaluation window, meters of ground-truth path
  double e_trans = 0;  // mean translation error / length
  double e_rot = 0;    // mean rotation angle / length, rad per meter
  int pairs = 0;
};

/// KITTI-style windowed relative errors. For each window length the frame
/// pairs are (i, first j with ground-truth path distance >= length); the
/// per-pair error is the discrepancy between the estimated and ground-truth
/// relative poses. Trajectories are associated by frame_id. Throws NoPairs
/// when a length exceeds the traveled path.
std::vector<RelativeError> relative_errors(const Trajectory& gt,
                                           const Trajectory& est,
                                           const std::vector<double>& lengths);

struct LoopTruthConfig {
  double r_pos = 4.0;  // meters between ground-truth keyframe positions
  int gap = 30;        // minimum keyframe-id separation
};

/// True-revisit partners per keyframe: pairs closer than r_pos with id
/// separation above the gap. Symmetric and irreflexive.
std::map<int, std::set<int>> loop_truth(
    const std::map<int, Point3>& keyframe_positions,
    const LoopTruthConfig& cfg);

struct LoopPr {
  double recall = 0;
  double precision = 1;       // convention when nothing was declared
  bool precision_defined = false;
  int tp = 0, fp = 0, fn = 0;
};

/// Precision/recall over unordered keyframe pairs. A declared (query,
/// matched) pair is a true positive when both endpoints lie within r_pos of
/// the endpoints of some true-revisit pair; recall is the fraction of
/// true-revisit pairs covered that way by at least one declaration.
LoopPr loop_pr(const std::vector<std::pair<int, int>>& declared,
               const std::map<int, std::set<int>>& truth,
               const std::map<int, Point3>& keyframe_positions, double r_pos);

std::string tum_format(const Trajectory& traj);
Trajectory parse_tum(const std::string& text);

/// Standalone top-down (x, y) path plot.
std::string trajectory_svg(const Trajectory& traj);

}  // namespace lmslam

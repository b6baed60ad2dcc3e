#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lmslam/geometry.hpp"

namespace lmslam {

struct Observation {
  int keyframe_id = 0;
  int point_id = 0;
  Eigen::Vector2d measured_pixel = Eigen::Vector2d::Zero();
  Eigen::Matrix2d information = Eigen::Matrix2d::Identity();
};

/// Local bundle-adjustment problem: keyframe poses (world<-sensor) and
/// world-frame points, observed as pixels through the virtual camera.
struct BAProblem {
  std::map<int, Pose> keyframe_poses;
  std::map<int, Point3> points;
  std::vector<Observation> observations;
  Intrinsics camera;
  Pose extrinsics;  // sensor -> camera
  std::set<int> fixed_keyframes;
};

struct PoseGraphEdge {
  int i = 0;
  int j = 0;
  Pose measured_relative;  // pose of j in frame of i
  Matrix6 information = Matrix6::Identity();
};

struct PoseGraph {
  std::map<int, Pose> nodes;
  std::vector<PoseGraphEdge> edges;
  std::set<int> fixed_ids;
};

struct SolverConfig {
  int max_iters = 50;
  double lambda_init = 1e-4;
  double lambda_max = 1e10;
  double rel_cost_tol = 1e-8;
  double grad_tol = 1e-10;
  double huber_pixels = 2.0;  // reprojection residuals only
};

struct BAResult {
  std::map<int, Pose> poses;
  std::map<int, Point3> points;
  double initial_cost = 0;
  double final_cost = 0;
  int iterations = 0;
};

BAResult local_bundle_adjust(const BAProblem& prob, const SolverConfig& cfg);

std::map<int, Pose> optimize_pose_graph(const PoseGraph& g,
                                        const SolverConfig& cfg);

/// Argmin of the two-factor objective
/// |log(a^-1 T)|^2_wa + |log(b^-1 T)|^2_wb.
Pose fuse_two_poses(const Pose& a, const Matrix6& info_a, const Pose& b,
                    const Matrix6& info_b);

/// Residual e = measured - project(extr * X^-1 * p) with analytic Jacobians
/// for the right-multiplicative pose increment X exp(d) and the point.
Eigen::Vector2d reprojection_residual(const Pose& keyframe_pose,
                                      const Point3& point,
                                      const Intrinsics& camera,
                                      const Pose& extrinsics,
                                      const Eigen::Vector2d& measured,
                                      Eigen::Matrix<double, 2, 6>* j_pose,
                                      Eigen::Matrix<double, 2, 3>* j_point);

/// Residual r = log(meas^-1 * Xi^-1 * Xj) with analytic Jacobians for
/// right-multiplicative increments of Xi and Xj.
Vector6 relative_pose_residual(const Pose& xi, const Pose& xj,
                               const Pose& measured, Matrix6* j_i,
                               Matrix6* j_j);

double ba_cost(const BAProblem& prob, const SolverConfig& cfg);
double pose_graph_cost(const PoseGraph& g);

std::string serialize_pose_graph(const PoseGraph& g);
PoseGraph deserialize_pose_graph(const std::string& text);

}  // namespace lmslam

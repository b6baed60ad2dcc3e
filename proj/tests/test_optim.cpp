#include <random>

#include "doctest.h"
#include "lmslam/optim.hpp"
#include "lmslam/raster.hpp"

using namespace lmslam;

namespace {

std::mt19937_64& rng() {
  static std::mt19937_64 r(99);
  return r;
}

Pose random_pose(double angle_scale = 1.0, double trans_scale = 2.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Vector3d axis(u(rng()), u(rng()), u(rng()));
  while (axis.norm() < 1e-6) axis = {u(rng()), u(rng()), u(rng())};
  axis.normalize();
  std::uniform_real_distribution<double> ang(0.0, angle_scale);
  Pose p;
  p.rotation = so3_exp(axis * ang(rng()));
  p.translation = {trans_scale * u(rng()), trans_scale * u(rng()),
                   trans_scale * u(rng())};
  return p;
}

Intrinsics test_camera() {
  Intrinsics k;
  k.fx = k.fy = 300;
  k.cx = 320;
  k.cy = 240;
  k.width = 640;
  k.height = 480;
  return k;
}

// Builds a consistent BA problem: random poses near origin looking down +z
// of the camera at a box of points in front.
BAProblem consistent_problem(int n_keyframes, int n_points) {
  BAProblem prob;
  prob.camera = test_camera();
  prob.extrinsics = default_lidar_to_camera();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n_keyframes; ++i) {
    Pose x;
    x.translation = {1.5 * i, 0.5 * u(rng()), 0.1 * u(rng())};
    x.rotation = so3_exp(Eigen::Vector3d(u(rng()), u(rng()), u(rng())) * 0.05);
    prob.keyframe_poses[i] = x;
  }
  prob.fixed_keyframes.insert(0);
  for (int p = 0; p < n_points; ++p) {
    // in front of the sensors (x forward in sensor frame)
    prob.points[p] = Point3(6 + 2 * u(rng()), 3 * u(rng()), 1 + 0.5 * u(rng()));
  }
  for (const auto& [kid, pose] : prob.keyframe_poses) {
    for (const auto& [pid, pt] : prob.points) {
      Observation obs;
      obs.keyframe_id = kid;
      obs.point_id = pid;
      obs.measured_pixel = -reprojection_residual(
          pose, pt, prob.camera, prob.extrinsics, Eigen::Vector2d::Zero(),
          nullptr, nullptr);
      prob.observations.push_back(obs);
    }
  }
  return prob;
}

}  // namespace

TEST_CASE("reprojection jacobians match central finite differences") {
  const Intrinsics k = test_camera();
  const Pose extr = default_lidar_to_camera();
  const double h = 1e-6;
  double max_rel = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose x = random_pose(0.3);
    const Point3 p = x.apply(Point3(10, 2, 1));  // in front of the camera
    const Eigen::Vector2d meas(100, 120);
    Eigen::Matrix<double, 2, 6> jx;
    Eigen::Matrix<double, 2, 3> jp;
    reprojection_residual(x, p, k, extr, meas, &jx, &jp);

    for (int d = 0; d < 6; ++d) {
      Vector6 dv = Vector6::Zero();
      dv[d] = h;
      const Eigen::Vector2d rp = reprojection_residual(
          compose(x, se3_exp(dv)), p, k, extr, meas, nullptr, nullptr);
      const Eigen::Vector2d rm = reprojection_residual(
          compose(x, se3_exp(-dv)), p, k, extr, meas, nullptr, nullptr);
      const Eigen::Vector2d fd = (rp - rm) / (2 * h);
      const double rel = (fd - jx.col(d)).norm() / std::max(1.0, fd.norm());
      max_rel = std::max(max_rel, rel);
    }
    for (int d = 0; d < 3; ++d) {
      Point3 dp = Point3::Zero();
      dp[d] = h;
      const Eigen::Vector2d rp =
          reprojection_residual(x, p + dp, k, extr, meas, nullptr, nullptr);
      const Eigen::Vector2d rm =
          reprojection_residual(x, p - dp, k, extr, meas, nullptr, nullptr);
      const Eigen::Vector2d fd = (rp - rm) / (2 * h);
      const double rel = (fd - jp.col(d)).norm() / std::max(1.0, fd.norm());
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("relative pose jacobians match central finite differences") {
  const double h = 1e-6;
  double max_rel = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose xi = random_pose(1.0);
    const Pose xj = random_pose(1.0);
    const Pose meas = random_pose(0.5);
    Matrix6 ji, jj;
    relative_pose_residual(xi, xj, meas, &ji, &jj);

    for (int d = 0; d < 6; ++d) {
      Vector6 dv = Vector6::Zero();
      dv[d] = h;
      {
        const Vector6 rp = relative_pose_residual(compose(xi, se3_exp(dv)), xj,
                                                  meas, nullptr, nullptr);
        const Vector6 rm = relative_pose_residual(compose(xi, se3_exp(-dv)), xj,
                                                  meas, nullptr, nullptr);
        const Vector6 fd = (rp - rm) / (2 * h);
        max_rel = std::max(max_rel,
                           (fd - ji.col(d)).norm() / std::max(1.0, fd.norm()));
      }
      {
        const Vector6 rp = relative_pose_residual(xi, compose(xj, se3_exp(dv)),
                                                  meas, nullptr, nullptr);
        const Vector6 rm = relative_pose_residual(xi, compose(xj, se3_exp(-dv)),
                                                  meas, nullptr, nullptr);
        const Vector6 fd = (rp - rm) / (2 * h);
        max_rel = std::max(max_rel,
                           (fd - jj.col(d)).norm() / std::max(1.0, fd.norm()));
      }
    }
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("BA at the global minimum stays put") {
  const BAProblem prob = consistent_problem(3, 30);
  const SolverConfig cfg;
  const BAResult res = local_bundle_adjust(prob, cfg);
  CHECK(res.final_cost < 1e-12);
  for (const auto& [kid, pose] : prob.keyframe_poses) {
    CHECK((res.poses.at(kid).translation - pose.translation).norm() < 1e-9);
    CHECK((res.poses.at(kid).rotation - pose.rotation).norm() < 1e-9);
  }
}

TEST_CASE("BA pulls a perturbed point back") {
  BAProblem prob = consistent_problem(3, 30);
  prob.fixed_keyframes.insert(2);  // pin scale as well as the gauge
  const Point3 truth = prob.points.at(5);
  prob.points.at(5) += Point3(0.3, -0.3, 0.2);  // 0.5 m perturbation
  const SolverConfig cfg;
  const double pre = ba_cost(prob, cfg);
  const BAResult res = local_bundle_adjust(prob, cfg);
  CHECK(res.final_cost < pre);
  CHECK(res.final_cost < 1e-10);
  CHECK((res.points.at(5) - truth).norm() < 1e-3);
}

TEST_CASE("BA requires a gauge and twice-observed points") {
  BAProblem prob = consistent_problem(2, 5);
  prob.fixed_keyframes.clear();
  CHECK_THROWS_AS(local_bundle_adjust(prob, SolverConfig{}), Error);

  BAProblem prob2 = consistent_problem(2, 5);
  prob2.points[99] = Point3(10, 0, 1);
  Observation o;
  o.keyframe_id = 0;
  o.point_id = 99;
  o.measured_pixel = {320, 240};
  prob2.observations.push_back(o);
  CHECK_THROWS_AS(local_bundle_adjust(prob2, SolverConfig{}), Error);
}

TEST_CASE("pose graph: consistent chain reaches zero cost") {
  PoseGraph g;
  Pose cur = Pose::identity();
  g.nodes[0] = cur;
  std::vector<Pose> steps;
  for (int i = 1; i < 6; ++i) {
    const Pose step = random_pose(0.2, 1.0);
    steps.push_back(step);
    cur = compose(cur, step);
    g.nodes[i] = cur;
    g.edges.push_back({i - 1, i, step, Matrix6::Identity()});
  }
  g.fixed_ids.insert(0);
  // perturb initial values
  for (int i = 1; i < 6; ++i) {
    g.nodes[i] = compose(g.nodes[i], random_pose(0.05, 0.1));
  }
  const auto poses = optimize_pose_graph(g, SolverConfig{});
  CHECK(pose_graph_cost(PoseGraph{poses, g.edges, g.fixed_ids}) < 1e-16);
  Pose dead = Pose::identity();
  for (int i = 1; i < 6; ++i) {
    dead = compose(dead, steps[i - 1]);
    CHECK((poses.at(i).translation - dead.translation).norm() < 1e-6);
  }
}

TEST_CASE("pose graph: square loop with rotated odometry improves endpoint") {
  // 4 nodes, odometry edges each rotated +2 deg from truth, plus an exact
  // loop edge closing back to the start.
  const double side = 10.0;
  Pose turn;  // 90 deg yaw
  turn.rotation = so3_exp(Eigen::Vector3d(0, 0, M_PI / 2));
  Pose leg;
  leg.translation = {side, 0, 0};

  std::vector<Pose> truth(5);
  truth[0] = Pose::identity();
  for (int i = 1; i < 5; ++i) {
    truth[i] = compose(truth[i - 1], compose(leg, turn));
  }

  Pose bias;
  bias.rotation = so3_exp(Eigen::Vector3d(0, 0, 2.0 * M_PI / 180.0));
  PoseGraph g;
  g.nodes[0] = truth[0];
  g.fixed_ids.insert(0);
  Pose dead = truth[0];
  for (int i = 1; i < 5; ++i) {
    const Pose noisy = compose(compose(leg, turn), bias);
    g.edges.push_back({i - 1, i, noisy, Matrix6::Identity()});
    dead = compose(dead, noisy);
    g.nodes[i] = dead;
  }
  const double pre_err = (g.nodes[4].translation - truth[4].translation).norm();
  // exact loop edge: node 4 coincides with node 0 in truth
  const Pose loop_meas = compose(truth[4].inverse(), truth[0]);
  Matrix6 loop_info = Matrix6::Identity() * 100.0;
  g.edges.push_back({4, 0, loop_meas, loop_info});
  // Anchor node 0 only; all others free.
  const auto poses = optimize_pose_graph(g, SolverConfig{});
  const double post_err = (poses.at(4).translation - truth[4].translation).norm();
  CHECK(post_err < pre_err / 5.0);
}

TEST_CASE("pose graph: both nodes fixed leaves poses unchanged") {
  PoseGraph g;
  g.nodes[0] = Pose::identity();
  Pose other;
  other.translation = {1, 0, 0};
  g.nodes[1] = other;
  Pose meas;
  meas.translation = {2, 0, 0};  // inconsistent
  g.edges.push_back({0, 1, meas, Matrix6::Identity()});
  g.fixed_ids = {0, 1};
  const auto poses = optimize_pose_graph(g, SolverConfig{});
  CHECK((poses.at(1).translation - other.translation).norm() == 0);
  CHECK(pose_graph_cost(g) > 0.5);
}

TEST_CASE("pose graph: disconnected node raises") {
  PoseGraph g;
  g.nodes[0] = Pose::identity();
  g.nodes[1] = Pose::identity();
  g.fixed_ids.insert(0);
  CHECK_THROWS_AS(optimize_pose_graph(g, SolverConfig{}), Error);
}

TEST_CASE("pose graph gauge equivariance") {
  std::vector<Pose> steps;
  PoseGraph g;
  Pose cur = Pose::identity();
  g.nodes[0] = cur;
  for (int i = 1; i < 5; ++i) {
    const Pose step = random_pose(0.3, 1.0);
    cur = compose(cur, compose(step, random_pose(0.02, 0.05)));
    g.nodes[i] = cur;
    g.edges.push_back({i - 1, i, step, Matrix6::Identity()});
  }
  g.fixed_ids.insert(0);
  const auto base = optimize_pose_graph(g, SolverConfig{});

  const Pose gshift = random_pose(0.5, 3.0);
  PoseGraph g2 = g;
  for (auto& [id, p] : g2.nodes) p = compose(gshift, p);
  const auto shifted = optimize_pose_graph(g2, SolverConfig{});
  for (const auto& [id, p] : base) {
    const Pose expected = compose(gshift, p);
    CHECK((shifted.at(id).translation - expected.translation).norm() < 1e-8);
    CHECK((shifted.at(id).rotation - expected.rotation).norm() < 1e-8);
  }
}

TEST_CASE("fuse_two_poses") {
  const Pose a = random_pose(0.5);
  SUBCASE("equal inputs") {
    const Pose f = fuse_two_poses(a, Matrix6::Identity(), a, Matrix6::Identity());
    CHECK((f.translation - a.translation).norm() < 1e-9);
    CHECK((f.rotation - a.rotation).norm() < 1e-9);
  }
  SUBCASE("negligible second weight returns first") {
    const Pose b = random_pose(0.5);
    const Pose f = fuse_two_poses(a, Matrix6::Identity(), b,
                                  Matrix6::Identity() * 1e-12);
    CHECK((f.translation - a.translation).norm() < 1e-6);
    CHECK((f.rotation - a.rotation).norm() < 1e-6);
  }
  SUBCASE("translation-only disagreement gives midpoint") {
    Pose b = a;
    b.translation += a.rotation * Point3(2, 0, 0);
    const Pose f = fuse_two_poses(a, Matrix6::Identity(), b, Matrix6::Identity());
    const Point3 mid = 0.5 * (a.translation + b.translation);
    CHECK((f.translation - mid).norm() < 1e-9);
  }
  SUBCASE("singular information raises") {
    CHECK_THROWS_AS(fuse_two_poses(a, Matrix6::Zero(), a, Matrix6::Zero()), Error);
  }
}

TEST_CASE("pose graph serialization round trip") {
  PoseGraph g;
  g.nodes[0] = Pose::identity();
  g.nodes[3] = random_pose(0.7);
  PoseGraphEdge e;
  e.i = 0;
  e.j = 3;
  e.measured_relative = random_pose(0.4);
  e.information = Matrix6::Identity();
  e.information(0, 5) = 0.25;
  e.information(5, 0) = 0.25;
  g.edges.push_back(e);
  const PoseGraph back = deserialize_pose_graph(serialize_pose_graph(g));
  REQUIRE(back.nodes.size() == 2);
  REQUIRE(back.edges.size() == 1);
  CHECK((back.nodes.at(3).translation - g.nodes.at(3).translation).norm() < 1e-12);
  CHECK((back.edges[0].information - e.information).norm() < 1e-12);
  CHECK((back.edges[0].measured_relative.rotation - e.measured_relative.rotation)
            .norm() < 1e-9);
}

#include "lmslam/optim.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace lmslam {

namespace {

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() + 0.5 * s + s * s / 6.0;
  }
  const double t2 = theta * theta;
  return Eigen::Matrix3d::Identity() + (1.0 - std::cos(theta)) / t2 * s +
         (theta - std::sin(theta)) / (t2 * theta) * s * s;
}

Eigen::Matrix3d so3_left_jacobian_inv(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() - 0.5 * s + s * s / 12.0;
  }
  const double half = 0.5 * theta;
  return Eigen::Matrix3d::Identity() - 0.5 * s +
         (1.0 - half / std::tan(half)) / (theta * theta) * s * s;
}

// Coupling block of the SE(3) left Jacobian (Barfoot, eq. 7.86b).
Eigen::Matrix3d se3_q_block(const Eigen::Vector3d& rho,
                            const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d rx = skew(rho);
  const Eigen::Matrix3d px = skew(phi);
  double c2, c3, c4;
  if (theta < 1e-4) {
    c2 = 1.0 / 6.0 - theta * theta / 120.0;
    c3 = -1.0 / 24.0 + theta * theta / 720.0;
    c4 = -1.0 / 60.0;
  } else {
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    c2 = (theta - std::sin(theta)) / (t2 * theta);
    c3 = (1.0 - 0.5 * t2 - std::cos(theta)) / t4;
    const double c5 = (theta - std::sin(theta) - t2 * theta / 6.0) / (t4 * theta);
    c4 = c3 - 3.0 * c5;
  }
  return 0.5 * rx + c2 * (px * rx + rx * px + px * rx * px) -
         c3 * (px * px * rx + rx * px * px - 3.0 * px * rx * px) -
         0.5 * c4 * (px * rx * px * px + px * px * rx * px);
}

Matrix6 se3_left_jacobian_inv(const Vector6& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const Eigen::Matrix3d jinv = so3_left_jacobian_inv(phi);
  const Eigen::Matrix3d q = se3_q_block(rho, phi);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.topRightCorner<3, 3>() = -jinv * q * jinv;
  return out;
}

Matrix6 se3_right_jacobian_inv(const Vector6& xi) {
  return se3_left_jacobian_inv(-xi);
}

Matrix6 adjoint(const Pose& t) {
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = t.rotation;
  out.bottomRightCorner<3, 3>() = t.rotation;
  out.topRightCorner<3, 3>() = skew(t.translation) * t.rotation;
  return out;
}

}  // namespace

Eigen::Vector2d reprojection_residual(const Pose& keyframe_pose,
                                      const Point3& point,
                                      const Intrinsics& camera,
                                      const Pose& extrinsics,
                                      const Eigen::Vector2d& measured,
                                      Eigen::Matrix<double, 2, 6>* j_pose,
                                      Eigen::Matrix<double, 2, 3>* j_point) {
  const Pose world_to_sensor = keyframe_pose.inverse();
  const Point3 y = world_to_sensor.apply(point);  // sensor frame
  const Point3 c = extrinsics.apply(y);           // camera frame
  if (c.z() <= 1e-9) {
    throw Error(ErrorCode::InvalidConfig,
                "reprojection_residual: point not in front of camera");
  }
  const double iz = 1.0 / c.z();
  Eigen::Vector2d predicted(camera.fx * c.x() * iz + camera.cx,
                            camera.fy * c.y() * iz + camera.cy);

  if (j_pose || j_point) {
    Eigen::Matrix<double, 2, 3> dpi;
    dpi << camera.fx * iz, 0, -camera.fx * c.x() * iz * iz,
           0, camera.fy * iz, -camera.fy * c.y() * iz * iz;
    if (j_pose) {
      // X <- X exp(d): y = exp(-d) X^-1 p ~= y - rho + skew(y) phi
      Eigen::Matrix<double, 3, 6> dy;
      dy.leftCols<3>() = -Eigen::Matrix3d::Identity();
      dy.rightCols<3>() = skew(y);
      *j_pose = -dpi * extrinsics.rotation * dy;
    }
    if (j_point) {
      *j_point = -dpi * extrinsics.rotation * world_to_sensor.rotation;
    }
  }
  return measured - predicted;
}

Vector6 relative_pose_residual(const Pose& xi, const Pose& xj,
                               const Pose& measured, Matrix6* j_i,
                               Matrix6* j_j) {
  const Pose z = compose(xi.inverse(), xj);
  const Pose m = compose(measured.inverse(), z);
  const Vector6 r = se3_log(m);
  if (j_i || j_j) {
    const Matrix6 jr_inv = se3_right_jacobian_inv(r);
    if (j_j) *j_j = jr_inv;
    if (j_i) *j_i = -jr_inv * adjoint(z.inverse());
  }
  return r;
}

namespace {

double huber_cost(double squared_norm, double k) {
  const double s = std::sqrt(squared_norm);
  if (s <= k) return squared_norm;
  return 2.0 * k * s - k * k;
}

double huber_weight(double squared_norm, double k) {
  const double s = std::sqrt(squared_norm);
  return s <= k ? 1.0 : k / s;
}

double eval_ba_cost(const std::map<int, Pose>& poses,
                    const std::map<int, Point3>& points,
                    const BAProblem& prob, const SolverConfig& cfg) {
  double cost = 0;
  for (const auto& obs : prob.observations) {
    const Pose& x = poses.at(obs.keyframe_id);
    const Point3& p = points.at(obs.point_id);
    Eigen::Vector2d e;
    try {
      e = reprojection_residual(x, p, prob.camera, prob.extrinsics,
                                obs.measured_pixel, nullptr, nullptr);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
    cost += huber_cost(e.dot(obs.information * e), cfg.huber_pixels);
  }
  return cost;
}

using SparseMat = Eigen::SparseMatrix<double>;

bool solve_normal_equations(const std::vector<Eigen::Triplet<double>>& trips,
                            const Eigen::VectorXd& g, double lambda, int dim,
                            Eigen::VectorXd* delta) {
  SparseMat h(dim, dim);
  h.setFromTriplets(trips.begin(), trips.end());
  SparseMat id(dim, dim);
  id.setIdentity();
  h += lambda * id;
  Eigen::SimplicialLDLT<SparseMat> solver(h);
  if (solver.info() != Eigen::Success) return false;
  *delta = solver.solve(-g);
  return solver.info() == Eigen::Success;
}

}  // namespace

double ba_cost(const BAProblem& prob, const SolverConfig& cfg) {
  return eval_ba_cost(prob.keyframe_poses, prob.points, prob, cfg);
}

BAResult local_bundle_adjust(const BAProblem& prob, const SolverConfig& cfg) {
  if (prob.fixed_keyframes.empty()) {
    throw Error(ErrorCode::InvalidConfig, "local_bundle_adjust: no fixed keyframe");
  }
  std::map<int, int> obs_count;
  for (const auto& o : prob.observations) ++obs_count[o.point_id];
  for (const auto& [pid, _] : prob.points) {
    if (obs_count[pid] < 2) {
      throw Error(ErrorCode::InvalidConfig,
                  "local_bundle_adjust: point " + std::to_string(pid) +
                      " observed fewer than 2 times");
    }
  }

  // Variable layout: free poses (6 each), then points (3 each).
  std::map<int, int> pose_index, point_index;
  int dim = 0;
  for (const auto& [kid, _] : prob.keyframe_poses) {
    if (!prob.fixed_keyframes.count(kid)) {
      pose_index[kid] = dim;
      dim += 6;
    }
  }
  for (const auto& [pid, _] : prob.points) {
    point_index[pid] = dim;
    dim += 3;
  }

  BAResult res;
  res.poses = prob.keyframe_poses;
  res.points = prob.points;
  res.initial_cost = eval_ba_cost(res.poses, res.points, prob, cfg);
  res.final_cost = res.initial_cost;

  double lambda = cfg.lambda_init;
  bool any_accepted = false;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& obs : prob.observations) {
      Eigen::Matrix<double, 2, 6> jx;
      Eigen::Matrix<double, 2, 3> jp;
      Eigen::Vector2d e;
      try {
        e = reprojection_residual(
            res.poses.at(obs.keyframe_id), res.points.at(obs.point_id),
            prob.camera, prob.extrinsics, obs.measured_pixel, &jx, &jp);
      } catch (const Error&) {
        continue;  // behind-camera at the current estimate; no gradient info
      }
      const double w = huber_weight(e.dot(obs.information * e), cfg.huber_pixels);
      const Eigen::Matrix2d omega = w * obs.information;

      const auto it_pose = pose_index.find(obs.keyframe_id);
      const int pi = point_index.at(obs.point_id);
      if (it_pose != pose_index.end()) {
        const int xi = it_pose->second;
        const Matrix6 hxx = jx.transpose() * omega * jx;
        const Eigen::Matrix<double, 6, 3> hxp = jx.transpose() * omega * jp;
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) trips.emplace_back(xi + r, xi + c, hxx(r, c));
          for (int c = 0; c < 3; ++c) {
            trips.emplace_back(xi + r, pi + c, hxp(r, c));
            trips.emplace_back(pi + c, xi + r, hxp(r, c));
          }
        }
        g.segment<6>(xi) += jx.transpose() * omega * e;
      }
      const Eigen::Matrix3d hpp = jp.transpose() * omega * jp;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trips.emplace_back(pi + r, pi + c, hpp(r, c));
      g.segment<3>(pi) += jp.transpose() * omega * e;
    }

    if (g.lpNorm<Eigen::Infinity>() < cfg.grad_tol) break;

    bool accepted = false;
    while (lambda <= cfg.lambda_max) {
      Eigen::VectorXd delta;
      if (solve_normal_equations(trips, g, lambda, dim, &delta)) {
        auto cand_poses = res.poses;
        auto cand_points = res.points;
        for (const auto& [kid, idx] : pose_index) {
          cand_poses[kid] = compose(cand_poses[kid], se3_exp(delta.segment<6>(idx)));
        }
        for (const auto& [pid, idx] : point_index) {
          cand_points[pid] += delta.segment<3>(idx);
        }
        const double cost = eval_ba_cost(cand_poses, cand_points, prob, cfg);
        if (cost < res.final_cost) {
          const double rel = (res.final_cost - cost) /
                             std::max(res.final_cost, 1e-300);
          res.poses = std::move(cand_poses);
          res.points = std::move(cand_points);
          res.final_cost = cost;
          lambda = std::max(lambda * 0.1, 1e-12);
          accepted = true;
          any_accepted = true;
          ++res.iterations;
          if (rel < cfg.rel_cost_tol) iter = cfg.max_iters;  // converged
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      if (!any_accepted && res.initial_cost > cfg.rel_cost_tol) {
        throw Error(ErrorCode::Diverged,
                    "local_bundle_adjust: no step accepted before lambda limit");
      }
      break;
    }
  }
  return res;
}

double pose_graph_cost(const PoseGraph& g) {
  double cost = 0;
  for (const auto& e : g.edges) {
    const Vector6 r = relative_pose_residual(
        g.nodes.at(e.i), g.nodes.at(e.j), e.measured_relative, nullptr, nullptr);
    cost += r.dot(e.information * r);
  }
  return cost;
}

std::map<int, Pose> optimize_pose_graph(const PoseGraph& g,
                                        const SolverConfig& cfg) {
  if (g.fixed_ids.empty()) {
    throw Error(ErrorCode::InvalidConfig, "optimize_pose_graph: no fixed node");
  }
  for (const auto& e : g.edges) {
    if (!g.nodes.count(e.i) || !g.nodes.count(e.j)) {
      throw Error(ErrorCode::UnknownId,
                  "optimize_pose_graph: edge references missing node");
    }
  }
  // Connectivity from the fixed set.
  {
    std::map<int, std::vector<int>> adj;
    for (const auto& e : g.edges) {
      adj[e.i].push_back(e.j);
      adj[e.j].push_back(e.i);
    }
    std::set<int> seen(g.fixed_ids.begin(), g.fixed_ids.end());
    std::queue<int> q;
    for (int id : g.fixed_ids) q.push(id);
    while (!q.empty()) {
      const int id = q.front();
      q.pop();
      for (int n : adj[id]) {
        if (seen.insert(n).second) q.push(n);
      }
    }
    for (const auto& [id, _] : g.nodes) {
      if (!seen.count(id)) {
        throw Error(ErrorCode::DisconnectedGraph,
                    "optimize_pose_graph: node " + std::to_string(id) +
                        " unreachable from fixed set");
      }
    }
  }

  std::map<int, int> index;
  int dim = 0;
  for (const auto& [id, _] : g.nodes) {
    if (!g.fixed_ids.count(id)) {
      index[id] = dim;
      dim += 6;
    }
  }

  std::map<int, Pose> poses = g.nodes;
  if (dim == 0) return poses;

  auto eval = [&](const std::map<int, Pose>& p) {
    double cost = 0;
    for (const auto& e : g.edges) {
      const Vector6 r = relative_pose_residual(p.at(e.i), p.at(e.j),
                                               e.measured_relative, nullptr,
                                               nullptr);
      cost += r.dot(e.information * r);
    }
    return cost;
  };

  double cost = eval(poses);
  double lambda = cfg.lambda_init;
  bool any_accepted = false;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    for (const auto& e : g.edges) {
      Matrix6 ji, jj;
      const Vector6 r = relative_pose_residual(poses.at(e.i), poses.at(e.j),
                                               e.measured_relative, &ji, &jj);
      const auto iti = index.find(e.i);
      const auto itj = index.find(e.j);
      auto add_block = [&](int row, int col, const Matrix6& m) {
        for (int a = 0; a < 6; ++a)
          for (int b = 0; b < 6; ++b) trips.emplace_back(row + a, col + b, m(a, b));
      };
      if (iti != index.end()) {
        add_block(iti->second, iti->second, ji.transpose() * e.information * ji);
        grad.segment<6>(iti->second) += ji.transpose() * e.information * r;
      }
      if (itj != index.end()) {
        add_block(itj->second, itj->second, jj.transpose() * e.information * jj);
        grad.segment<6>(itj->second) += jj.transpose() * e.information * r;
      }
      if (iti != index.end() && itj != index.end()) {
        const Matrix6 hij = ji.transpose() * e.information * jj;
        add_block(iti->second, itj->second, hij);
        add_block(itj->second, iti->second, hij.transpose());
      }
    }

    if (grad.lpNorm<Eigen::Infinity>() < cfg.grad_tol) break;

    bool accepted = false;
    while (lambda <= cfg.lambda_max) {
      Eigen::VectorXd delta;
      if (solve_normal_equations(trips, grad, lambda, dim, &delta)) {
        auto cand = poses;
        for (const auto& [id, idx] : index) {
          cand[id] = compose(cand[id], se3_exp(delta.segment<6>(idx)));
        }
        double cand_cost;
        try {
          cand_cost = eval(cand);
        } catch (const Error&) {
          cand_cost = std::numeric_limits<double>::infinity();
        }
        if (cand_cost < cost) {
          const double rel = (cost - cand_cost) / std::max(cost, 1e-300);
          poses = std::move(cand);
          cost = cand_cost;
          lambda = std::max(lambda * 0.1, 1e-12);
          accepted = true;
          any_accepted = true;
          if (rel < cfg.rel_cost_tol) iter = cfg.max_iters;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      if (!any_accepted && cost > cfg.rel_cost_tol) {
        throw Error(ErrorCode::Diverged,
                    "optimize_pose_graph: no step accepted before lambda limit");
      }
      break;
    }
  }
  return poses;
}

Pose fuse_two_poses(const Pose& a, const Matrix6& info_a, const Pose& b,
                    const Matrix6& info_b) {
  const Matrix6 sum = info_a + info_b;
  Eigen::FullPivLU<Matrix6> lu(sum);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularInformation,
                "fuse_two_poses: information sum not invertible");
  }
  Pose t = a;
  for (int iter = 0; iter < 50; ++iter) {
    Matrix6 h = Matrix6::Zero();
    Vector6 g = Vector6::Zero();
    for (const auto& [ref, info] : {std::pair{&a, &info_a}, {&b, &info_b}}) {
      const Vector6 r = se3_log(compose(ref->inverse(), t));
      const Matrix6 j = se3_right_jacobian_inv(r);
      h += j.transpose() * (*info) * j;
      g += j.transpose() * (*info) * r;
    }
    const Vector6 delta = h.ldlt().solve(-g);
    t = compose(t, se3_exp(delta));
    if (delta.norm() < 1e-14) break;
  }
  return t;
}

namespace {

void write_pose_line(std::ostringstream& os, const Pose& p) {
  const Eigen::Quaterniond q(p.rotation);
  os << p.translation.x() << " " << p.translation.y() << " "
     << p.translation.z() << " " << q.x() << " " << q.y() << " " << q.z()
     << " " << q.w();
}

}  // namespace

std::string serialize_pose_graph(const PoseGraph& g) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [id, pose] : g.nodes) {
    os << "VERTEX " << id << " ";
    write_pose_line(os, pose);
    os << "\n";
  }
  for (const auto& e : g.edges) {
    os << "EDGE " << e.i << " " << e.j << " ";
    write_pose_line(os, e.measured_relative);
    for (int r = 0; r < 6; ++r)
      for (int c = r; c < 6; ++c) os << " " << e.information(r, c);
    os << "\n";
  }
  return os.str();
}

PoseGraph deserialize_pose_graph(const std::string& text) {
  PoseGraph g;
  std::istringstream is(text);
  std::string tag;
  while (is >> tag) {
    if (tag == "VERTEX") {
      int id;
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(is >> id >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw Error(ErrorCode::MalformedFile, "bad VERTEX line");
      }
      Pose p;
      p.translation = {tx, ty, tz};
      p.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
      g.nodes[id] = p;
    } else if (tag == "EDGE") {
      PoseGraphEdge e;
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(is >> e.i >> e.j >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw Error(ErrorCode::MalformedFile, "bad EDGE line");
      }
      e.measured_relative.translation = {tx, ty, tz};
      e.measured_relative.rotation =
          Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
      for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
          double v;
          if (!(is >> v)) {
            throw Error(ErrorCode::MalformedFile, "bad EDGE information");
          }
          e.information(r, c) = v;
          e.information(c, r) = v;
        }
      }
      g.edges.push_back(e);
    } else {
      throw Error(ErrorCode::MalformedFile, "unknown record " + tag);
    }
  }
  return g;
}

}  // namespace lmslam

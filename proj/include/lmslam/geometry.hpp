#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <vector>

#include "lmslam/errors.hpp"

namespace lmslam {

using Point3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Rigid transform on SE(3). Rotation kept orthonormal; compose
/// re-orthonormalizes when numerical drift exceeds 1e-12.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }

  Point3 apply(const Point3& x) const { return rotation * x + translation; }

  Pose inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }
};

Pose compose(const Pose& a, const Pose& b);

/// Projects the rotation part of a matrix back to SO(3).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m);

/// se(3) twist ordering: [rho (translation); phi (rotation)].
Pose se3_exp(const Vector6& v);
Vector6 se3_log(const Pose& p);  // throws AngleNearPi at the cut locus

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& r);

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

double rotation_angle(const Eigen::Matrix3d& r);

struct Pixel {
  int u = 0;
  int v = 0;
  uint8_t intensity = 0;
};

struct Intrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
};

struct PointCloud {
  std::vector<Point3> points;
  int64_t frame_id = 0;
};

/// Drops NaN/Inf points; keeps input order otherwise.
PointCloud sanitize(const PointCloud& cloud);

}  // namespace lmslam

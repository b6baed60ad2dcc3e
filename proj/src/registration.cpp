#include "lmslam/registration.hpp"

#include <Eigen/SVD>

namespace lmslam {

Pose estimate_rigid_transform(const std::vector<Point3>& p,
                              const std::vector<Point3>& q) {
  if (p.size() != q.size() || p.size() < 3) {
    throw Error(ErrorCode::DegenerateConfiguration,
                "estimate_rigid_transform: need >= 3 paired points");
  }
  const double n = static_cast<double>(p.size());
  Point3 cp = Point3::Zero(), cq = Point3::Zero();
  for (size_t i = 0; i < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
  }
  cp /= n;
  cq /= n;

  Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < p.size(); ++i) {
    w += (q[i] - cq) * (p[i] - cp).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Rank < 2 means the points carry no plane of support (collinear).
  if (svd.singularValues()(1) < 1e-12 * (1.0 + svd.singularValues()(0))) {
    throw Error(ErrorCode::DegenerateConfiguration,
                "estimate_rigid_transform: collinear configuration");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) {
    d(2, 2) = -1;
  }
  Pose out;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.translation = cq - out.rotation * cp;
  return out;
}

}  // namespace lmslam

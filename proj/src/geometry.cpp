#include "lmslam/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace lmslam {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::EmptyProjection: return "EmptyProjection";
    case ErrorCode::UnlitPixel: return "UnlitPixel";
    case ErrorCode::TooFewFeatures: return "TooFewFeatures";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::TrackingLost: return "TrackingLost";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::RelocalizationFailed: return "RelocalizationFailed";
    case ErrorCode::FinalizeFailed: return "FinalizeFailed";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::UnknownMatchedId: return "UnknownMatchedId";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = -1;
    r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  return r;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  Eigen::Matrix3d rtr = out.rotation.transpose() * out.rotation;
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
    out.rotation = orthonormalize(out.rotation);
  }
  return out;
}

double rotation_angle(const Eigen::Matrix3d& r) {
  double c = (r.trace() - 1.0) * 0.5;
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c);
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + s + 0.5 * s * s;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * s + b * s * s;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const double theta = rotation_angle(r);
  if (theta > M_PI - 1e-6) {
    throw Error(ErrorCode::AngleNearPi, "so3_log: rotation angle near pi");
  }
  Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    return 0.5 * w;
  }
  return theta / (2.0 * std::sin(theta)) * w;
}

namespace {

// Left Jacobian of SO(3); maps the translation part of an se(3) twist.
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + 0.5 * s + s * s / 6.0;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Eigen::Matrix3d::Identity() + a * s + b * s * s;
}

Eigen::Matrix3d so3_left_jacobian_inv(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() - 0.5 * s + s * s / 12.0;
  }
  const double half = 0.5 * theta;
  const double cot = half / std::tan(half);
  return Eigen::Matrix3d::Identity() - 0.5 * s +
         (1.0 - cot) / (theta * theta) * s * s;
}

}  // namespace

Pose se3_exp(const Vector6& v) {
  const Eigen::Vector3d rho = v.head<3>();
  const Eigen::Vector3d phi = v.tail<3>();
  Pose out;
  out.rotation = so3_exp(phi);
  out.translation = so3_left_jacobian(phi) * rho;
  return out;
}

Vector6 se3_log(const Pose& p) {
  const Eigen::Vector3d phi = so3_log(p.rotation);
  Vector6 v;
  v.tail<3>() = phi;
  v.head<3>() = so3_left_jacobian_inv(phi) * p.translation;
  return v;
}

PointCloud sanitize(const PointCloud& cloud) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    if (p.allFinite()) out.points.push_back(p);
  }
  return out;
}

}  // namespace lmslam

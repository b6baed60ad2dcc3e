#include <random>

#include "doctest.h"
#include "lmslam/geometry.hpp"

using namespace lmslam;

namespace {

Pose rot_z(double deg) {
  Pose p;
  const double a = deg * M_PI / 180.0;
  p.rotation << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return p;
}

Pose random_pose(std::mt19937_64& rng, double max_angle = M_PI - 0.01) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Vector3d axis(u(rng), u(rng), u(rng));
  while (axis.norm() < 1e-6) axis = {u(rng), u(rng), u(rng)};
  axis.normalize();
  std::uniform_real_distribution<double> ang(0.0, max_angle);
  Pose p;
  p.rotation = so3_exp(axis * ang(rng));
  p.translation = {5 * u(rng), 5 * u(rng), 5 * u(rng)};
  return p;
}

double pose_diff(const Pose& a, const Pose& b) {
  return (a.rotation - b.rotation).norm() + (a.translation - b.translation).norm();
}

}  // namespace

TEST_CASE("compose identity laws") {
  const Pose id = Pose::identity();
  CHECK(pose_diff(compose(id, id), id) < 1e-15);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng);
    CHECK(pose_diff(compose(p, p.inverse()), id) < 1e-9);
    CHECK(rotation_angle(p.rotation) < M_PI);
    CHECK(std::abs(p.rotation.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("compose matches hand matrix multiplication") {
  // Rz(90)+t(1,0,0) composed with Rz(90) = Rz(180)+t(1,0,0)
  Pose a = rot_z(90);
  a.translation = {1, 0, 0};
  const Pose b = rot_z(90);
  Pose expected = rot_z(180);
  expected.translation = {1, 0, 0};
  CHECK(pose_diff(compose(a, b), expected) < 1e-12);
}

TEST_CASE("apply") {
  CHECK((Pose::identity().apply({1, 2, 3}) - Point3(1, 2, 3)).norm() == 0);

  Pose t;
  t.translation = {0, 0, 5};
  CHECK((t.apply({1, 2, 3}) - Point3(1, 2, 8)).norm() < 1e-15);

  CHECK((rot_z(90).apply({1, 0, 0}) - Point3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("se3 exp/log round trip") {
  CHECK(pose_diff(se3_exp(Vector6::Zero()), Pose::identity()) == 0);
  CHECK(se3_log(Pose::identity()).norm() == 0);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    CHECK(pose_diff(se3_exp(se3_log(p)), p) < 1e-9);
  }
  for (int i = 0; i < 200; ++i) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Vector6 v;
    for (int k = 0; k < 6; ++k) v[k] = u(rng);
    if (v.tail<3>().norm() >= M_PI - 0.01) continue;
    CHECK((se3_log(se3_exp(v)) - v).norm() < 1e-9);
  }
}

TEST_CASE("se3_log near pi raises") {
  Pose p;
  p.rotation = so3_exp(Eigen::Vector3d::UnitX() * (M_PI - 1e-9));
  CHECK_THROWS_AS(se3_log(p), Error);
}

TEST_CASE("associativity and homomorphism properties") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(pose_diff(compose(compose(a, b), c), compose(a, compose(b, c))) < 1e-9);
    const Point3 x(1.0, -2.0, 0.5);
    CHECK((compose(a, b).apply(x) - a.apply(b.apply(x))).norm() < 1e-9);
  }
}

TEST_CASE("sanitize drops non-finite points") {
  PointCloud c;
  c.points = {{1, 2, 3},
              {std::numeric_limits<double>::quiet_NaN(), 0, 0},
              {0, std::numeric_limits<double>::infinity(), 0},
              {4, 5, 6}};
  const PointCloud s = sanitize(c);
  REQUIRE(s.points.size() == 2);
  CHECK(s.points[1] == Point3(4, 5, 6));
}

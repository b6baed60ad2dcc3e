#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lmslam/raster.hpp"

namespace lmslam {

struct Box {
  Point3 min = Point3::Zero();
  Point3 max = Point3::Zero();
  double yaw = 0;  // rotation about the vertical axis through the box center
};

struct LidarParams {
  int azimuth_steps = 900;
  double az_min = -3.14159265358979;  // full sweep; the raster culls to its frustum
  double az_max = 3.14159265358979;
  // el_max clears the tallest scenery at close range, so silhouettes in the
  // raster are real structure edges rather than a sweep-ceiling artifact.
  int rings = 128;
  double el_min = -0.35;
  double el_max = 0.55;
  double max_range = 70.0;
  double noise_sigma = 0.02;
};

/// Axis-aligned boxes over a z=0 ground plane; scans are deterministic
/// given the noise seed.
struct SyntheticWorld {
  std::vector<Box> boxes;
  bool ground = true;
};

struct SyntheticSpec {
  SyntheticWorld world;
  std::vector<Pose> trajectory;  // world <- sensor, x forward / z up
  LidarParams lidar;
  double frame_step = 0.5;  // meters between consecutive frames
};

struct SyntheticFrame {
  PointCloud cloud;  // sensor frame
  Pose pose;         // ground truth, world <- sensor
  double stamp = 0;
};

/// First hit of a world ray against the boxes and ground; negative when the
/// ray escapes. `dir` need not be normalized beyond unit length assumption.
double cast_ray(const SyntheticWorld& world, const Point3& origin,
                const Point3& dir, double max_range);

PointCloud render_scan(const SyntheticWorld& world, const Pose& sensor_pose,
                       const LidarParams& lidar, std::mt19937_64& rng);

std::vector<SyntheticFrame> generate_world(const SyntheticSpec& spec,
                                           uint64_t seed);

/// Square loop with rounded corners plus an extra partial pass so early
/// places are revisited. Box layout is deterministic; only scan noise
/// depends on the generation seed.
SyntheticSpec square_loop_spec(double leg = 50.0, double frame_step = 0.5,
                               double extra_fraction = 0.3);

/// Straight corridor run for memory-bound measurements.
SyntheticSpec straight_spec(double length, double frame_step = 1.0);

/// Parses "square[:leg=..][:step=..][:extra=..]" or
/// "straight[:length=..][:step=..]".
SyntheticSpec parse_synthetic_spec(const std::string& text);

}  // namespace lmslam

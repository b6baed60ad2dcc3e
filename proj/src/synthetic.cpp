#include "lmslam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "lmslam/errors.hpp"

namespace lmslam {

namespace {

constexpr double kSensorHeight = 1.6;
constexpr double kCornerRadius = 6.0;

// Entry distance of a ray into a box, or -1. The ray is rotated into the
// box frame (yaw about the box center) and tested against the extents.
double intersect_box(const Box& b, const Point3& origin, const Point3& dir) {
  const Point3 c = (b.min + b.max) / 2;
  const double cy = std::cos(b.yaw), sy = std::sin(b.yaw);
  auto unrotate = [&](const Point3& p) {
    return Point3(cy * p.x() + sy * p.y(), -sy * p.x() + cy * p.y(), p.z());
  };
  const Point3 o = unrotate(origin - c) + c;
  const Point3 d = unrotate(dir);
  double tmin = 0, tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return -1.0;
      continue;
    }
    const double t1 = (b.min[a] - o[a]) / d[a];
    const double t2 = (b.max[a] - o[a]) / d[a];
    tmin = std::max(tmin, std::min(t1, t2));
    tmax = std::min(tmax, std::max(t1, t2));
  }
  return tmin <= tmax ? tmin : -1.0;
}

Pose path_pose(double x, double y, double yaw) {
  Pose p;
  p.translation = {x, y, kSensorHeight};
  p.rotation = Eigen::AngleAxisd(yaw, Point3::UnitZ()).toRotationMatrix();
  return p;
}

// Square perimeter with rounded corners; returns pose at arclength s.
Pose square_path_pose(double leg, double s) {
  const double r = kCornerRadius;
  const double straight = leg - 2 * r;
  const double arc = M_PI * r / 2;
  const double perimeter = 4 * (straight + arc);
  s = std::fmod(s, perimeter);
  if (s < 0) s += perimeter;

  struct Seg {
    bool is_arc;
    double len;
    double x0, y0, yaw;        // straight start
    double cx, cy, a0;         // arc center and start angle
  };
  const Seg segs[8] = {
      {false, straight, r, 0, 0, 0, 0, 0},
      {true, arc, 0, 0, 0, leg - r, r, -M_PI / 2},
      {false, straight, leg, r, M_PI / 2, 0, 0, 0},
      {true, arc, 0, 0, 0, leg - r, leg - r, 0},
      {false, straight, leg - r, leg, M_PI, 0, 0, 0},
      {true, arc, 0, 0, 0, r, leg - r, M_PI / 2},
      {false, straight, 0, leg - r, -M_PI / 2, 0, 0, 0},
      {true, arc, 0, 0, 0, r, r, M_PI},
  };
  for (const Seg& seg : segs) {
    if (s > seg.len) {
      s -= seg.len;
      continue;
    }
    if (!seg.is_arc) {
      return path_pose(seg.x0 + s * std::cos(seg.yaw),
                       seg.y0 + s * std::sin(seg.yaw), seg.yaw);
    }
    const double phi = seg.a0 + s / r;
    return path_pose(seg.cx + r * std::cos(phi), seg.cy + r * std::sin(phi),
                     phi + M_PI / 2);
  }
  return path_pose(r, 0, 0);  // s == perimeter exactly
}

// Deterministic scenery: each station is a small cluster of overlapping
// boxes with varied heights, so silhouettes form distinct staircase shapes
// instead of interchangeable rectangles.
void scatter_boxes(SyntheticWorld& world, std::mt19937_64& rng,
                   const std::function<Pose(double)>& path, double total_len) {
  std::uniform_real_distribution<double> lateral(3.5, 8.0);
  std::uniform_real_distribution<double> size_xy(0.5, 2.2);
  std::uniform_real_distribution<double> height(0.8, 5.0);
  std::uniform_real_distribution<double> along(-1.5, 1.5);
  std::uniform_real_distribution<double> offset(-1.4, 1.4);
  std::uniform_real_distribution<double> spin(0.0, M_PI);
  std::uniform_int_distribution<int> cluster(1, 3);
  std::bernoulli_distribution flip(0.5);

  for (double s = 0; s < total_len; s += 2.0) {
    const Pose p = path(s + along(rng));
    const double yaw = std::atan2(p.rotation(1, 0), p.rotation(0, 0));
    const Point3 left(-std::sin(yaw), std::cos(yaw), 0);
    for (int side : {-1, 1}) {
      if (side == 1 && flip(rng)) continue;  // one-sided now and then
      const Point3 center =
          Point3(p.translation.x(), p.translation.y(), 0) +
          side * lateral(rng) * left;
      const int n = cluster(rng);
      for (int i = 0; i < n; ++i) {
        const Point3 c = center + Point3(offset(rng), offset(rng), 0);
        const double sx = size_xy(rng), sy = size_xy(rng), h = height(rng);
        Box b;
        b.min = {c.x() - sx / 2, c.y() - sy / 2, 0.0};
        b.max = {c.x() + sx / 2, c.y() + sy / 2, h};
        b.yaw = spin(rng);  // no face stays parallel to the path
        world.boxes.push_back(b);
      }
    }
  }
}

std::vector<Pose> sample_path(const std::function<Pose(double)>& path,
                              double total_len, double step) {
  std::vector<Pose> out;
  for (double s = 0; s <= total_len + 1e-9; s += step) out.push_back(path(s));
  return out;
}

}  // namespace

double cast_ray(const SyntheticWorld& world, const Point3& origin,
                const Point3& dir, double max_range) {
  double best = max_range;
  bool hit = false;
  for (const Box& b : world.boxes) {
    const double t = intersect_box(b, origin, dir);
    if (t > 1e-6 && t < best) {
      best = t;
      hit = true;
    }
  }
  if (world.ground && dir.z() < -1e-9) {
    const double t = -origin.z() / dir.z();
    if (t > 1e-6 && t < best) {
      best = t;
      hit = true;
    }
  }
  return hit ? best : -1.0;
}

PointCloud render_scan(const SyntheticWorld& world, const Pose& sensor_pose,
                       const LidarParams& lidar, std::mt19937_64& rng) {
  // Bucket nearby boxes by world azimuth so each ray only tests the boxes
  // whose angular footprint covers its direction.
  constexpr int kBuckets = 128;
  std::vector<std::vector<const Box*>> buckets(kBuckets);
  for (const Box& b : world.boxes) {
    const Point3 c = (b.min + b.max) / 2;
    const double radius = (b.max - b.min).norm() / 2;
    const Point3 d = c - sensor_pose.translation;
    const double dist = std::hypot(d.x(), d.y());
    if (dist - radius > lidar.max_range) continue;
    if (dist <= radius) {  // sensor inside the footprint: all directions
      for (auto& bucket : buckets) bucket.push_back(&b);
      continue;
    }
    const double center = std::atan2(d.y(), d.x());
    const double half = std::asin(std::min(1.0, radius / dist)) + 0.02;
    const int lo = static_cast<int>(
        std::floor((center - half + M_PI) / (2 * M_PI) * kBuckets));
    const int hi = static_cast<int>(
        std::floor((center + half + M_PI) / (2 * M_PI) * kBuckets));
    for (int i = lo; i <= hi; ++i) {
      buckets[((i % kBuckets) + kBuckets) % kBuckets].push_back(&b);
    }
  }

  std::normal_distribution<double> noise(0.0, lidar.noise_sigma);
  // Per-ray angular jitter: a perfectly rigid angular grid samples every
  // surface at sensor-locked directions, so the sampled points crawl along
  // the surfaces coherently as the sensor moves and bias the registration.
  // Dithering the grid by up to half a step turns that into zero-mean noise.
  const double az_step = (lidar.az_max - lidar.az_min) / lidar.azimuth_steps;
  const double el_step = (lidar.el_max - lidar.el_min) / lidar.rings;
  std::uniform_real_distribution<double> dither(-0.5, 0.5);
  PointCloud cloud;
  for (int ai = 0; ai < lidar.azimuth_steps; ++ai) {
    for (int ri = 0; ri < lidar.rings; ++ri) {
      const double az = lidar.az_min + (ai + 0.5 + dither(rng)) * az_step;
      const double el = lidar.el_min + (ri + 0.5 + dither(rng)) * el_step;
      const Point3 dir_sensor(std::cos(el) * std::cos(az),
                              std::cos(el) * std::sin(az), std::sin(el));
      const Point3 dir = sensor_pose.rotation * dir_sensor;
      const int bucket = std::min(
          kBuckets - 1,
          static_cast<int>((std::atan2(dir.y(), dir.x()) + M_PI) /
                           (2 * M_PI) * kBuckets));

      double best = lidar.max_range;
      bool hit = false;
      for (const Box* b : buckets[bucket]) {
        const double t = intersect_box(*b, sensor_pose.translation, dir);
        if (t > 1e-6 && t < best) {
          best = t;
          hit = true;
        }
      }
      if (world.ground && dir.z() < -1e-9) {
        const double t = -sensor_pose.translation.z() / dir.z();
        if (t > 1e-6 && t < best) {
          best = t;
          hit = true;
        }
      }
      if (!hit) continue;
      const double r = best + (lidar.noise_sigma > 0 ? noise(rng) : 0.0);
      if (r < 0.5) continue;
      cloud.points.push_back(dir_sensor * r);
    }
  }
  return cloud;
}

std::vector<SyntheticFrame> generate_world(const SyntheticSpec& spec,
                                           uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SyntheticFrame> out;
  out.reserve(spec.trajectory.size());
  for (size_t i = 0; i < spec.trajectory.size(); ++i) {
    SyntheticFrame frame;
    frame.pose = spec.trajectory[i];
    frame.stamp = 0.1 * static_cast<double>(i);
    frame.cloud = render_scan(spec.world, frame.pose, spec.lidar, rng);
    frame.cloud.frame_id = static_cast<int>(i);
    out.push_back(std::move(frame));
  }
  return out;
}

SyntheticSpec square_loop_spec(double leg, double frame_step,
                               double extra_fraction) {
  if (leg <= 2 * kCornerRadius + 1) {
    throw Error(ErrorCode::InvalidConfig, "square loop leg too short");
  }
  const double perimeter =
      4 * (leg - 2 * kCornerRadius) + 2 * M_PI * kCornerRadius;
  auto path = [leg](double s) { return square_path_pose(leg, s); };

  SyntheticSpec spec;
  spec.frame_step = frame_step;
  std::mt19937_64 layout_rng(42);
  scatter_boxes(spec.world, layout_rng, path, perimeter);
  spec.trajectory = sample_path(path, perimeter * (1 + extra_fraction), frame_step);
  return spec;
}

SyntheticSpec straight_spec(double length, double frame_step) {
  auto path = [](double s) { return path_pose(s, 0, 0); };
  SyntheticSpec spec;
  spec.frame_step = frame_step;
  std::mt19937_64 layout_rng(43);
  // Scenery extends past both ends so the first and last scans see structure.
  SyntheticWorld shifted;
  scatter_boxes(shifted, layout_rng, [&](double s) { return path(s - 20.0); },
                length + 45.0);
  spec.world = shifted;
  spec.trajectory = sample_path(path, length, frame_step);
  return spec;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  std::vector<std::string> parts;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ':')) parts.push_back(tok);
  if (parts.empty()) {
    throw Error(ErrorCode::InvalidConfig, "empty synthetic world spec");
  }

  std::map<std::string, double> kv;
  for (size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig,
                  "bad synthetic parameter: " + parts[i]);
    }
    kv[parts[i].substr(0, eq)] = std::stod(parts[i].substr(eq + 1));
  }
  auto get = [&](const std::string& key, double dflt) {
    const auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
  };

  if (parts[0] == "square") {
    return square_loop_spec(get("leg", 50.0), get("step", 0.5),
                            get("extra", 0.3));
  }
  if (parts[0] == "straight") {
    return straight_spec(get("length", 200.0), get("step", 1.0));
  }
  throw Error(ErrorCode::InvalidConfig,
              "unknown synthetic world type: " + parts[0]);
}

}  // namespace lmslam

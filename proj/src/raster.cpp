#include "lmslam/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace lmslam {

namespace {

std::optional<PlaneModel> fit_plane(const Point3& a, const Point3& b,
                                    const Point3& c) {
  Eigen::Vector3d n = (b - a).cross(c - a);
  const double norm = n.norm();
  if (norm < 1e-12) return std::nullopt;  // collinear sample
  n /= norm;
  PlaneModel m;
  m.normal = n;
  m.offset = -n.dot(a);
  return m;
}

}  // namespace

GroundRemovalResult remove_ground_plane(const PointCloud& cloud,
                                        const PlaneRansacConfig& cfg) {
  const size_t n = cloud.points.size();
  if (n < 3) {
    throw Error(ErrorCode::DegenerateCloud,
                "remove_ground_plane: fewer than 3 points");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);

  PlaneModel best;
  bool have_model = false;
  bool any_valid_sample = false;
  for (int it = 0; it < cfg.iterations; ++it) {
    const size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    auto model = fit_plane(cloud.points[i], cloud.points[j], cloud.points[k]);
    if (!model) continue;
    any_valid_sample = true;
    int inliers = 0;
    for (const auto& p : cloud.points) {
      if (model->distance(p) < cfg.inlier_dist) ++inliers;
    }
    if (!have_model || inliers > best.inlier_count) {
      best = *model;
      best.inlier_count = inliers;
      have_model = true;
    }
  }
  if (!any_valid_sample) {
    // Seeded draws never produced a non-collinear triple; check exhaustively
    // on small clouds before declaring the cloud degenerate.
    for (size_t i = 0; i < n && !any_valid_sample; ++i)
      for (size_t j = i + 1; j < n && !any_valid_sample; ++j)
        for (size_t k = j + 1; k < n && !any_valid_sample; ++k)
          if (fit_plane(cloud.points[i], cloud.points[j], cloud.points[k]))
            any_valid_sample = true;
    if (!any_valid_sample) {
      throw Error(ErrorCode::DegenerateCloud,
                  "remove_ground_plane: no 3 non-collinear points");
    }
  }

  GroundRemovalResult out;
  out.cloud.frame_id = cloud.frame_id;
  if (!have_model ||
      best.inlier_count < cfg.min_inlier_frac * static_cast<double>(n)) {
    out.cloud = cloud;
    return out;
  }

  out.plane = best;
  out.cloud.points.reserve(n - best.inlier_count);
  for (const auto& p : cloud.points) {
    if (best.distance(p) >= cfg.inlier_dist) out.cloud.points.push_back(p);
  }
  return out;
}

RasterImage rasterize(const PointCloud& cloud, const Pose& extrinsics,
                      const Intrinsics& k, const ElevationEncoding& enc) {
  RasterImage img;
  img.width = k.width;
  img.height = k.height;
  img.frame_id = cloud.frame_id;
  img.pixels.assign(static_cast<size_t>(k.width) * k.height, 0);
  img.depth_slot.assign(static_cast<size_t>(k.width) * k.height, -1);

  const double span = enc.max_elev - enc.min_elev;
  std::vector<double> elev_at(img.pixels.size(), 0.0);

  for (const auto& p : cloud.points) {
    const Point3 c = extrinsics.apply(p);
    if (c.z() <= enc.near) continue;
    const int u = static_cast<int>(std::lround(k.fx * c.x() / c.z() + k.cx));
    const int v = static_cast<int>(std::lround(k.fy * c.y() / c.z() + k.cy));
    if (u < 0 || u >= k.width || v < 0 || v >= k.height) continue;
    const size_t off = static_cast<size_t>(v) * k.width + u;
    const double elev = p.z();  // height before projection
    if (img.depth_slot[off] >= 0 && elev <= elev_at[off]) continue;

    const double q = (elev - enc.min_elev) / span * 255.0;
    const int intensity =
        std::clamp(static_cast<int>(std::lround(q)), 1, 255);
    if (img.depth_slot[off] >= 0) {
      img.depth_points[img.depth_slot[off]] = c;
    } else {
      img.depth_slot[off] = static_cast<int32_t>(img.depth_points.size());
      img.depth_points.push_back(c);
    }
    img.pixels[off] = static_cast<uint8_t>(intensity);
    elev_at[off] = elev;
  }

  if (img.depth_points.empty()) {
    throw Error(ErrorCode::EmptyProjection,
                "rasterize: no point landed inside the image");
  }
  return img;
}

Point3 backproject(const RasterImage& img, const Pixel& px) {
  if (px.u < 0 || px.u >= img.width || px.v < 0 || px.v >= img.height) {
    throw Error(ErrorCode::UnlitPixel, "backproject: pixel out of bounds");
  }
  const int32_t slot =
      img.depth_slot[static_cast<size_t>(px.v) * img.width + px.u];
  if (slot < 0) {
    throw Error(ErrorCode::UnlitPixel, "backproject: pixel has no source point");
  }
  return img.depth_points[slot];
}

Pose default_lidar_to_camera() {
  Pose p;
  // camera x = -lidar y, camera y = -lidar z, camera z = lidar x
  p.rotation << 0, -1, 0,
                0, 0, -1,
                1, 0, 0;
  return p;
}

std::string pgm_bytes(const RasterImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()),
             img.pixels.size());
  return out;
}

std::string depth_sidecar_bytes(const RasterImage& img) {
  std::string out;
  uint32_t count = 0;
  for (int32_t slot : img.depth_slot)
    if (slot >= 0) ++count;
  out.append(reinterpret_cast<const char*>(&count), sizeof(count));
  for (size_t off = 0; off < img.depth_slot.size(); ++off) {
    const int32_t slot = img.depth_slot[off];
    if (slot < 0) continue;
    const uint32_t key = static_cast<uint32_t>(off);
    out.append(reinterpret_cast<const char*>(&key), sizeof(key));
    const Point3& p = img.depth_points[slot];
    for (int i = 0; i < 3; ++i) {
      const float f = static_cast<float>(p[i]);
      out.append(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  return out;
}

void write_pgm(const RasterImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  const std::string bytes = pgm_bytes(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_depth_sidecar(const RasterImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  const std::string bytes = depth_sidecar_bytes(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace lmslam

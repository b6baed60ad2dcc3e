#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmslam/geometry.hpp"

namespace lmslam {

/// Grayscale elevation image. Lit pixels carry a back-reference to their
/// source 3D point (camera frame), so back-projection is lossless.
struct RasterImage {
  int width = 0;
  int height = 0;
  int64_t frame_id = 0;
  std::vector<uint8_t> pixels;        // row-major, width*height
  std::vector<int32_t> depth_slot;    // per pixel: index into depth_points or -1
  std::vector<Point3> depth_points;   // camera-frame source points

  bool lit(int u, int v) const {
    return u >= 0 && u < width && v >= 0 && v < height &&
           depth_slot[static_cast<size_t>(v) * width + u] >= 0;
  }
  uint8_t at(int u, int v) const {
    return pixels[static_cast<size_t>(v) * width + u];
  }
};

struct PlaneModel {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;  // plane: normal.dot(p) + offset = 0
  int inlier_count = 0;

  double distance(const Point3& p) const {
    return std::abs(normal.dot(p) + offset);
  }
};

struct PlaneRansacConfig {
  int iterations = 100;
  double inlier_dist = 0.15;
  double min_inlier_frac = 0.2;
  uint64_t seed = 0;
};

struct ElevationEncoding {
  double min_elev = -2.0;
  double max_elev = 8.0;
  double near = 0.5;  // minimum camera-frame depth
};

struct GroundRemovalResult {
  PointCloud cloud;
  std::optional<PlaneModel> plane;
};

/// RANSAC plane fit; removes inliers of the dominant plane. When the best
/// model covers less than cfg.min_inlier_frac of the cloud, the input is
/// returned unchanged and no plane is reported.
GroundRemovalResult remove_ground_plane(const PointCloud& cloud,
                                        const PlaneRansacConfig& cfg);

/// Pinhole projection of a point cloud into an elevation image. Intensity
/// encodes the source point's height (z before the extrinsic transform);
/// on pixel collision the higher point wins.
RasterImage rasterize(const PointCloud& cloud, const Pose& extrinsics,
                      const Intrinsics& k, const ElevationEncoding& enc);

/// Returns the stored camera-frame source point of a lit pixel.
Point3 backproject(const RasterImage& img, const Pixel& px);

// Default lidar (x fwd, y left, z up) to camera (z fwd, x right, y down).
Pose default_lidar_to_camera();

void write_pgm(const RasterImage& img, const std::string& path);
void write_depth_sidecar(const RasterImage& img, const std::string& path);
std::string pgm_bytes(const RasterImage& img);
std::string depth_sidecar_bytes(const RasterImage& img);

}  // namespace lmslam

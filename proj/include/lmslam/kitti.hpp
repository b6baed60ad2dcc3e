#pragma once

#include <string>

#include "lmslam/metrics.hpp"
#include "lmslam/raster.hpp"

namespace lmslam {

/// Binary scan: little-endian float32 quadruples (x, y, z, reflectance);
/// reflectance is dropped. Throws MalformedFile when the size is not a
/// multiple of 16 or a coordinate is non-finite.
PointCloud load_kitti_scan(const std::string& path);

/// Pose file: one line per frame, 12 floats forming a row-major 3x4 [R|t].
/// Rotations are validated for orthonormality within 1e-4.
Trajectory load_kitti_poses(const std::string& path);

}  // namespace lmslam

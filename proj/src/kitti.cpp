#include "lmslam/kitti.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lmslam/errors.hpp"

namespace lmslam {

PointCloud load_kitti_scan(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  const std::streamsize size = f.tellg();
  if (size % 16 != 0) {
    throw Error(ErrorCode::MalformedFile,
                path + ": size " + std::to_string(size) +
                    " is not a multiple of 16");
  }
  f.seekg(0);
  std::vector<float> raw(static_cast<size_t>(size) / 4);
  f.read(reinterpret_cast<char*>(raw.data()), size);
  if (!f) throw Error(ErrorCode::IoError, "short read on " + path);

  PointCloud cloud;
  cloud.points.reserve(raw.size() / 4);
  for (size_t i = 0; i + 3 < raw.size(); i += 4) {
    if (!std::isfinite(raw[i]) || !std::isfinite(raw[i + 1]) ||
        !std::isfinite(raw[i + 2])) {
      throw Error(ErrorCode::MalformedFile,
                  path + ": non-finite coordinate at point " +
                      std::to_string(i / 4));
    }
    cloud.points.emplace_back(raw[i], raw[i + 1], raw[i + 2]);
  }
  return cloud;
}

Trajectory load_kitti_poses(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  Trajectory traj;
  std::string line;
  int64_t id = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    double v[12];
    for (int i = 0; i < 12; ++i) {
      if (!(is >> v[i])) {
        throw Error(ErrorCode::MalformedFile, path + ": bad pose line: " + line);
      }
    }
    TrajectoryEntry e;
    e.frame_id = id;
    e.stamp = 0.1 * static_cast<double>(id);
    e.pose.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    e.pose.translation = {v[3], v[7], v[11]};
    const double drift = (e.pose.rotation * e.pose.rotation.transpose() -
                          Eigen::Matrix3d::Identity())
                             .cwiseAbs()
                             .maxCoeff();
    if (drift > 1e-4) {
      throw Error(ErrorCode::MalformedFile,
                  path + ": non-orthonormal rotation at frame " +
                      std::to_string(id));
    }
    e.pose.rotation = orthonormalize(e.pose.rotation);
    traj.entries.push_back(e);
    ++id;
  }
  return traj;
}

}  // namespace lmslam

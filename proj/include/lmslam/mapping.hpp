#pragma once

#include <filesystem>
#include <map>
#include <set>

#include "lmslam/odometry.hpp"

namespace lmslam {

struct MapPointObservation {
  int keyframe_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct MapPoint {
  Point3 point = Point3::Zero();  // world frame
  BinaryDescriptor descriptor;
  std::vector<MapPointObservation> observations;
};

struct LocalMap {
  int id = 0;
  std::vector<int> keyframe_ids;
  std::vector<MapPoint> map_points;
  std::optional<RasterImage> image;         // present iff finalized
  std::optional<FeatureSet> image_features;
  double stamp = 0;
  Pose anchor_pose;  // pose of the first keyframe
  bool ba_diverged = false;

  bool finalized() const { return image.has_value(); }
};

struct MappingConfig {
  int kfs_per_map = 5;
  double fuse_radius = 0.3;
  int fuse_desc_max = 64;
  double distance_threshold = 100.0;  // D_th
  Intrinsics camera;
  Pose extrinsics = default_lidar_to_camera();
  ElevationEncoding encoding;
  DetectorConfig detector;
  SolverConfig ba;
};

struct LocalMapGraph {
  std::map<int, LocalMap> online;
  std::map<int, std::set<int>> edges;           // adjacency by shared keyframe
  std::map<int, double> inserted_at_distance;   // traveled meters at insertion
};

/// Directory-backed append-only archive of finalized local maps.
/// Layout: <root>/maps/<id>_<stamp>.lmz and a manifest.json index.
class OfflineStore {
 public:
  explicit OfflineStore(const std::filesystem::path& root);

  void archive(const LocalMap& lm);  // write-temp-then-rename
  LocalMap fetch(int id) const;
  std::string raw_bytes(int id) const;
  bool contains(int id) const;
  size_t size() const { return index_.size(); }
  std::vector<int> ids() const;

 private:
  std::filesystem::path root_;
  std::map<int, std::filesystem::path> index_;

  void write_manifest() const;
};

std::string serialize_local_map(const LocalMap& lm);
LocalMap deserialize_local_map(const std::string& bytes);

/// Merges the keyframe's backprojected features into the local map. Points
/// matching an existing map point by descriptor and radius are fused by
/// averaging; the rest are appended. Returns true when the map reached
/// cfg.kfs_per_map keyframes and should be finalized.
bool accumulate(const Keyframe& kf, LocalMap& cur, const MappingConfig& cfg);

/// Local BA over the map's keyframes and twice-observed points, then
/// rasterization of the optimized points from the anchor keyframe's virtual
/// camera. Updates the optimized keyframe poses in `keyframes`. Idempotent
/// on an already finalized map. Throws FinalizeFailed after a diverging BA;
/// the map is still rasterized from the unoptimized points and stays usable.
void finalize(LocalMap& cur, std::map<int, Keyframe>& keyframes,
              const MappingConfig& cfg);

void insert(LocalMapGraph& graph, LocalMap lm, double traveled);

/// Loop-triggered update: the new map replaces the matched one online; the
/// old map is archived. The caller swaps the BOW entries.
void update_on_loop(LocalMapGraph& graph, OfflineStore& store, LocalMap new_lm,
                    int matched_id, double traveled);

/// Archives online maps whose insertion-time distance lag exceeds
/// cfg.distance_threshold. Returns the number archived.
int cull(LocalMapGraph& graph, OfflineStore& store, double traveled,
         const MappingConfig& cfg);

}  // namespace lmslam

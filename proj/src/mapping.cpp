#include "lmslam/mapping.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lmslam {

namespace {

using nlohmann::json;

json pose_to_json(const Pose& p) {
  const Eigen::Quaterniond q(p.rotation);
  return json{{"t", {p.translation.x(), p.translation.y(), p.translation.z()}},
              {"q", {q.x(), q.y(), q.z(), q.w()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  const auto& t = j.at("t");
  p.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  const auto& q = j.at("q");
  p.rotation = Eigen::Quaterniond(q[3].get<double>(), q[0].get<double>(),
                                  q[1].get<double>(), q[2].get<double>())
                   .normalized()
                   .toRotationMatrix();
  return p;
}

std::string stamp_string(double stamp) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", stamp);
  return buf;
}

}  // namespace

std::string serialize_local_map(const LocalMap& lm) {
  if (!lm.finalized()) {
    throw Error(ErrorCode::InvalidConfig, "serialize_local_map: not finalized");
  }
  std::string out = pgm_bytes(*lm.image);
  out += depth_sidecar_bytes(*lm.image);
  out += serialize_feature_set(lm.image_features ? *lm.image_features
                                                 : FeatureSet{});
  json header{{"id", lm.id},
              {"stamp", lm.stamp},
              {"keyframe_ids", lm.keyframe_ids},
              {"anchor_pose", pose_to_json(lm.anchor_pose)},
              {"ba_diverged", lm.ba_diverged}};
  out += header.dump();
  return out;
}

LocalMap deserialize_local_map(const std::string& bytes) {
  LocalMap lm;
  RasterImage img;

  // PGM section
  size_t off = 0;
  auto read_token = [&]() {
    while (off < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[off]))) ++off;
    const size_t start = off;
    while (off < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[off]))) ++off;
    return bytes.substr(start, off - start);
  };
  if (read_token() != "P5") {
    throw Error(ErrorCode::MalformedFile, "local map: missing PGM magic");
  }
  img.width = std::stoi(read_token());
  img.height = std::stoi(read_token());
  if (read_token() != "255") {
    throw Error(ErrorCode::MalformedFile, "local map: unexpected PGM maxval");
  }
  ++off;  // single whitespace after maxval
  const size_t npx = static_cast<size_t>(img.width) * img.height;
  if (off + npx > bytes.size()) {
    throw Error(ErrorCode::MalformedFile, "local map: truncated PGM");
  }
  img.pixels.assign(bytes.begin() + off, bytes.begin() + off + npx);
  off += npx;

  // depth sidecar
  img.depth_slot.assign(npx, -1);
  if (off + 4 > bytes.size()) {
    throw Error(ErrorCode::MalformedFile, "local map: truncated sidecar");
  }
  uint32_t count;
  std::memcpy(&count, bytes.data() + off, 4);
  off += 4;
  for (uint32_t i = 0; i < count; ++i) {
    if (off + 16 > bytes.size()) {
      throw Error(ErrorCode::MalformedFile, "local map: truncated sidecar record");
    }
    uint32_t key;
    float xyz[3];
    std::memcpy(&key, bytes.data() + off, 4);
    std::memcpy(xyz, bytes.data() + off + 4, 12);
    off += 16;
    img.depth_slot[key] = static_cast<int32_t>(img.depth_points.size());
    img.depth_points.emplace_back(xyz[0], xyz[1], xyz[2]);
  }

  // feature blob: self-delimiting, count then fixed-width records
  const size_t rec = 4 + 4 + 4 + 4 + 4 + 32 + 1 + 24;
  if (off + 4 > bytes.size()) {
    throw Error(ErrorCode::MalformedFile, "local map: truncated feature blob");
  }
  uint32_t nfeat;
  std::memcpy(&nfeat, bytes.data() + off, 4);
  const size_t blob_len = 4 + static_cast<size_t>(nfeat) * rec;
  lm.image_features = deserialize_feature_set(bytes.substr(off, blob_len));
  off += blob_len;

  const json header = json::parse(bytes.substr(off));
  lm.id = header.at("id").get<int>();
  lm.stamp = header.at("stamp").get<double>();
  lm.keyframe_ids = header.at("keyframe_ids").get<std::vector<int>>();
  lm.anchor_pose = pose_from_json(header.at("anchor_pose"));
  lm.ba_diverged = header.value("ba_diverged", false);
  lm.image = std::move(img);
  return lm;
}

OfflineStore::OfflineStore(const std::filesystem::path& root) : root_(root) {
  std::filesystem::create_directories(root_ / "maps");
  const auto manifest = root_ / "manifest.json";
  if (std::filesystem::exists(manifest)) {
    std::ifstream f(manifest);
    json j;
    f >> j;
    for (const auto& entry : j.at("maps")) {
      index_[entry.at("id").get<int>()] = root_ / entry.at("file").get<std::string>();
    }
  }
}

void OfflineStore::write_manifest() const {
  json maps = json::array();
  for (const auto& [id, path] : index_) {
    maps.push_back({{"id", id},
                    {"file", "maps/" + path.filename().string()}});
  }
  const auto tmp = root_ / ".manifest.tmp";
  {
    std::ofstream f(tmp);
    f << json{{"maps", maps}}.dump(2);
  }
  std::filesystem::rename(tmp, root_ / "manifest.json");
}

void OfflineStore::archive(const LocalMap& lm) {
  if (index_.count(lm.id)) {
    throw Error(ErrorCode::DuplicateId,
                "archive: map " + std::to_string(lm.id) + " already stored");
  }
  const std::string name =
      std::to_string(lm.id) + "_" + stamp_string(lm.stamp) + ".lmz";
  const auto path = root_ / "maps" / name;
  const auto tmp = root_ / "maps" / (".tmp_" + name);
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    const std::string bytes = serialize_local_map(lm);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
  index_[lm.id] = path;
  write_manifest();
}

std::string OfflineStore::raw_bytes(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    throw Error(ErrorCode::UnknownId, "store: no map " + std::to_string(id));
  }
  std::ifstream f(it->second, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + it->second.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

LocalMap OfflineStore::fetch(int id) const {
  return deserialize_local_map(raw_bytes(id));
}

bool OfflineStore::contains(int id) const { return index_.count(id) > 0; }

std::vector<int> OfflineStore::ids() const {
  std::vector<int> out;
  out.reserve(index_.size());
  for (const auto& [id, _] : index_) out.push_back(id);
  return out;
}

bool accumulate(const Keyframe& kf, LocalMap& cur, const MappingConfig& cfg) {
  if (!cur.keyframe_ids.empty() && kf.id <= cur.keyframe_ids.back()) {
    throw Error(ErrorCode::InvalidConfig,
                "accumulate: keyframe older than the local map");
  }
  if (cur.keyframe_ids.empty()) {
    cur.anchor_pose = kf.pose;
  }
  cur.keyframe_ids.push_back(kf.id);
  cur.stamp = kf.stamp;

  const Pose cam_to_sensor = cfg.extrinsics.inverse();
  for (size_t i = 0; i < kf.features.size(); ++i) {
    if (!kf.features.points3d[i]) continue;
    const Point3 world =
        kf.pose.apply(cam_to_sensor.apply(*kf.features.points3d[i]));
    const BinaryDescriptor& desc = kf.features.descriptors[i];
    const Eigen::Vector2d pixel(kf.features.corners[i].u,
                                kf.features.corners[i].v);

    MapPoint* fused = nullptr;
    for (auto& mp : cur.map_points) {
      if ((mp.point - world).norm() < cfg.fuse_radius &&
          hamming(mp.descriptor, desc) <= cfg.fuse_desc_max) {
        fused = &mp;
        break;
      }
    }
    if (fused) {
      const double n = static_cast<double>(fused->observations.size());
      fused->point = (fused->point * n + world) / (n + 1.0);
      fused->observations.push_back({kf.id, pixel});
    } else {
      MapPoint mp;
      mp.point = world;
      mp.descriptor = desc;
      mp.observations.push_back({kf.id, pixel});
      cur.map_points.push_back(std::move(mp));
    }
  }
  return static_cast<int>(cur.keyframe_ids.size()) >= cfg.kfs_per_map;
}

void finalize(LocalMap& cur, std::map<int, Keyframe>& keyframes,
              const MappingConfig& cfg) {
  if (cur.finalized()) return;
  if (cur.keyframe_ids.empty()) {
    throw Error(ErrorCode::InvalidConfig, "finalize: empty local map");
  }

  BAProblem prob;
  prob.camera = cfg.camera;
  prob.extrinsics = cfg.extrinsics;
  for (int kid : cur.keyframe_ids) {
    prob.keyframe_poses[kid] = keyframes.at(kid).pose;
  }
  // Fix first and last member to pin both the gauge and the scale.
  prob.fixed_keyframes.insert(cur.keyframe_ids.front());
  prob.fixed_keyframes.insert(cur.keyframe_ids.back());

  std::vector<int> ba_point_of_map_point(cur.map_points.size(), -1);
  int next_pid = 0;
  for (size_t i = 0; i < cur.map_points.size(); ++i) {
    const auto& mp = cur.map_points[i];
    if (mp.observations.size() < 2) continue;
    const int pid = next_pid++;
    ba_point_of_map_point[i] = pid;
    prob.points[pid] = mp.point;
    for (const auto& obs : mp.observations) {
      prob.observations.push_back(
          {obs.keyframe_id, pid, obs.pixel, Eigen::Matrix2d::Identity()});
    }
  }

  bool diverged = false;
  if (!prob.points.empty()) {
    try {
      const BAResult res = local_bundle_adjust(prob, cfg.ba);
      for (const auto& [kid, pose] : res.poses) {
        keyframes.at(kid).pose = pose;
      }
      for (size_t i = 0; i < cur.map_points.size(); ++i) {
        if (ba_point_of_map_point[i] >= 0) {
          cur.map_points[i].point = res.points.at(ba_point_of_map_point[i]);
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Diverged) throw;
      diverged = true;
      cur.ba_diverged = true;
    }
  }
  cur.anchor_pose = keyframes.at(cur.keyframe_ids.front()).pose;

  // Rasterize from the anchor keyframe's virtual camera.
  PointCloud cloud;
  cloud.frame_id = cur.id;
  const Pose world_to_anchor = cur.anchor_pose.inverse();
  cloud.points.reserve(cur.map_points.size());
  for (const auto& mp : cur.map_points) {
    cloud.points.push_back(world_to_anchor.apply(mp.point));
  }
  try {
    cur.image = rasterize(cloud, cfg.extrinsics, cfg.camera, cfg.encoding);
  } catch (const Error& e) {
    throw Error(ErrorCode::FinalizeFailed,
                std::string("finalize: rasterization failed: ") + e.what());
  }
  try {
    cur.image_features = detect(*cur.image, cfg.detector);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewFeatures) throw;
    cur.image_features = FeatureSet{};  // map with too little texture
  }
  if (diverged) {
    throw Error(ErrorCode::FinalizeFailed,
                "finalize: local BA diverged; map kept unoptimized");
  }
}

void insert(LocalMapGraph& graph, LocalMap lm, double traveled) {
  if (!lm.finalized()) {
    throw Error(ErrorCode::InvalidConfig, "insert: local map not finalized");
  }
  if (graph.online.count(lm.id)) {
    throw Error(ErrorCode::DuplicateId,
                "insert: map " + std::to_string(lm.id) + " already online");
  }
  const int id = lm.id;
  for (const auto& [other_id, other] : graph.online) {
    for (int kid : lm.keyframe_ids) {
      if (std::find(other.keyframe_ids.begin(), other.keyframe_ids.end(),
                    kid) != other.keyframe_ids.end()) {
        graph.edges[id].insert(other_id);
        graph.edges[other_id].insert(id);
        break;
      }
    }
  }
  graph.inserted_at_distance[id] = traveled;
  graph.online.emplace(id, std::move(lm));
}

namespace {

void remove_online(LocalMapGraph& graph, int id) {
  graph.online.erase(id);
  graph.inserted_at_distance.erase(id);
  for (int n : graph.edges[id]) graph.edges[n].erase(id);
  graph.edges.erase(id);
}

}  // namespace

void update_on_loop(LocalMapGraph& graph, OfflineStore& store, LocalMap new_lm,
                    int matched_id, double traveled) {
  const auto it = graph.online.find(matched_id);
  if (it == graph.online.end()) {
    throw Error(ErrorCode::UnknownMatchedId,
                "update_on_loop: map " + std::to_string(matched_id) +
                    " not online");
  }
  store.archive(it->second);
  remove_online(graph, matched_id);
  insert(graph, std::move(new_lm), traveled);
}

int cull(LocalMapGraph& graph, OfflineStore& store, double traveled,
         const MappingConfig& cfg) {
  std::vector<int> stale;
  for (const auto& [id, inserted_at] : graph.inserted_at_distance) {
    if (traveled - inserted_at > cfg.distance_threshold) stale.push_back(id);
  }
  for (int id : stale) {
    store.archive(graph.online.at(id));
    remove_online(graph, id);
  }
  return static_cast<int>(stale.size());
}

}  // namespace lmslam

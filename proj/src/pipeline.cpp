#include "lmslam/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lmslam {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

long read_vmhwm_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      return std::stol(line.substr(6));
    }
  }
  return 0;
}

Matrix6 pose_edge_information() {
  Matrix6 info = Matrix6::Identity();
  info.bottomRightCorner<3, 3>() *= 100.0;  // rotation weighted over translation
  return info;
}

double mean_edge_residual(const PoseGraph& pg) {
  if (pg.edges.empty()) return 0;
  double sum = 0;
  for (const auto& e : pg.edges) {
    const Pose rel = compose(pg.nodes.at(e.i).inverse(), pg.nodes.at(e.j));
    sum += (compose(e.measured_relative.inverse(), rel)).translation.norm();
  }
  return sum / static_cast<double>(pg.edges.size());
}

void override_double(const json& j, const char* key, double& v) {
  if (j.contains(key)) v = j.at(key).get<double>();
}
void override_int(const json& j, const char* key, int& v) {
  if (j.contains(key)) v = j.at(key).get<int>();
}

struct FrameRecord {
  int64_t frame_id = 0;
  double stamp = 0;
  int anchor_kf = -1;
  Pose rel;  // anchor sensor <- frame sensor
};

struct Input {
  std::vector<SyntheticFrame> frames;
  bool has_gt = false;
};

Input ingest(const PipelineOptions& opts, const PipelineConfig& cfg) {
  Input in;
  if (opts.input.rfind("synthetic:", 0) == 0) {
    const SyntheticSpec spec = parse_synthetic_spec(opts.input.substr(10));
    in.frames = generate_world(spec, opts.seed);
    in.has_gt = true;
    return in;
  }
  const fs::path dir(opts.input);
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "ingest: no input directory " + opts.input);
  }
  const fs::path scans = fs::is_directory(dir / "velodyne") ? dir / "velodyne" : dir;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(scans)) {
    if (e.path().extension() == ".bin") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw Error(ErrorCode::IoError, "ingest: no .bin scans under " + opts.input);
  }

  Trajectory gt;
  if (fs::exists(dir / "poses.txt")) {
    gt = load_kitti_poses((dir / "poses.txt").string());
    in.has_gt = true;
  }
  for (size_t i = 0; i < files.size(); ++i) {
    SyntheticFrame frame;
    frame.cloud = load_kitti_scan(files[i].string());
    frame.cloud.frame_id = static_cast<int>(i);
    frame.stamp = 0.1 * static_cast<double>(i);
    if (i < gt.entries.size()) frame.pose = gt.entries[i].pose;
    in.frames.push_back(std::move(frame));
  }
  (void)cfg;
  return in;
}

struct Run {
  PipelineConfig cfg;
  const PipelineOptions& opts;
  Input input;

  std::map<int, Keyframe> keyframes;
  std::map<int, Point3> kf_gt_positions;
  PoseGraph pg;
  LocalMapGraph graph;
  std::unique_ptr<OfflineStore> store;
  LocalMap cur;
  int next_map_id = 0;
  int finalized_count = 0;
  std::map<int, std::vector<int>> map_members;   // every finalized map
  std::map<int, FeatureSet> map_features;        // image features per map
  std::map<int, Pose> map_anchor;
  std::vector<FeatureSet> training;
  std::set<int> db_ids;
  VocabularyTree voc;
  BowDatabase db;
  std::optional<int> pending_replace;

  std::vector<FrameRecord> records;
  FeatureSet prev_features;
  Pose prev_pose;
  Pose last_relative;  // constant-velocity fallback while tracking is lost
  Pose odom_pose;      // dead-reckoned pose, never touched by loop closures
  Trajectory odom_traj;
  int last_kf_id = -1;
  int frames_since_kf = 0;
  double traveled = 0;
  std::map<int64_t, OdomPrior> priors;

  PipelineResult res;
  std::ofstream resource_log;

  explicit Run(const PipelineOptions& o) : opts(o) {}

  void make_keyframe(const FeatureSet& features, const Pose& pose, double stamp,
                     size_t frame_index) {
    Keyframe kf;
    kf.id = last_kf_id + 1;
    kf.pose = pose;
    kf.features = features;
    kf.stamp = stamp;
    keyframes[kf.id] = kf;
    if (input.has_gt) {
      kf_gt_positions[kf.id] = input.frames[frame_index].pose.translation;
    }
    pg.nodes[kf.id] = pose;
    if (last_kf_id < 0) {
      pg.fixed_ids.insert(kf.id);
    } else {
      PoseGraphEdge e;
      e.i = last_kf_id;
      e.j = kf.id;
      e.measured_relative = compose(keyframes[last_kf_id].pose.inverse(), pose);
      e.information = cfg.odom_edge_information;
      pg.edges.push_back(e);
    }
    last_kf_id = kf.id;
    frames_since_kf = 0;
  }

  // The signal that the current local map reached its keyframe budget.
  void finalize_current() {
    try {
      finalize(cur, keyframes, cfg.mapping);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::FinalizeFailed) throw;
    }
    if (!cur.finalized()) return;  // rasterization itself failed; drop the map
    for (int kid : cur.keyframe_ids) pg.nodes[kid] = keyframes[kid].pose;

    ++finalized_count;
    training.push_back(*cur.image_features);
    map_members[cur.id] = cur.keyframe_ids;
    map_features[cur.id] = *cur.image_features;
    map_anchor[cur.id] = cur.anchor_pose;

    // A single training image gives every word idf = ln(1) = 0 and makes
    // all queries empty, so wait for a few maps before the first build.
    constexpr int kMinVocabMaps = 4;
    db_ids.insert(cur.id);
    if ((voc.empty() && static_cast<int>(training.size()) >= kMinVocabMaps) ||
        (!voc.empty() && finalized_count % cfg.retrain_every == 0)) {
      try {
        voc = build_vocabulary(training, cfg.vocab_k, cfg.vocab_l, cfg.seed);
        // Re-quantize every live entry under the new vocabulary. This also
        // backfills the maps finalized before the first build.
        db = BowDatabase{};
        for (int id : db_ids) db_add(db, id, quantize(map_features[id], voc));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientData) throw;
      }
    } else if (!voc.empty()) {
      db_add(db, cur.id, quantize(*cur.image_features, voc));
    }

    if (pending_replace && graph.online.count(*pending_replace)) {
      const int matched = *pending_replace;
      update_on_loop(graph, *store, cur, matched, traveled);
      if (db_ids.count(matched)) {  // retire the replaced map's entry
        if (db.entries.count(matched)) db_remove(db, matched);
        db_ids.erase(matched);
      }
    } else {
      insert(graph, cur, traveled);
    }
    pending_replace.reset();
  }

  void start_next_map(const Keyframe& boundary_kf) {
    LocalMap next;
    next.id = ++next_map_id;
    // Boundary keyframe is shared so consecutive maps stay connected.
    accumulate(boundary_kf, next, cfg.mapping);
    cur = std::move(next);
  }

  // Prior-free comparison searches: geometric matching against every
  // non-recent reference, keeping the best-verified hit. These are what the
  // inverted-index query replaces, so they deliberately take no shortcut
  // from pose proximity.
  std::optional<LoopCandidate> baseline_search(bool per_keyframe,
                                               const Keyframe& kf) {
    struct Ref {
      int map_id;
      const FeatureSet* features;
      int kf_id;  // -1 for map-level references
    };
    std::vector<Ref> refs;
    if (per_keyframe) {
      for (const auto& [kid, ref] : keyframes) {
        if (std::abs(kf.id - kid) < cfg.loop.recent_kf) continue;
        refs.push_back({-1, &ref.features, kid});
      }
    } else {
      for (const auto& [mid, members] : map_members) {
        bool recent = false;
        for (int kid : members) {
          if (std::abs(kf.id - kid) < cfg.loop.recent_kf) recent = true;
        }
        if (recent) continue;
        refs.push_back({mid, &map_features.at(mid), -1});
      }
    }
    std::optional<LoopCandidate> best;
    for (const Ref& g : refs) {
      const auto hit = match_and_estimate(*g.features, kf.features, cfg.loop);
      if (!hit || (best && hit->second <= best->inliers)) continue;
      LoopCandidate cand;
      cand.query_keyframe_id = kf.id;
      cand.local_map_id = g.map_id;
      if (g.kf_id >= 0) cand.matched_keyframe_id = g.kf_id;
      cand.inliers = hit->second;
      cand.relative_pose = hit->first;
      best = cand;
    }
    return best;
  }

  int map_of_keyframe(int kf_id) const {
    for (const auto& [mid, members] : map_members) {
      if (std::find(members.begin(), members.end(), kf_id) != members.end()) {
        return mid;
      }
    }
    return -1;
  }

  void keyframe_stage(const TrackResult& tr, size_t frame_index) {
    const auto t_map = Clock::now();
    make_keyframe(tr.features, tr.world_pose, input.frames[frame_index].stamp,
                  frame_index);
    records.back().anchor_kf = last_kf_id;
    records.back().rel = Pose::identity();
    const Keyframe& kf = keyframes.at(last_kf_id);

    if (accumulate(kf, cur, cfg.mapping)) {
      finalize_current();
      start_next_map(kf);
    }
    res.mapping.total_ms += ms_since(t_map);
    ++res.mapping.count;

    if (cfg.loop_enabled && !voc.empty() && !db.entries.empty()) {
      const auto t_loop = Clock::now();
      const auto cand =
          detect_loop(kf, voc, db, graph, *store, keyframes, cfg.loop);
      res.loop_detect.total_ms += ms_since(t_loop);
      ++res.loop_detect.count;

      if (cand && cand->matched_keyframe_id) {
        try {
          for (const auto& [id, k] : keyframes) pg.nodes[id] = k.pose;
          const auto nodes_before = pg.nodes;
          const auto poses =
              close_loop(*cand, pg, cfg.loop_edge_information,
                         cfg.pose_graph_solver);
          // Consistency gate: a wrong-place match cannot be reconciled with
          // odometry, so the optimizer spreads a large residual over every
          // edge. Reject and roll back when that happens.
          const double resid = mean_edge_residual(pg);
          if (std::getenv("LMSLAM_DEBUG_LOOPS")) {
            fprintf(stderr, "loop kf=%d -> kf=%d map=%d inliers=%d resid=%.3f %s\n",
                    kf.id, *cand->matched_keyframe_id, cand->local_map_id,
                    cand->inliers, resid,
                    resid > cfg.loop_residual_gate ? "REJECT" : "accept");
          }
          if (resid > cfg.loop_residual_gate) {
            pg.edges.pop_back();
            pg.nodes = nodes_before;
          } else {
            res.declared_loops.emplace_back(kf.id, *cand->matched_keyframe_id);
            for (const auto& [id, pose] : poses) keyframes[id].pose = pose;
            prev_pose = keyframes[kf.id].pose;
            pending_replace = cand->local_map_id;
            ++res.loop_closures;
          }
        } catch (const Error&) {
          // keep running on solver failure; the edge was rolled back
        }
      }
    }

    if (opts.bench_baselines && !voc.empty() && !db.entries.empty() &&
        kf.id % cfg.bench_every == 0) {
      auto t0 = Clock::now();
      const BowVector q = quantize(kf.features, voc);
      const auto ranked = db_query(db, q, cfg.loop.max_results);
      res.bow_search.total_ms += ms_since(t0);
      ++res.bow_search.count;

      t0 = Clock::now();
      const auto by_map = baseline_search(false, kf);
      res.localmap_search.total_ms += ms_since(t0);
      ++res.localmap_search.count;

      t0 = Clock::now();
      const auto by_kf = baseline_search(true, kf);
      res.keyframe_search.total_ms += ms_since(t0);
      ++res.keyframe_search.count;

      if (by_map && by_kf && !ranked.empty() &&
          ranked.front().first == by_map->local_map_id &&
          map_of_keyframe(*by_kf->matched_keyframe_id) == by_map->local_map_id) {
        ++res.baseline_agreements;
      }
    }

    cull(graph, *store, traveled, cfg.mapping);  // entries stay in the database
    res.online_series.push_back(static_cast<int>(graph.online.size()));
    res.archived_series.push_back(static_cast<int>(store->size()));
    res.finalized_series.push_back(finalized_count);
    if (resource_log.is_open()) {
      resource_log << json{{"stamp", input.frames[frame_index].stamp},
                           {"traveled_m", traveled},
                           {"online_maps", graph.online.size()},
                           {"archived_maps", store->size()},
                           {"db_entries", db.entries.size()},
                           {"keyframes", keyframes.size()},
                           {"vmhwm_kb", read_vmhwm_kb()}}
                       .dump()
                   << "\n";
    }
  }

  void process_frame(size_t i) {
    const auto& frame = input.frames[i];
    FrameRecord rec;
    rec.frame_id = frame.cloud.frame_id;
    rec.stamp = frame.stamp;

    if (i == 0) {
      const auto t0 = Clock::now();
      const auto ground = remove_ground_plane(sanitize(frame.cloud),
                                              cfg.tracker.ground);
      const auto img = rasterize(ground.cloud, cfg.tracker.extrinsics,
                                 cfg.tracker.camera, cfg.tracker.encoding);
      prev_features = detect(img, cfg.tracker.detector);
      prev_pose = Pose::identity();
      odom_pose = Pose::identity();
      odom_traj.entries.push_back({rec.frame_id, rec.stamp, odom_pose});
      res.tracking.total_ms += ms_since(t0);
      ++res.tracking.count;
      records.push_back(rec);

      TrackResult boot;
      boot.features = prev_features;
      boot.world_pose = prev_pose;
      keyframe_stage(boot, i);
      return;
    }

    std::optional<OdomPrior> prior;
    const auto pit = priors.find(frame.cloud.frame_id);
    if (pit != priors.end()) prior = pit->second;

    const auto t0 = Clock::now();
    TrackResult tr;
    bool tracked = true;
    try {
      tr = track_frame(prev_features, prev_pose, frame.cloud, prior, cfg.tracker);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TrackingLost) throw;
      tracked = false;
    }

    if (!tracked) {
      // Lost: coast on the last relative motion, then re-detect and try a
      // global relocalization query. Even when that fails the fresh
      // detection replaces the stale reference so the next frame can
      // re-establish frame-to-frame tracking.
      prev_pose = compose(prev_pose, last_relative);
      traveled += last_relative.translation.norm();
      odom_pose = compose(odom_pose, last_relative);
      odom_traj.entries.push_back({rec.frame_id, rec.stamp, odom_pose});
      try {
        const auto ground =
            remove_ground_plane(sanitize(frame.cloud), cfg.tracker.ground);
        const auto img = rasterize(ground.cloud, cfg.tracker.extrinsics,
                                   cfg.tracker.camera, cfg.tracker.encoding);
        const FeatureSet features = detect(img, cfg.tracker.detector);
        prev_features = features;
        prev_pose = relocalize(features, voc, db, graph, *store, keyframes,
                               cfg.loop);
      } catch (const Error&) {
        // still lost: hold the last pose and keep trying on later frames
      }
      res.tracking.total_ms += ms_since(t0);
      ++res.tracking.count;
      rec.anchor_kf = last_kf_id;
      rec.rel = compose(keyframes.at(last_kf_id).pose.inverse(), prev_pose);
      records.push_back(rec);
      ++frames_since_kf;
      return;
    }

    traveled += tr.relative.translation.norm();
    prev_features = tr.features;
    prev_pose = tr.world_pose;
    last_relative = tr.relative;
    odom_pose = compose(odom_pose, tr.relative);
    odom_traj.entries.push_back({rec.frame_id, rec.stamp, odom_pose});
    ++frames_since_kf;
    const int shared =
        count_shared(tr.features, keyframes.at(last_kf_id).features, cfg.tracker);
    res.tracking.total_ms += ms_since(t0);
    ++res.tracking.count;

    rec.anchor_kf = last_kf_id;
    rec.rel = compose(keyframes.at(last_kf_id).pose.inverse(), tr.world_pose);
    records.push_back(rec);

    TrackState state;
    state.frames_since_kf = frames_since_kf;
    // The shared-points rule plus a maximum interval so the reference is
    // renewed before feature overlap decays too far.
    if (select_keyframe(state, shared) ||
        (cfg.max_kf_interval > 0 && frames_since_kf >= cfg.max_kf_interval)) {
      keyframe_stage(tr, i);
    }
  }

  void write_artifacts() {
    if (opts.output_dir.empty()) return;
    const fs::path out(opts.output_dir);
    std::ofstream(out / "trajectory.txt") << tum_format(res.trajectory);
    std::ofstream(out / "odometry.txt") << tum_format(odom_traj);
    std::ofstream(out / "plot.svg") << trajectory_svg(res.trajectory);
    std::ofstream(out / "metrics.json") << res.metrics_json << "\n";
    std::ofstream(out / "pose_graph.txt") << serialize_pose_graph(pg);
    if (!voc.empty()) {
      std::ofstream(out / "vocabulary.bin", std::ios::binary)
          << serialize_vocabulary(voc);
    }
    std::ofstream(out / "database.jsonl") << serialize_database(db);
    if (input.has_gt) {
      Trajectory gt;
      for (size_t i = 0; i < input.frames.size(); ++i) {
        gt.entries.push_back({static_cast<int64_t>(i), input.frames[i].stamp,
                              input.frames[i].pose});
      }
      std::ofstream(out / "ground_truth.txt") << tum_format(gt);
    }
  }

  PipelineResult run() {
    cfg = opts.config_json.empty() ? default_config()
                                   : config_from_json(opts.config_json);
    cfg.seed = opts.seed;
    cfg.loop_enabled = opts.loop_enabled;
    cfg.tracker.ground.seed = opts.seed * 0x9e3779b97f4a7c15ULL + 1;
    cfg.tracker.ransac.seed = opts.seed * 0x9e3779b97f4a7c15ULL + 2;
    cfg.loop.ransac.seed = opts.seed * 0x9e3779b97f4a7c15ULL + 3;

    try {
      input = ingest(opts, cfg);
    } catch (const Error& e) {
      throw Error(e.code(), std::string("ingest: ") + e.what());
    }
    if (!opts.odom_prior_path.empty()) {
      priors = load_odom_priors(opts.odom_prior_path);
    }

    fs::path root;
    if (opts.output_dir.empty()) {
      root = fs::temp_directory_path() /
             ("lmslam_" + std::to_string(
                              std::chrono::duration_cast<std::chrono::nanoseconds>(
                                  Clock::now().time_since_epoch())
                                  .count()));
    } else {
      root = opts.output_dir;
    }
    fs::create_directories(root);
    store = std::make_unique<OfflineStore>(root);
    if (!opts.output_dir.empty()) {
      resource_log.open(root / "resources.jsonl");
    }

    cur.id = next_map_id;
    for (size_t i = 0; i < input.frames.size(); ++i) process_frame(i);

    // Trailing partial map (holds more than just the shared boundary kf).
    if (!cur.finalized() && cur.keyframe_ids.size() >= 2) {
      try {
        finalize_current();
      } catch (const Error&) {
      }
    }

    res.frames = static_cast<int>(input.frames.size());
    res.keyframes = static_cast<int>(keyframes.size());
    res.local_maps_total = finalized_count;
    res.online_final = static_cast<int>(graph.online.size());
    res.archived_final = static_cast<int>(store->size());
    res.traveled_m = traveled;

    for (const auto& rec : records) {
      TrajectoryEntry e;
      e.frame_id = rec.frame_id;
      e.stamp = rec.stamp;
      e.pose = rec.anchor_kf >= 0
                   ? compose(keyframes.at(rec.anchor_kf).pose, rec.rel)
                   : rec.rel;
      res.trajectory.entries.push_back(e);
    }
    if (input.has_gt) {
      for (size_t i = 0; i < input.frames.size(); ++i) {
        res.ground_truth.entries.push_back(
            {static_cast<int64_t>(i), input.frames[i].stamp,
             input.frames[i].pose});
      }
    }

    build_metrics();
    write_artifacts();

    // Everything still online is archived at shutdown so the map outlives
    // the session.
    for (const auto& [id, lm] : graph.online) {
      if (!store->contains(id) && lm.finalized()) store->archive(lm);
    }
    return std::move(res);
  }

  void build_metrics() {
    json m;
    m["frames"] = res.frames;
    m["keyframes"] = res.keyframes;
    m["local_maps"] = {{"total", res.local_maps_total},
                       {"online", res.online_final},
                       {"archived", res.archived_final}};
    m["traveled_m"] = res.traveled_m;
    m["timing_ms"] = {{"tracking_mean", res.tracking.mean_ms()},
                      {"mapping_mean", res.mapping.mean_ms()},
                      {"loop_detect_mean", res.loop_detect.mean_ms()}};
    m["peak_rss_kb"] = read_vmhwm_kb();

    if (input.has_gt && res.trajectory.entries.size() > 2) {
      json rel = json::array();
      for (double len : cfg.eval_lengths) {
        try {
          for (const auto& re :
               relative_errors(res.ground_truth, res.trajectory, {len})) {
            rel.push_back({{"length_m", re.length},
                           {"e_trans", re.e_trans},
                           {"e_rot_rad_per_m", re.e_rot},
                           {"pairs", re.pairs}});
          }
        } catch (const Error&) {
          // path shorter than this evaluation window
        }
      }
      m["relative_errors"] = rel;
      // Endpoint displacement error in the start frame, which is insensitive
      // to the arbitrary global placement of the estimate.
      const auto endpoint = [&](const Trajectory& est) {
        const Pose g = compose(res.ground_truth.entries.front().pose.inverse(),
                               res.ground_truth.entries.back().pose);
        const Pose e = compose(est.entries.front().pose.inverse(),
                               est.entries.back().pose);
        return (g.translation - e.translation).norm();
      };
      m["endpoint_error_m"] = {{"corrected", endpoint(res.trajectory)},
                               {"odometry", endpoint(odom_traj)}};
    }

    if (cfg.loop_enabled) {
      json loop;
      loop["declared"] = res.declared_loops.size();
      json pairs = json::array();
      for (const auto& [q, m2] : res.declared_loops) pairs.push_back({q, m2});
      loop["declared_pairs"] = pairs;
      loop["closures"] = res.loop_closures;
      loop["r_pos_m"] = cfg.loop_truth.r_pos;
      loop["gap_keyframes"] = cfg.loop_truth.gap;
      if (input.has_gt) {
        const auto truth = loop_truth(kf_gt_positions, cfg.loop_truth);
        const auto pr = loop_pr(res.declared_loops, truth, kf_gt_positions,
                                cfg.loop_truth.r_pos);
        loop["recall"] = pr.recall;
        loop["precision"] = pr.precision;
        loop["precision_defined"] = pr.precision_defined;
        loop["true_positives"] = pr.tp;
        loop["false_positives"] = pr.fp;
      }
      m["loop"] = loop;
    }

    if (opts.bench_baselines) {
      m["candidate_search_ms"] = {
          {"bow", res.bow_search.mean_ms()},
          {"localmaps", res.localmap_search.mean_ms()},
          {"keyframes", res.keyframe_search.mean_ms()},
          {"queries", res.bow_search.count},
          {"agreements", res.baseline_agreements}};
    }
    res.metrics_json = m.dump(2);
  }
};

}  // namespace

PipelineConfig default_config() {
  PipelineConfig cfg;
  Intrinsics camera;
  camera.fx = camera.fy = 130.0;
  camera.cx = 160.0;
  camera.cy = 90.0;
  camera.width = 320;
  camera.height = 180;
  cfg.tracker.camera = camera;
  cfg.mapping.camera = camera;
  cfg.mapping.detector = cfg.tracker.detector;
  cfg.mapping.encoding = cfg.tracker.encoding;
  cfg.odom_edge_information = pose_edge_information();
  cfg.loop_edge_information = pose_edge_information();
  // Revisit keyframes land up to half a keyframe interval away from the
  // mapped ones, which costs inlier matches; the residual gate catches the
  // occasional wrong-place candidate this looser verification lets through.
  cfg.loop.min_inliers = 20;
  cfg.loop.max_results = 25;
  cfg.loop.score_min = 0.1;
  return cfg;
}

PipelineConfig config_from_json(const std::string& json_text) {
  PipelineConfig cfg = default_config();
  const json j = json::parse(json_text);

  if (j.contains("camera")) {
    const auto& c = j.at("camera");
    Intrinsics k = cfg.tracker.camera;
    override_double(c, "fx", k.fx);
    override_double(c, "fy", k.fy);
    override_double(c, "cx", k.cx);
    override_double(c, "cy", k.cy);
    override_int(c, "width", k.width);
    override_int(c, "height", k.height);
    cfg.tracker.camera = k;
    cfg.mapping.camera = k;
  }
  if (j.contains("tracker")) {
    const auto& t = j.at("tracker");
    override_int(t, "min_track", cfg.tracker.min_track);
    if (t.contains("detector")) {
      const auto& d = t.at("detector");
      override_int(d, "n_levels", cfg.tracker.detector.n_levels);
      override_double(d, "scale_factor", cfg.tracker.detector.scale_factor);
      override_int(d, "grid", cfg.tracker.detector.grid);
      override_int(d, "target", cfg.tracker.detector.target);
      override_int(d, "threshold", cfg.tracker.detector.threshold);
      override_int(d, "arc_len", cfg.tracker.detector.arc_len);
      override_int(d, "min_accept", cfg.tracker.detector.min_accept);
      cfg.mapping.detector = cfg.tracker.detector;
    }
    if (t.contains("matching")) {
      override_int(t.at("matching"), "max_dist", cfg.tracker.matching.max_dist);
      override_double(t.at("matching"), "ratio", cfg.tracker.matching.ratio);
    }
    if (t.contains("ransac")) {
      override_int(t.at("ransac"), "iterations", cfg.tracker.ransac.iterations);
      override_double(t.at("ransac"), "inlier_3d", cfg.tracker.ransac.inlier_3d);
      override_int(t.at("ransac"), "min_inliers", cfg.tracker.ransac.min_inliers);
    }
    if (t.contains("ground")) {
      override_int(t.at("ground"), "iterations", cfg.tracker.ground.iterations);
      override_double(t.at("ground"), "inlier_dist", cfg.tracker.ground.inlier_dist);
      override_double(t.at("ground"), "min_inlier_frac",
                      cfg.tracker.ground.min_inlier_frac);
    }
    if (t.contains("encoding")) {
      override_double(t.at("encoding"), "min_elev", cfg.tracker.encoding.min_elev);
      override_double(t.at("encoding"), "max_elev", cfg.tracker.encoding.max_elev);
      override_double(t.at("encoding"), "near", cfg.tracker.encoding.near);
      cfg.mapping.encoding = cfg.tracker.encoding;
    }
  }
  if (j.contains("mapping")) {
    const auto& mp = j.at("mapping");
    override_int(mp, "kfs_per_map", cfg.mapping.kfs_per_map);
    override_double(mp, "fuse_radius", cfg.mapping.fuse_radius);
    override_int(mp, "fuse_desc_max", cfg.mapping.fuse_desc_max);
    override_double(mp, "distance_threshold", cfg.mapping.distance_threshold);
  }
  if (j.contains("loop")) {
    const auto& lp = j.at("loop");
    override_double(lp, "score_min", cfg.loop.score_min);
    override_int(lp, "recent_kf", cfg.loop.recent_kf);
    override_int(lp, "min_inliers", cfg.loop.min_inliers);
    override_int(lp, "max_results", cfg.loop.max_results);
  }
  if (j.contains("vocabulary")) {
    override_int(j.at("vocabulary"), "k", cfg.vocab_k);
    override_int(j.at("vocabulary"), "depth", cfg.vocab_l);
    override_int(j.at("vocabulary"), "retrain_every", cfg.retrain_every);
  }
  if (j.contains("loop_truth")) {
    override_double(j.at("loop_truth"), "r_pos", cfg.loop_truth.r_pos);
    override_int(j.at("loop_truth"), "gap", cfg.loop_truth.gap);
  }
  if (j.contains("eval_lengths")) {
    cfg.eval_lengths = j.at("eval_lengths").get<std::vector<double>>();
  }
  override_int(j, "max_kf_interval", cfg.max_kf_interval);
  override_int(j, "bench_every", cfg.bench_every);
  override_double(j, "loop_residual_gate", cfg.loop_residual_gate);
  if (j.contains("edge_rot_weight")) {
    const double w = j.at("edge_rot_weight").get<double>();
    cfg.odom_edge_information.bottomRightCorner<3, 3>() =
        w * Eigen::Matrix3d::Identity();
    cfg.loop_edge_information.bottomRightCorner<3, 3>() =
        w * Eigen::Matrix3d::Identity();
  }
  if (j.contains("odom_edge_weight")) {
    cfg.odom_edge_information *= j.at("odom_edge_weight").get<double>();
  }
  if (j.contains("loop_edge_weight")) {
    cfg.loop_edge_information *= j.at("loop_edge_weight").get<double>();
  }
  return cfg;
}

PipelineResult run_pipeline(const PipelineOptions& opts) {
  Run run(opts);
  return run.run();
}

std::string evaluate_trajectories(const std::string& gt_path,
                                  const std::string& est_path,
                                  const std::vector<double>& lengths) {
  const Trajectory gt = load_kitti_poses(gt_path);
  std::ifstream f(est_path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + est_path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const Trajectory est = parse_tum(buf.str());

  json out;
  out["gt_frames"] = gt.entries.size();
  out["est_frames"] = est.entries.size();
  json rel = json::array();
  for (const auto& re : relative_errors(gt, est, lengths)) {
    rel.push_back({{"length_m", re.length},
                   {"e_trans", re.e_trans},
                   {"e_rot_rad_per_m", re.e_rot},
                   {"pairs", re.pairs}});
  }
  out["relative_errors"] = rel;
  return out.dump(2);
}

}  // namespace lmslam

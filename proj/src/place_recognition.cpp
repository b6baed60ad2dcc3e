#include "lmslam/place_recognition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lmslam/registration.hpp"

namespace lmslam {

namespace {

// Bitwise 1-median: majority vote per bit, ties keep the current center bit.
BinaryDescriptor hamming_median(const std::vector<BinaryDescriptor>& all,
                                const std::vector<int>& members,
                                const BinaryDescriptor& current) {
  BinaryDescriptor out;
  const int n = static_cast<int>(members.size());
  for (int b = 0; b < 256; ++b) {
    int ones = 0;
    for (int m : members) ones += all[m].bit(b);
    const bool bit = 2 * ones > n ? true : 2 * ones < n ? false : current.bit(b);
    if (bit) out.set_bit(b);
  }
  return out;
}

// k-median under Hamming distance: farthest-point seeding then Lloyd rounds.
// Returns the surviving (non-empty) clusters and their centers.
void k_median(const std::vector<BinaryDescriptor>& all,
              const std::vector<int>& members, int k, std::mt19937_64& rng,
              std::vector<BinaryDescriptor>& centers,
              std::vector<std::vector<int>>& clusters) {
  centers.clear();
  clusters.clear();

  std::vector<int> uniq;
  for (int m : members) {
    bool seen = false;
    for (int u : uniq) {
      if (all[u] == all[m]) {
        seen = true;
        break;
      }
    }
    if (!seen) uniq.push_back(m);
    if (static_cast<int>(uniq.size()) > k) break;
  }

  if (static_cast<int>(uniq.size()) <= k) {
    for (int u : uniq) centers.push_back(all[u]);
  } else {
    std::vector<int> seeds{
        members[std::uniform_int_distribution<size_t>(0, members.size() - 1)(rng)]};
    while (static_cast<int>(seeds.size()) < k) {
      int best = -1, best_d = -1;
      for (int m : members) {
        int nearest = 1 << 30;
        for (int s : seeds) nearest = std::min(nearest, hamming(all[m], all[s]));
        if (nearest > best_d) {
          best_d = nearest;
          best = m;
        }
      }
      seeds.push_back(best);
    }
    for (int s : seeds) centers.push_back(all[s]);
  }

  std::vector<int> assign(members.size(), -1);
  for (int round = 0; round < 20; ++round) {
    bool changed = false;
    for (size_t i = 0; i < members.size(); ++i) {
      int best = 0, best_d = hamming(all[members[i]], centers[0]);
      for (size_t c = 1; c < centers.size(); ++c) {
        const int d = hamming(all[members[i]], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    for (size_t c = 0; c < centers.size(); ++c) {
      std::vector<int> cluster;
      for (size_t i = 0; i < members.size(); ++i) {
        if (assign[i] == static_cast<int>(c)) cluster.push_back(members[i]);
      }
      if (!cluster.empty()) {
        centers[c] = hamming_median(all, cluster, centers[c]);
      }
    }
  }

  clusters.assign(centers.size(), {});
  for (size_t i = 0; i < members.size(); ++i) {
    clusters[assign[i]].push_back(members[i]);
  }
  // Drop degenerate (empty) clusters.
  for (size_t c = clusters.size(); c-- > 0;) {
    if (clusters[c].empty()) {
      clusters.erase(clusters.begin() + c);
      centers.erase(centers.begin() + c);
    }
  }
}

void split_node(VocabularyTree& voc, int node_idx,
                const std::vector<BinaryDescriptor>& all,
                const std::vector<int>& members, int level,
                std::mt19937_64& rng) {
  if (level >= voc.depth || members.size() <= 1) return;  // leaf

  std::vector<BinaryDescriptor> centers;
  std::vector<std::vector<int>> clusters;
  k_median(all, members, voc.k, rng, centers, clusters);
  if (clusters.size() <= 1) return;  // no effective split; stay a leaf

  const int first = static_cast<int>(voc.nodes.size());
  voc.nodes[node_idx].first_child = first;
  voc.nodes[node_idx].num_children = static_cast<int>(clusters.size());
  for (const auto& c : centers) {
    VocabularyTree::Node child;
    child.center = c;
    voc.nodes.push_back(child);
  }
  for (size_t c = 0; c < clusters.size(); ++c) {
    split_node(voc, first + static_cast<int>(c), all, clusters[c], level + 1,
               rng);
  }
}

std::vector<int> member_keyframes(int local_map_id, const LocalMapGraph& graph,
                                  const OfflineStore& store) {
  const auto it = graph.online.find(local_map_id);
  if (it != graph.online.end()) return it->second.keyframe_ids;
  if (store.contains(local_map_id)) return store.fetch(local_map_id).keyframe_ids;
  return {};
}

}  // namespace

std::optional<std::pair<Pose, int>> match_and_estimate(const FeatureSet& ref,
                                                       const FeatureSet& query,
                                                       const LoopConfig& cfg) {
  const MatchSet raw = match(ref, query, cfg.matching);
  MatchSet inliers;
  try {
    inliers = ransac_filter(raw, ref, query, cfg.ransac);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoConsensus) return std::nullopt;
    throw;
  }
  if (static_cast<int>(inliers.pairs.size()) < cfg.min_inliers) {
    return std::nullopt;
  }
  std::vector<Point3> p, q;
  for (const auto& m : inliers.pairs) {
    p.push_back(*query.points3d[m.index_b]);
    q.push_back(*ref.points3d[m.index_a]);
  }
  Pose t_cam;
  try {
    t_cam = estimate_rigid_transform(p, q);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateConfiguration) return std::nullopt;
    throw;
  }
  const Pose t_sensor =
      compose(cfg.extrinsics.inverse(), compose(t_cam, cfg.extrinsics));
  return std::make_pair(t_sensor, static_cast<int>(inliers.pairs.size()));
}

VocabularyTree build_vocabulary(const std::vector<FeatureSet>& descriptor_sets,
                                int k, int L, uint64_t seed) {
  std::vector<BinaryDescriptor> all;
  for (const auto& fs : descriptor_sets) {
    all.insert(all.end(), fs.descriptors.begin(), fs.descriptors.end());
  }
  if (static_cast<int>(all.size()) < k) {
    throw Error(ErrorCode::InsufficientData,
                "build_vocabulary: " + std::to_string(all.size()) +
                    " descriptors for k=" + std::to_string(k));
  }

  VocabularyTree voc;
  voc.k = k;
  voc.depth = L;
  voc.nodes.emplace_back();  // root
  std::vector<int> members(all.size());
  for (size_t i = 0; i < all.size(); ++i) members[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  split_node(voc, 0, all, members, 0, rng);

  for (auto& node : voc.nodes) {
    if (node.num_children == 0) node.word_id = voc.num_words++;
  }

  // idf over the training sets that contributed descriptors.
  int n_sets = 0;
  std::map<int, int> sets_with_word;
  for (const auto& fs : descriptor_sets) {
    if (fs.descriptors.empty()) continue;
    ++n_sets;
    std::set<int> words;
    for (const auto& d : fs.descriptors) {
      words.insert(quantize_descriptor(d, voc));
    }
    for (int w : words) ++sets_with_word[w];
  }
  for (auto& node : voc.nodes) {
    if (node.word_id < 0) continue;
    const auto it = sets_with_word.find(node.word_id);
    node.idf = it == sets_with_word.end()
                   ? 0.0
                   : std::log(static_cast<double>(n_sets) / it->second);
  }
  return voc;
}

int quantize_descriptor(const BinaryDescriptor& desc,
                        const VocabularyTree& voc) {
  if (voc.empty()) return -1;
  int cur = 0;
  while (voc.nodes[cur].num_children > 0) {
    const int first = voc.nodes[cur].first_child;
    int best = first, best_d = hamming(desc, voc.nodes[first].center);
    for (int c = 1; c < voc.nodes[cur].num_children; ++c) {
      const int d = hamming(desc, voc.nodes[first + c].center);
      if (d < best_d) {
        best_d = d;
        best = first + c;
      }
    }
    cur = best;
  }
  return voc.nodes[cur].word_id;
}

BowVector quantize(const FeatureSet& features, const VocabularyTree& voc) {
  BowVector out;
  if (features.descriptors.empty() || voc.empty()) return out;

  std::map<int, int> counts;
  for (const auto& d : features.descriptors) {
    ++counts[quantize_descriptor(d, voc)];
  }
  std::map<int, double> idf_of_word;
  for (const auto& node : voc.nodes) {
    if (node.word_id >= 0) idf_of_word[node.word_id] = node.idf;
  }
  double sum = 0;
  for (const auto& [w, c] : counts) {
    const double weight =
        (static_cast<double>(c) / features.descriptors.size()) * idf_of_word[w];
    if (weight > 0) {
      out[w] = weight;
      sum += weight;
    }
  }
  if (sum <= 0) {
    out.clear();
    return out;
  }
  for (auto& [w, v] : out) v /= sum;
  return out;
}

void db_add(BowDatabase& db, int local_map_id, const BowVector& bow) {
  if (db.entries.count(local_map_id)) {
    throw Error(ErrorCode::DuplicateId,
                "db_add: id " + std::to_string(local_map_id) + " present");
  }
  db.entries[local_map_id] = bow;
  for (const auto& [w, v] : bow) {
    db.inverted[w].emplace_back(local_map_id, v);
  }
}

void db_remove(BowDatabase& db, int local_map_id) {
  const auto it = db.entries.find(local_map_id);
  if (it == db.entries.end()) {
    throw Error(ErrorCode::UnknownId,
                "db_remove: id " + std::to_string(local_map_id) + " unknown");
  }
  for (const auto& [w, v] : it->second) {
    auto& list = db.inverted.at(w);
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&](const auto& p) { return p.first == local_map_id; }),
               list.end());
    if (list.empty()) db.inverted.erase(w);
  }
  db.entries.erase(it);
}

std::vector<std::pair<int, double>> db_query(const BowDatabase& db,
                                             const BowVector& bow,
                                             int max_results) {
  std::map<int, double> acc;
  for (const auto& [w, qw] : bow) {
    const auto it = db.inverted.find(w);
    if (it == db.inverted.end()) continue;
    for (const auto& [id, dw] : it->second) {
      acc[id] += std::min(qw, dw);  // 1 - L1/2 accumulated over shared words
    }
  }
  std::vector<std::pair<int, double>> out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (static_cast<int>(out.size()) > max_results) out.resize(max_results);
  return out;
}

std::optional<LoopCandidate> detect_loop(
    const Keyframe& kf, const VocabularyTree& voc, const BowDatabase& db,
    const LocalMapGraph& graph, const OfflineStore& store,
    const std::map<int, Keyframe>& keyframes, const LoopConfig& cfg) {
  const BowVector q = quantize(kf.features, voc);
  if (q.empty() || db.entries.empty()) return std::nullopt;

  const bool dbg = std::getenv("LMSLAM_DEBUG_LOOPS") != nullptr;
  for (const auto& [map_id, score] : db_query(db, q, cfg.max_results)) {
    if (score < cfg.score_min) {
      if (dbg)
        fprintf(stderr, "  query kf=%d map=%d score=%.3f below min\n", kf.id,
                map_id, score);
      break;  // descending scores
    }
    const std::vector<int> members = member_keyframes(map_id, graph, store);
    bool recent = false;
    for (int kid : members) {
      if (std::abs(kf.id - kid) < cfg.recent_kf) {
        recent = true;
        break;
      }
    }
    if (recent || members.empty()) continue;

    for (int kid : members) {
      const auto it = keyframes.find(kid);
      if (it == keyframes.end()) continue;
      const auto hit = match_and_estimate(it->second.features, kf.features, cfg);
      if (dbg)
        fprintf(stderr, "  query kf=%d map=%d score=%.3f member=%d inl=%d\n",
                kf.id, map_id, score, kid, hit ? hit->second : -1);
      if (!hit) continue;
      LoopCandidate cand;
      cand.query_keyframe_id = kf.id;
      cand.local_map_id = map_id;
      cand.score = score;
      cand.matched_keyframe_id = kid;
      cand.inliers = hit->second;
      cand.relative_pose = hit->first;
      return cand;
    }
  }
  return std::nullopt;
}

std::map<int, Pose> close_loop(const LoopCandidate& candidate, PoseGraph& pg,
                               const Matrix6& loop_information,
                               const SolverConfig& cfg) {
  if (!candidate.relative_pose || !candidate.matched_keyframe_id) {
    throw Error(ErrorCode::InvalidConfig,
                "close_loop: candidate lacks a verified relative pose");
  }
  PoseGraphEdge edge;
  edge.i = *candidate.matched_keyframe_id;
  edge.j = candidate.query_keyframe_id;
  edge.measured_relative = *candidate.relative_pose;
  edge.information = loop_information;
  pg.edges.push_back(edge);
  try {
    auto poses = optimize_pose_graph(pg, cfg);
    for (const auto& [id, pose] : poses) pg.nodes[id] = pose;
    return poses;
  } catch (...) {
    pg.edges.pop_back();
    throw;
  }
}

Pose relocalize(const FeatureSet& cur, const VocabularyTree& voc,
                const BowDatabase& db, const LocalMapGraph& graph,
                const OfflineStore& store,
                const std::map<int, Keyframe>& keyframes,
                const LoopConfig& cfg) {
  const BowVector q = quantize(cur, voc);
  if (!q.empty()) {
    for (const auto& [map_id, score] : db_query(db, q, cfg.max_results)) {
      if (score < cfg.score_min) break;
      for (int kid : member_keyframes(map_id, graph, store)) {
        const auto it = keyframes.find(kid);
        if (it == keyframes.end()) continue;
        const auto hit = match_and_estimate(it->second.features, cur, cfg);
        if (hit) return compose(it->second.pose, hit->first);
      }
    }
  }
  throw Error(ErrorCode::RelocalizationFailed,
              "relocalize: no candidate passed the geometric check");
}

std::string serialize_vocabulary(const VocabularyTree& voc) {
  std::string out;
  auto put_u32 = [&](uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
  };
  put_u32(static_cast<uint32_t>(voc.k));
  put_u32(static_cast<uint32_t>(voc.depth));
  put_u32(static_cast<uint32_t>(voc.nodes.size()));
  put_u32(static_cast<uint32_t>(voc.num_words));
  for (const auto& node : voc.nodes) {
    out.append(reinterpret_cast<const char*>(node.center.words.data()), 32);
    put_u32(static_cast<uint32_t>(node.first_child));
    put_u32(static_cast<uint32_t>(node.num_children));
    put_u32(static_cast<uint32_t>(node.word_id));
    out.append(reinterpret_cast<const char*>(&node.idf), 8);
  }
  return out;
}

VocabularyTree deserialize_vocabulary(const std::string& bytes) {
  size_t off = 0;
  auto get_u32 = [&]() {
    if (off + 4 > bytes.size()) {
      throw Error(ErrorCode::MalformedFile, "vocabulary: truncated");
    }
    uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    off += 4;
    return v;
  };
  VocabularyTree voc;
  voc.k = static_cast<int>(get_u32());
  voc.depth = static_cast<int>(get_u32());
  const uint32_t n = get_u32();
  voc.num_words = static_cast<int>(get_u32());
  const size_t rec = 32 + 4 + 4 + 4 + 8;
  if (off + n * rec != bytes.size()) {
    throw Error(ErrorCode::MalformedFile, "vocabulary: bad node section size");
  }
  voc.nodes.resize(n);
  for (auto& node : voc.nodes) {
    std::memcpy(node.center.words.data(), bytes.data() + off, 32);
    off += 32;
    node.first_child = static_cast<int32_t>(get_u32());
    node.num_children = static_cast<int32_t>(get_u32());
    node.word_id = static_cast<int32_t>(get_u32());
    std::memcpy(&node.idf, bytes.data() + off, 8);
    off += 8;
  }
  return voc;
}

std::string serialize_database(const BowDatabase& db) {
  std::ostringstream os;
  for (const auto& [id, bow] : db.entries) {
    nlohmann::json words = nlohmann::json::object();
    for (const auto& [w, v] : bow) words[std::to_string(w)] = v;
    os << nlohmann::json{{"id", id}, {"words", words}}.dump() << "\n";
  }
  return os.str();
}

BowDatabase deserialize_database(const std::string& text) {
  BowDatabase db;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    BowVector bow;
    for (const auto& [w, v] : j.at("words").items()) {
      bow[std::stoi(w)] = v.get<double>();
    }
    db_add(db, j.at("id").get<int>(), bow);
  }
  return db;
}

}  // namespace lmslam

#pragma once

#include <map>
#include <optional>
#include <unordered_map>

#include "lmslam/mapping.hpp"

namespace lmslam {

/// Hierarchical k-median clustering of binary descriptors under Hamming
/// distance; leaves are visual words with tf-idf weights.
struct VocabularyTree {
  struct Node {
    BinaryDescriptor center;
    int32_t first_child = -1;  // children stored contiguously
    int32_t num_children = 0;
    int32_t word_id = -1;  // >= 0 iff leaf
    double idf = 0;
  };

  int k = 10;
  int depth = 3;
  std::vector<Node> nodes;  // nodes[0] is the root; its center is unused
  int num_words = 0;

  bool empty() const { return nodes.empty(); }
};

/// Sparse word_id -> tf-idf weight, L1-normalized when nonempty.
using BowVector = std::map<int, double>;

struct BowDatabase {
  std::map<int, BowVector> entries;  // local_map_id -> vector
  std::unordered_map<int, std::vector<std::pair<int, double>>> inverted;
};

struct LoopCandidate {
  int query_keyframe_id = -1;
  int local_map_id = -1;
  double score = 0;
  std::optional<int> matched_keyframe_id;
  int inliers = 0;
  std::optional<Pose> relative_pose;  // matched keyframe sensor <- query sensor
};

struct LoopConfig {
  double score_min = 0.15;
  int recent_kf = 30;   // temporal guard, in keyframe ids
  int min_inliers = 30;
  int max_results = 10;
  MatchConfig matching;
  MatchRansacConfig ransac;
  Pose extrinsics = default_lidar_to_camera();
};

VocabularyTree build_vocabulary(const std::vector<FeatureSet>& descriptor_sets,
                                int k, int L, uint64_t seed);

BowVector quantize(const FeatureSet& features, const VocabularyTree& voc);

/// Leaf word for a single descriptor (greedy descent); -1 on empty tree.
int quantize_descriptor(const BinaryDescriptor& desc,
                        const VocabularyTree& voc);

void db_add(BowDatabase& db, int local_map_id, const BowVector& bow);
void db_remove(BowDatabase& db, int local_map_id);

/// Similarity 1 - L1/2 on normalized vectors, accumulated over shared words
/// through the inverted index. Descending score, ties to the lower id.
std::vector<std::pair<int, double>> db_query(const BowDatabase& db,
                                             const BowVector& bow,
                                             int max_results);

/// Matches query features against a reference set and, on enough RANSAC
/// inliers, returns the query's pose in the reference sensor frame plus the
/// inlier count. nullopt when matching or consensus fails.
std::optional<std::pair<Pose, int>> match_and_estimate(const FeatureSet& ref,
                                                       const FeatureSet& query,
                                                       const LoopConfig& cfg);

/// Three steps: database query with score and temporal-guard gating, feature
/// matching against each candidate map's member keyframes, then rigid
/// transform from the RANSAC inliers. Member keyframe ids come from the
/// online graph or the archive; features come from the keyframe table.
std::optional<LoopCandidate> detect_loop(
    const Keyframe& kf, const VocabularyTree& voc, const BowDatabase& db,
    const LocalMapGraph& graph, const OfflineStore& store,
    const std::map<int, Keyframe>& keyframes, const LoopConfig& cfg);

/// Adds the loop edge to the pose graph and re-optimizes. On solver failure
/// the edge is removed again and the error rethrown, leaving the graph
/// unchanged. The caller swaps the local map and database entries.
std::map<int, Pose> close_loop(const LoopCandidate& candidate, PoseGraph& pg,
                               const Matrix6& loop_information,
                               const SolverConfig& cfg);

/// Recover a lost pose: BOW query, then matching against member keyframes of
/// every candidate map (no temporal guard). Throws RelocalizationFailed.
Pose relocalize(const FeatureSet& cur, const VocabularyTree& voc,
                const BowDatabase& db, const LocalMapGraph& graph,
                const OfflineStore& store,
                const std::map<int, Keyframe>& keyframes,
                const LoopConfig& cfg);

std::string serialize_vocabulary(const VocabularyTree& voc);
VocabularyTree deserialize_vocabulary(const std::string& bytes);

std::string serialize_database(const BowDatabase& db);  // JSON lines
BowDatabase deserialize_database(const std::string& text);

}  // namespace lmslam

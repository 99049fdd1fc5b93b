#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "slam2d/geometry.hpp"

namespace slam2d {

/// One (discretized distance, discretized bearing, partner index) tuple of a
/// corner descriptor, sorted by d_int then a_int.
struct DescriptorEntry {
  int d_int = 0;
  int a_int = 0;
  int partner = -1;
};

struct CornerDescriptor {
  int anchor_index = -1;
  std::vector<DescriptorEntry> entries;
};

struct DescriptorSet {
  int keyframe_id = -1;
  double d_res = 0.2;
  double a_res = 5.0 * M_PI / 180.0;
  int a_ring = 72;  // round(2*pi / a_res), wrap modulus for bearings
  std::vector<CornerDescriptor> descriptors;
  std::vector<Vec2> corner_positions;
};

struct LoopConstraint {
  int from_id = -1;          // older keyframe
  int to_id = -1;            // query keyframe
  Pose2 relative_pose;       // pose of `to` expressed in `from` (body frame)
  int match_count = 0;
  double post_icp_rms = 0.0;
};

struct LoopConfig {
  double d_res = 0.2;                     // m
  double a_res = 5.0 * M_PI / 180.0;      // rad
  int t_min = 6;                          // min corner pairs
  double p_success = 0.95;                // randomized matching target
  double overlap_guess = 0.5;
  int exclusion_window = 30;              // most recent keyframes skipped
  double icp_gate = 0.05;                 // m RMS
  double icp_min_inliers = 0.55;          // matched fraction of query points
  double fast_filter_min = 0.3;           // d-histogram intersection gate
  int icp_max_iters = 30;
  int icp_max_attempts = 3;               // candidates refined per query
  double icp_nn_radius = 0.5;             // m correspondence gate
  uint64_t seed = 42;
};

DescriptorSet build_descriptors(const std::vector<Vec2>& corners, double d_res,
                                double a_res, int keyframe_id = -1);

/// Merge-walk over the two d-sorted entry lists and vote over the wrapped
/// bearing differences; returns the partner-index pairs of the winning
/// consistent set when it reaches t_min.
std::optional<std::vector<std::pair<int, int>>> match_descriptors(
    const CornerDescriptor& a, const CornerDescriptor& b, int t_min,
    int a_ring);

/// Trial count for hitting an overlap anchor with probability >= p when c of
/// the m anchors overlap. Throws InvalidArgument for c = 0.
int num_trials(double p, int m, int c);

/// Randomized anchor sampling between two descriptor sets; pairs are corner
/// index pairs (idx in M, idx in N), augmented by verifying the remaining
/// corners under the implied transform.
std::optional<std::vector<std::pair<int, int>>> match_frames(
    const DescriptorSet& desM, const DescriptorSet& desN, double p, int t_min,
    double overlap_guess, std::mt19937_64& rng);

struct RelativePoseFit {
  Pose2 pose;  // maps N points into M
  double rms = 0.0;
};

/// Closed-form planar rigid fit over point pairs (P_M, P_N), LM-refined when
/// the pair count exceeds 10. Throws RankDeficient on degenerate input.
RelativePoseFit solve_relative_pose(const std::vector<Vec2>& points_m,
                                    const std::vector<Vec2>& points_n);

struct IcpResult {
  Pose2 pose;  // maps b into a
  double rms = 0.0;
  int iters = 0;
  double matched_fraction = 0.0;  // of b points, at the final pose
};

/// Point-to-point ICP with a hashed-grid nearest-neighbor lookup; RMS is
/// monotone non-increasing over iterations.
IcpResult icp_refine(const std::vector<Vec2>& points_a,
                     const std::vector<Vec2>& points_b, const Pose2& initial,
                     int max_iters, double nn_radius = 0.5);

/// Keyframe content the detector needs (all lidar-frame geometry).
struct KeyframeSignature {
  int id = -1;
  double stamp = 0.0;
  Pose2 body_pose;  // map-frame estimate at insertion
  std::vector<Vec2> corners;
  std::vector<Vec2> scan_points;
};

struct DetectStats {
  int candidates_total = 0;
  int candidates_after_filter = 0;
  double filter_ms = 0.0;
  double match_ms = 0.0;
  double icp_ms = 0.0;
};

/// Append-only loop-closure database over keyframe corner descriptors.
class LoopDetector {
 public:
  LoopDetector(const LoopConfig& cfg, const Pose2& body_from_lidar);

  void insert(const KeyframeSignature& kf);

  /// Runs the full cascade (fast filter, randomized descriptor matching,
  /// relative pose solve, ICP) for one query against the database,
  /// excluding ids within the exclusion window of the query id.
  std::optional<LoopConstraint> detect(const KeyframeSignature& query);

  const DetectStats& last_stats() const { return stats_; }
  size_t size() const { return entries_.size(); }
  const KeyframeSignature* entry(int id) const;

 private:
  struct Entry {
    KeyframeSignature kf;
    DescriptorSet set;
    std::unordered_map<int, double> d_hist;  // normalized d_int histogram
  };

  LoopConfig cfg_;
  Pose2 body_from_lidar_;
  std::vector<Entry> entries_;
  std::mt19937_64 rng_;
  DetectStats stats_;
};

}  // namespace slam2d

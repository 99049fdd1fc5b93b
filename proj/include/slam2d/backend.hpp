#pragma once

#include <vector>

#include "slam2d/frontend.hpp"
#include "slam2d/geometry.hpp"
#include "slam2d/loopdetect.hpp"

namespace slam2d {

struct OdomEdge {
  int from = -1;
  int to = -1;
  Pose2 rel;       // pose of `to` in `from`
  Mat3 sqrt_info;  // (x, y, yaw)
};

struct LoopEdge {
  LoopConstraint constraint;
  Mat3 sqrt_info;
};

struct PoseGraphConfig {
  // odometry edge noise: base + per-meter / per-radian drift
  double odom_sigma_xy = 0.02;
  double odom_drift_frac = 0.01;
  double odom_sigma_yaw = 0.5 * M_PI / 180.0;
  // loop edge noise derived from the post-ICP RMS
  double loop_sigma_xy_base = 0.005;
  double loop_sigma_xy_per_rms = 0.5;
  double loop_sigma_yaw_base = 0.003;
  double loop_sigma_yaw_per_rms = 0.5;
};

/// Keyframe pose graph: a single odometry chain plus loop edges. Node 0 is
/// the fixed gauge.
class PoseGraph {
 public:
  explicit PoseGraph(const PoseGraphConfig& cfg = {});

  /// Id must be the previous id + 1 (ProtocolError otherwise). The node is
  /// initialized at the front-end pose; the odometry edge carries the
  /// front-end relative pose.
  void add_keyframe(const Keyframe& kf);

  void add_loop(const LoopConstraint& constraint);

  /// Global relaxation; a no-op without loop edges (returns false). On
  /// solver failure the node poses are left unchanged and the error is
  /// rethrown.
  bool optimize();

  /// Offset mapping the pre-optimization last pose to the optimized one;
  /// identity when nothing moved.
  Pose2 broadcast_correction() const;

  /// Keeps the odometry-edge bookkeeping consistent after the front-end
  /// adopted a broadcast correction.
  void note_correction(const Pose2& offset);

  int size() const { return static_cast<int>(nodes_.size()); }
  Pose2 node(int id) const { return nodes_.at(id); }
  double node_stamp(int id) const { return stamps_.at(id); }
  const std::vector<LoopEdge>& loop_edges() const { return loop_edges_; }
  const std::vector<OdomEdge>& odom_edges() const { return odom_edges_; }
  double last_cost() const { return last_cost_; }

 private:
  PoseGraphConfig cfg_;
  std::vector<Pose2> nodes_;
  std::vector<double> stamps_;
  std::vector<OdomEdge> odom_edges_;
  std::vector<LoopEdge> loop_edges_;
  Pose2 last_frontend_pose_;  // corrected view of the latest insertion
  Pose2 pre_opt_last_;
  Pose2 post_opt_last_;
  double last_cost_ = 0.0;
};

}  // namespace slam2d

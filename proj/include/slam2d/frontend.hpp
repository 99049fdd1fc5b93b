#pragma once

#include <deque>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "slam2d/dataio.hpp"
#include "slam2d/factors.hpp"
#include "slam2d/features.hpp"
#include "slam2d/geometry.hpp"
#include "slam2d/preintegration.hpp"

namespace slam2d {

/// One scan frame with its inter-frame sensor segments, ready for tracking.
struct FrameBundle {
  double scan_stamp = 0.0;
  double prev_stamp = 0.0;  // segment start; inter-frame factors need it
  std::vector<LineSegment> lines;    // lidar frame
  std::vector<Corner> corners;       // lidar frame
  std::vector<Vec2> scan_points;     // lidar frame, full resolution
  std::vector<ImuSample> imu_segment;  // covers (prev_stamp, scan_stamp]
  bool imu_ok = false;
  WheelDelta wheel_increment;        // chassis increment over the segment
  Pose3 wheel_rel_pose;              // full relative pose, for prediction
  bool wheel_ok = false;
};

/// Accumulated line set consecutive scans are matched against. Lines live in
/// the lidar frame of the anchor state; cells are keyed by line normal
/// bucket plus midpoint cell so occupied cells stay untouched.
struct ReferenceFrame {
  State anchor;
  bool has_anchor = false;
  int accumulation_count = 0;
  int capacity = 20;
  std::vector<LineSegment> lines;
  std::unordered_map<uint64_t, int> cells;
  LineMap index;

  void clear(int cap);
  /// Inserts lines already expressed in the anchor lidar frame; occupied
  /// cells win, empty cells are populated. Returns inserted count.
  int absorb(const std::vector<LineSegment>& lines_in_anchor, double cell_size,
             int max_cells);
};

struct Keyframe {
  int id = -1;
  double stamp = 0.0;
  State state;
  std::vector<Corner> corners;    // lidar frame
  std::vector<Vec2> scan_points;  // lidar frame, decimated
};

struct FrontendConfig {
  int window_size = 5;       // w
  int init_frames = 10;      // consecutive non-stationary frames
  int init_min_matches = 15;  // per-frame line matches against frame 0
  double stationary_d = 0.005;  // wheel increment below this = stationary

  int reference_capacity = 20;  // N_ref
  double reference_cell_size = 0.5;
  int reference_max_cells = 8192;

  double keyframe_trans = 0.2;
  double keyframe_rot = 10.0 * M_PI / 180.0;
  double keyframe_time = 2.0;
  int keyframe_max_points = 400;

  MatchConfig match;
  bool robust_lines = true;
  double huber_delta = 1.0;

  bool use_wheel = true;
  bool use_ground = true;

  // diagonal prior on the oldest window state
  double prior_sigma_p = 0.05;
  double prior_sigma_theta = 2.0 * M_PI / 180.0;
  double prior_sigma_v = 0.1;
  double prior_sigma_ba = 0.05;
  double prior_sigma_bg = 0.01;

  int solver_max_iters = 8;
};

class Frontend {
 public:
  Frontend(const FrontendConfig& cfg, const Calibration& calib);

  struct Result {
    bool tracked = false;
    bool initialized_now = false;
    bool degraded = false;
    int line_matches = 0;
    State state;
    std::vector<Keyframe> keyframes;
    /// States of the whole init buffer, emitted once at initialization so
    /// the caller can log the full trajectory.
    std::vector<State> backfill_states;
  };

  Result process(const FrameBundle& bundle);

  /// Queues a pose offset from the back-end; adopted atomically before the
  /// next frame.
  void apply_correction(const Pose2& offset);

  bool initialized() const { return initialized_; }
  const GravityVector& gravity() const { return gravity_; }
  const ReferenceFrame& reference() const { return reference_; }
  const Calibration& calibration() const { return calib_; }

  /// Policy-only keyframe decision, exposed for tests: emits when motion or
  /// elapsed time since the last keyframe crosses the thresholds.
  std::optional<Keyframe> emit_keyframe(const FrameBundle& bundle,
                                        const State& state);

  /// Absorbs a tracked frame's lines into the reference pair (current +
  /// backup rotation protocol).
  void update_reference(const FrameBundle& bundle, const State& state);

 private:
  struct WindowFrame {
    FrameBundle bundle;
    State state;
    Preintegration pre;
    bool has_pre = false;
  };

  void adopt_pending_correction();
  bool try_initialize(Result& result);
  void track_frame(const FrameBundle& bundle, Result& result);
  State predict_state(const FrameBundle& bundle) const;
  Pose3 lidar_pose(const State& s) const;
  std::vector<LineMatch> match_against_reference(
      const std::vector<LineSegment>& lines, const State& state_guess) const;
  void solve_window(bool anchor_first_frame);

  FrontendConfig cfg_;
  Calibration calib_;
  GravityVector gravity_;
  bool initialized_ = false;

  // init accumulation
  std::vector<FrameBundle> init_buffer_;
  Vec3 rest_accel_sum_ = Vec3::Zero();
  Vec3 rest_gyro_sum_ = Vec3::Zero();
  int rest_samples_ = 0;
  ImuBias init_bias_;

  std::deque<WindowFrame> window_;
  ReferenceFrame reference_;
  ReferenceFrame backup_;

  int next_keyframe_id_ = 0;
  bool has_last_keyframe_ = false;
  Pose3 last_keyframe_pose_;
  double last_keyframe_stamp_ = 0.0;

  std::mutex correction_mutex_;
  std::optional<Pose2> pending_correction_;
};

/// Assembles a FrameBundle from raw streams (feature extraction + IMU and
/// wheel segments between the previous and current scan stamp).
FrameBundle assemble_bundle(const LaserScan& scan, double prev_stamp,
                            const std::vector<ImuSample>& imu,
                            const std::vector<WheelOdomSample>& wheel,
                            const FeatureConfig& features);

}  // namespace slam2d

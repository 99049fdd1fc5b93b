#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slam2d/backend.hpp"
#include "slam2d/dataio.hpp"
#include "slam2d/eval.hpp"
#include "slam2d/frontend.hpp"
#include "slam2d/loopdetect.hpp"
#include "slam2d/mapping.hpp"

namespace slam2d {

struct RunToggles {
  bool loop_closure = true;
  bool wheel_factor = true;
  bool ground_factor = true;
  std::optional<double> range_clip;
};

/// Everything tunable in one place; key=value overrides reach all module
/// defaults (e.g. `frontend.window_size=5`, `features.d_break=0.25`).
struct RunParams {
  FeatureConfig features;
  FrontendConfig frontend;
  LoopConfig loop;
  PoseGraphConfig graph;
  GridMapConfig map;
  double map_smooth_sigma = 1.0;
  RunToggles toggles;

  void apply_override(const std::string& key, const std::string& value);
  void print(FILE* out) const;
};

struct RunStats {
  bool initialized = false;
  int frames = 0;
  int tracked_frames = 0;
  int degraded_frames = 0;
  int keyframes = 0;
  int loops_accepted = 0;
  double mean_track_ms = 0.0;
  double mean_lines_extracted = 0.0;
  double mean_line_matches = 0.0;
  double mean_loop_match_ms = 0.0;
  double mean_loop_icp_ms = 0.0;
  double total_wall_s = 0.0;
  double scan_span_s = 0.0;
};

struct RunResult {
  RunStats stats;
  Trajectory frontend_traj;   // live tracked poses (body frame)
  Trajectory optimized_traj;  // pose-graph keyframe poses
  std::vector<LoopConstraint> loops;
  std::vector<Keyframe> keyframes;
  std::vector<Pose2> optimized_poses;  // per keyframe id
};

/// Replays a dataset through the tracker and the back-end worker thread.
/// The back-end runs on its own thread behind a FIFO; replay drains it at
/// every frame boundary so corrections always land between frames and the
/// run is deterministic. When `output_dir` is non-empty all artifacts are
/// written there.
RunResult run_pipeline(const DatasetStreams& data, const RunParams& params,
                       const std::string& output_dir);

/// Line-oriented keyframe database (poses, corners, decimated scan points)
/// for global localization and map export.
struct KeyframeDb {
  Pose2 body_from_lidar;
  std::vector<KeyframeSignature> entries;
};

void save_keyframe_db(const std::string& path,
                      const std::vector<Keyframe>& keyframes,
                      const std::vector<Pose2>& poses,
                      const Pose2& body_from_lidar);
KeyframeDb load_keyframe_db(const std::string& path);

void write_loops_csv(const std::string& path,
                     const std::vector<LoopConstraint>& loops);

/// Applies a range clip to every scan (range_max shrinks; ranges beyond it
/// become no-returns when loaded by scan_to_points).
void clip_scans(std::vector<LaserScan>& scans, double clip);

}  // namespace slam2d

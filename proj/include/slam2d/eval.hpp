#pragma once

#include <map>
#include <string>
#include <vector>

#include "slam2d/geometry.hpp"

namespace slam2d {

struct TrajectorySample {
  double stamp = 0.0;
  Pose3 pose;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
};

/// TUM interchange: `stamp tx ty tz qx qy qz qw` per line.
Trajectory read_tum(const std::string& path);
void write_tum(const std::string& path, const Trajectory& traj);

struct PosePair {
  double stamp_est = 0.0;
  double stamp_gt = 0.0;
  Pose3 est;
  Pose3 gt;
};

/// Nearest-stamp association within max_dt; unmatched samples are dropped.
/// Throws EmptyAssociation when nothing pairs up.
std::vector<PosePair> associate(const Trajectory& est, const Trajectory& gt,
                                double max_dt);

struct ApeReport {
  double trans_rmse = 0.0;  // m
  double rot_rmse = 0.0;    // rad
  double combined = 0.0;    // sqrt(trans^2 + rot^2) per pair, RMSE
  int n = 0;
};

/// Absolute pose error, optionally after a closed-form planar rigid
/// alignment of the estimate onto the ground truth.
ApeReport ape_rmse(const std::vector<PosePair>& pairs, bool align);

struct RpeReport {
  double trans_rmse = 0.0;
  double rot_rmse = 0.0;
  double combined = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double sse = 0.0;
  double std_dev = 0.0;
  int n = 0;
};

/// Relative pose error over sub-trajectories spaced `delta` meters apart
/// along the ground-truth arc length. Statistics are over the combined
/// per-pair scalar error; sse is rmse^2 * n by definition.
RpeReport rpe_rmse(const std::vector<PosePair>& pairs, double delta);

/// Flat key=value view of both reports, for the report file and CI gates.
std::map<std::string, double> report_fields(const ApeReport& ape,
                                            const RpeReport& rpe);

}  // namespace slam2d

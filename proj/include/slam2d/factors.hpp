#pragma once

#include <optional>
#include <vector>

#include "slam2d/dataio.hpp"
#include "slam2d/features.hpp"
#include "slam2d/geometry.hpp"
#include "slam2d/preintegration.hpp"
#include "slam2d/solver.hpp"

namespace slam2d {

/// Full robot state: position, orientation (rotation vector), velocity and
/// IMU biases, all in the world frame of the estimator.
struct State {
  Vec3 p = Vec3::Zero();
  RotVec theta;
  Vec3 v = Vec3::Zero();
  ImuBias bias;
  double stamp = 0.0;

  Pose3 pose() const { return Pose3(theta, p); }
};

struct LineMatch {
  LineSegment ref_line;  // reference-frame coordinates
  LineSegment cur_line;  // current lidar-frame coordinates
  int ref_index = -1;
  int cur_index = -1;
};

struct MatchConfig {
  double theta_match = 10.0 * M_PI / 180.0;
  double d_match = 0.5;        // midpoint distance gate, m
  double min_overlap = 0.2;    // projected intersection over the ref segment
};

/// Maps a 2D segment through a rigid transform (points embedded at z = 0).
LineSegment transform_segment(const Pose3& T, const LineSegment& seg);

/// Smallest angle between two line directions, folded into [0, pi/2].
double line_angle(const LineSegment& a, const LineSegment& b);

/// Greedy single-best matching of current lines against a reference line
/// set under the pose guess T_ref_from_cur. `index` may be null.
std::vector<LineMatch> match_lines(const std::vector<LineSegment>& cur_lines,
                                   const std::vector<LineSegment>& ref_lines,
                                   const LineMap* index, const Pose3& T_guess,
                                   const MatchConfig& cfg = {});

/// Perpendicular distances of the mapped current endpoints to the reference
/// infinite line (unwhitened).
Vec2 line_residual(const LineMatch& match, const State& state_r,
                   const State& state_c, const Calibration& calib);

struct WheelDelta {
  double d = 0.0;        // planar translation magnitude, m
  double theta_d = 0.0;  // heading of travel, rad
  double theta = 0.0;    // rotation magnitude, rad
  bool degenerate_direction = false;  // d below 1e-6, theta_d undefined
};

WheelDelta wheel_delta(const Pose3& pose_i, const Pose3& pose_j);

/// (measured - predicted) wheel increment, angles wrapped, unwhitened.
/// With degenerate direction on both sides the theta_d row reads zero.
Vec3 wheel_residual(const State& state_k, const State& state_k1,
                    const WheelDelta& measured, const Calibration& calib);

/// Chassis height and tilt w.r.t. the world ground plane, unwhitened.
Vec2 ground_residual(const State& state, const Calibration& calib);

/// Whitened tangent-space deviation from a prior mean (15 rows).
Eigen::VectorXd prior_residual(const State& state, const State& prior_mean,
                               const Eigen::Matrix<double, 15, 15>& sqrt_info);

/// Preintegrated IMU residual rows (alpha, beta, gamma, dba, dbg), unwhitened.
Eigen::VectorXd imu_residual_raw(const State& state_k, const State& state_k1,
                                 const Preintegration& pre,
                                 const GravityVector& g);

/// Same, whitened with the square root information of the preintegration
/// covariance extended by the bias random-walk rows.
Eigen::VectorXd imu_residual(const State& state_k, const State& state_k1,
                             const Preintegration& pre, const GravityVector& g,
                             const ImuNoise& noise);

/// Measurement covariance of a wheel increment under the proportional slip
/// model (sigma_d scaled by distance, sigma_theta by rotation).
Mat3 wheel_covariance(const WheelDelta& measured, const Calibration& calib);

/// Upper-triangular square root information for a covariance (regularized,
/// never throws).
Eigen::MatrixXd sqrt_info_from_covariance(const Eigen::MatrixXd& cov);

// Residual-block factories. Slot order must match the listed state slots.

/// Slots: [p_r, theta_r, p_c, theta_c].
ResidualBlock make_line_block(const LineMatch& match, int p_r, int th_r,
                              int p_c, int th_c, const Calibration& calib,
                              bool robust = false, double huber_delta = 1.0);

/// Slots: [p_k, theta_k, p_k1, theta_k1].
ResidualBlock make_wheel_block(const WheelDelta& measured, int p_k, int th_k,
                               int p_k1, int th_k1, const Calibration& calib);

/// Slots: [p, theta].
ResidualBlock make_ground_block(int p, int th, const Calibration& calib);

/// Slots: [p_k, theta_k, v_k, ba_k, bg_k, p_k1, theta_k1, v_k1, ba_k1, bg_k1].
ResidualBlock make_imu_block(const Preintegration& pre, const GravityVector& g,
                             const ImuNoise& noise, const std::vector<int>& slots);

/// Slots: [p, theta, v, ba, bg].
ResidualBlock make_prior_block(const State& mean,
                               const Eigen::Matrix<double, 15, 15>& sqrt_info,
                               const std::vector<int>& slots);

}  // namespace slam2d

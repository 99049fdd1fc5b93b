#pragma once

#include <vector>

#include "slam2d/dataio.hpp"
#include "slam2d/geometry.hpp"

namespace slam2d {

struct ImuBias {
  Vec3 accel = Vec3::Zero();  // m/s^2
  Vec3 gyro = Vec3::Zero();   // rad/s
};

struct GravityVector {
  Vec3 g_world = Vec3(0.0, 0.0, -9.81);  // physical gravity, points down
};

/// Preintegrated IMU increments between two frame timestamps. Error-state
/// order for covariance and bias Jacobian rows: (alpha, beta, gamma-tangent).
struct Preintegration {
  Vec3 alpha = Vec3::Zero();   // double-integrated specific force, m
  Vec3 beta = Vec3::Zero();    // integrated specific force, m/s
  Mat3 gamma = Mat3::Identity();
  double dt_total = 0.0;
  Eigen::Matrix<double, 9, 9> covariance = Eigen::Matrix<double, 9, 9>::Zero();
  Eigen::Matrix<double, 9, 6> J_bias = Eigen::Matrix<double, 9, 6>::Zero();
  ImuBias linearization_bias;
};

/// Midpoint-rule propagation of (alpha, beta, gamma) with error-state
/// covariance and bias Jacobians. Needs >= 2 samples with strictly
/// increasing stamps.
Preintegration integrate(const std::vector<ImuSample>& samples,
                         const ImuBias& bias, const ImuNoise& noise);

/// First-order update of the increments for a changed bias, no re-integration.
Preintegration correct_for_bias(const Preintegration& pre,
                                const ImuBias& new_bias);

/// Chains two consecutive preintegrations through the propagation law
/// (values only; covariance/Jacobians keep the first segment's).
Preintegration compose_preintegration(const Preintegration& a,
                                      const Preintegration& b);

}  // namespace slam2d

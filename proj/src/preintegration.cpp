#include "slam2d/preintegration.hpp"

#include <cmath>

#include "slam2d/errors.hpp"

namespace slam2d {

Preintegration integrate(const std::vector<ImuSample>& samples,
                         const ImuBias& bias, const ImuNoise& noise) {
  if (samples.size() < 2) {
    throw InvalidArgument("integrate: need at least 2 samples");
  }
  for (size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].stamp > samples[i - 1].stamp)) {
      throw InvalidArgument("integrate: non-monotone stamps");
    }
  }

  Preintegration pre;
  pre.linearization_bias = bias;
  // Full error state is (alpha, beta, theta, ba, bg); the public covariance
  // keeps the leading 9x9 block, the bias Jacobian the last 6 columns of the
  // accumulated transition.
  Eigen::Matrix<double, 15, 15> J = Eigen::Matrix<double, 15, 15>::Identity();
  Eigen::Matrix<double, 15, 15> P = Eigen::Matrix<double, 15, 15>::Zero();

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].stamp - samples[i].stamp;
    const Vec3 a0 = samples[i].accel - bias.accel;
    const Vec3 a1 = samples[i + 1].accel - bias.accel;
    const Vec3 w_mid =
        0.5 * (samples[i].gyro + samples[i + 1].gyro) - bias.gyro;

    const Mat3 R0 = pre.gamma;
    const Mat3 R1 = pre.gamma * exp_so3(RotVec(w_mid * dt));
    const Vec3 acc_mid = 0.5 * (R0 * a0 + R1 * a1);

    const Mat3 I = Mat3::Identity();
    const Mat3 Wx = skew(w_mid);
    const Mat3 A0x = skew(a0);
    const Mat3 A1x = skew(a1);
    const double dt2 = dt * dt;

    Eigen::Matrix<double, 15, 15> F = Eigen::Matrix<double, 15, 15>::Identity();
    const Mat3 dtheta = -0.25 * R0 * A0x * dt2 -
                        0.25 * R1 * A1x * (I - Wx * dt) * dt2;
    F.block<3, 3>(0, 3) = I * dt;
    F.block<3, 3>(0, 6) = dtheta;
    F.block<3, 3>(0, 9) = -0.25 * (R0 + R1) * dt2;
    F.block<3, 3>(0, 12) = 0.25 * R1 * A1x * dt2 * dt;
    F.block<3, 3>(3, 6) = -0.5 * R0 * A0x * dt -
                          0.5 * R1 * A1x * (I - Wx * dt) * dt;
    F.block<3, 3>(3, 9) = -0.5 * (R0 + R1) * dt;
    F.block<3, 3>(3, 12) = 0.5 * R1 * A1x * dt * dt;
    F.block<3, 3>(6, 6) = I - Wx * dt;
    F.block<3, 3>(6, 12) = -I * dt;

    Eigen::Matrix<double, 15, 18> V = Eigen::Matrix<double, 15, 18>::Zero();
    V.block<3, 3>(0, 0) = 0.25 * R0 * dt2;
    V.block<3, 3>(0, 3) = -0.125 * R1 * A1x * dt2 * dt;
    V.block<3, 3>(0, 6) = 0.25 * R1 * dt2;
    V.block<3, 3>(0, 9) = V.block<3, 3>(0, 3);
    V.block<3, 3>(3, 0) = 0.5 * R0 * dt;
    V.block<3, 3>(3, 3) = -0.25 * R1 * A1x * dt2;
    V.block<3, 3>(3, 6) = 0.5 * R1 * dt;
    V.block<3, 3>(3, 9) = V.block<3, 3>(3, 3);
    V.block<3, 3>(6, 3) = 0.5 * I * dt;
    V.block<3, 3>(6, 9) = 0.5 * I * dt;
    V.block<3, 3>(9, 12) = I * dt;
    V.block<3, 3>(12, 15) = I * dt;

    // Discrete variances from continuous densities.
    Eigen::Matrix<double, 18, 18> Q = Eigen::Matrix<double, 18, 18>::Zero();
    const double qa = noise.accel_density * noise.accel_density / dt;
    const double qg = noise.gyro_density * noise.gyro_density / dt;
    const double qba = noise.accel_bias_walk * noise.accel_bias_walk / dt;
    const double qbg = noise.gyro_bias_walk * noise.gyro_bias_walk / dt;
    Q.diagonal() << qa, qa, qa, qg, qg, qg, qa, qa, qa, qg, qg, qg,  //
        qba, qba, qba, qbg, qbg, qbg;

    P = F * P * F.transpose() + V * Q * V.transpose();
    J = F * J;

    pre.alpha += pre.beta * dt + 0.5 * acc_mid * dt2;
    pre.beta += acc_mid * dt;
    pre.gamma = R1;
    pre.dt_total += dt;
  }

  pre.covariance = P.topLeftCorner<9, 9>();
  pre.J_bias = J.topRows<9>().rightCols<6>();
  return pre;
}

Preintegration correct_for_bias(const Preintegration& pre,
                                const ImuBias& new_bias) {
  const Vec3 dba = new_bias.accel - pre.linearization_bias.accel;
  const Vec3 dbg = new_bias.gyro - pre.linearization_bias.gyro;
  Preintegration out = pre;
  out.alpha += pre.J_bias.block<3, 3>(0, 0) * dba +
               pre.J_bias.block<3, 3>(0, 3) * dbg;
  out.beta += pre.J_bias.block<3, 3>(3, 0) * dba +
              pre.J_bias.block<3, 3>(3, 3) * dbg;
  out.gamma =
      pre.gamma * exp_so3(RotVec(Vec3(pre.J_bias.block<3, 3>(6, 3) * dbg)));
  out.linearization_bias = new_bias;
  return out;
}

Preintegration compose_preintegration(const Preintegration& a,
                                      const Preintegration& b) {
  Preintegration out = a;
  out.alpha = a.alpha + a.beta * b.dt_total + a.gamma * b.alpha;
  out.beta = a.beta + a.gamma * b.beta;
  out.gamma = a.gamma * b.gamma;
  out.dt_total = a.dt_total + b.dt_total;
  return out;
}

}  // namespace slam2d

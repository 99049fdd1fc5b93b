#include "slam2d/geometry.hpp"

#include <cmath>

#include "slam2d/errors.hpp"

namespace slam2d {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 exp_so3(const RotVec& v) {
  if (!v.axis_angle.allFinite()) {
    throw InvalidArgument("exp_so3: non-finite rotation vector");
  }
  const double theta = v.angle();
  const Mat3 K = skew(v.axis_angle);
  if (theta < kSmallAngle) {
    // Taylor: I + K + K^2/2 is exact to O(theta^3) around the identity.
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * K + c * K * K;
}

RotVec log_so3(const Mat3& R) {
  if (!R.allFinite()) {
    throw InvalidArgument("log_so3: non-finite rotation matrix");
  }
  const Mat3 defect = R.transpose() * R - Mat3::Identity();
  if (defect.cwiseAbs().maxCoeff() > 1e-6 || R.determinant() < 0.0) {
    throw InvalidArgument("log_so3: input is not orthonormal");
  }
  // atan2 of (|antisymmetric part|, trace) is well conditioned everywhere
  // except right at pi, where the axis comes from the symmetric part.
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double sin_theta = 0.5 * w.norm();
  const double cos_theta = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < kSmallAngle) {
    return RotVec(0.5 * w);
  }
  if (sin_theta < 1e-7) {
    // Recover the axis from the symmetric part via its largest diagonal.
    const Mat3 S = 0.5 * (R + Mat3::Identity());
    int k = 0;
    S.diagonal().maxCoeff(&k);
    Vec3 axis;
    axis[k] = std::sqrt(std::max(0.0, S(k, k)));
    for (int i = 0; i < 3; ++i) {
      if (i != k) axis[i] = S(k, i) / axis[k];
    }
    axis.normalize();
    if (w.dot(axis) < 0.0) axis = -axis;
    return RotVec(axis * theta);
  }
  return RotVec(w * (0.5 * theta / sin_theta));
}

RotVec canonical(const RotVec& v) {
  double theta = v.angle();
  if (theta <= M_PI) return v;
  const Vec3 axis = v.axis_angle / theta;
  theta = std::fmod(theta, 2.0 * M_PI);
  if (theta > M_PI) theta -= 2.0 * M_PI;  // negative magnitude flips the axis
  return RotVec(axis * theta);
}

Mat3 right_jacobian_so3(const Vec3& v) {
  const double theta = v.norm();
  const Mat3 K = skew(v);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() - a * K + b * K * K;
}

Mat3 right_jacobian_inv_so3(const Vec3& v) {
  const double theta = v.norm();
  const Mat3 K = skew(v);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * K + (1.0 / 12.0) * K * K;
  }
  const double t2 = theta * theta;
  const double c =
      1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * K + c * K * K;
}

Pose3 compose(const Pose3& a, const Pose3& b) {
  const Mat3 Ra = exp_so3(a.rotation);
  const Mat3 Rb = exp_so3(b.rotation);
  Pose3 out;
  out.rotation = log_so3(Ra * Rb);
  out.translation = Ra * b.translation + a.translation;
  return out;
}

Pose3 inverse(const Pose3& a) {
  const Mat3 Ra = exp_so3(a.rotation);
  Pose3 out;
  out.rotation = RotVec(-canonical(a.rotation).axis_angle);
  out.translation = -(Ra.transpose() * a.translation);
  return out;
}

Vec3 transform_point(const Pose3& T, const Vec3& p) {
  return exp_so3(T.rotation) * p + T.translation;
}

Eigen::Matrix4d to_homogeneous(const Pose3& T) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = exp_so3(T.rotation);
  m.topRightCorner<3, 1>() = T.translation;
  return m;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a > M_PI) a -= 2.0 * M_PI;
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

Mat2 rot2(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat2 m;
  m << c, -s, s, c;
  return m;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  return Pose2(wrap_angle(a.yaw + b.yaw), a.xy + rot2(a.yaw) * b.xy);
}

Pose2 inverse(const Pose2& a) {
  return Pose2(wrap_angle(-a.yaw), -(rot2(-a.yaw) * a.xy));
}

Vec2 transform_point(const Pose2& T, const Vec2& p) {
  return rot2(T.yaw) * p + T.xy;
}

Pose2 to_pose2(const Pose3& T) {
  const Mat3 R = exp_so3(T.rotation);
  return Pose2(std::atan2(R(1, 0), R(0, 0)), T.translation.head<2>());
}

Pose3 to_pose3(const Pose2& T) {
  return Pose3(RotVec(0.0, 0.0, T.yaw),
               Vec3(T.xy.x(), T.xy.y(), 0.0));
}

Pose2 exp_se2(const Vec3& twist) {
  const double vx = twist[0], vy = twist[1], w = twist[2];
  if (std::abs(w) < kSmallAngle) {
    return Pose2(wrap_angle(w), Vec2(vx, vy));
  }
  const double s = std::sin(w), c = std::cos(w);
  Mat2 V;
  V << s / w, -(1.0 - c) / w, (1.0 - c) / w, s / w;
  return Pose2(wrap_angle(w), V * Vec2(vx, vy));
}

Vec3 log_se2(const Pose2& T) {
  const double w = T.yaw;
  if (std::abs(w) < kSmallAngle) {
    return Vec3(T.xy.x(), T.xy.y(), w);
  }
  const double s = std::sin(w), c = std::cos(w);
  const double a = s / w, b = (1.0 - c) / w;
  Mat2 Vinv;
  const double det = a * a + b * b;
  Vinv << a / det, b / det, -b / det, a / det;
  const Vec2 v = Vinv * T.xy;
  return Vec3(v.x(), v.y(), w);
}

Eigen::Vector4d rotvec_to_quat(const RotVec& v) {
  const double theta = v.angle();
  double half_sinc;
  if (theta < kSmallAngle) {
    half_sinc = 0.5 - theta * theta / 48.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
  }
  Eigen::Vector4d q;
  q.head<3>() = half_sinc * v.axis_angle;
  q[3] = std::cos(0.5 * theta);
  return q;
}

RotVec quat_to_rotvec(const Eigen::Vector4d& q_xyzw) {
  Eigen::Quaterniond q(q_xyzw[3], q_xyzw[0], q_xyzw[1], q_xyzw[2]);
  q.normalize();
  return log_so3(q.toRotationMatrix());
}

}  // namespace slam2d

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace slam2d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Rotation vector (axis * angle, radians). Canonical form keeps the
/// magnitude in [0, pi], flipping the axis when needed.
struct RotVec {
  Vec3 axis_angle = Vec3::Zero();

  RotVec() = default;
  explicit RotVec(const Vec3& v) : axis_angle(v) {}
  RotVec(double x, double y, double z) : axis_angle(x, y, z) {}

  double angle() const { return axis_angle.norm(); }
};

/// Rigid transform stored as (rotation vector, translation). Acts on points
/// as x' = R * x + t.
struct Pose3 {
  RotVec rotation;
  Vec3 translation = Vec3::Zero();

  Pose3() = default;
  Pose3(const RotVec& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose3 identity() { return {}; }
};

/// Planar rigid transform. yaw is kept wrapped to (-pi, pi].
struct Pose2 {
  double yaw = 0.0;
  Vec2 xy = Vec2::Zero();

  Pose2() = default;
  Pose2(double yaw_, const Vec2& xy_) : yaw(yaw_), xy(xy_) {}
  Pose2(double yaw_, double x, double y) : yaw(yaw_), xy(x, y) {}

  static Pose2 identity() { return {}; }
};

// so(3) / SO(3)

Mat3 skew(const Vec3& v);
Mat3 exp_so3(const RotVec& v);
RotVec log_so3(const Mat3& R);
RotVec canonical(const RotVec& v);

/// Right Jacobian of SO(3) and its inverse; exp(v + d) ~ exp(v) exp(Jr(v) d).
Mat3 right_jacobian_so3(const Vec3& v);
Mat3 right_jacobian_inv_so3(const Vec3& v);

// Pose3 group operations (rotation composed through SO(3), translation
// assembled alongside; this is not the SE(3) exponential chart).

Pose3 compose(const Pose3& a, const Pose3& b);
Pose3 inverse(const Pose3& a);
Vec3 transform_point(const Pose3& T, const Vec3& p);
Eigen::Matrix4d to_homogeneous(const Pose3& T);

// Planar helpers

double wrap_angle(double a);  // into (-pi, pi]
Mat2 rot2(double yaw);
Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& a);
Vec2 transform_point(const Pose2& T, const Vec2& p);

Pose2 to_pose2(const Pose3& T);
Pose3 to_pose3(const Pose2& T);

/// Constant-twist chart for planar motion, used by trajectory interpolation.
Pose2 exp_se2(const Vec3& twist);  // (vx, vy, omega)
Vec3 log_se2(const Pose2& T);

/// Quaternion conversion for trajectory interchange only (x, y, z, w order).
Eigen::Vector4d rotvec_to_quat(const RotVec& v);
RotVec quat_to_rotvec(const Eigen::Vector4d& q_xyzw);

}  // namespace slam2d

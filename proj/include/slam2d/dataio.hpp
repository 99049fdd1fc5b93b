#pragma once

#include <string>
#include <vector>

#include "slam2d/geometry.hpp"

namespace slam2d {

struct LaserScan {
  double stamp = 0.0;
  double angle_min = 0.0;
  double angle_max = 0.0;
  double angle_increment = 0.0;
  double range_min = 0.0;
  double range_max = 0.0;
  std::vector<double> ranges;  // non-finite entries mean no return
};

struct ImuSample {
  double stamp = 0.0;
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force
  Vec3 gyro = Vec3::Zero();   // rad/s
};

struct WheelOdomSample {
  double stamp = 0.0;
  Pose3 pose;  // chassis pose in the odometry frame, z fixed 0 by producer
};

struct ImuNoise {
  double accel_density = 2e-2;    // m/s^2/sqrt(Hz)
  double gyro_density = 2e-3;     // rad/s/sqrt(Hz)
  double accel_bias_walk = 2e-4;  // m/s^3/sqrt(Hz)
  double gyro_bias_walk = 2e-5;   // rad/s^2/sqrt(Hz)
};

struct WheelSigma {
  double d = 0.01;        // per-increment translation, scaled by distance
  double theta_d = 0.02;  // heading-of-travel, rad
  double theta = 0.01;    // rotation magnitude, scaled by rotation
};

struct GroundSigma {
  double z_m = 0.0005;
  double tilt_rad = 0.0015;
};

struct Calibration {
  Pose3 T_base_lidar;       // lidar pose in the chassis frame
  Pose3 T_imu_base;         // chassis pose in the IMU body frame
  double gravity_magnitude = 9.81;
  ImuNoise imu_noise;
  WheelSigma wheel_sigma;
  GroundSigma ground_sigma;
  double line_sigma = 0.02;  // meters

  /// Lidar pose in the IMU body frame (T_imu_base composed with T_base_lidar).
  Pose3 body_from_lidar() const { return compose(T_imu_base, T_base_lidar); }
};

struct DatasetStreams {
  std::vector<LaserScan> scans;
  std::vector<ImuSample> imu;
  std::vector<WheelOdomSample> wheel;
  Calibration calib;
};

/// Reads scan.csv, imu.csv, wheel.csv and calib.txt from a directory.
/// Streams come back sorted; malformed or non-monotone rows raise
/// FormatError naming file and line.
DatasetStreams load_dataset(const std::string& dir);

std::vector<LaserScan> load_scan_csv(const std::string& path);

Calibration load_calibration(const std::string& path);

void save_dataset(const std::string& dir, const DatasetStreams& data);
void save_calibration(const std::string& path, const Calibration& calib);

struct ScanPoints {
  std::vector<Vec2> points;       // lidar frame
  std::vector<int> beam_indices;  // original beam index per point
};

/// Polar-to-Cartesian conversion; out-of-range and non-finite returns are
/// dropped while the surviving points keep their original beam index.
ScanPoints scan_to_points(const LaserScan& scan);

/// Interpolated absolute wheel pose at time t (linear translation, geodesic
/// rotation between the bracketing samples). Throws OutOfRange outside the
/// stream coverage.
Pose3 wheel_pose_at(const std::vector<WheelOdomSample>& stream, double t);

/// Slice of the IMU stream covering [t0, t1] with both boundary samples
/// linearly interpolated. A gap above `max_gap` inside the window raises
/// DataGap.
std::vector<ImuSample> imu_window(const std::vector<ImuSample>& stream,
                                  double t0, double t1, double max_gap = 0.1);

}  // namespace slam2d

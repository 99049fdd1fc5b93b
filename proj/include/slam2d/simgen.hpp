#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slam2d/dataio.hpp"
#include "slam2d/geometry.hpp"
#include "slam2d/preintegration.hpp"

namespace slam2d {

struct Wall {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
  int id = -1;
};

struct World {
  std::vector<Wall> walls;
  std::string name;

  void add_wall(const Vec2& a, const Vec2& b);
  /// Axis-aligned box (4 walls), optionally rotated about its center.
  void add_box(const Vec2& center, double w, double h, double yaw = 0.0);
  /// Wall from a to b with rectangular alcoves cut into it (to the left of
  /// the a->b direction). Notch positions get a small deterministic jitter
  /// so the corner constellations stay globally distinctive.
  void add_notched_wall(const Vec2& a, const Vec2& b, double period,
                        double depth, double width, uint64_t jitter_seed = 1);
  Vec2 bounds_min() const;
  Vec2 bounds_max() const;
};

struct TimedPose {
  double t = 0.0;
  Pose2 pose;
};

struct StreamRates {
  double scan_hz = 10.0;
  double imu_hz = 200.0;
  double wheel_hz = 50.0;
};

/// Piecewise constant-twist trajectory: between waypoints the body twist is
/// constant, which keeps the IMU signals piecewise-analytic.
struct TrajectorySpec {
  std::vector<TimedPose> waypoints;
  StreamRates rates;

  double t_begin() const { return waypoints.front().t; }
  double t_end() const { return waypoints.back().t; }
};

Pose2 trajectory_pose(const TrajectorySpec& traj, double t);
/// Body twist (vx, vy, omega) of the active segment at time t.
Vec3 trajectory_twist(const TrajectorySpec& traj, double t);

/// Builds constant-speed waypoint routes from driving primitives.
class RouteBuilder {
 public:
  RouteBuilder(const Pose2& start, double speed, double t0 = 0.0);
  RouteBuilder& rest(double duration);
  RouteBuilder& straight_to(const Vec2& xy);
  /// Circular arc turning by dyaw (signed) with the given radius.
  RouteBuilder& arc_turn(double dyaw, double radius);
  TrajectorySpec build(const StreamRates& rates = {}) const;

 private:
  std::vector<TimedPose> waypoints_;
  double speed_;
};

struct ScanParams {
  double angle_min = -M_PI;
  double angle_max = M_PI - 2.0 * M_PI / 1440.0;
  double angle_increment = 2.0 * M_PI / 1440.0;  // 0.25 deg
  double range_min = 0.05;
  double range_max = 30.0;
};

struct RaycastResult {
  LaserScan scan;
  std::vector<int> wall_ids;  // per beam, -1 for no return
};

/// Per-beam nearest wall intersection from the given sensor pose. Beams
/// beyond range_max (or the optional clip) are marked no-return. Gaussian
/// range noise is drawn from `rng` when provided.
RaycastResult raycast_scan(const World& world, const Pose2& pose,
                           const ScanParams& params,
                           std::optional<double> range_clip, double noise_sigma,
                           std::mt19937_64* rng = nullptr);

struct ImuGenConfig {
  double gravity_magnitude = 9.81;
  ImuNoise noise;            // densities; zero disables
  bool add_noise = false;
  ImuBias true_bias;
};

/// IMU stream along the trajectory (the trajectory is the IMU body frame):
/// accel = R^T (a_world - g_world), gyro = body rate. Deterministic per rng.
std::vector<ImuSample> generate_imu(const TrajectorySpec& traj,
                                    const ImuGenConfig& cfg,
                                    std::mt19937_64* rng = nullptr);

struct WheelNoiseConfig {
  double slip_frac = 0.0;       // run-constant scale error on distance
  double d_white_frac = 0.0;    // white fraction of each step distance
  double yaw_white_frac = 0.0;  // white fraction of each step rotation
};

/// Cumulative wheel odometry from the trajectory (chassis frame). Stationary
/// steps stay exactly zero-increment.
std::vector<WheelOdomSample> generate_wheel(const TrajectorySpec& traj,
                                            const WheelNoiseConfig& noise,
                                            std::mt19937_64* rng = nullptr);

struct Scenario {
  std::string name;
  World world;
  TrajectorySpec traj;
  Calibration calib;
  std::optional<double> range_clip;
  double scan_noise_sigma = 0.0;
  ImuGenConfig imu_cfg;
  WheelNoiseConfig wheel_noise;
};

/// Bundled scenarios: "square_loop", "corridor_clip", "two_rooms".
Scenario make_scenario(const std::string& name);
std::vector<std::string> scenario_names();

struct GroundTruth {
  std::vector<double> stamps;      // scan stamps
  std::vector<Pose2> body_poses;   // at scan stamps
};

/// In-memory stream generation for a scenario (scans, IMU, wheel),
/// deterministic per seed.
DatasetStreams generate_streams(const Scenario& scenario, uint64_t seed,
                                GroundTruth* gt = nullptr);

/// Writes scan/imu/wheel CSVs, calibration and the ground-truth trajectory
/// (gt.tum, body poses at scan stamps) for a scenario. Fully reproducible
/// for a fixed seed.
void export_dataset(const Scenario& scenario, uint64_t seed,
                    const std::string& out_dir);

}  // namespace slam2d

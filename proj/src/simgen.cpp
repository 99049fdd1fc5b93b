#include "slam2d/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "slam2d/errors.hpp"
#include "slam2d/eval.hpp"

namespace slam2d {

void World::add_wall(const Vec2& a, const Vec2& b) {
  if ((b - a).norm() < 1e-9) {
    throw InvalidArgument("World::add_wall: degenerate segment");
  }
  walls.push_back(Wall{a, b, static_cast<int>(walls.size())});
}

void World::add_box(const Vec2& center, double w, double h, double yaw) {
  const Mat2 R = rot2(yaw);
  const Vec2 dx = R * Vec2(0.5 * w, 0.0);
  const Vec2 dy = R * Vec2(0.0, 0.5 * h);
  const Vec2 c0 = center - dx - dy, c1 = center + dx - dy;
  const Vec2 c2 = center + dx + dy, c3 = center - dx + dy;
  add_wall(c0, c1);
  add_wall(c1, c2);
  add_wall(c2, c3);
  add_wall(c3, c0);
}

void World::add_notched_wall(const Vec2& a, const Vec2& b, double period,
                             double depth, double width,
                             uint64_t jitter_seed) {
  const double length = (b - a).norm();
  const Vec2 dir = (b - a) / length;
  const Vec2 out(-dir.y(), dir.x());  // left of travel = into the wall
  std::mt19937_64 rng(jitter_seed);
  std::uniform_real_distribution<double> jit(-0.2 * period, 0.2 * period);
  // per-notch size variation keeps the corner constellations distinctive
  std::uniform_real_distribution<double> depth_scale(0.7, 1.3);
  std::uniform_real_distribution<double> width_scale(0.7, 1.3);

  double cursor = 0.0;
  double next_center = 0.6 * period + jit(rng);
  while (true) {
    const double w = width * width_scale(rng);
    const double d = depth * depth_scale(rng);
    if (next_center + 0.5 * w + 0.1 >= length) break;
    const double s0 = next_center - 0.5 * w;
    const double s1 = next_center + 0.5 * w;
    add_wall(a + cursor * dir, a + s0 * dir);
    add_wall(a + s0 * dir, a + s0 * dir + d * out);
    add_wall(a + s0 * dir + d * out, a + s1 * dir + d * out);
    add_wall(a + s1 * dir + d * out, a + s1 * dir);
    cursor = s1;
    next_center += period + jit(rng);
  }
  if (cursor < length - 1e-9) {
    add_wall(a + cursor * dir, b);
  }
}

Vec2 World::bounds_min() const {
  Vec2 m(1e18, 1e18);
  for (const auto& w : walls) m = m.cwiseMin(w.a).cwiseMin(w.b);
  return m;
}

Vec2 World::bounds_max() const {
  Vec2 m(-1e18, -1e18);
  for (const auto& w : walls) m = m.cwiseMax(w.a).cwiseMax(w.b);
  return m;
}

namespace {

// Active segment index for time t: the last waypoint with .t <= t.
size_t segment_index(const TrajectorySpec& traj, double t) {
  const auto& wp = traj.waypoints;
  if (wp.size() < 2) throw InvalidArgument("trajectory needs >= 2 waypoints");
  if (t < wp.front().t - 1e-9 || t > wp.back().t + 1e-9) {
    throw OutOfRange("trajectory time outside waypoint span");
  }
  size_t i = 0;
  while (i + 2 < wp.size() && wp[i + 1].t <= t) ++i;
  return i;
}

}  // namespace

Pose2 trajectory_pose(const TrajectorySpec& traj, double t) {
  const size_t i = segment_index(traj, t);
  const TimedPose& a = traj.waypoints[i];
  const TimedPose& b = traj.waypoints[i + 1];
  const double span = b.t - a.t;
  const Vec3 twist = log_se2(compose(inverse(a.pose), b.pose)) / span;
  return compose(a.pose, exp_se2(twist * (t - a.t)));
}

Vec3 trajectory_twist(const TrajectorySpec& traj, double t) {
  const size_t i = segment_index(traj, t);
  const TimedPose& a = traj.waypoints[i];
  const TimedPose& b = traj.waypoints[i + 1];
  return log_se2(compose(inverse(a.pose), b.pose)) / (b.t - a.t);
}

RouteBuilder::RouteBuilder(const Pose2& start, double speed, double t0)
    : speed_(speed) {
  waypoints_.push_back(TimedPose{t0, start});
}

RouteBuilder& RouteBuilder::rest(double duration) {
  TimedPose next = waypoints_.back();
  next.t += duration;
  waypoints_.push_back(next);
  return *this;
}

RouteBuilder& RouteBuilder::straight_to(const Vec2& xy) {
  const TimedPose& prev = waypoints_.back();
  const double dist = (xy - prev.pose.xy).norm();
  TimedPose next;
  next.t = prev.t + dist / speed_;
  next.pose = Pose2(prev.pose.yaw, xy);
  waypoints_.push_back(next);
  return *this;
}

RouteBuilder& RouteBuilder::arc_turn(double dyaw, double radius) {
  const TimedPose& prev = waypoints_.back();
  const double arc_len = std::abs(dyaw) * radius;
  // Center sits perpendicular to the heading, on the turn side.
  const double side = dyaw >= 0.0 ? 1.0 : -1.0;
  const Vec2 center =
      prev.pose.xy + rot2(prev.pose.yaw) * Vec2(0.0, side * radius);
  const Vec2 radial = prev.pose.xy - center;
  TimedPose next;
  next.t = prev.t + arc_len / speed_;
  next.pose.yaw = wrap_angle(prev.pose.yaw + dyaw);
  next.pose.xy = center + rot2(dyaw) * radial;
  waypoints_.push_back(next);
  return *this;
}

TrajectorySpec RouteBuilder::build(const StreamRates& rates) const {
  TrajectorySpec traj;
  traj.waypoints = waypoints_;
  traj.rates = rates;
  return traj;
}

RaycastResult raycast_scan(const World& world, const Pose2& pose,
                           const ScanParams& params,
                           std::optional<double> range_clip, double noise_sigma,
                           std::mt19937_64* rng) {
  const Vec2 lo = world.bounds_min(), hi = world.bounds_max();
  if (pose.xy.x() < lo.x() - 1e-6 || pose.xy.x() > hi.x() + 1e-6 ||
      pose.xy.y() < lo.y() - 1e-6 || pose.xy.y() > hi.y() + 1e-6) {
    throw InvalidArgument("raycast_scan: pose outside world bounds");
  }
  const int n = static_cast<int>(std::lround(
                    (params.angle_max - params.angle_min) /
                    params.angle_increment)) + 1;
  RaycastResult out;
  out.scan.stamp = 0.0;
  out.scan.angle_min = params.angle_min;
  out.scan.angle_max = params.angle_max;
  out.scan.angle_increment = params.angle_increment;
  out.scan.range_min = params.range_min;
  out.scan.range_max =
      range_clip ? std::min(*range_clip, params.range_max) : params.range_max;
  out.scan.ranges.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.wall_ids.assign(n, -1);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double limit = out.scan.range_max;
  for (int i = 0; i < n; ++i) {
    const double phi = pose.yaw + params.angle_min + i * params.angle_increment;
    const Vec2 dir(std::cos(phi), std::sin(phi));
    double best_t = std::numeric_limits<double>::infinity();
    int best_id = -1;
    for (const auto& wall : world.walls) {
      const Vec2 e = wall.b - wall.a;
      const double denom = dir.x() * e.y() - dir.y() * e.x();
      if (std::abs(denom) < 1e-12) continue;  // parallel
      const Vec2 ao = wall.a - pose.xy;
      const double t = (ao.x() * e.y() - ao.y() * e.x()) / denom;
      const double s = (ao.x() * dir.y() - ao.y() * dir.x()) / denom;
      if (t > 1e-9 && s >= 0.0 && s <= 1.0 && t < best_t) {
        best_t = t;
        best_id = wall.id;
      }
    }
    if (best_id < 0 || best_t > limit) continue;
    double r = best_t;
    if (noise_sigma > 0.0 && rng) r += noise_sigma * gauss(*rng);
    if (r < params.range_min) r = params.range_min;
    if (r > limit) r = limit;
    out.scan.ranges[i] = r;
    out.wall_ids[i] = best_id;
  }
  return out;
}

std::vector<ImuSample> generate_imu(const TrajectorySpec& traj,
                                    const ImuGenConfig& cfg,
                                    std::mt19937_64* rng) {
  const double dt = 1.0 / traj.rates.imu_hz;
  const int64_t period_ns = static_cast<int64_t>(std::llround(1e9 * dt));
  const int64_t t0_ns =
      static_cast<int64_t>(std::llround(1e9 * traj.t_begin()));
  const int64_t t1_ns = static_cast<int64_t>(std::llround(1e9 * traj.t_end()));
  const Vec3 g_world(0.0, 0.0, -cfg.gravity_magnitude);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sa = cfg.noise.accel_density * std::sqrt(traj.rates.imu_hz);
  const double sg = cfg.noise.gyro_density * std::sqrt(traj.rates.imu_hz);

  std::vector<ImuSample> out;
  for (int64_t ns = t0_ns; ns <= t1_ns; ns += period_ns) {
    const double t = static_cast<double>(ns) / 1e9;
    const Pose2 pose = trajectory_pose(traj, std::min(t, traj.t_end()));
    const Vec3 twist = trajectory_twist(traj, std::min(t, traj.t_end()));
    // Constant body twist: world accel is the centripetal term only.
    const Vec2 v_body(twist[0], twist[1]);
    const double w = twist[2];
    const Vec2 a_body2(-w * v_body.y(), w * v_body.x());  // J * v, body frame
    const Vec3 a_world(0.0, 0.0, 0.0);
    (void)a_world;
    const Mat3 R = exp_so3(RotVec(0.0, 0.0, pose.yaw));
    const Vec3 a_w3 =
        R * Vec3(a_body2.x(), a_body2.y(), 0.0);  // rotate to world

    ImuSample s;
    s.stamp = t;
    s.accel = R.transpose() * (a_w3 - g_world) + cfg.true_bias.accel;
    s.gyro = Vec3(0.0, 0.0, w) + cfg.true_bias.gyro;
    if (cfg.add_noise && rng) {
      s.accel += sa * Vec3(gauss(*rng), gauss(*rng), gauss(*rng));
      s.gyro += sg * Vec3(gauss(*rng), gauss(*rng), gauss(*rng));
    }
    out.push_back(s);
  }
  return out;
}

std::vector<WheelOdomSample> generate_wheel(const TrajectorySpec& traj,
                                            const WheelNoiseConfig& noise,
                                            std::mt19937_64* rng) {
  const double dt = 1.0 / traj.rates.wheel_hz;
  const int64_t period_ns = static_cast<int64_t>(std::llround(1e9 * dt));
  const int64_t t0_ns =
      static_cast<int64_t>(std::llround(1e9 * traj.t_begin()));
  const int64_t t1_ns = static_cast<int64_t>(std::llround(1e9 * traj.t_end()));

  std::normal_distribution<double> gauss(0.0, 1.0);
  double slip = 0.0;
  if (rng && noise.slip_frac > 0.0) slip = noise.slip_frac * gauss(*rng);

  std::vector<WheelOdomSample> out;
  Pose2 accumulated = trajectory_pose(traj, traj.t_begin());
  Pose2 prev_true = accumulated;
  for (int64_t ns = t0_ns; ns <= t1_ns; ns += period_ns) {
    const double t = static_cast<double>(ns) / 1e9;
    const Pose2 cur_true = trajectory_pose(traj, std::min(t, traj.t_end()));
    if (ns != t0_ns) {
      Pose2 inc = compose(inverse(prev_true), cur_true);
      const double d = inc.xy.norm();
      if (d > 0.0 || std::abs(inc.yaw) > 0.0) {
        double scale = 1.0 + slip;
        if (rng && noise.d_white_frac > 0.0) {
          scale += noise.d_white_frac * gauss(*rng);
        }
        inc.xy *= scale;
        if (rng && noise.yaw_white_frac > 0.0 && std::abs(inc.yaw) > 0.0) {
          inc.yaw *= 1.0 + noise.yaw_white_frac * gauss(*rng);
        }
      }
      accumulated = compose(accumulated, inc);
      prev_true = cur_true;
    }
    WheelOdomSample s;
    s.stamp = t;
    s.pose = to_pose3(accumulated);
    out.push_back(s);
  }
  return out;
}

namespace {

enum Side { kSouth = 1, kEast = 2, kNorth = 4, kWest = 8 };

// Sprinkles small boxes along the inside of a rectangular room to provide
// stable corner features, like shelving against the walls. `sides` is a
// bitmask so walls with doorways can be skipped.
void furnish_room(World& world, const Vec2& lo, const Vec2& hi, double margin,
                  int count, uint64_t pattern_seed,
                  int sides = kSouth | kEast | kNorth | kWest) {
  std::mt19937_64 rng(pattern_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> active;
  for (int s : {kSouth, kEast, kNorth, kWest}) {
    if (sides & s) active.push_back(s);
  }
  for (int i = 0; i < count; ++i) {
    const int side = active[i % active.size()];
    const double f = 0.15 + 0.7 * u01(rng);
    const double w = 0.35 + 0.25 * u01(rng);
    const double h = 0.3 + 0.2 * u01(rng);
    const double yaw = (u01(rng) - 0.5) * 0.5;
    Vec2 c;
    switch (side) {
      case kSouth: c = Vec2(lo.x() + f * (hi.x() - lo.x()), lo.y() + margin); break;
      case kEast: c = Vec2(hi.x() - margin, lo.y() + f * (hi.y() - lo.y())); break;
      case kNorth: c = Vec2(lo.x() + f * (hi.x() - lo.x()), hi.y() - margin); break;
      default: c = Vec2(lo.x() + margin, lo.y() + f * (hi.y() - lo.y())); break;
    }
    world.add_box(c, w, h, yaw);
  }
}

// Constant-speed route through a polyline with circular fillets at the
// vertices; body velocity stays continuous everywhere after the start.
TrajectorySpec smooth_route(const std::vector<Vec2>& pts, double speed,
                            double radius, double rest_duration) {
  const Vec2 first_dir = (pts[1] - pts[0]).normalized();
  RouteBuilder route(Pose2(std::atan2(first_dir.y(), first_dir.x()), pts[0]),
                     speed);
  if (rest_duration > 0.0) route.rest(rest_duration);
  for (size_t i = 1; i + 1 < pts.size(); ++i) {
    const Vec2 in_dir = (pts[i] - pts[i - 1]).normalized();
    const Vec2 out_dir = (pts[i + 1] - pts[i]).normalized();
    const double dyaw = wrap_angle(std::atan2(out_dir.y(), out_dir.x()) -
                                   std::atan2(in_dir.y(), in_dir.x()));
    if (std::abs(dyaw) < 1e-9) continue;
    const double tangent = radius * std::tan(0.5 * std::abs(dyaw));
    route.straight_to(pts[i] - in_dir * tangent);
    route.arc_turn(dyaw, radius);
  }
  route.straight_to(pts.back());
  return route.build();
}

Calibration default_sim_calibration() {
  Calibration c;
  c.T_base_lidar = Pose3(RotVec(0.0, 0.0, 0.0), Vec3(0.08, 0.0, 0.0));
  c.T_imu_base = Pose3::identity();
  c.gravity_magnitude = 9.81;
  return c;
}

Scenario make_square_loop() {
  Scenario s;
  s.name = "square_loop";
  // 10 x 10 room with a 4 x 4 inner block; the robot drives the ring for
  // 1.6 laps (~42 m) so the second lap keeps closing loops against the
  // first. Alcoved walls keep the corner count per scan high.
  World& w = s.world;
  w.name = s.name;
  // outer boundary walked clockwise so the alcoves open away from the room
  w.add_notched_wall({-5, -5}, {-5, 5}, 2.2, 0.35, 0.8, 11);
  w.add_notched_wall({-5, 5}, {5, 5}, 2.2, 0.35, 0.8, 22);
  w.add_notched_wall({5, 5}, {5, -5}, 2.2, 0.35, 0.8, 33);
  w.add_notched_wall({5, -5}, {-5, -5}, 2.2, 0.35, 0.8, 44);
  // inner block counter-clockwise: alcoves cut into the block
  w.add_notched_wall({-2, -2}, {2, -2}, 1.6, 0.3, 0.7, 55);
  w.add_notched_wall({2, -2}, {2, 2}, 1.6, 0.3, 0.7, 66);
  w.add_notched_wall({2, 2}, {-2, 2}, 1.6, 0.3, 0.7, 77);
  w.add_notched_wall({-2, 2}, {-2, -2}, 1.6, 0.3, 0.7, 88);
  // loose clutter in the ring
  w.add_box({-2.4, -2.6}, 0.5, 0.4, 0.2);
  w.add_box({2.6, 0.3}, 0.4, 0.5, -0.15);
  w.add_box({0.4, 2.6}, 0.5, 0.4, 0.1);

  s.traj = smooth_route({{-3.5, -3.5},
                         {3.5, -3.5},
                         {3.5, 3.5},
                         {-3.5, 3.5},
                         {-3.5, -3.5},
                         {3.5, -3.5},
                         {3.5, 3.5},
                         {0.5, 3.5}},
                        0.4, 1.0, 1.0);
  s.calib = default_sim_calibration();
  s.calib.imu_noise.accel_density = 0.04;
  s.calib.imu_noise.gyro_density = 0.003;
  s.scan_noise_sigma = 0.015;
  s.imu_cfg.gravity_magnitude = s.calib.gravity_magnitude;
  s.imu_cfg.noise = s.calib.imu_noise;
  s.imu_cfg.add_noise = true;
  s.imu_cfg.true_bias.accel = Vec3(0.04, -0.02, 0.03);
  s.imu_cfg.true_bias.gyro = Vec3(0.002, -0.001, 0.0015);
  s.wheel_noise.slip_frac = 0.015;
  s.wheel_noise.d_white_frac = 0.02;
  s.wheel_noise.yaw_white_frac = 0.03;
  return s;
}

Scenario make_corridor_clip() {
  Scenario s;
  s.name = "corridor_clip";
  World& w = s.world;
  w.name = s.name;
  // Feature-rich lobby, then a long featureless corridor to the east.
  w.add_notched_wall({2.5, -2.5}, {-2.5, -2.5}, 1.4, 0.3, 0.6, 7);
  w.add_wall({2.5, -2.5}, {2.5, -1.0});  // east wall around the corridor
  w.add_wall({2.5, 1.0}, {2.5, 2.5});
  w.add_notched_wall({-2.5, 2.5}, {2.5, 2.5}, 1.4, 0.3, 0.6, 9);
  w.add_notched_wall({-2.5, -2.5}, {-2.5, 2.5}, 1.4, 0.3, 0.6, 10);
  furnish_room(w, {-2.5, -2.5}, {2.5, 2.5}, 0.45, 5, 777,
               kSouth | kNorth | kWest);
  // corridor walls, 2 m wide, 30 m long, capped
  w.add_wall({2.5, -1.0}, {32.5, -1.0});
  w.add_wall({2.5, 1.0}, {32.5, 1.0});
  w.add_wall({32.5, -1.0}, {32.5, 1.0});

  s.traj = smooth_route({{-1.0, 0.0}, {29.0, 0.0}}, 0.4, 1.0, 1.0);
  s.calib = default_sim_calibration();
  // Degeneracy study: noisier IMU and a tangible accel bias make pure
  // inertial dead-reckoning drift quickly.
  s.calib.imu_noise.accel_density = 0.05;
  s.calib.imu_noise.gyro_density = 0.004;
  s.range_clip = 3.0;
  s.scan_noise_sigma = 0.008;
  s.imu_cfg.gravity_magnitude = s.calib.gravity_magnitude;
  s.imu_cfg.noise = s.calib.imu_noise;
  s.imu_cfg.add_noise = true;
  s.imu_cfg.true_bias.accel = Vec3(0.08, -0.05, 0.04);
  s.imu_cfg.true_bias.gyro = Vec3(0.003, -0.002, 0.002);
  s.wheel_noise.slip_frac = 0.004;
  s.wheel_noise.d_white_frac = 0.008;
  s.wheel_noise.yaw_white_frac = 0.01;
  return s;
}

Scenario make_two_rooms() {
  Scenario s;
  s.name = "two_rooms";
  World& w = s.world;
  w.name = s.name;
  // Room A (west) and room B (east) joined by a short doorway corridor at
  // x in [0, 2], y in [-0.8, 0.8]. Alcoved walls provide corner features;
  // boundaries walk clockwise so alcoves open away from the interiors.
  w.add_notched_wall({0, -4}, {-6, -4}, 1.6, 0.3, 0.7, 1);   // A south
  w.add_wall({0, -4}, {0, -0.8});
  w.add_wall({0, 0.8}, {0, 4});
  w.add_notched_wall({-6, 4}, {0, 4}, 1.6, 0.3, 0.7, 2);     // A north
  w.add_notched_wall({-6, -4}, {-6, 4}, 1.6, 0.3, 0.7, 3);   // A west
  w.add_wall({0, -0.8}, {2, -0.8});
  w.add_wall({0, 0.8}, {2, 0.8});
  w.add_wall({2, -0.8}, {2, -4});
  w.add_notched_wall({8, -4}, {2, -4}, 1.6, 0.3, 0.7, 4);    // B south
  w.add_notched_wall({8, 4}, {8, -4}, 1.6, 0.3, 0.7, 5);     // B east
  w.add_notched_wall({2, 4}, {8, 4}, 1.6, 0.3, 0.7, 6);      // B north
  w.add_wall({2, 4}, {2, 0.8});
  furnish_room(w, {-6, -4}, {0, 4}, 0.5, 6, 4242, kSouth | kNorth | kWest);
  furnish_room(w, {2, -4}, {8, 4}, 0.5, 6, 999, kSouth | kEast | kNorth);

  s.traj = smooth_route({{-4.0, -2.8},
                         {-1.4, -2.8},
                         {-1.4, 2.8},
                         {-4.9, 2.8},
                         {-4.9, 0.0},
                         {5.0, 0.0},
                         {5.0, -2.7},
                         {6.8, -2.7},
                         {6.8, 2.7},
                         {4.2, 2.7},
                         {4.2, 0.3},
                         {-2.0, 0.3},
                         {-4.2, -2.2}},
                        0.35, 0.7, 1.0);
  s.calib = default_sim_calibration();
  s.scan_noise_sigma = 0.006;
  s.imu_cfg.gravity_magnitude = s.calib.gravity_magnitude;
  s.imu_cfg.noise = s.calib.imu_noise;
  s.imu_cfg.add_noise = true;
  s.imu_cfg.true_bias.accel = Vec3(0.03, -0.02, 0.02);
  s.imu_cfg.true_bias.gyro = Vec3(0.0015, -0.001, 0.001);
  s.wheel_noise.slip_frac = 0.004;
  s.wheel_noise.d_white_frac = 0.008;
  s.wheel_noise.yaw_white_frac = 0.008;
  return s;
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"square_loop", "corridor_clip", "two_rooms"};
}

Scenario make_scenario(const std::string& name) {
  if (name == "square_loop") return make_square_loop();
  if (name == "corridor_clip") return make_corridor_clip();
  if (name == "two_rooms") return make_two_rooms();
  throw InvalidArgument("unknown scenario: " + name);
}

DatasetStreams generate_streams(const Scenario& scenario, uint64_t seed,
                                GroundTruth* gt) {
  std::mt19937_64 rng(seed);

  DatasetStreams data;
  data.calib = scenario.calib;
  data.imu = generate_imu(scenario.traj, scenario.imu_cfg, &rng);
  data.wheel = generate_wheel(scenario.traj, scenario.wheel_noise, &rng);

  const Pose2 lidar_in_base_2d = to_pose2(scenario.calib.T_base_lidar);
  const Pose2 base_in_body_2d = to_pose2(inverse(scenario.calib.T_imu_base));
  const double dt = 1.0 / scenario.traj.rates.scan_hz;
  const int64_t period_ns = static_cast<int64_t>(std::llround(1e9 * dt));
  const int64_t t0_ns =
      static_cast<int64_t>(std::llround(1e9 * scenario.traj.t_begin()));
  const int64_t t1_ns =
      static_cast<int64_t>(std::llround(1e9 * scenario.traj.t_end()));

  ScanParams params;
  for (int64_t ns = t0_ns; ns <= t1_ns; ns += period_ns) {
    const double t = static_cast<double>(ns) / 1e9;
    const Pose2 body = trajectory_pose(scenario.traj, t);
    // body -> base -> lidar
    const Pose2 base = compose(body, base_in_body_2d);
    const Pose2 lidar = compose(base, lidar_in_base_2d);
    RaycastResult rc = raycast_scan(scenario.world, lidar, params,
                                    scenario.range_clip,
                                    scenario.scan_noise_sigma, &rng);
    rc.scan.stamp = t;
    data.scans.push_back(std::move(rc.scan));
    if (gt) {
      gt->stamps.push_back(t);
      gt->body_poses.push_back(body);
    }
  }
  return data;
}

void export_dataset(const Scenario& scenario, uint64_t seed,
                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  GroundTruth gt;
  const DatasetStreams data = generate_streams(scenario, seed, &gt);

  Trajectory traj;
  for (size_t i = 0; i < gt.stamps.size(); ++i) {
    TrajectorySample s;
    s.stamp = gt.stamps[i];
    s.pose = to_pose3(gt.body_poses[i]);
    traj.samples.push_back(s);
  }
  save_dataset(out_dir, data);
  write_tum((fs::path(out_dir) / "gt.tum").string(), traj);
}

}  // namespace slam2d

#include "slam2d/frontend.hpp"

#include <algorithm>
#include <cmath>

#include "slam2d/errors.hpp"
#include "slam2d/solver.hpp"

namespace slam2d {

namespace {

uint64_t cell_key(int bucket, int ix, int iy) {
  return (static_cast<uint64_t>(bucket) << 48) ^
         (static_cast<uint64_t>(static_cast<uint32_t>(ix + (1 << 23))) << 24) ^
         static_cast<uint64_t>(static_cast<uint32_t>(iy + (1 << 23)));
}

Eigen::Matrix<double, 15, 15> prior_sqrt_info(const FrontendConfig& cfg) {
  Eigen::Matrix<double, 15, 15> s = Eigen::Matrix<double, 15, 15>::Zero();
  auto block = [&](int row, double sigma) {
    for (int k = 0; k < 3; ++k) s(row + k, row + k) = 1.0 / sigma;
  };
  block(0, cfg.prior_sigma_p);
  block(3, cfg.prior_sigma_theta);
  block(6, cfg.prior_sigma_v);
  block(9, cfg.prior_sigma_ba);
  block(12, cfg.prior_sigma_bg);
  return s;
}

}  // namespace

void ReferenceFrame::clear(int cap) {
  anchor = State{};
  has_anchor = false;
  accumulation_count = 0;
  capacity = cap;
  lines.clear();
  cells.clear();
  index.build(&lines);
}

int ReferenceFrame::absorb(const std::vector<LineSegment>& lines_in_anchor,
                           double cell_size, int max_cells) {
  int inserted = 0;
  for (const auto& seg : lines_in_anchor) {
    const Vec2 mid = seg.midpoint();
    const uint64_t key =
        cell_key(LineMap::bucket_of(seg.normal_angle()),
                 static_cast<int>(std::floor(mid.x() / cell_size)),
                 static_cast<int>(std::floor(mid.y() / cell_size)));
    if (cells.count(key)) continue;  // occupied cells stay unchanged
    if (static_cast<int>(cells.size()) >= max_cells) continue;
    cells.emplace(key, static_cast<int>(lines.size()));
    lines.push_back(seg);
    ++inserted;
  }
  ++accumulation_count;
  index.build(&lines);
  return inserted;
}

Frontend::Frontend(const FrontendConfig& cfg, const Calibration& calib)
    : cfg_(cfg), calib_(calib) {
  reference_.clear(cfg.reference_capacity);
  backup_.clear(cfg.reference_capacity);
  gravity_.g_world = Vec3(0.0, 0.0, -calib.gravity_magnitude);
}

Pose3 Frontend::lidar_pose(const State& s) const {
  return compose(s.pose(), calib_.body_from_lidar());
}

void Frontend::apply_correction(const Pose2& offset) {
  std::lock_guard<std::mutex> lock(correction_mutex_);
  if (pending_correction_) {
    pending_correction_ = compose(offset, *pending_correction_);
  } else {
    pending_correction_ = offset;
  }
}

void Frontend::adopt_pending_correction() {
  std::optional<Pose2> offset;
  {
    std::lock_guard<std::mutex> lock(correction_mutex_);
    offset.swap(pending_correction_);
  }
  if (!offset) return;
  const Pose3 O = to_pose3(*offset);
  const Mat3 R_o = exp_so3(O.rotation);
  auto shift = [&](State& s) {
    s.p = R_o * s.p + O.translation;
    s.theta = log_so3(R_o * exp_so3(s.theta));
    s.v = R_o * s.v;
  };
  for (auto& frame : window_) shift(frame.state);
  if (reference_.has_anchor) shift(reference_.anchor);
  if (backup_.has_anchor) shift(backup_.anchor);
  if (has_last_keyframe_) last_keyframe_pose_ = compose(O, last_keyframe_pose_);
}

std::vector<LineMatch> Frontend::match_against_reference(
    const std::vector<LineSegment>& lines, const State& state_guess) const {
  if (!reference_.has_anchor || reference_.lines.empty()) return {};
  const Pose3 T_guess = compose(inverse(lidar_pose(reference_.anchor)),
                                lidar_pose(state_guess));
  return match_lines(lines, reference_.lines, &reference_.index, T_guess,
                     cfg_.match);
}

State Frontend::predict_state(const FrameBundle& bundle) const {
  const State& prev = window_.back().state;
  const double dt = bundle.scan_stamp - prev.stamp;
  State next = prev;
  next.stamp = bundle.scan_stamp;
  if (dt <= 0.0) return next;

  if (cfg_.use_wheel && bundle.wheel_ok) {
    const Pose3 T_wo_prev = compose(prev.pose(), calib_.T_imu_base);
    const Pose3 T_wo = compose(T_wo_prev, bundle.wheel_rel_pose);
    const Pose3 T_wb = compose(T_wo, inverse(calib_.T_imu_base));
    next.p = T_wb.translation;
    next.theta = T_wb.rotation;
    next.v = (next.p - prev.p) / dt;
  } else if (bundle.imu_ok && bundle.imu_segment.size() >= 2) {
    const Preintegration pre =
        integrate(bundle.imu_segment, prev.bias, calib_.imu_noise);
    const Mat3 R_prev = exp_so3(prev.theta);
    next.theta = log_so3(R_prev * pre.gamma);
    next.p = prev.p + prev.v * dt + 0.5 * gravity_.g_world * dt * dt +
             R_prev * pre.alpha;
    next.v = prev.v + gravity_.g_world * dt + R_prev * pre.beta;
  } else {
    next.p = prev.p + prev.v * dt;
  }
  return next;
}

std::optional<Keyframe> Frontend::emit_keyframe(const FrameBundle& bundle,
                                                const State& state) {
  bool emit = !has_last_keyframe_;
  if (!emit) {
    const Pose3 rel = compose(inverse(last_keyframe_pose_), state.pose());
    const double trans = rel.translation.norm();
    const double rot = canonical(rel.rotation).angle();
    const double elapsed = state.stamp - last_keyframe_stamp_;
    emit = trans >= cfg_.keyframe_trans || rot >= cfg_.keyframe_rot ||
           elapsed >= cfg_.keyframe_time;
  }
  if (!emit) return std::nullopt;

  Keyframe kf;
  kf.id = next_keyframe_id_++;
  kf.stamp = state.stamp;
  kf.state = state;
  kf.corners = bundle.corners;
  const size_t n = bundle.scan_points.size();
  const size_t stride =
      std::max<size_t>(1, (n + cfg_.keyframe_max_points - 1) /
                              std::max(1, cfg_.keyframe_max_points));
  for (size_t i = 0; i < n; i += stride) {
    kf.scan_points.push_back(bundle.scan_points[i]);
  }
  has_last_keyframe_ = true;
  last_keyframe_pose_ = state.pose();
  last_keyframe_stamp_ = state.stamp;
  return kf;
}

void Frontend::update_reference(const FrameBundle& bundle, const State& state) {
  auto absorb_into = [&](ReferenceFrame& ref) {
    if (!ref.has_anchor) {
      ref.anchor = state;
      ref.has_anchor = true;
      ref.absorb(bundle.lines, cfg_.reference_cell_size,
                 cfg_.reference_max_cells);
      return;
    }
    const Pose3 T = compose(inverse(lidar_pose(ref.anchor)),
                            lidar_pose(state));
    std::vector<LineSegment> mapped;
    mapped.reserve(bundle.lines.size());
    for (const auto& seg : bundle.lines) {
      try {
        mapped.push_back(transform_segment(T, seg));
      } catch (const DegenerateGeometry&) {
      }
    }
    ref.absorb(mapped, cfg_.reference_cell_size, cfg_.reference_max_cells);
  };

  absorb_into(reference_);
  if (reference_.accumulation_count > reference_.capacity / 2) {
    absorb_into(backup_);
  }
  if (reference_.accumulation_count >= reference_.capacity) {
    reference_ = std::move(backup_);
    backup_ = ReferenceFrame{};
    backup_.clear(cfg_.reference_capacity);
    if (!reference_.has_anchor) {
      // backup never started (tiny capacity); restart from the next frame
      reference_.clear(cfg_.reference_capacity);
    }
  }
}

void Frontend::solve_window(bool anchor_first_frame) {
  Problem problem;
  struct Slots {
    int p, th, v, ba, bg;
  };
  std::vector<Slots> slots(window_.size());
  for (size_t i = 0; i < window_.size(); ++i) {
    const State& s = window_[i].state;
    const bool fix_pose = i == 0;  // oldest pose anchored
    slots[i].p = problem.add_slot(SlotKind::Vector, s.p, fix_pose);
    slots[i].th = problem.add_slot(SlotKind::RotVec,
                                   canonical(s.theta).axis_angle, fix_pose);
    slots[i].v = problem.add_slot(SlotKind::Vector, s.v);
    slots[i].ba = problem.add_slot(SlotKind::Vector, s.bias.accel);
    slots[i].bg = problem.add_slot(SlotKind::Vector, s.bias.gyro);
  }

  int anchor_p, anchor_th;
  if (anchor_first_frame) {
    anchor_p = slots[0].p;
    anchor_th = slots[0].th;
  } else {
    anchor_p = problem.add_slot(SlotKind::Vector, reference_.anchor.p, true);
    anchor_th = problem.add_slot(
        SlotKind::RotVec, canonical(reference_.anchor.theta).axis_angle, true);
  }

  for (size_t i = 0; i < window_.size(); ++i) {
    if (anchor_first_frame && i == 0) continue;
    std::vector<LineMatch> matches;
    if (anchor_first_frame) {
      const Pose3 T_guess = compose(inverse(lidar_pose(window_[0].state)),
                                    lidar_pose(window_[i].state));
      matches = match_lines(window_[i].bundle.lines, window_[0].bundle.lines,
                            nullptr, T_guess, cfg_.match);
    } else {
      matches = match_against_reference(window_[i].bundle.lines,
                                        window_[i].state);
    }
    for (const auto& m : matches) {
      problem.add_block(make_line_block(m, anchor_p, anchor_th, slots[i].p,
                                        slots[i].th, calib_, cfg_.robust_lines,
                                        cfg_.huber_delta));
    }
  }

  for (size_t i = 1; i < window_.size(); ++i) {
    if (window_[i].has_pre) {
      problem.add_block(make_imu_block(
          window_[i].pre, gravity_, calib_.imu_noise,
          {slots[i - 1].p, slots[i - 1].th, slots[i - 1].v, slots[i - 1].ba,
           slots[i - 1].bg, slots[i].p, slots[i].th, slots[i].v, slots[i].ba,
           slots[i].bg}));
    }
    if (cfg_.use_wheel && window_[i].bundle.wheel_ok) {
      problem.add_block(make_wheel_block(window_[i].bundle.wheel_increment,
                                         slots[i - 1].p, slots[i - 1].th,
                                         slots[i].p, slots[i].th, calib_));
    }
  }
  if (cfg_.use_ground) {
    for (size_t i = 0; i < window_.size(); ++i) {
      problem.add_block(make_ground_block(slots[i].p, slots[i].th, calib_));
    }
  }
  problem.add_block(make_prior_block(
      window_[0].state, prior_sqrt_info(cfg_),
      {slots[0].p, slots[0].th, slots[0].v, slots[0].ba, slots[0].bg}));

  SolveOptions opts;
  opts.max_iters = cfg_.solver_max_iters;
  opts.tol_grad = 1e-9;
  opts.tol_step = 1e-10;
  solve(problem, opts);

  for (size_t i = 0; i < window_.size(); ++i) {
    State& s = window_[i].state;
    s.p = problem.slot_value(slots[i].p);
    s.theta = canonical(RotVec(Vec3(problem.slot_value(slots[i].th))));
    s.v = problem.slot_value(slots[i].v);
    s.bias.accel = problem.slot_value(slots[i].ba);
    s.bias.gyro = problem.slot_value(slots[i].bg);
  }
}

void Frontend::track_frame(const FrameBundle& bundle, Result& result) {
  // Inter-frame factors only make sense when the bundle segment starts at
  // the previous tracked frame (a dropped frame breaks the chain).
  const bool contiguous =
      std::abs(window_.back().state.stamp - bundle.prev_stamp) < 1e-6;
  WindowFrame frame;
  frame.bundle = bundle;
  if (!contiguous) frame.bundle.wheel_ok = false;
  frame.state = predict_state(frame.bundle);
  if (contiguous && bundle.imu_ok && bundle.imu_segment.size() >= 2) {
    frame.pre = integrate(bundle.imu_segment, window_.back().state.bias,
                          calib_.imu_noise);
    frame.has_pre = true;
  }
  window_.push_back(std::move(frame));
  while (static_cast<int>(window_.size()) > cfg_.window_size) {
    window_.pop_front();
  }

  const auto matches =
      match_against_reference(bundle.lines, window_.back().state);
  result.line_matches = static_cast<int>(matches.size());

  const bool degraded =
      result.line_matches < 3 && !(cfg_.use_wheel && bundle.wheel_ok);
  if (degraded) {
    result.degraded = true;  // dead-reckoned state, no window solve
  } else {
    try {
      solve_window(false);
    } catch (const SingularSystem&) {
      result.degraded = true;  // keep predictions
    }
  }

  result.tracked = true;
  result.state = window_.back().state;

  if (!result.degraded) {
    update_reference(bundle, result.state);
  }
  if (auto kf = emit_keyframe(bundle, result.state)) {
    result.keyframes.push_back(std::move(*kf));
  }
}

bool Frontend::try_initialize(Result& result) {
  const FrameBundle& frame0 = init_buffer_.front();
  if (static_cast<int>(frame0.lines.size()) < cfg_.init_min_matches) {
    init_buffer_.clear();
    return false;
  }

  // Wheel-chained pose guesses (chassis frame), frame 0 at the origin.
  const int k = static_cast<int>(init_buffer_.size());
  std::vector<Pose3> chassis(k, Pose3::identity());
  for (int i = 1; i < k; ++i) {
    chassis[i] = compose(chassis[i - 1], init_buffer_[i].wheel_rel_pose);
  }
  const Pose3 T_ol = calib_.T_base_lidar;
  LineMap frame0_index;
  frame0_index.build(&frame0.lines);
  std::vector<std::vector<LineMatch>> matches(k);
  for (int i = 1; i < k; ++i) {
    const Pose3 T_guess = compose(compose(inverse(T_ol), chassis[i]), T_ol);
    matches[i] = match_lines(init_buffer_[i].lines, frame0.lines,
                             &frame0_index, T_guess, cfg_.match);
    if (static_cast<int>(matches[i].size()) < cfg_.init_min_matches) {
      init_buffer_.clear();
      return false;
    }
  }

  // Gravity and initial biases from the stationary prefix.
  Vec3 accel_mean, gyro_mean;
  if (rest_samples_ > 0) {
    accel_mean = rest_accel_sum_ / rest_samples_;
    gyro_mean = rest_gyro_sum_ / rest_samples_;
  } else {
    accel_mean = Vec3::Zero();
    gyro_mean = Vec3::Zero();
    int n = 0;
    for (const auto& s : frame0.imu_segment) {
      accel_mean += s.accel;
      gyro_mean += s.gyro;
      ++n;
    }
    if (n == 0) {
      init_buffer_.clear();
      return false;
    }
    accel_mean /= n;
    gyro_mean /= n;
  }
  gravity_.g_world =
      -accel_mean.normalized() * calib_.gravity_magnitude;
  init_bias_.accel = accel_mean + gravity_.g_world;
  init_bias_.gyro = gyro_mean;

  // Initial states chained from wheel odometry.
  std::vector<State> states(k);
  const Pose3 T_bo = calib_.T_imu_base;
  for (int i = 0; i < k; ++i) {
    const Pose3 T_wb = compose(compose(T_bo, chassis[i]), inverse(T_bo));
    states[i].p = T_wb.translation;
    states[i].theta = T_wb.rotation;
    states[i].bias = init_bias_;
    states[i].stamp = init_buffer_[i].scan_stamp;
  }
  for (int i = 1; i < k; ++i) {
    const double dt = states[i].stamp - states[i - 1].stamp;
    states[i].v = dt > 0.0 ? Vec3((states[i].p - states[i - 1].p) / dt)
                           : Vec3::Zero();
  }
  states[0].v = states[1].v;

  std::vector<Preintegration> pres(k);
  std::vector<bool> has_pre(k, false);
  for (int i = 1; i < k; ++i) {
    if (init_buffer_[i].imu_ok && init_buffer_[i].imu_segment.size() >= 2) {
      pres[i] = integrate(init_buffer_[i].imu_segment, init_bias_,
                          calib_.imu_noise);
      has_pre[i] = true;
    }
  }

  // Joint optimization over the buffer, first pose fixed at the origin.
  Problem problem;
  struct Slots {
    int p, th, v, ba, bg;
  };
  std::vector<Slots> slots(k);
  for (int i = 0; i < k; ++i) {
    const bool fix = i == 0;
    slots[i].p = problem.add_slot(SlotKind::Vector, states[i].p, fix);
    slots[i].th = problem.add_slot(SlotKind::RotVec,
                                   canonical(states[i].theta).axis_angle, fix);
    slots[i].v = problem.add_slot(SlotKind::Vector, states[i].v);
    slots[i].ba = problem.add_slot(SlotKind::Vector, states[i].bias.accel);
    slots[i].bg = problem.add_slot(SlotKind::Vector, states[i].bias.gyro);
  }
  for (int i = 1; i < k; ++i) {
    for (const auto& m : matches[i]) {
      problem.add_block(make_line_block(m, slots[0].p, slots[0].th, slots[i].p,
                                        slots[i].th, calib_, cfg_.robust_lines,
                                        cfg_.huber_delta));
    }
    if (has_pre[i]) {
      problem.add_block(make_imu_block(
          pres[i], gravity_, calib_.imu_noise,
          {slots[i - 1].p, slots[i - 1].th, slots[i - 1].v, slots[i - 1].ba,
           slots[i - 1].bg, slots[i].p, slots[i].th, slots[i].v, slots[i].ba,
           slots[i].bg}));
    }
    if (cfg_.use_wheel && init_buffer_[i].wheel_ok) {
      problem.add_block(make_wheel_block(init_buffer_[i].wheel_increment,
                                         slots[i - 1].p, slots[i - 1].th,
                                         slots[i].p, slots[i].th, calib_));
    }
  }
  if (cfg_.use_ground) {
    for (int i = 0; i < k; ++i) {
      problem.add_block(make_ground_block(slots[i].p, slots[i].th, calib_));
    }
  }
  problem.add_block(make_prior_block(
      states[0], prior_sqrt_info(cfg_),
      {slots[0].p, slots[0].th, slots[0].v, slots[0].ba, slots[0].bg}));

  SolveOptions opts;
  opts.max_iters = 15;
  SolveResult solve_result;
  try {
    solve_result = solve(problem, opts);
  } catch (const SingularSystem&) {
    init_buffer_.clear();
    return false;
  }
  if (solve_result.final_cost > solve_result.initial_cost) {
    init_buffer_.clear();
    return false;
  }

  for (int i = 0; i < k; ++i) {
    states[i].p = problem.slot_value(slots[i].p);
    states[i].theta = canonical(RotVec(Vec3(problem.slot_value(slots[i].th))));
    states[i].v = problem.slot_value(slots[i].v);
    states[i].bias.accel = problem.slot_value(slots[i].ba);
    states[i].bias.gyro = problem.slot_value(slots[i].bg);
  }

  // Seed the reference with frame 0, then flow the remaining frames through
  // the normal accumulation protocol.
  reference_.clear(cfg_.reference_capacity);
  backup_.clear(cfg_.reference_capacity);
  update_reference(frame0, states[0]);
  for (int i = 1; i < k; ++i) {
    update_reference(init_buffer_[i], states[i]);
  }

  window_.clear();
  const int first = std::max(0, k - cfg_.window_size);
  for (int i = first; i < k; ++i) {
    WindowFrame frame;
    frame.bundle = init_buffer_[i];
    frame.state = states[i];
    if (has_pre[i]) {
      frame.pre = pres[i];
      frame.has_pre = true;
    }
    window_.push_back(std::move(frame));
  }

  for (int i = 0; i < k; ++i) {
    result.backfill_states.push_back(states[i]);
    if (auto kf = emit_keyframe(init_buffer_[i], states[i])) {
      result.keyframes.push_back(std::move(*kf));
    }
  }
  result.initialized_now = true;
  result.tracked = true;
  result.state = states[k - 1];
  result.line_matches = static_cast<int>(matches[k - 1].size());
  initialized_ = true;
  init_buffer_.clear();
  return true;
}

Frontend::Result Frontend::process(const FrameBundle& bundle) {
  Result result;
  adopt_pending_correction();

  if (initialized_) {
    track_frame(bundle, result);
    return result;
  }

  const bool stationary = bundle.wheel_ok &&
                          bundle.wheel_increment.d < cfg_.stationary_d &&
                          bundle.wheel_increment.theta < 0.01;
  if (stationary) {
    init_buffer_.clear();  // only consecutive non-stationary frames count
    for (const auto& s : bundle.imu_segment) {
      rest_accel_sum_ += s.accel;
      rest_gyro_sum_ += s.gyro;
      ++rest_samples_;
    }
    return result;
  }

  init_buffer_.push_back(bundle);
  if (static_cast<int>(init_buffer_.size()) < cfg_.init_frames) return result;
  try_initialize(result);
  return result;
}

FrameBundle assemble_bundle(const LaserScan& scan, double prev_stamp,
                            const std::vector<ImuSample>& imu,
                            const std::vector<WheelOdomSample>& wheel,
                            const FeatureConfig& features) {
  FrameBundle bundle;
  bundle.scan_stamp = scan.stamp;
  bundle.prev_stamp = prev_stamp;
  const ScanPoints points = scan_to_points(scan);
  bundle.scan_points = points.points;
  const ScanFeatures f = extract_features(points, features, scan.stamp);
  bundle.lines = f.lines;
  bundle.corners = f.corners;

  try {
    bundle.imu_segment = imu_window(imu, prev_stamp, scan.stamp);
    bundle.imu_ok = bundle.imu_segment.size() >= 2;
  } catch (const Error&) {
    bundle.imu_ok = false;
  }
  try {
    const Pose3 prev_pose = wheel_pose_at(wheel, prev_stamp);
    const Pose3 cur_pose = wheel_pose_at(wheel, scan.stamp);
    bundle.wheel_rel_pose = compose(inverse(prev_pose), cur_pose);
    bundle.wheel_increment = wheel_delta(prev_pose, cur_pose);
    bundle.wheel_ok = true;
  } catch (const Error&) {
    bundle.wheel_ok = false;
  }
  return bundle;
}

}  // namespace slam2d

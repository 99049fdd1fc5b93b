#include "slam2d/factors.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "slam2d/errors.hpp"

namespace slam2d {

LineSegment transform_segment(const Pose3& T, const LineSegment& seg) {
  const Mat3 R = exp_so3(T.rotation);
  auto map2 = [&](const Vec2& p) -> Vec2 {
    const Vec3 q = R * Vec3(p.x(), p.y(), 0.0) + T.translation;
    return q.head<2>();
  };
  LineSegment out = seg;
  out.p_start = map2(seg.p_start);
  out.p_end = map2(seg.p_end);
  const Vec2 dir = out.p_end - out.p_start;
  const double len = dir.norm();
  if (len < 1e-12) {
    throw DegenerateGeometry("transform_segment: zero-length segment");
  }
  Vec2 normal(-dir.y() / len, dir.x() / len);
  if (normal.y() < 0.0 || (normal.y() == 0.0 && normal.x() < 0.0)) {
    normal = -normal;
  }
  out.coeffs << normal.x(), normal.y(), -normal.dot(out.p_start);
  return out;
}

double line_angle(const LineSegment& a, const LineSegment& b) {
  double diff = std::abs(a.normal_angle() - b.normal_angle());
  if (diff > M_PI / 2.0) diff = M_PI - diff;
  return diff;
}

namespace {

// Intersection of the projections onto the reference direction, as a
// fraction of the reference segment length.
double projected_overlap(const LineSegment& ref, const LineSegment& mapped) {
  const Vec2 dir = ref.direction();
  const double r0 = dir.dot(ref.p_start), r1 = dir.dot(ref.p_end);
  const double lo_r = std::min(r0, r1), hi_r = std::max(r0, r1);
  const double c0 = dir.dot(mapped.p_start), c1 = dir.dot(mapped.p_end);
  const double lo_c = std::min(c0, c1), hi_c = std::max(c0, c1);
  const double inter = std::min(hi_r, hi_c) - std::max(lo_r, lo_c);
  const double len = hi_r - lo_r;
  return len > 1e-12 ? std::max(0.0, inter) / len : 0.0;
}

}  // namespace

std::vector<LineMatch> match_lines(const std::vector<LineSegment>& cur_lines,
                                   const std::vector<LineSegment>& ref_lines,
                                   const LineMap* index, const Pose3& T_guess,
                                   const MatchConfig& cfg) {
  std::vector<LineMatch> matches;
  if (ref_lines.empty()) return matches;
  const int spread =
      1 + static_cast<int>(cfg.theta_match / (M_PI / LineMap::kBuckets));
  for (size_t ci = 0; ci < cur_lines.size(); ++ci) {
    LineSegment mapped;
    try {
      mapped = transform_segment(T_guess, cur_lines[ci]);
    } catch (const DegenerateGeometry&) {
      continue;
    }
    std::vector<int> pool;
    if (index) {
      pool = index->candidates(mapped.normal_angle(), spread);
    } else {
      pool.resize(ref_lines.size());
      for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    }
    int best = -1;
    double best_angle = cfg.theta_match;
    for (int ri : pool) {
      const LineSegment& ref = ref_lines[ri];
      const double ang = line_angle(ref, mapped);
      if (ang > best_angle) continue;
      if ((ref.midpoint() - mapped.midpoint()).norm() > cfg.d_match) continue;
      if (projected_overlap(ref, mapped) < cfg.min_overlap) continue;
      best = ri;
      best_angle = ang;
    }
    if (best >= 0) {
      matches.push_back(LineMatch{ref_lines[best], cur_lines[ci], best,
                                  static_cast<int>(ci)});
    }
  }
  return matches;
}

namespace {

struct LinePointChain {
  Vec3 value;  // point in the reference lidar frame
  Mat3 d_pc, d_thc, d_pr, d_thr;
};

// Maps one current-lidar endpoint into the reference lidar frame through
// both states and the body-from-lidar extrinsic; returns value + Jacobians
// w.r.t. the tangent of (p_c, theta_c, p_r, theta_r).
LinePointChain map_endpoint(const Vec2& endpoint, const Mat3& R_r,
                            const Vec3& p_r, const Mat3& R_c, const Vec3& p_c,
                            const Pose3& T_bl) {
  const Mat3 R_bl = exp_so3(T_bl.rotation);
  const Vec3 t_bl = T_bl.translation;
  const Vec3 pt(endpoint.x(), endpoint.y(), 0.0);

  const Vec3 u = R_bl * pt + t_bl;            // current body frame
  const Vec3 pw = R_c * u + p_c;              // world
  const Vec3 y = R_r.transpose() * (pw - p_r);  // reference body frame
  LinePointChain out;
  out.value = R_bl.transpose() * (y - t_bl);  // reference lidar frame

  const Mat3 B = R_bl.transpose() * R_r.transpose();
  out.d_pc = B;
  out.d_thc = -B * R_c * skew(u);
  out.d_pr = -B;
  out.d_thr = R_bl.transpose() * skew(y);
  return out;
}

}  // namespace

Vec2 line_residual(const LineMatch& match, const State& state_r,
                   const State& state_c, const Calibration& calib) {
  if ((match.ref_line.p_end - match.ref_line.p_start).norm() < 1e-12) {
    throw DegenerateGeometry("line_residual: reference endpoints coincide");
  }
  const Pose3 T_bl = calib.body_from_lidar();
  const Pose3 T_rel = compose(inverse(compose(state_r.pose(), T_bl)),
                              compose(state_c.pose(), T_bl));
  const LineSegment mapped = transform_segment(T_rel, match.cur_line);
  return Vec2(match.ref_line.signed_distance(mapped.p_start),
              match.ref_line.signed_distance(mapped.p_end));
}

WheelDelta wheel_delta(const Pose3& pose_i, const Pose3& pose_j) {
  const Pose3 rel = compose(inverse(pose_i), pose_j);
  WheelDelta out;
  out.d = rel.translation.head<2>().norm();
  if (out.d < 1e-6) {
    out.theta_d = 0.0;
    out.degenerate_direction = true;
  } else {
    out.theta_d = std::atan2(rel.translation.y(), rel.translation.x());
  }
  out.theta = canonical(rel.rotation).angle();
  return out;
}

Vec3 wheel_residual(const State& state_k, const State& state_k1,
                    const WheelDelta& measured, const Calibration& calib) {
  const Pose3 T_bo = calib.T_imu_base;
  const WheelDelta pred = wheel_delta(compose(state_k.pose(), T_bo),
                                      compose(state_k1.pose(), T_bo));
  Vec3 r;
  r[0] = measured.d - pred.d;
  if (measured.degenerate_direction && pred.degenerate_direction) {
    r[1] = 0.0;
  } else {
    r[1] = wrap_angle(measured.theta_d - pred.theta_d);
  }
  r[2] = wrap_angle(measured.theta - pred.theta);
  return r;
}

Vec2 ground_residual(const State& state, const Calibration& calib) {
  const Pose3 T_wo = compose(state.pose(), calib.T_imu_base);
  const Mat3 R = exp_so3(T_wo.rotation);
  const Vec3 axis_z = R.col(2);
  // || axis_z x e_z || = hypot(ax, ay), clamped before the arcsin.
  const double s =
      std::min(1.0, std::hypot(axis_z.x(), axis_z.y()));
  return Vec2(T_wo.translation.z(), std::asin(s));
}

Eigen::VectorXd prior_residual(const State& state, const State& prior_mean,
                               const Eigen::Matrix<double, 15, 15>& sqrt_info) {
  Eigen::VectorXd r(15);
  r.segment<3>(0) = state.p - prior_mean.p;
  const Mat3 dR =
      exp_so3(prior_mean.theta).transpose() * exp_so3(state.theta);
  r.segment<3>(3) = log_so3(dR).axis_angle;
  r.segment<3>(6) = state.v - prior_mean.v;
  r.segment<3>(9) = state.bias.accel - prior_mean.bias.accel;
  r.segment<3>(12) = state.bias.gyro - prior_mean.bias.gyro;
  return sqrt_info * r;
}

Eigen::VectorXd imu_residual_raw(const State& state_k, const State& state_k1,
                                 const Preintegration& pre,
                                 const GravityVector& g) {
  const double dt = pre.dt_total;
  const Mat3 R_k = exp_so3(state_k.theta);
  const Mat3 R_k1 = exp_so3(state_k1.theta);

  const Preintegration corr = correct_for_bias(pre, state_k.bias);

  Eigen::VectorXd r(15);
  r.segment<3>(0) =
      R_k.transpose() * (state_k1.p - state_k.p - state_k.v * dt -
                         0.5 * g.g_world * dt * dt) -
      corr.alpha;
  r.segment<3>(3) =
      R_k.transpose() * (state_k1.v - state_k.v - g.g_world * dt) - corr.beta;
  r.segment<3>(6) =
      log_so3(corr.gamma.transpose() * R_k.transpose() * R_k1).axis_angle;
  r.segment<3>(9) = state_k1.bias.accel - state_k.bias.accel;
  r.segment<3>(12) = state_k1.bias.gyro - state_k.bias.gyro;
  return r;
}

Mat3 wheel_covariance(const WheelDelta& measured, const Calibration& calib) {
  const double sd = calib.wheel_sigma.d * std::max(measured.d, 0.05);
  const double st = calib.wheel_sigma.theta * std::max(measured.theta, 0.02);
  Mat3 cov = Mat3::Zero();
  cov(0, 0) = sd * sd;
  cov(1, 1) = calib.wheel_sigma.theta_d * calib.wheel_sigma.theta_d;
  cov(2, 2) = st * st;
  return cov;
}

Eigen::MatrixXd sqrt_info_from_covariance(const Eigen::MatrixXd& cov) {
  Eigen::MatrixXd reg = cov;
  reg.diagonal().array() += 1e-12;
  const Eigen::MatrixXd info = reg.inverse();
  const Eigen::MatrixXd sym = 0.5 * (info + info.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success) {
    // Fall back to a diagonal whitening if the inverse lost definiteness.
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
    s.diagonal() = sym.diagonal().cwiseMax(0.0).cwiseSqrt();
    return s;
  }
  return Eigen::MatrixXd(llt.matrixL().transpose());
}

namespace {

Eigen::Matrix<double, 15, 15> imu_sqrt_info(const Preintegration& pre,
                                            const ImuNoise& noise) {
  Eigen::Matrix<double, 15, 15> cov = Eigen::Matrix<double, 15, 15>::Zero();
  cov.topLeftCorner<9, 9>() = pre.covariance;
  const double qa =
      noise.accel_bias_walk * noise.accel_bias_walk * pre.dt_total;
  const double qg = noise.gyro_bias_walk * noise.gyro_bias_walk * pre.dt_total;
  cov.block<3, 3>(9, 9) = qa * Mat3::Identity();
  cov.block<3, 3>(12, 12) = qg * Mat3::Identity();
  return sqrt_info_from_covariance(cov);
}

}  // namespace

Eigen::VectorXd imu_residual(const State& state_k, const State& state_k1,
                             const Preintegration& pre, const GravityVector& g,
                             const ImuNoise& noise) {
  return imu_sqrt_info(pre, noise) * imu_residual_raw(state_k, state_k1, pre, g);
}

ResidualBlock make_line_block(const LineMatch& match, int p_r, int th_r,
                              int p_c, int th_c, const Calibration& calib,
                              bool robust, double huber_delta) {
  ResidualBlock block;
  block.slots = {p_r, th_r, p_c, th_c};
  block.dimension = 2;
  block.sqrt_info = (1.0 / calib.line_sigma) * Eigen::Matrix2d::Identity();
  block.robust = robust;
  block.huber_delta = huber_delta;
  const LineMatch m = match;
  const Pose3 T_bl = calib.body_from_lidar();
  block.evaluate = [m, T_bl](const std::vector<Eigen::VectorXd>& x,
                             Eigen::VectorXd& r,
                             std::vector<Eigen::MatrixXd>* jac) {
    const Vec3 pr(x[0]), thr(x[1]), pc(x[2]), thc(x[3]);
    const Mat3 R_r = exp_so3(RotVec(thr));
    const Mat3 R_c = exp_so3(RotVec(thc));
    const Vec3 n3(m.ref_line.coeffs[0], m.ref_line.coeffs[1], 0.0);
    const Vec2 endpoints[2] = {m.cur_line.p_start, m.cur_line.p_end};
    for (int i = 0; i < 2; ++i) {
      const LinePointChain chain =
          map_endpoint(endpoints[i], R_r, pr, R_c, pc, T_bl);
      r[i] = n3.dot(chain.value) + m.ref_line.coeffs[2];
      if (jac) {
        (*jac)[0].row(i) = n3.transpose() * chain.d_pr;
        (*jac)[1].row(i) = n3.transpose() * chain.d_thr;
        (*jac)[2].row(i) = n3.transpose() * chain.d_pc;
        (*jac)[3].row(i) = n3.transpose() * chain.d_thc;
      }
    }
  };
  return block;
}

ResidualBlock make_wheel_block(const WheelDelta& measured, int p_k, int th_k,
                               int p_k1, int th_k1, const Calibration& calib) {
  ResidualBlock block;
  block.slots = {p_k, th_k, p_k1, th_k1};
  block.dimension = 3;
  block.sqrt_info = sqrt_info_from_covariance(wheel_covariance(measured, calib));
  const WheelDelta meas = measured;
  const Pose3 T_bo = calib.T_imu_base;
  block.evaluate = [meas, T_bo](const std::vector<Eigen::VectorXd>& x,
                                Eigen::VectorXd& r,
                                std::vector<Eigen::MatrixXd>* jac) {
    const Vec3 pk(x[0]), thk(x[1]), pk1(x[2]), thk1(x[3]);
    const Mat3 R_k = exp_so3(RotVec(thk));
    const Mat3 R_k1 = exp_so3(RotVec(thk1));
    const Mat3 R_bo = exp_so3(T_bo.rotation);
    const Vec3 t_bo = T_bo.translation;

    const Vec3 t_A = R_k * t_bo + pk;
    const Vec3 t_B = R_k1 * t_bo + pk1;
    const Mat3 R_A = R_k * R_bo;
    const Vec3 dp = R_A.transpose() * (t_B - t_A);
    const Mat3 dR = R_bo.transpose() * R_k.transpose() * R_k1 * R_bo;
    const Vec3 phi = log_so3(dR).axis_angle;

    const double d = dp.head<2>().norm();
    const bool degen = d < 1e-6;
    const double theta_d = degen ? 0.0 : std::atan2(dp.y(), dp.x());
    const double theta = phi.norm();

    r[0] = meas.d - d;
    r[1] = (degen && meas.degenerate_direction)
               ? 0.0
               : wrap_angle(meas.theta_d - theta_d);
    r[2] = wrap_angle(meas.theta - theta);

    if (!jac) return;
    // Derivatives of the prediction; the residual negates them.
    Eigen::Matrix<double, 3, 3> ddp_dpk = -R_A.transpose();
    const Vec3 mvec = R_k.transpose() * (t_B - pk);
    Eigen::Matrix<double, 3, 3> ddp_dthk = R_bo.transpose() * skew(mvec);
    Eigen::Matrix<double, 3, 3> ddp_dpk1 = R_A.transpose();
    Eigen::Matrix<double, 3, 3> ddp_dthk1 =
        R_A.transpose() * (-R_k1 * skew(t_bo));

    Eigen::RowVector3d dd_ddp = Eigen::RowVector3d::Zero();
    Eigen::RowVector3d dthd_ddp = Eigen::RowVector3d::Zero();
    if (!degen) {
      dd_ddp << dp.x() / d, dp.y() / d, 0.0;
      dthd_ddp << -dp.y() / (d * d), dp.x() / (d * d), 0.0;
    }

    const Mat3 Jr_inv = right_jacobian_inv_so3(phi);
    const Mat3 dphi_dthk1 = Jr_inv * R_bo.transpose();
    const Mat3 dphi_dthk = -Jr_inv * dR.transpose() * R_bo.transpose();
    Eigen::RowVector3d dth_dphi;
    if (theta > 1e-9) {
      dth_dphi = phi.transpose() / theta;
    } else {
      dth_dphi << 0.0, 0.0, 1.0;  // planar subgradient at zero rotation
    }

    (*jac)[0].row(0) = -(dd_ddp * ddp_dpk);
    (*jac)[1].row(0) = -(dd_ddp * ddp_dthk);
    (*jac)[2].row(0) = -(dd_ddp * ddp_dpk1);
    (*jac)[3].row(0) = -(dd_ddp * ddp_dthk1);

    (*jac)[0].row(1) = -(dthd_ddp * ddp_dpk);
    (*jac)[1].row(1) = -(dthd_ddp * ddp_dthk);
    (*jac)[2].row(1) = -(dthd_ddp * ddp_dpk1);
    (*jac)[3].row(1) = -(dthd_ddp * ddp_dthk1);

    (*jac)[0].row(2).setZero();
    (*jac)[1].row(2) = -(dth_dphi * dphi_dthk);
    (*jac)[2].row(2).setZero();
    (*jac)[3].row(2) = -(dth_dphi * dphi_dthk1);
  };
  return block;
}

ResidualBlock make_ground_block(int p, int th, const Calibration& calib) {
  ResidualBlock block;
  block.slots = {p, th};
  block.dimension = 2;
  Mat2 cov = Mat2::Zero();
  cov(0, 0) = calib.ground_sigma.z_m * calib.ground_sigma.z_m;
  cov(1, 1) = calib.ground_sigma.tilt_rad * calib.ground_sigma.tilt_rad;
  block.sqrt_info = sqrt_info_from_covariance(cov);
  const Pose3 T_bo = calib.T_imu_base;
  block.evaluate = [T_bo](const std::vector<Eigen::VectorXd>& x,
                          Eigen::VectorXd& r,
                          std::vector<Eigen::MatrixXd>* jac) {
    const Vec3 p_(x[0]), th_(x[1]);
    const Mat3 R = exp_so3(RotVec(th_));
    const Mat3 R_bo = exp_so3(T_bo.rotation);
    const Vec3 t_bo = T_bo.translation;
    const Vec3 t_wo = R * t_bo + p_;
    const Mat3 R_wo = R * R_bo;
    const Vec3 axis_z = R_wo.col(2);
    const double s2 = axis_z.x() * axis_z.x() + axis_z.y() * axis_z.y();
    const double s = std::min(1.0, std::sqrt(s2));
    r[0] = t_wo.z();
    r[1] = std::asin(s);
    if (!jac) return;
    (*jac)[0].row(0) << 0.0, 0.0, 1.0;
    (*jac)[1].row(0) = -(Eigen::RowVector3d(0, 0, 1) * R * skew(t_bo));
    (*jac)[0].row(1).setZero();
    if (s > 1e-9) {
      const Mat3 da_dth = -R * skew(R_bo.col(2));
      Eigen::RowVector3d ds_da(axis_z.x() / s, axis_z.y() / s, 0.0);
      const double dasin = 1.0 / std::sqrt(std::max(1.0 - s * s, 1e-12));
      (*jac)[1].row(1) = dasin * (ds_da * da_dth);
    } else {
      (*jac)[1].row(1).setZero();
    }
  };
  return block;
}

ResidualBlock make_imu_block(const Preintegration& pre, const GravityVector& g,
                             const ImuNoise& noise,
                             const std::vector<int>& slots) {
  ResidualBlock block;
  block.slots = slots;
  block.dimension = 15;
  block.sqrt_info = imu_sqrt_info(pre, noise);
  const Preintegration p = pre;
  const Vec3 gw = g.g_world;
  block.evaluate = [p, gw](const std::vector<Eigen::VectorXd>& x,
                           Eigen::VectorXd& r,
                           std::vector<Eigen::MatrixXd>* jac) {
    const Vec3 pk(x[0]), thk(x[1]), vk(x[2]), bak(x[3]), bgk(x[4]);
    const Vec3 pk1(x[5]), thk1(x[6]), vk1(x[7]), bak1(x[8]), bgk1(x[9]);
    const double dt = p.dt_total;
    const Mat3 R_k = exp_so3(RotVec(thk));
    const Mat3 R_k1 = exp_so3(RotVec(thk1));

    const Vec3 dba = bak - p.linearization_bias.accel;
    const Vec3 dbg = bgk - p.linearization_bias.gyro;
    const Mat3 Jaa = p.J_bias.block<3, 3>(0, 0);
    const Mat3 Jag = p.J_bias.block<3, 3>(0, 3);
    const Mat3 Jba = p.J_bias.block<3, 3>(3, 0);
    const Mat3 Jbg = p.J_bias.block<3, 3>(3, 3);
    const Mat3 Jgg = p.J_bias.block<3, 3>(6, 3);

    const Vec3 alpha_c = p.alpha + Jaa * dba + Jag * dbg;
    const Vec3 beta_c = p.beta + Jba * dba + Jbg * dbg;
    const Vec3 u = Jgg * dbg;
    const Mat3 gamma_c = p.gamma * exp_so3(RotVec(u));

    const Vec3 ua = R_k.transpose() *
                    (pk1 - pk - vk * dt - 0.5 * gw * dt * dt);
    const Vec3 ub = R_k.transpose() * (vk1 - vk - gw * dt);
    const Mat3 M = gamma_c.transpose() * R_k.transpose() * R_k1;
    const Vec3 rg = log_so3(M).axis_angle;

    r.segment<3>(0) = ua - alpha_c;
    r.segment<3>(3) = ub - beta_c;
    r.segment<3>(6) = rg;
    r.segment<3>(9) = bak1 - bak;
    r.segment<3>(12) = bgk1 - bgk;

    if (!jac) return;
    for (auto& J : *jac) J.setZero();
    const Mat3 Rkt = R_k.transpose();
    const Mat3 Jr_inv = right_jacobian_inv_so3(rg);

    // alpha rows
    (*jac)[0].block<3, 3>(0, 0) = -Rkt;
    (*jac)[1].block<3, 3>(0, 0) = skew(ua);
    (*jac)[2].block<3, 3>(0, 0) = -Rkt * dt;
    (*jac)[3].block<3, 3>(0, 0) = -Jaa;
    (*jac)[4].block<3, 3>(0, 0) = -Jag;
    (*jac)[5].block<3, 3>(0, 0) = Rkt;
    // beta rows
    (*jac)[1].block<3, 3>(3, 0) = skew(ub);
    (*jac)[2].block<3, 3>(3, 0) = -Rkt;
    (*jac)[3].block<3, 3>(3, 0) = -Jba;
    (*jac)[4].block<3, 3>(3, 0) = -Jbg;
    (*jac)[7].block<3, 3>(3, 0) = Rkt;
    // gamma rows
    (*jac)[1].block<3, 3>(6, 0) = -Jr_inv * R_k1.transpose() * R_k;
    (*jac)[6].block<3, 3>(6, 0) = Jr_inv;
    (*jac)[4].block<3, 3>(6, 0) =
        -Jr_inv * M.transpose() * right_jacobian_so3(u) * Jgg;
    // bias rows
    (*jac)[3].block<3, 3>(9, 0) = -Mat3::Identity();
    (*jac)[8].block<3, 3>(9, 0) = Mat3::Identity();
    (*jac)[4].block<3, 3>(12, 0) = -Mat3::Identity();
    (*jac)[9].block<3, 3>(12, 0) = Mat3::Identity();
  };
  return block;
}

ResidualBlock make_prior_block(const State& mean,
                               const Eigen::Matrix<double, 15, 15>& sqrt_info,
                               const std::vector<int>& slots) {
  ResidualBlock block;
  block.slots = slots;
  block.dimension = 15;
  block.sqrt_info = sqrt_info;
  const State m = mean;
  block.evaluate = [m](const std::vector<Eigen::VectorXd>& x,
                       Eigen::VectorXd& r,
                       std::vector<Eigen::MatrixXd>* jac) {
    const Vec3 p(x[0]), th(x[1]), v(x[2]), ba(x[3]), bg(x[4]);
    r.segment<3>(0) = p - m.p;
    const Vec3 rth =
        log_so3(exp_so3(m.theta).transpose() * exp_so3(RotVec(th))).axis_angle;
    r.segment<3>(3) = rth;
    r.segment<3>(6) = v - m.v;
    r.segment<3>(9) = ba - m.bias.accel;
    r.segment<3>(12) = bg - m.bias.gyro;
    if (!jac) return;
    for (auto& J : *jac) J.setZero();
    (*jac)[0].block<3, 3>(0, 0).setIdentity();
    (*jac)[1].block<3, 3>(3, 0) = right_jacobian_inv_so3(rth);
    (*jac)[2].block<3, 3>(6, 0).setIdentity();
    (*jac)[3].block<3, 3>(9, 0).setIdentity();
    (*jac)[4].block<3, 3>(12, 0).setIdentity();
  };
  return block;
}

}  // namespace slam2d

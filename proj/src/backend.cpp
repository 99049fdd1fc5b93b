#include "slam2d/backend.hpp"

#include <cmath>

#include "slam2d/errors.hpp"
#include "slam2d/solver.hpp"

namespace slam2d {

namespace {

Mat3 diag_sqrt_info(double sx, double sy, double syaw) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = 1.0 / sx;
  m(1, 1) = 1.0 / sy;
  m(2, 2) = 1.0 / syaw;
  return m;
}

ResidualBlock make_pose2_edge(const Pose2& rel, const Mat3& sqrt_info,
                              int xy_i, int yaw_i, int xy_j, int yaw_j) {
  ResidualBlock block;
  block.slots = {xy_i, yaw_i, xy_j, yaw_j};
  block.dimension = 3;
  block.sqrt_info = sqrt_info;
  const Pose2 z = rel;
  block.evaluate = [z](const std::vector<Eigen::VectorXd>& x,
                       Eigen::VectorXd& r,
                       std::vector<Eigen::MatrixXd>* jac) {
    const Vec2 ti(x[0][0], x[0][1]);
    const double psi_i = x[1][0];
    const Vec2 tj(x[2][0], x[2][1]);
    const double psi_j = x[3][0];
    const Mat2 Ri_t = rot2(-psi_i);
    const Vec2 et = Ri_t * (tj - ti) - z.xy;
    r[0] = et.x();
    r[1] = et.y();
    r[2] = wrap_angle(psi_j - psi_i - z.yaw);
    if (!jac) return;
    Mat2 J90;
    J90 << 0.0, -1.0, 1.0, 0.0;
    const Vec2 rt = Ri_t * (tj - ti);
    (*jac)[0].setZero();
    (*jac)[0].block<2, 2>(0, 0) = -Ri_t;
    (*jac)[1].setZero();
    (*jac)[1].block<2, 1>(0, 0) = -(J90 * rt);
    (*jac)[2].setZero();
    (*jac)[2].block<2, 2>(0, 0) = Ri_t;
    (*jac)[3].setZero();
    (*jac)[3](2, 0) = 1.0;
    (*jac)[1](2, 0) = -1.0;
  };
  return block;
}

}  // namespace

PoseGraph::PoseGraph(const PoseGraphConfig& cfg) : cfg_(cfg) {}

void PoseGraph::add_keyframe(const Keyframe& kf) {
  if (kf.id != static_cast<int>(nodes_.size())) {
    throw ProtocolError("PoseGraph::add_keyframe: id gap (expected " +
                        std::to_string(nodes_.size()) + ", got " +
                        std::to_string(kf.id) + ")");
  }
  const Pose2 fe_pose = to_pose2(kf.state.pose());
  if (nodes_.empty()) {
    nodes_.push_back(fe_pose);
    stamps_.push_back(kf.stamp);
    last_frontend_pose_ = fe_pose;
    return;
  }
  const Pose2 rel = compose(inverse(last_frontend_pose_), fe_pose);
  OdomEdge edge;
  edge.from = kf.id - 1;
  edge.to = kf.id;
  edge.rel = rel;
  const double dist = rel.xy.norm();
  const double rot = std::abs(rel.yaw);
  const double sxy = cfg_.odom_sigma_xy + cfg_.odom_drift_frac * dist;
  const double syaw = cfg_.odom_sigma_yaw + cfg_.odom_drift_frac * rot;
  edge.sqrt_info = diag_sqrt_info(sxy, sxy, syaw);
  odom_edges_.push_back(edge);

  // Node initialized by chaining from the current graph tail.
  nodes_.push_back(compose(nodes_.back(), rel));
  stamps_.push_back(kf.stamp);
  last_frontend_pose_ = fe_pose;
}

void PoseGraph::add_loop(const LoopConstraint& constraint) {
  LoopEdge edge;
  edge.constraint = constraint;
  const double sxy = cfg_.loop_sigma_xy_base +
                     cfg_.loop_sigma_xy_per_rms * constraint.post_icp_rms;
  const double syaw = cfg_.loop_sigma_yaw_base +
                      cfg_.loop_sigma_yaw_per_rms * constraint.post_icp_rms;
  edge.sqrt_info = diag_sqrt_info(sxy, sxy, syaw);
  loop_edges_.push_back(edge);
}

bool PoseGraph::optimize() {
  if (loop_edges_.empty() || nodes_.size() < 2) return false;
  pre_opt_last_ = nodes_.back();

  Problem problem;
  std::vector<int> xy_slots(nodes_.size()), yaw_slots(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    Eigen::VectorXd xy(2), yaw(1);
    xy << nodes_[i].xy.x(), nodes_[i].xy.y();
    yaw << nodes_[i].yaw;
    const bool fixed = i == 0;  // gauge
    xy_slots[i] = problem.add_slot(SlotKind::Vector, xy, fixed);
    yaw_slots[i] = problem.add_slot(SlotKind::Angle, yaw, fixed);
  }
  for (const auto& e : odom_edges_) {
    problem.add_block(make_pose2_edge(e.rel, e.sqrt_info, xy_slots[e.from],
                                      yaw_slots[e.from], xy_slots[e.to],
                                      yaw_slots[e.to]));
  }
  for (const auto& e : loop_edges_) {
    problem.add_block(make_pose2_edge(
        e.constraint.relative_pose, e.sqrt_info, xy_slots[e.constraint.from_id],
        yaw_slots[e.constraint.from_id], xy_slots[e.constraint.to_id],
        yaw_slots[e.constraint.to_id]));
  }

  SolveOptions opts;
  opts.max_iters = 100;
  opts.tol_grad = 1e-10;
  opts.tol_step = 1e-12;
  const SolveResult result = solve(problem, opts);  // SingularSystem surfaces
  last_cost_ = result.final_cost;

  for (size_t i = 0; i < nodes_.size(); ++i) {
    const auto& xy = problem.slot_value(xy_slots[i]);
    nodes_[i] = Pose2(problem.slot_value(yaw_slots[i])[0], xy[0], xy[1]);
  }
  post_opt_last_ = nodes_.back();
  return true;
}

Pose2 PoseGraph::broadcast_correction() const {
  return compose(post_opt_last_, inverse(pre_opt_last_));
}

void PoseGraph::note_correction(const Pose2& offset) {
  last_frontend_pose_ = compose(offset, last_frontend_pose_);
}

}  // namespace slam2d

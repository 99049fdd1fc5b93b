#include "slam2d/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "slam2d/errors.hpp"

namespace slam2d {

Trajectory read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("missing trajectory file: " + path);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    double stamp, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> stamp >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        " expected 8 fields");
    }
    TrajectorySample s;
    s.stamp = stamp;
    s.pose.translation = Vec3(tx, ty, tz);
    s.pose.rotation = quat_to_rotvec(Eigen::Vector4d(qx, qy, qz, qw));
    traj.samples.push_back(s);
  }
  return traj;
}

void write_tum(const std::string& path, const Trajectory& traj) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open for writing: " + path);
  for (const auto& s : traj.samples) {
    const Eigen::Vector4d q = rotvec_to_quat(s.pose.rotation);
    std::fprintf(f, "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", s.stamp,
                 s.pose.translation.x(), s.pose.translation.y(),
                 s.pose.translation.z(), q[0], q[1], q[2], q[3]);
  }
  std::fclose(f);
}

std::vector<PosePair> associate(const Trajectory& est, const Trajectory& gt,
                                double max_dt) {
  std::vector<PosePair> pairs;
  size_t j = 0;
  for (const auto& e : est.samples) {
    while (j + 1 < gt.samples.size() &&
           std::abs(gt.samples[j + 1].stamp - e.stamp) <=
               std::abs(gt.samples[j].stamp - e.stamp)) {
      ++j;
    }
    if (j < gt.samples.size() &&
        std::abs(gt.samples[j].stamp - e.stamp) <= max_dt) {
      PosePair p;
      p.stamp_est = e.stamp;
      p.stamp_gt = gt.samples[j].stamp;
      p.est = e.pose;
      p.gt = gt.samples[j].pose;
      pairs.push_back(p);
    }
  }
  if (pairs.empty()) {
    throw EmptyAssociation("associate: no pairs within max_dt");
  }
  return pairs;
}

namespace {

double rotation_angle(const Pose3& a, const Pose3& b) {
  const Mat3 dR = exp_so3(a.rotation).transpose() * exp_so3(b.rotation);
  return log_so3(dR).angle();
}

// Closed-form planar rigid fit of est onto gt (rotation + translation).
Pose2 align_planar(const std::vector<PosePair>& pairs) {
  Vec2 mean_e = Vec2::Zero(), mean_g = Vec2::Zero();
  for (const auto& p : pairs) {
    mean_e += p.est.translation.head<2>();
    mean_g += p.gt.translation.head<2>();
  }
  mean_e /= static_cast<double>(pairs.size());
  mean_g /= static_cast<double>(pairs.size());
  double sc = 0.0, ss = 0.0;
  for (const auto& p : pairs) {
    const Vec2 e = p.est.translation.head<2>() - mean_e;
    const Vec2 g = p.gt.translation.head<2>() - mean_g;
    sc += g.dot(e);
    ss += g.x() * e.y() - g.y() * e.x();
  }
  const double yaw = std::atan2(-ss, sc);
  Pose2 T;
  T.yaw = yaw;
  T.xy = mean_g - rot2(yaw) * mean_e;
  return T;
}

}  // namespace

ApeReport ape_rmse(const std::vector<PosePair>& pairs, bool align) {
  if (pairs.size() < 2) throw InvalidArgument("ape_rmse: need >= 2 pairs");
  Pose3 T = Pose3::identity();
  if (align) T = to_pose3(align_planar(pairs));

  double sum_t = 0.0, sum_r = 0.0;
  for (const auto& p : pairs) {
    const Pose3 est = compose(T, p.est);
    sum_t += (est.translation - p.gt.translation).squaredNorm();
    const double dr = rotation_angle(est, p.gt);
    sum_r += dr * dr;
  }
  ApeReport out;
  out.n = static_cast<int>(pairs.size());
  out.trans_rmse = std::sqrt(sum_t / out.n);
  out.rot_rmse = std::sqrt(sum_r / out.n);
  out.combined = std::sqrt((sum_t + sum_r) / out.n);
  return out;
}

RpeReport rpe_rmse(const std::vector<PosePair>& pairs, double delta) {
  RpeReport out;
  if (pairs.size() < 2) return out;

  std::vector<double> errors;
  std::vector<double> et, er;
  size_t a = 0;
  double acc = 0.0;
  for (size_t i = 1; i < pairs.size(); ++i) {
    acc += (pairs[i].gt.translation - pairs[i - 1].gt.translation).norm();
    if (acc + 1e-12 < delta) continue;
    const Pose3 rel_gt = compose(inverse(pairs[a].gt), pairs[i].gt);
    const Pose3 rel_est = compose(inverse(pairs[a].est), pairs[i].est);
    const Pose3 err = compose(inverse(rel_gt), rel_est);
    const double t = err.translation.norm();
    const double r = canonical(err.rotation).angle();
    et.push_back(t);
    er.push_back(r);
    errors.push_back(std::sqrt(t * t + r * r));
    a = i;
    acc = 0.0;
  }
  if (errors.empty()) return out;

  out.n = static_cast<int>(errors.size());
  auto rmse_of = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  out.trans_rmse = rmse_of(et);
  out.rot_rmse = rmse_of(er);
  out.combined = rmse_of(errors);

  out.max = *std::max_element(errors.begin(), errors.end());
  out.min = *std::min_element(errors.begin(), errors.end());
  out.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / out.n;
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  out.median = out.n % 2 ? sorted[out.n / 2]
                         : 0.5 * (sorted[out.n / 2 - 1] + sorted[out.n / 2]);
  out.sse = out.combined * out.combined * out.n;  // rmse^2 * n by definition
  double var = 0.0;
  for (double e : errors) var += (e - out.mean) * (e - out.mean);
  out.std_dev = std::sqrt(var / out.n);
  return out;
}

std::map<std::string, double> report_fields(const ApeReport& ape,
                                            const RpeReport& rpe) {
  return {
      {"ape_trans_rmse", ape.trans_rmse}, {"ape_rot_rmse", ape.rot_rmse},
      {"ape_combined", ape.combined},     {"ape_n", double(ape.n)},
      {"rpe_trans_rmse", rpe.trans_rmse}, {"rpe_rot_rmse", rpe.rot_rmse},
      {"rpe_combined", rpe.combined},     {"rpe_max", rpe.max},
      {"rpe_mean", rpe.mean},             {"rpe_median", rpe.median},
      {"rpe_min", rpe.min},               {"rpe_rmse", rpe.combined},
      {"rpe_sse", rpe.sse},               {"rpe_std", rpe.std_dev},
      {"rpe_n", double(rpe.n)},
  };
}

}  // namespace slam2d

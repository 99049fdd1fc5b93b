#include "slam2d/loopdetect.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "slam2d/errors.hpp"
#include "slam2d/solver.hpp"

namespace slam2d {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

int wrap_ring(int diff, int ring) {
  diff %= ring;
  if (diff > ring / 2) diff -= ring;
  if (diff <= -ring / 2) diff += ring;
  return diff;
}

}  // namespace

DescriptorSet build_descriptors(const std::vector<Vec2>& corners, double d_res,
                                double a_res, int keyframe_id) {
  DescriptorSet set;
  set.keyframe_id = keyframe_id;
  set.d_res = d_res;
  set.a_res = a_res;
  set.a_ring = static_cast<int>(std::lround(2.0 * M_PI / a_res));
  set.corner_positions = corners;
  if (corners.size() < 2) return set;  // empty descriptor list, not an error

  const int n = static_cast<int>(corners.size());
  set.descriptors.reserve(n);
  for (int i = 0; i < n; ++i) {
    CornerDescriptor des;
    des.anchor_index = i;
    des.entries.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec2 v = corners[i] - corners[j];
      DescriptorEntry e;
      e.d_int = static_cast<int>(std::lround(v.norm() / d_res));
      e.a_int =
          static_cast<int>(std::lround(std::atan2(v.y(), v.x()) / a_res));
      e.partner = j;
      des.entries.push_back(e);
    }
    std::sort(des.entries.begin(), des.entries.end(),
              [](const DescriptorEntry& x, const DescriptorEntry& y) {
                return x.d_int != y.d_int ? x.d_int < y.d_int
                                          : x.a_int < y.a_int;
              });
    set.descriptors.push_back(std::move(des));
  }
  return set;
}

std::optional<std::vector<std::pair<int, int>>> match_descriptors(
    const CornerDescriptor& a, const CornerDescriptor& b, int t_min,
    int a_ring) {
  // Vote over bearing differences of d-equal entry pairs.
  std::unordered_map<int, std::vector<std::pair<int, int>>> votes;
  size_t ia = 0, ib = 0;
  while (ia < a.entries.size() && ib < b.entries.size()) {
    const int da = a.entries[ia].d_int, db = b.entries[ib].d_int;
    if (da < db) {
      ++ia;
      continue;
    }
    if (db < da) {
      ++ib;
      continue;
    }
    size_t ea = ia, eb = ib;
    while (ea < a.entries.size() && a.entries[ea].d_int == da) ++ea;
    while (eb < b.entries.size() && b.entries[eb].d_int == da) ++eb;
    for (size_t x = ia; x < ea; ++x) {
      for (size_t y = ib; y < eb; ++y) {
        const int diff =
            wrap_ring(a.entries[x].a_int - b.entries[y].a_int, a_ring);
        votes[diff].emplace_back(a.entries[x].partner, b.entries[y].partner);
      }
    }
    ia = ea;
    ib = eb;
  }

  int best_diff = 0;
  size_t best_count = 0;
  for (const auto& [diff, pairs] : votes) {
    if (pairs.size() > best_count) {
      best_count = pairs.size();
      best_diff = diff;
    }
  }
  if (best_count == 0) return std::nullopt;

  // One-to-one pairs within the winning bin.
  std::vector<std::pair<int, int>> pairs;
  std::vector<char> used_a(256, 0), used_b(256, 0);
  auto used = [](std::vector<char>& v, int idx) -> char& {
    if (idx >= static_cast<int>(v.size())) v.resize(idx + 1, 0);
    return v[idx];
  };
  for (const auto& [pa, pb] : votes[best_diff]) {
    if (used(used_a, pa) || used(used_b, pb)) continue;
    used(used_a, pa) = 1;
    used(used_b, pb) = 1;
    pairs.emplace_back(pa, pb);
  }
  if (static_cast<int>(pairs.size()) < t_min) return std::nullopt;
  return pairs;
}

int num_trials(double p, int m, int c) {
  if (c <= 0) throw InvalidArgument("num_trials: zero overlap is infeasible");
  if (!(p > 0.0 && p < 1.0) || m <= 0 || c > m) {
    throw InvalidArgument("num_trials: need 0 < p < 1 and 0 < c <= m");
  }
  if (c == m) return 1;
  const double gamma = std::log(1.0 - p) /
                       std::log(1.0 - static_cast<double>(c) / m);
  return static_cast<int>(std::ceil(gamma));
}

std::optional<std::vector<std::pair<int, int>>> match_frames(
    const DescriptorSet& desM, const DescriptorSet& desN, double p, int t_min,
    double overlap_guess, std::mt19937_64& rng) {
  const int m = static_cast<int>(desM.descriptors.size());
  const int n = static_cast<int>(desN.descriptors.size());
  if (m == 0 || n == 0) return std::nullopt;

  const int c_est = std::max(
      1, static_cast<int>(std::lround(overlap_guess * std::min(m, n))));
  int trials = std::min(num_trials(p, m, std::min(c_est, m)), m);

  // Partial Fisher-Yates to sample anchors without replacement.
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  for (int t = 0; t < trials; ++t) {
    std::uniform_int_distribution<int> pick(t, m - 1);
    std::swap(order[t], order[pick(rng)]);
    const CornerDescriptor& anchor = desM.descriptors[order[t]];

    std::vector<std::pair<int, int>> best;
    int best_b = -1;
    for (int bi = 0; bi < n; ++bi) {
      auto pairs = match_descriptors(anchor, desN.descriptors[bi], t_min,
                                     desM.a_ring);
      if (pairs && pairs->size() > best.size()) {
        best = std::move(*pairs);
        best_b = bi;
      }
    }
    if (best_b < 0) continue;

    best.emplace_back(anchor.anchor_index, best_b);

    // Verify the remaining corners under the implied transform.
    std::vector<Vec2> pm, pn;
    for (const auto& [i, j] : best) {
      pm.push_back(desM.corner_positions[i]);
      pn.push_back(desN.corner_positions[j]);
    }
    RelativePoseFit fit;
    try {
      fit = solve_relative_pose(pm, pn);
    } catch (const RankDeficient&) {
      continue;
    }
    std::vector<char> in_m(desM.corner_positions.size(), 0);
    std::vector<char> in_n(desN.corner_positions.size(), 0);
    for (const auto& [i, j] : best) {
      in_m[i] = 1;
      in_n[j] = 1;
    }
    const double gate = 1.5 * desM.d_res;
    for (size_t j = 0; j < desN.corner_positions.size(); ++j) {
      if (in_n[j]) continue;
      const Vec2 mapped = transform_point(fit.pose, desN.corner_positions[j]);
      int best_i = -1;
      double best_d = gate;
      for (size_t i = 0; i < desM.corner_positions.size(); ++i) {
        if (in_m[i]) continue;
        const double d = (desM.corner_positions[i] - mapped).norm();
        if (d < best_d) {
          best_d = d;
          best_i = static_cast<int>(i);
        }
      }
      if (best_i >= 0) {
        in_m[best_i] = 1;
        in_n[j] = 1;
        best.emplace_back(best_i, static_cast<int>(j));
      }
    }
    return best;
  }
  return std::nullopt;
}

namespace {

// Closed-form planar rigid fit (centroids + atan2 of cross/dot sums).
Pose2 closed_form_rigid(const std::vector<Vec2>& points_m,
                        const std::vector<Vec2>& points_n) {
  if (points_m.size() != points_n.size() || points_m.size() < 2) {
    throw RankDeficient("solve_relative_pose: need >= 2 pairs");
  }
  const int n = static_cast<int>(points_m.size());
  Vec2 cm = Vec2::Zero(), cn = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    cm += points_m[i];
    cn += points_n[i];
  }
  cm /= n;
  cn /= n;
  double dot = 0.0, cross = 0.0, scale = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec2 a = points_m[i] - cm;
    const Vec2 b = points_n[i] - cn;
    dot += a.dot(b);
    cross += b.x() * a.y() - b.y() * a.x();
    scale += a.squaredNorm() + b.squaredNorm();
  }
  if (std::hypot(dot, cross) < 1e-12 * std::max(scale, 1e-12)) {
    throw RankDeficient("solve_relative_pose: degenerate pair constellation");
  }
  Pose2 pose;
  pose.yaw = std::atan2(cross, dot);
  pose.xy = cm - rot2(pose.yaw) * cn;
  return pose;
}

}  // namespace

RelativePoseFit solve_relative_pose(const std::vector<Vec2>& points_m,
                                    const std::vector<Vec2>& points_n) {
  const int n = static_cast<int>(points_m.size());
  RelativePoseFit fit;
  fit.pose = closed_form_rigid(points_m, points_n);

  if (n > 10) {
    // Polish with the generic solver (helps when pairs are noisy).
    Problem problem;
    const int xy = problem.add_slot(SlotKind::Vector, fit.pose.xy);
    Eigen::VectorXd yaw0(1);
    yaw0[0] = fit.pose.yaw;
    const int yaw = problem.add_slot(SlotKind::Angle, yaw0);
    ResidualBlock block;
    block.slots = {xy, yaw};
    block.dimension = 2 * n;
    block.sqrt_info = Eigen::MatrixXd::Identity(2 * n, 2 * n);
    const std::vector<Vec2> pm = points_m, pn = points_n;
    block.evaluate = [pm, pn](const std::vector<Eigen::VectorXd>& x,
                              Eigen::VectorXd& r,
                              std::vector<Eigen::MatrixXd>* jac) {
      const Vec2 t(x[0][0], x[0][1]);
      const double psi = x[1][0];
      const Mat2 R = rot2(psi);
      const Mat2 Rp = rot2(psi + M_PI / 2.0);
      for (size_t i = 0; i < pm.size(); ++i) {
        const Vec2 e = pm[i] - (R * pn[i] + t);
        r.segment<2>(2 * i) = e;
        if (jac) {
          (*jac)[0].block<2, 2>(2 * i, 0) = -Mat2::Identity();
          (*jac)[1].block<2, 1>(2 * i, 0) = -(Rp * pn[i]);
        }
      }
    };
    problem.add_block(std::move(block));
    SolveOptions opts;
    opts.max_iters = 20;
    solve(problem, opts);
    fit.pose.xy = Vec2(problem.slot_value(xy)[0], problem.slot_value(xy)[1]);
    fit.pose.yaw = problem.slot_value(yaw)[0];
  }

  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    sq += (points_m[i] - transform_point(fit.pose, points_n[i])).squaredNorm();
  }
  fit.rms = std::sqrt(sq / n);
  return fit;
}

namespace {

// Hashed-grid nearest neighbor over a fixed point set.
class GridNN {
 public:
  GridNN(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell) {
    for (size_t i = 0; i < pts.size(); ++i) {
      cells_[key(pts[i])].push_back(static_cast<int>(i));
    }
  }

  int nearest(const Vec2& q, double radius) const {
    const int r = static_cast<int>(std::ceil(radius / cell_));
    const int qx = static_cast<int>(std::floor(q.x() / cell_));
    const int qy = static_cast<int>(std::floor(q.y() / cell_));
    int best = -1;
    double best_d2 = radius * radius;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        const auto it = cells_.find(pack(qx + dx, qy + dy));
        if (it == cells_.end()) continue;
        for (int idx : it->second) {
          const double d2 = (pts_[idx] - q).squaredNorm();
          if (d2 < best_d2) {
            best_d2 = d2;
            best = idx;
          }
        }
      }
    }
    return best;
  }

 private:
  static int64_t pack(int x, int y) {
    return (static_cast<int64_t>(x) << 32) ^ (static_cast<uint32_t>(y));
  }
  int64_t key(const Vec2& p) const {
    return pack(static_cast<int>(std::floor(p.x() / cell_)),
                static_cast<int>(std::floor(p.y() / cell_)));
  }
  const std::vector<Vec2>& pts_;
  double cell_;
  std::unordered_map<int64_t, std::vector<int>> cells_;
};

}  // namespace

IcpResult icp_refine(const std::vector<Vec2>& points_a,
                     const std::vector<Vec2>& points_b, const Pose2& initial,
                     int max_iters, double nn_radius) {
  if (points_a.size() < 20 || points_b.size() < 20) {
    throw InvalidArgument("icp_refine: need >= 20 points per cloud");
  }
  GridNN nn(points_a, nn_radius);

  IcpResult result;
  result.pose = initial;
  result.rms = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<Vec2> pm, pn;
    double sq = 0.0;
    for (const Vec2& b : points_b) {
      const Vec2 mapped = transform_point(result.pose, b);
      const int idx = nn.nearest(mapped, nn_radius);
      if (idx < 0) continue;
      pm.push_back(points_a[idx]);
      pn.push_back(b);
      sq += (points_a[idx] - mapped).squaredNorm();
    }
    if (pm.size() < 3) {
      throw NoOverlap("icp_refine: no correspondences within gating radius");
    }
    const double rms = std::sqrt(sq / pm.size());
    if (rms > result.rms) break;  // keep the previous (better) pose
    const double improvement = result.rms - rms;
    result.rms = rms;
    result.iters = iter + 1;
    result.matched_fraction =
        static_cast<double>(pm.size()) / points_b.size();
    if (improvement < 1e-6) break;

    try {
      result.pose = closed_form_rigid(pm, pn);
    } catch (const RankDeficient&) {
      break;
    }
  }
  return result;
}

LoopDetector::LoopDetector(const LoopConfig& cfg, const Pose2& body_from_lidar)
    : cfg_(cfg), body_from_lidar_(body_from_lidar), rng_(cfg.seed) {}

const KeyframeSignature* LoopDetector::entry(int id) const {
  for (const auto& e : entries_) {
    if (e.kf.id == id) return &e.kf;
  }
  return nullptr;
}

void LoopDetector::insert(const KeyframeSignature& kf) {
  Entry e;
  e.kf = kf;
  e.set = build_descriptors(kf.corners, cfg_.d_res, cfg_.a_res, kf.id);
  double total = 0.0;
  for (const auto& des : e.set.descriptors) {
    for (const auto& entry : des.entries) {
      e.d_hist[entry.d_int] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (auto& [k, v] : e.d_hist) v /= total;
  }
  entries_.push_back(std::move(e));
}

std::optional<LoopConstraint> LoopDetector::detect(
    const KeyframeSignature& query) {
  stats_ = DetectStats{};
  const auto t0 = std::chrono::steady_clock::now();

  const DescriptorSet query_set =
      build_descriptors(query.corners, cfg_.d_res, cfg_.a_res, query.id);
  std::unordered_map<int, double> query_hist;
  double total = 0.0;
  for (const auto& des : query_set.descriptors) {
    for (const auto& entry : des.entries) {
      query_hist[entry.d_int] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (auto& [k, v] : query_hist) v /= total;
  }

  // Fast gate: normalized d-histogram intersection.
  std::vector<std::pair<double, const Entry*>> candidates;
  for (const auto& e : entries_) {
    if (e.kf.id > query.id - cfg_.exclusion_window) continue;
    ++stats_.candidates_total;
    double inter = 0.0;
    for (const auto& [d, w] : query_hist) {
      const auto it = e.d_hist.find(d);
      if (it != e.d_hist.end()) inter += std::min(w, it->second);
    }
    if (inter >= cfg_.fast_filter_min) {
      candidates.emplace_back(inter, &e);
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  stats_.candidates_after_filter = static_cast<int>(candidates.size());
  stats_.filter_ms = ms_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  int icp_attempts = 0;
  for (const auto& [score, e] : candidates) {
    if (icp_attempts >= cfg_.icp_max_attempts) break;
    const auto pairs = match_frames(e->set, query_set, cfg_.p_success,
                                    cfg_.t_min, cfg_.overlap_guess, rng_);
    if (!pairs) continue;

    std::vector<Vec2> pm, pn;
    for (const auto& [i, j] : *pairs) {
      pm.push_back(e->set.corner_positions[i]);
      pn.push_back(query_set.corner_positions[j]);
    }
    RelativePoseFit fit;
    try {
      fit = solve_relative_pose(pm, pn);
    } catch (const RankDeficient&) {
      continue;
    }
    stats_.match_ms = ms_since(t1);

    const auto t2 = std::chrono::steady_clock::now();
    ++icp_attempts;
    IcpResult icp;
    try {
      icp = icp_refine(e->kf.scan_points, query.scan_points, fit.pose,
                       cfg_.icp_max_iters, cfg_.icp_nn_radius);
    } catch (const Error&) {
      stats_.icp_ms += ms_since(t2);
      continue;
    }
    stats_.icp_ms += ms_since(t2);
    if (icp.rms > cfg_.icp_gate) continue;
    if (icp.matched_fraction < cfg_.icp_min_inliers) continue;

    LoopConstraint c;
    c.from_id = e->kf.id;
    c.to_id = query.id;
    // lidar-frame relative pose lifted into the body frame
    c.relative_pose = compose(
        compose(body_from_lidar_, icp.pose), inverse(body_from_lidar_));
    c.match_count = static_cast<int>(pairs->size());
    c.post_icp_rms = icp.rms;
    return c;
  }
  stats_.match_ms = ms_since(t1) - stats_.icp_ms;
  return std::nullopt;
}

}  // namespace slam2d

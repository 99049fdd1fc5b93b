#include "slam2d/features.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "slam2d/errors.hpp"

namespace slam2d {

double LineSegment::normal_angle() const {
  double a = std::atan2(coeffs[1], coeffs[0]);
  if (a < 0.0) a += M_PI;
  if (a >= M_PI) a -= M_PI;
  return a;
}

std::vector<PointSet> split_continuous(const ScanPoints& scan,
                                       const FeatureConfig& cfg) {
  std::vector<PointSet> sets;
  PointSet current;
  auto flush = [&]() {
    if (static_cast<int>(current.points.size()) >= cfg.n_min) {
      sets.push_back(std::move(current));
    }
    current = PointSet{};
  };
  for (size_t i = 0; i < scan.points.size(); ++i) {
    if (!current.points.empty()) {
      const double gap = (scan.points[i] - current.points.back()).norm();
      // A skipped beam widens the expected spacing as well.
      const int beam_jump = scan.beam_indices[i] - current.beam_indices.back();
      if (gap > cfg.d_break || beam_jump > 4) flush();
    }
    current.points.push_back(scan.points[i]);
    current.beam_indices.push_back(scan.beam_indices[i]);
  }
  flush();
  return sets;
}

namespace {

double angle_at(const Vec2& a, const Vec2& vertex, const Vec2& b) {
  const Vec2 u = a - vertex;
  const Vec2 v = b - vertex;
  const double nu = u.norm(), nv = v.norm();
  if (nu < 1e-12 || nv < 1e-12) {
    throw DegenerateGeometry("vertex angle: duplicate points");
  }
  const double c = std::min(1.0, std::max(-1.0, u.dot(v) / (nu * nv)));
  return std::acos(c);
}

}  // namespace

double vertex_angle(const PointSet& set, int i, int skip) {
  const int n = static_cast<int>(set.points.size());
  if (i < skip || i > n - 1 - skip) {
    throw InvalidArgument("vertex_angle: index too close to the set boundary");
  }
  return angle_at(set.points[i - skip], set.points[i], set.points[i + skip]);
}

std::vector<int> nms_angles(const std::vector<double>& angles, int window) {
  std::vector<int> keep;
  const int n = static_cast<int>(angles.size());
  for (int i = 0; i < n; ++i) {
    const double dev = std::abs(M_PI - angles[i]);
    bool is_max = true;
    for (int j = std::max(0, i - window); j <= std::min(n - 1, i + window); ++j) {
      if (j == i) continue;
      if (std::abs(M_PI - angles[j]) >= dev) {
        is_max = false;
        break;
      }
    }
    if (is_max) keep.push_back(i);
  }
  return keep;
}

LineSegment fit_line(const std::vector<Vec2>& points) {
  if (points.size() < 2) {
    throw DegenerateGeometry("fit_line: need at least 2 points");
  }
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());

  Mat2 scatter = Mat2::Zero();
  for (const auto& p : points) {
    const Vec2 d = p - mean;
    scatter += d * d.transpose();
  }
  if (scatter.trace() < 1e-18) {
    throw DegenerateGeometry("fit_line: all points coincident");
  }
  // Normal = eigenvector of the smallest eigenvalue (orthogonal regression).
  Eigen::SelfAdjointEigenSolver<Mat2> eig(scatter);
  Vec2 normal = eig.eigenvectors().col(0);
  if (normal.y() < 0.0 || (normal.y() == 0.0 && normal.x() < 0.0)) {
    normal = -normal;
  }

  LineSegment seg;
  seg.coeffs << normal.x(), normal.y(), -normal.dot(mean);
  auto project = [&](const Vec2& p) -> Vec2 {
    return p - seg.signed_distance(p) * normal;
  };
  seg.p_start = project(points.front());
  seg.p_end = project(points.back());
  seg.support = static_cast<int>(points.size());
  return seg;
}

std::vector<LineSegment> extract_lines(const PointSet& set,
                                       const FeatureConfig& cfg) {
  std::vector<LineSegment> out;
  const int n = static_cast<int>(set.points.size());
  if (n < 2) return out;

  // Corner candidates via skip-neighbor angles + NMS; the set boundary is
  // always a potential endpoint.
  std::vector<int> candidates;
  if (n > 2 * cfg.skip) {
    std::vector<double> angles(n - 2 * cfg.skip);
    for (int i = cfg.skip; i <= n - 1 - cfg.skip; ++i) {
      try {
        angles[i - cfg.skip] = vertex_angle(set, i, cfg.skip);
      } catch (const DegenerateGeometry&) {
        angles[i - cfg.skip] = M_PI;
      }
    }
    for (int idx : nms_angles(angles, cfg.nms_window)) {
      candidates.push_back(idx + cfg.skip);
    }
  }
  candidates.push_back(n - 1);

  auto emit = [&](int first, int last) {
    const int support = last - first + 1;
    if (support < cfg.n_min) return;
    std::vector<Vec2> pts(set.points.begin() + first,
                          set.points.begin() + last + 1);
    LineSegment seg;
    try {
      seg = fit_line(pts);
    } catch (const DegenerateGeometry&) {
      return;
    }
    if (seg.length() < cfg.len_min) return;
    double sq = 0.0;
    for (const auto& p : pts) {
      const double d = seg.signed_distance(p);
      sq += d * d;
    }
    if (std::sqrt(sq / support) > cfg.max_fit_rms) return;
    out.push_back(seg);
  };

  int start = 0;
  while (start < n - 1) {
    // First candidate strictly after the current start.
    size_t ci = std::upper_bound(candidates.begin(), candidates.end(), start) -
                candidates.begin();
    if (ci >= candidates.size()) break;
    int current = candidates[ci];
    size_t next_i = ci + 1;
    // Grow through candidates while the start/current/next angle stays
    // near-straight.
    while (next_i < candidates.size()) {
      double theta;
      try {
        theta = angle_at(set.points[start], set.points[current],
                         set.points[candidates[next_i]]);
      } catch (const DegenerateGeometry&) {
        theta = M_PI;
      }
      if (theta < cfg.theta_line) break;
      current = candidates[next_i];
      ++next_i;
    }
    emit(start, current);
    if (current >= n - 1) break;
    start = current;  // the break point starts the next segment
  }
  return out;
}

std::vector<Corner> extract_corners(const std::vector<LineSegment>& lines,
                                    const FeatureConfig& cfg) {
  std::vector<Corner> corners;
  for (size_t i = 0; i + 1 < lines.size(); ++i) {
    const LineSegment& a = lines[i];
    const LineSegment& b = lines[i + 1];
    if ((b.p_start - a.p_end).norm() >= cfg.d_adjacent) continue;

    const Vec2 da = a.direction(), db = b.direction();
    double ang = std::acos(std::min(1.0, std::abs(da.dot(db))));
    if (ang < 1.0 * M_PI / 180.0) continue;  // near-parallel, skip
    if (ang < cfg.theta_corner) continue;

    // Intersection of a1 x + b1 y = -c1 and a2 x + b2 y = -c2.
    Mat2 A;
    A << a.coeffs[0], a.coeffs[1], b.coeffs[0], b.coeffs[1];
    const Vec2 rhs(-a.coeffs[2], -b.coeffs[2]);
    corners.push_back(Corner{A.inverse() * rhs, ang});
  }
  return corners;
}

ScanFeatures extract_features(const ScanPoints& scan, const FeatureConfig& cfg,
                              double stamp) {
  ScanFeatures out;
  for (const auto& set : split_continuous(scan, cfg)) {
    auto segs = extract_lines(set, cfg);
    for (auto& s : segs) s.frame_stamp = stamp;
    // Corners only pair segments from the same continuous set; occlusion
    // gaps between sets exceed d_adjacent anyway.
    auto cs = extract_corners(segs, cfg);
    out.corners.insert(out.corners.end(), cs.begin(), cs.end());
    out.lines.insert(out.lines.end(), segs.begin(), segs.end());
  }
  return out;
}

int LineMap::bucket_of(double normal_angle) {
  double a = std::fmod(normal_angle, M_PI);
  if (a < 0.0) a += M_PI;
  int b = static_cast<int>(a / M_PI * kBuckets);
  return std::min(b, kBuckets - 1);
}

void LineMap::build(const std::vector<LineSegment>* lines) {
  for (auto& b : buckets_) b.clear();
  for (size_t i = 0; i < lines->size(); ++i) {
    buckets_[bucket_of((*lines)[i].normal_angle())].push_back(
        static_cast<int>(i));
  }
}

std::vector<int> LineMap::candidates(double normal_angle,
                                     int spread_buckets) const {
  std::vector<int> out;
  const int center = bucket_of(normal_angle);
  for (int d = -spread_buckets; d <= spread_buckets; ++d) {
    const int b = ((center + d) % kBuckets + kBuckets) % kBuckets;
    out.insert(out.end(), buckets_[b].begin(), buckets_[b].end());
  }
  return out;
}

}  // namespace slam2d

#pragma once

#include <array>
#include <vector>

#include "slam2d/dataio.hpp"
#include "slam2d/geometry.hpp"

namespace slam2d {

/// Contiguous run of scan points (gap between neighbors below the
/// continuity threshold).
struct PointSet {
  std::vector<Vec2> points;
  std::vector<int> beam_indices;
};

/// Fitted infinite line a*x + b*y + c = 0 (a^2 + b^2 = 1) together with the
/// projections of the first and last supporting point onto it.
struct LineSegment {
  Vec3 coeffs = Vec3::Zero();  // (a, b, c)
  Vec2 p_start = Vec2::Zero();
  Vec2 p_end = Vec2::Zero();
  int support = 0;
  double frame_stamp = 0.0;

  Vec2 midpoint() const { return 0.5 * (p_start + p_end); }
  Vec2 direction() const { return (p_end - p_start).normalized(); }
  double length() const { return (p_end - p_start).norm(); }
  /// Orientation of the line normal folded into [0, pi).
  double normal_angle() const;
  double signed_distance(const Vec2& p) const {
    return coeffs[0] * p.x() + coeffs[1] * p.y() + coeffs[2];
  }
};

struct Corner {
  Vec2 position = Vec2::Zero();
  double incident_angle = 0.0;  // between the two lines, (0, pi/2]
};

struct FeatureConfig {
  double d_break = 0.25;          // continuity split distance, m
  int skip = 5;                   // beams skipped on either side for angles
  int nms_window = 5;
  double theta_line = 170.0 * M_PI / 180.0;   // grow while angle >= this
  double theta_corner = 30.0 * M_PI / 180.0;  // corner if line angle >= this
  int n_min = 8;                  // min points per set / segment
  double len_min = 0.15;          // min segment length, m
  double d_adjacent = 0.3;        // max endpoint gap for corner pairing, m
  double max_fit_rms = 0.03;      // fit-quality gate on emitted segments, m
};

std::vector<PointSet> split_continuous(const ScanPoints& scan,
                                       const FeatureConfig& cfg);

/// Interior angle at point i between the rays to points i-skip and i+skip.
/// Collinear triples give pi. Throws DegenerateGeometry on zero-length rays.
double vertex_angle(const PointSet& set, int i, int skip);

/// Indices whose deviation |pi - angle| is strictly maximal within a
/// +/-window neighborhood.
std::vector<int> nms_angles(const std::vector<double>& angles, int window);

/// Total least squares line through >= 2 non-coincident points; endpoints
/// are the projections of the first and last input point.
LineSegment fit_line(const std::vector<Vec2>& points);

std::vector<LineSegment> extract_lines(const PointSet& set,
                                       const FeatureConfig& cfg);

std::vector<Corner> extract_corners(const std::vector<LineSegment>& lines,
                                    const FeatureConfig& cfg);

struct ScanFeatures {
  std::vector<LineSegment> lines;
  std::vector<Corner> corners;
};

/// Full per-scan pipeline: split, grow, fit, corner pairing.
ScanFeatures extract_features(const ScanPoints& scan, const FeatureConfig& cfg,
                              double stamp = 0.0);

/// Per-scan lookup of segments by line normal orientation, 64 buckets over
/// [0, pi). Candidate retrieval walks the bucket of the query angle plus a
/// configurable neighborhood.
class LineMap {
 public:
  static constexpr int kBuckets = 64;

  void build(const std::vector<LineSegment>* lines);
  std::vector<int> candidates(double normal_angle, int spread_buckets) const;
  static int bucket_of(double normal_angle);

 private:
  std::array<std::vector<int>, kBuckets> buckets_;
};

}  // namespace slam2d

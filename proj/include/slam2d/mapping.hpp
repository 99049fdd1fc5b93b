#pragma once

#include <string>
#include <vector>

#include "slam2d/frontend.hpp"
#include "slam2d/geometry.hpp"

namespace slam2d {

struct GridMapConfig {
  double resolution = 0.05;  // m / cell
  double p_hit = 0.55;
  double p_miss = 0.49;
  double p_clamp_min = 0.12;
  double p_clamp_max = 0.971;
  double occupied_thresh = 0.65;
  double free_thresh = 0.35;
};

/// Log-odds occupancy lattice with auto-growing extents (64-cell chunks).
/// Unknown cells are tracked separately from observed p = 0.5 cells.
class GridMap {
 public:
  explicit GridMap(const GridMapConfig& cfg = {});

  /// Ray-casts one scan from the sensor pose (map frame): Bresenham miss
  /// updates along each ray, a hit update at the endpoint.
  void integrate_points(const std::vector<Vec2>& points_lidar,
                        const Pose2& sensor_pose);

  double probability(int ix, int iy) const;
  bool observed(int ix, int iy) const;
  double log_odds(int ix, int iy) const;

  /// Cell index of a world point (usable before the cell exists).
  void cell_of(const Vec2& world, int& ix, int& iy) const;
  Vec2 cell_center(int ix, int iy) const;

  bool empty() const { return width_ == 0; }
  int width() const { return width_; }
  int height() const { return height_; }
  /// World coordinates of the lower-left corner of cell (0, 0).
  Vec2 origin_world() const;
  const GridMapConfig& config() const { return cfg_; }

  // growth internals exposed for the smoothing pass
  void ensure_cell(int ix, int iy);
  void set_probability(int ix, int iy, double p);

 private:
  void update_cell(int ix, int iy, double logit_update);
  int index_of(int ix, int iy) const { return iy * width_ + ix; }

  GridMapConfig cfg_;
  std::vector<double> log_odds_;
  std::vector<uint8_t> observed_;
  int width_ = 0;
  int height_ = 0;
  // world cell coordinates of local cell (0, 0)
  int base_ix_ = 0;
  int base_iy_ = 0;
  bool has_base_ = false;

  friend GridMap smooth(const GridMap& map, double sigma_cells);
};

/// Separable Gaussian blur of the probability field over observed cells
/// only; unknown cells stay unknown.
GridMap smooth(const GridMap& map, double sigma_cells);

/// Binary PGM (P5): occupied -> 0, free -> 254, unknown/ambiguous -> 205,
/// plus a key=value metadata sidecar.
void export_map(const GridMap& map, const std::string& pgm_path,
                const std::string& meta_path);

/// Integrates one keyframe's scan points; `lidar_pose` is the sensor pose
/// in the map frame.
void integrate_keyframe(GridMap& map, const Keyframe& kf,
                        const Pose2& lidar_pose);

}  // namespace slam2d

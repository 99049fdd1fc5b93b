#include "slam2d/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "slam2d/errors.hpp"

namespace slam2d {

namespace {

constexpr int kChunk = 64;

double logit(double p) { return std::log(p / (1.0 - p)); }
double expit(double l) { return 1.0 / (1.0 + std::exp(-l)); }

}  // namespace

GridMap::GridMap(const GridMapConfig& cfg) : cfg_(cfg) {}

Vec2 GridMap::origin_world() const {
  return Vec2(base_ix_ * cfg_.resolution, base_iy_ * cfg_.resolution);
}

void GridMap::cell_of(const Vec2& world, int& ix, int& iy) const {
  ix = static_cast<int>(std::floor(world.x() / cfg_.resolution)) - base_ix_;
  iy = static_cast<int>(std::floor(world.y() / cfg_.resolution)) - base_iy_;
}

Vec2 GridMap::cell_center(int ix, int iy) const {
  return Vec2((base_ix_ + ix + 0.5) * cfg_.resolution,
              (base_iy_ + iy + 0.5) * cfg_.resolution);
}

void GridMap::ensure_cell(int ix, int iy) {
  // ix/iy are local; grow so they land inside, in chunk steps.
  if (!has_base_) {
    has_base_ = true;
    base_ix_ += ix - kChunk / 2;
    base_iy_ += iy - kChunk / 2;
    width_ = kChunk;
    height_ = kChunk;
    log_odds_.assign(static_cast<size_t>(width_) * height_, 0.0);
    observed_.assign(static_cast<size_t>(width_) * height_, 0);
    return;
  }
  int grow_left = 0, grow_down = 0, new_w = width_, new_h = height_;
  if (ix < 0) grow_left = ((-ix + kChunk - 1) / kChunk) * kChunk;
  if (iy < 0) grow_down = ((-iy + kChunk - 1) / kChunk) * kChunk;
  if (ix >= width_) {
    new_w = width_ + ((ix - width_ + kChunk) / kChunk) * kChunk;
  }
  if (iy >= height_) {
    new_h = height_ + ((iy - height_ + kChunk) / kChunk) * kChunk;
  }
  new_w += grow_left;
  new_h += grow_down;
  if (new_w == width_ && new_h == height_ && !grow_left && !grow_down) return;

  std::vector<double> lo(static_cast<size_t>(new_w) * new_h, 0.0);
  std::vector<uint8_t> ob(static_cast<size_t>(new_w) * new_h, 0);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const size_t src = static_cast<size_t>(y) * width_ + x;
      const size_t dst =
          static_cast<size_t>(y + grow_down) * new_w + (x + grow_left);
      lo[dst] = log_odds_[src];
      ob[dst] = observed_[src];
    }
  }
  log_odds_ = std::move(lo);
  observed_ = std::move(ob);
  width_ = new_w;
  height_ = new_h;
  base_ix_ -= grow_left;
  base_iy_ -= grow_down;
}

double GridMap::probability(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= width_ || iy >= height_) return 0.5;
  return observed_[index_of(ix, iy)] ? expit(log_odds_[index_of(ix, iy)])
                                     : 0.5;
}

bool GridMap::observed(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= width_ || iy >= height_) return false;
  return observed_[index_of(ix, iy)] != 0;
}

double GridMap::log_odds(int ix, int iy) const {
  if (!observed(ix, iy)) return 0.0;
  return log_odds_[index_of(ix, iy)];
}

void GridMap::set_probability(int ix, int iy, double p) {
  ensure_cell(ix, iy);
  log_odds_[index_of(ix, iy)] = logit(p);
  observed_[index_of(ix, iy)] = 1;
}

void GridMap::update_cell(int ix, int iy, double logit_update) {
  ensure_cell(ix, iy);
  const int idx = index_of(ix, iy);
  double l = observed_[idx] ? log_odds_[idx] : 0.0;
  l += logit_update;
  l = std::min(std::max(l, logit(cfg_.p_clamp_min)), logit(cfg_.p_clamp_max));
  log_odds_[idx] = l;
  observed_[idx] = 1;
}

void GridMap::integrate_points(const std::vector<Vec2>& points_lidar,
                               const Pose2& sensor_pose) {
  if (!std::isfinite(sensor_pose.xy.x()) ||
      !std::isfinite(sensor_pose.xy.y()) ||
      !std::isfinite(sensor_pose.yaw)) {
    throw InvalidArgument("integrate_points: non-finite sensor pose");
  }
  const double lhit = logit(cfg_.p_hit);
  const double lmiss = logit(cfg_.p_miss);
  int sx, sy;
  // Make sure the sensor cell exists first so local indices stay valid
  // after growth triggered by far endpoints.
  cell_of(sensor_pose.xy, sx, sy);
  ensure_cell(sx, sy);

  for (const Vec2& p : points_lidar) {
    const Vec2 world = transform_point(sensor_pose, p);
    int ex, ey;
    cell_of(world, ex, ey);
    ensure_cell(ex, ey);
    cell_of(sensor_pose.xy, sx, sy);
    cell_of(world, ex, ey);

    // Bresenham from sensor to endpoint; the endpoint itself gets the hit.
    int x0 = sx, y0 = sy;
    const int x1 = ex, y1 = ey;
    const int dx = std::abs(x1 - x0), dy = std::abs(y1 - y0);
    const int step_x = x0 < x1 ? 1 : -1, step_y = y0 < y1 ? 1 : -1;
    int err = (dx > dy ? dx : -dy) / 2;
    while (x0 != x1 || y0 != y1) {
      update_cell(x0, y0, lmiss);
      const int e2 = err;
      if (e2 > -dx) {
        err -= dy;
        x0 += step_x;
      }
      if (e2 < dy) {
        err += dx;
        y0 += step_y;
      }
    }
    update_cell(x1, y1, lhit);
  }
}

GridMap smooth(const GridMap& map, double sigma_cells) {
  GridMap out = map;
  if (map.empty() || sigma_cells <= 0.0) return out;

  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_cells)));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma_cells * sigma_cells));
  }

  // Masked separable convolution over the probability field.
  const int w = map.width(), h = map.height();
  std::vector<double> tmp_v(static_cast<size_t>(w) * h, 0.0);
  std::vector<double> tmp_w(static_cast<size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, wacc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= w || !map.observed(xx, y)) continue;
        acc += kernel[k + radius] * map.probability(xx, y);
        wacc += kernel[k + radius];
      }
      tmp_v[static_cast<size_t>(y) * w + x] = acc;
      tmp_w[static_cast<size_t>(y) * w + x] = wacc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!map.observed(x, y)) continue;
      double acc = 0.0, wacc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= h) continue;
        acc += kernel[k + radius] * tmp_v[static_cast<size_t>(yy) * w + x];
        wacc += kernel[k + radius] * tmp_w[static_cast<size_t>(yy) * w + x];
      }
      if (wacc > 0.0) {
        const double p = std::min(std::max(acc / wacc, 1e-6), 1.0 - 1e-6);
        out.set_probability(x, y, p);
      }
    }
  }
  return out;
}

void export_map(const GridMap& map, const std::string& pgm_path,
                const std::string& meta_path) {
  if (map.empty()) throw InvalidArgument("export_map: empty map");
  FILE* f = std::fopen(pgm_path.c_str(), "wb");
  if (!f) throw Error("cannot open for writing: " + pgm_path);
  std::fprintf(f, "P5\n%d %d\n255\n", map.width(), map.height());
  // Top image row is the highest y so the map reads north-up.
  for (int y = map.height() - 1; y >= 0; --y) {
    for (int x = 0; x < map.width(); ++x) {
      uint8_t v = 205;
      if (map.observed(x, y)) {
        const double p = map.probability(x, y);
        if (p > map.config().occupied_thresh) {
          v = 0;
        } else if (p < map.config().free_thresh) {
          v = 254;
        }
      }
      std::fputc(v, f);
    }
  }
  std::fclose(f);

  FILE* m = std::fopen(meta_path.c_str(), "w");
  if (!m) throw Error("cannot open for writing: " + meta_path);
  const Vec2 origin = map.origin_world();
  std::fprintf(m, "resolution=%.17g\n", map.config().resolution);
  std::fprintf(m, "origin_x=%.17g\n", origin.x());
  std::fprintf(m, "origin_y=%.17g\n", origin.y());
  std::fprintf(m, "origin_yaw=0\n");
  std::fprintf(m, "occupied_thresh=%.17g\n", map.config().occupied_thresh);
  std::fprintf(m, "free_thresh=%.17g\n", map.config().free_thresh);
  std::fclose(m);
}

void integrate_keyframe(GridMap& map, const Keyframe& kf,
                        const Pose2& lidar_pose) {
  map.integrate_points(kf.scan_points, lidar_pose);
}

}  // namespace slam2d

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "slam2d/dataio.hpp"
#include "slam2d/errors.hpp"
#include "slam2d/mapping.hpp"
#include "slam2d/simgen.hpp"

using namespace slam2d;
namespace fs = std::filesystem;

namespace {

double odds(double p) { return p / (1.0 - p); }

}  // namespace

TEST_CASE("single hit posterior equals p_hit") {
  GridMap map;
  // one point one meter ahead, no ray cells between? ensure at least the
  // endpoint cell update is exact
  map.integrate_points({Vec2(0.02, 0.0)}, Pose2::identity());
  int ix, iy;
  map.cell_of(Vec2(0.02, 0.0), ix, iy);
  CHECK(map.probability(ix, iy) == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("odds-product oracle to 1e-12") {
  GridMapConfig cfg;
  GridMap map(cfg);
  const Vec2 target(0.02, 0.0);
  int ix, iy;

  // one hit then one miss on the same cell, applied through the update path
  map.integrate_points({target}, Pose2::identity());
  map.cell_of(target, ix, iy);
  const double after_hit = map.probability(ix, iy);
  CHECK(std::abs(after_hit - 0.55) < 1e-12);

  // a ray passing through the cell: endpoint two cells further
  map.integrate_points({Vec2(0.12, 0.0)}, Pose2::identity());
  const double after_miss = map.probability(ix, iy);
  const double expect =
      odds(0.5) * odds(0.55) * odds(0.49) /
      (1.0 + odds(0.5) * odds(0.55) * odds(0.49) - 1.0 + 1.0 - 1.0);
  // direct odds-product arithmetic
  const double o = odds(0.55) * odds(0.49);
  CHECK(std::abs(after_miss - o / (1.0 + o)) < 1e-12);
  CHECK(after_miss == doctest::Approx(0.5401).epsilon(1e-3));
  (void)expect;

  // a longer random hit/miss sequence against the oracle
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coin(0, 1);
  double o_acc = o;
  for (int i = 0; i < 30; ++i) {
    if (coin(rng)) {
      map.integrate_points({target}, Pose2::identity());
      o_acc *= odds(cfg.p_hit);
    } else {
      map.integrate_points({Vec2(0.12, 0.0)}, Pose2::identity());
      o_acc *= odds(cfg.p_miss);
    }
    double expect_p = o_acc / (1.0 + o_acc);
    // the oracle respects the clamps as well
    expect_p = std::min(std::max(expect_p, cfg.p_clamp_min), cfg.p_clamp_max);
    o_acc = odds(expect_p);
    CHECK(std::abs(map.probability(ix, iy) - expect_p) < 1e-12);
  }
}

TEST_CASE("repeated hits saturate at the clamp") {
  GridMapConfig cfg;
  GridMap map(cfg);
  const Vec2 target(0.02, 0.0);
  for (int i = 0; i < 200; ++i) {
    map.integrate_points({target}, Pose2::identity());
  }
  int ix, iy;
  map.cell_of(target, ix, iy);
  CHECK(map.probability(ix, iy) == doctest::Approx(cfg.p_clamp_max).epsilon(1e-9));
}

TEST_CASE("ray cells stay below 0.5 and commute across keyframes") {
  GridMap map;
  // ray from origin to (1, 0): the pass-through cells get misses
  map.integrate_points({Vec2(1.0, 0.0)}, Pose2::identity());
  int ix, iy;
  map.cell_of(Vec2(0.5, 0.0), ix, iy);
  CHECK(map.observed(ix, iy));
  CHECK(map.probability(ix, iy) < 0.5);

  // order of distinct keyframes commutes (log-odds addition)
  GridMap ab, ba;
  const std::vector<Vec2> scan1 = {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
  const std::vector<Vec2> scan2 = {Vec2(0.8, 0.3), Vec2(-0.5, 0.6)};
  const Pose2 p1 = Pose2::identity();
  const Pose2 p2(0.3, Vec2(0.2, -0.1));
  ab.integrate_points(scan1, p1);
  ab.integrate_points(scan2, p2);
  ba.integrate_points(scan2, p2);
  ba.integrate_points(scan1, p1);
  for (int y = 0; y < std::max(ab.height(), ba.height()); ++y) {
    for (int x = 0; x < std::max(ab.width(), ba.width()); ++x) {
      // compare in world coordinates (growth order may differ)
      const Vec2 w = ab.cell_center(x, y);
      int bx, by;
      ba.cell_of(w, bx, by);
      if (x < ab.width() && y < ab.height()) {
        CHECK(std::abs(ab.probability(x, y) - ba.probability(bx, by)) < 1e-12);
      }
    }
  }
}

TEST_CASE("smooth") {
  SUBCASE("uniform field unchanged") {
    GridMap map;
    for (int x = 0; x < 20; ++x) {
      for (int y = 0; y < 20; ++y) {
        map.set_probability(x, y, 0.7);
      }
    }
    const GridMap out = smooth(map, 1.0);
    for (int x = 0; x < 20; ++x) {
      for (int y = 0; y < 20; ++y) {
        CHECK(out.probability(x, y) == doctest::Approx(0.7).epsilon(1e-9));
      }
    }
  }

  SUBCASE("single occupied cell spreads per the discrete kernel") {
    GridMap map;
    for (int x = 0; x < 21; ++x) {
      for (int y = 0; y < 21; ++y) {
        map.set_probability(x, y, 0.2);
      }
    }
    map.set_probability(10, 10, 0.9);
    const double sigma = 1.0;
    const GridMap out = smooth(map, sigma);

    // direct 2D convolution oracle at the center
    const int radius = 3;
    double acc = 0.0, wacc = 0.0;
    for (int dx = -radius; dx <= radius; ++dx) {
      for (int dy = -radius; dy <= radius; ++dy) {
        const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        const double p = (dx == 0 && dy == 0) ? 0.9 : 0.2;
        acc += w * p;
        wacc += w;
      }
    }
    CHECK(out.probability(10, 10) == doctest::Approx(acc / wacc).epsilon(1e-6));
  }

  SUBCASE("unknown cells stay unknown") {
    GridMap map;
    for (int x = 5; x < 15; ++x) {
      for (int y = 5; y < 15; ++y) {
        map.set_probability(x, y, 0.8);
      }
    }
    const GridMap out = smooth(map, 1.0);
    CHECK_FALSE(out.observed(0, 0));
    CHECK_FALSE(out.observed(3, 10));
    CHECK(out.observed(10, 10));
  }
}

TEST_CASE("export") {
  namespace fs = std::filesystem;
  const std::string pgm =
      (fs::temp_directory_path() / "slam2d_map_test.pgm").string();
  const std::string meta =
      (fs::temp_directory_path() / "slam2d_map_test.meta").string();

  SUBCASE("single occupied cell exports pixel 0") {
    GridMap map;
    map.set_probability(0, 0, 0.9);
    export_map(map, pgm, meta);
    std::ifstream in(pgm, std::ios::binary);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    CHECK(magic == "P5");
    CHECK(maxval == 255);
    in.get();
    std::vector<unsigned char> pixels(w * h);
    in.read(reinterpret_cast<char*>(pixels.data()), pixels.size());
    // find at least one occupied pixel (the rest of the chunk is unknown)
    int zeros = 0, unknowns = 0;
    for (unsigned char v : pixels) {
      if (v == 0) ++zeros;
      if (v == 205) ++unknowns;
    }
    CHECK(zeros == 1);
    CHECK(unknowns == w * h - 1);
  }

  SUBCASE("metadata round-trips") {
    GridMap map;
    map.set_probability(0, 0, 0.9);
    export_map(map, pgm, meta);
    std::ifstream in(meta);
    std::string line;
    std::map<std::string, double> kv;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      REQUIRE(eq != std::string::npos);
      kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
    }
    CHECK(kv.at("resolution") == map.config().resolution);
    CHECK(kv.at("origin_x") == map.origin_world().x());
    CHECK(kv.at("origin_y") == map.origin_world().y());
    CHECK(kv.at("occupied_thresh") == map.config().occupied_thresh);
    CHECK(kv.at("free_thresh") == map.config().free_thresh);
  }

  SUBCASE("empty map rejected") {
    GridMap map;
    CHECK_THROWS_AS(export_map(map, pgm, meta), InvalidArgument);
  }
}

TEST_CASE("noise-free square room maps 99% correctly") {
  World world;
  world.add_wall({-2, -2}, {2, -2});
  world.add_wall({2, -2}, {2, 2});
  world.add_wall({2, 2}, {-2, 2});
  world.add_wall({-2, 2}, {-2, -2});

  GridMap map;
  ScanParams params;
  // several poses so every wall cell collects hits
  for (int i = 0; i < 60; ++i) {
    const double ang = 2.0 * M_PI * i / 60.0;
    const Pose2 pose(ang * 0.5, Vec2(0.9 * std::cos(ang), 0.9 * std::sin(ang)));
    const auto rc = raycast_scan(world, pose, params, std::nullopt, 0.0);
    const ScanPoints pts = scan_to_points(rc.scan);
    map.integrate_points(pts.points, pose);
  }

  const double res = map.config().resolution;
  // true-wall cells: rasterize the wall segments at sub-cell steps
  std::set<std::pair<int, int>> wall_cells;
  for (const auto& wall : world.walls) {
    const double len = (wall.b - wall.a).norm();
    for (double s = 0.0; s <= len; s += 0.25 * res) {
      const Vec2 p = wall.a + (wall.b - wall.a) * (s / len);
      int ix, iy;
      map.cell_of(p, ix, iy);
      wall_cells.insert({ix, iy});
    }
  }
  int wall_occupied = 0;
  for (const auto& [ix, iy] : wall_cells) {
    if (map.observed(ix, iy) &&
        map.probability(ix, iy) > map.config().occupied_thresh) {
      ++wall_occupied;
    }
  }
  int interior_cells = 0, interior_free = 0;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const Vec2 c = map.cell_center(x, y);
      const double d = std::max(std::abs(c.x()), std::abs(c.y()));
      if (d < 2.0 - 3.0 * res) {
        ++interior_cells;
        if (map.observed(x, y) &&
            map.probability(x, y) < map.config().free_thresh) {
          ++interior_free;
        }
      }
    }
  }
  REQUIRE(wall_cells.size() > 100);
  REQUIRE(interior_cells > 1000);
  CHECK(static_cast<double>(wall_occupied) / wall_cells.size() >= 0.99);
  CHECK(static_cast<double>(interior_free) / interior_cells >= 0.99);
}

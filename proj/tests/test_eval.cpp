#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "slam2d/errors.hpp"
#include "slam2d/eval.hpp"

using namespace slam2d;

namespace {

Trajectory straight_traj(int n, double step, double yaw_rate = 0.0) {
  Trajectory traj;
  for (int i = 0; i < n; ++i) {
    TrajectorySample s;
    s.stamp = 0.1 * i;
    s.pose.translation = Vec3(step * i, 0.02 * i, 0.0);
    s.pose.rotation = RotVec(0, 0, yaw_rate * i);
    traj.samples.push_back(s);
  }
  return traj;
}

Trajectory transformed(const Trajectory& in, const Pose3& T) {
  Trajectory out = in;
  for (auto& s : out.samples) s.pose = compose(T, s.pose);
  return out;
}

}  // namespace

TEST_CASE("associate") {
  const Trajectory gt = straight_traj(50, 0.1);

  SUBCASE("identical stamps pair fully") {
    const auto pairs = associate(gt, gt, 0.05);
    CHECK(pairs.size() == 50);
  }

  SUBCASE("offset within max_dt pairs fully") {
    Trajectory est = gt;
    for (auto& s : est.samples) s.stamp += 0.04;
    const auto pairs = associate(est, gt, 0.05);
    CHECK(pairs.size() == 50);
  }

  SUBCASE("disjoint time ranges raise") {
    Trajectory est = gt;
    for (auto& s : est.samples) s.stamp += 100.0;
    CHECK_THROWS_AS(associate(est, gt, 0.05), EmptyAssociation);
  }
}

TEST_CASE("ape_rmse") {
  const Trajectory gt = straight_traj(60, 0.1, 0.01);

  SUBCASE("identical trajectories give zeros") {
    const auto pairs = associate(gt, gt, 0.01);
    const ApeReport r = ape_rmse(pairs, false);
    CHECK(r.trans_rmse == 0.0);
    CHECK(r.rot_rmse < 1e-15);  // log(R^T R) roundoff
    CHECK(r.combined < 1e-15);
  }

  SUBCASE("global shift is removed by alignment") {
    const Trajectory est =
        transformed(gt, Pose3(RotVec(), Vec3(1.0, -0.5, 0.0)));
    const auto pairs = associate(est, gt, 0.01);
    CHECK(ape_rmse(pairs, true).trans_rmse < 1e-9);
    CHECK(ape_rmse(pairs, false).trans_rmse == doctest::Approx(std::hypot(1.0, 0.5)));
  }

  SUBCASE("yaw bias shows up as rot_rmse without alignment") {
    Trajectory est = gt;
    for (auto& s : est.samples) {
      s.pose.rotation = log_so3(exp_so3(RotVec(0, 0, 0.1)) *
                                exp_so3(s.pose.rotation));
    }
    // keep translations identical so only rotation differs
    const auto pairs = associate(est, gt, 0.01);
    CHECK(ape_rmse(pairs, false).rot_rmse == doctest::Approx(0.1).epsilon(1e-9));
  }

  SUBCASE("alignment is invariant to any planar rigid motion") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Trajectory noisy = gt;
    std::normal_distribution<double> g(0.0, 0.02);
    for (auto& s : noisy.samples) {
      s.pose.translation += Vec3(g(rng), g(rng), 0.0);
    }
    const auto base = ape_rmse(associate(noisy, gt, 0.01), true);
    for (int trial = 0; trial < 10; ++trial) {
      const Pose3 motion = to_pose3(Pose2(u(rng), u(rng), u(rng)));
      const Trajectory moved = transformed(noisy, motion);
      const auto r = ape_rmse(associate(moved, gt, 0.01), true);
      CHECK(std::abs(r.trans_rmse - base.trans_rmse) < 1e-9);
      CHECK(std::abs(r.rot_rmse - base.rot_rmse) < 1e-9);
    }
  }
}

TEST_CASE("rpe_rmse") {
  const Trajectory gt = straight_traj(200, 0.05);

  SUBCASE("identical trajectories give zeros") {
    const auto pairs = associate(gt, gt, 0.01);
    const RpeReport r = rpe_rmse(pairs, 0.1);
    CHECK(r.n > 0);
    CHECK(r.combined == 0.0);
    CHECK(r.max == 0.0);
    CHECK(r.sse == 0.0);
  }

  SUBCASE("constant 1% drift gives rpe near 0.001 at delta 0.1") {
    Trajectory est = gt;
    for (auto& s : est.samples) {
      s.pose.translation.x() *= 1.01;
    }
    const auto pairs = associate(est, gt, 0.01);
    const RpeReport r = rpe_rmse(pairs, 0.1);
    CHECK(r.trans_rmse == doctest::Approx(0.001).epsilon(0.1));
  }

  SUBCASE("statistics cross-check: sse = rmse^2 * n exactly") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 0.01);
    Trajectory est = gt;
    for (auto& s : est.samples) {
      s.pose.translation += Vec3(g(rng), g(rng), 0.0);
      s.pose.rotation = RotVec(0, 0, 0.002 * g(rng));
    }
    const auto pairs = associate(est, gt, 0.01);
    const RpeReport r = rpe_rmse(pairs, 0.1);
    CHECK(r.n > 10);
    CHECK(r.sse == r.combined * r.combined * r.n);  // exact identity
    CHECK(r.max >= r.mean);
    CHECK(r.mean >= r.min);
    CHECK(r.median >= r.min);
    CHECK(r.median <= r.max);
  }

  SUBCASE("rpe is invariant to a global rigid motion without alignment") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.0, 0.01);
    Trajectory est = gt;
    for (auto& s : est.samples) s.pose.translation += Vec3(g(rng), g(rng), 0.0);
    const auto base = rpe_rmse(associate(est, gt, 0.01), 0.1);
    const Trajectory moved =
        transformed(est, to_pose3(Pose2(1.1, -2.0, 0.7)));
    const auto r = rpe_rmse(associate(moved, gt, 0.01), 0.1);
    CHECK(std::abs(r.combined - base.combined) < 1e-9);
  }
}

TEST_CASE("tum io round trip") {
  namespace fs = std::filesystem;
  Trajectory traj;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    TrajectorySample s;
    s.stamp = 0.1 * i;
    s.pose.translation = Vec3(u(rng), u(rng), 0.0);
    s.pose.rotation = RotVec(0, 0, u(rng));
    traj.samples.push_back(s);
  }
  const std::string path =
      (fs::temp_directory_path() / "slam2d_eval_io.tum").string();
  write_tum(path, traj);
  const Trajectory back = read_tum(path);
  REQUIRE(back.samples.size() == traj.samples.size());
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i].stamp - traj.samples[i].stamp) < 1e-9);
    CHECK((back.samples[i].pose.translation -
           traj.samples[i].pose.translation)
              .norm() < 1e-8);
    CHECK((back.samples[i].pose.rotation.axis_angle -
           traj.samples[i].pose.rotation.axis_angle)
              .norm() < 1e-8);
  }
  CHECK_THROWS_AS(read_tum("/nonexistent/file.tum"), NotFound);
}

TEST_CASE("report fields include the table statistics") {
  const Trajectory gt = straight_traj(100, 0.05);
  const auto pairs = associate(gt, gt, 0.01);
  const auto fields = report_fields(ape_rmse(pairs, true), rpe_rmse(pairs, 0.1));
  for (const char* key :
       {"rpe_max", "rpe_mean", "rpe_median", "rpe_min", "rpe_rmse", "rpe_sse",
        "rpe_std", "ape_trans_rmse", "ape_rot_rmse", "ape_combined"}) {
    CHECK(fields.count(key) == 1);
  }
}

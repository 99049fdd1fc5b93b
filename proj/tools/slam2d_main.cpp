#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "slam2d/errors.hpp"
#include "slam2d/eval.hpp"
#include "slam2d/runner.hpp"
#include "slam2d/simgen.hpp"

namespace {

using namespace slam2d;

int verbosity() {
  const char* env = std::getenv("SLAM2D_LOG");
  if (!env) return 1;
  const std::string v = env;
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void apply_overrides(RunParams& params, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("--set expects key=value, got '" + s + "'");
    }
    params.apply_override(s.substr(0, eq), s.substr(eq + 1));
  }
}

int cmd_run(const std::string& dataset_dir, const std::string& calib_path,
            const std::string& output_dir, RunParams params) {
  DatasetStreams data = load_dataset(dataset_dir);
  if (!calib_path.empty()) data.calib = load_calibration(calib_path);
  if (verbosity() >= 1) params.print(stdout);

  const RunResult result = run_pipeline(data, params, output_dir);
  if (!result.stats.initialized) {
    std::fprintf(stderr,
                 "run: initialization never succeeded (%d frames; check line "
                 "features and wheel data)\n",
                 result.stats.frames);
    return 2;
  }
  if (verbosity() >= 1) {
    std::printf("frames=%d keyframes=%d loops=%d mean_track_ms=%.2f\n",
                result.stats.frames, result.stats.keyframes,
                result.stats.loops_accepted, result.stats.mean_track_ms);
    std::printf("artifacts written to %s\n", output_dir.c_str());
  }
  return 0;
}

int cmd_simulate(const std::string& scenario_name, uint64_t seed,
                 const std::string& out_dir) {
  const Scenario scenario = make_scenario(scenario_name);
  export_dataset(scenario, seed, out_dir);
  if (verbosity() >= 1) {
    std::printf("scenario '%s' (seed %llu) written to %s\n",
                scenario_name.c_str(), static_cast<unsigned long long>(seed),
                out_dir.c_str());
  }
  return 0;
}

int cmd_evaluate(const std::string& est_path, const std::string& gt_path,
                 double max_dt, double rpe_delta, bool align,
                 const std::vector<std::string>& gates,
                 const std::string& csv_path) {
  const Trajectory est = read_tum(est_path);
  const Trajectory gt = read_tum(gt_path);
  const auto pairs = associate(est, gt, max_dt);
  const ApeReport ape = ape_rmse(pairs, align);
  const RpeReport rpe = rpe_rmse(pairs, rpe_delta);
  const auto fields = report_fields(ape, rpe);
  for (const auto& [k, v] : fields) {
    std::printf("%s=%.9g\n", k.c_str(), v);
  }
  if (!csv_path.empty()) {
    FILE* f = std::fopen(csv_path.c_str(), "w");
    if (!f) throw Error("cannot open for writing: " + csv_path);
    bool first = true;
    for (const auto& [k, v] : fields) {
      std::fprintf(f, first ? "%s" : ",%s", k.c_str());
      first = false;
    }
    std::fprintf(f, "\n");
    first = true;
    for (const auto& [k, v] : fields) {
      std::fprintf(f, first ? "%.9g" : ",%.9g", v);
      first = false;
    }
    std::fprintf(f, "\n");
    std::fclose(f);
  }
  for (const auto& gate : gates) {
    const auto eq = gate.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("--gate expects key=threshold");
    }
    const std::string key = gate.substr(0, eq);
    const double threshold = std::stod(gate.substr(eq + 1));
    const auto it = fields.find(key);
    if (it == fields.end()) {
      throw InvalidArgument("unknown gate key: " + key);
    }
    if (it->second > threshold) {
      std::printf("GATE VIOLATED %s=%.9g > %.9g\n", key.c_str(), it->second,
                  threshold);
      return 1;
    }
  }
  return 0;
}

int cmd_localize(const std::string& db_path, const std::string& scan_path,
                 RunParams params) {
  const KeyframeDb db = load_keyframe_db(db_path);
  if (db.entries.empty()) {
    std::fprintf(stderr, "localize: empty keyframe database\n");
    return 2;
  }
  const auto scans = load_scan_csv(scan_path);
  if (scans.empty()) {
    std::fprintf(stderr, "localize: no scan rows in %s\n", scan_path.c_str());
    return 2;
  }

  LoopConfig cfg = params.loop;
  cfg.exclusion_window = 0;
  LoopDetector detector(cfg, db.body_from_lidar);
  for (const auto& e : db.entries) detector.insert(e);

  const ScanPoints points = scan_to_points(scans.front());
  const ScanFeatures feats =
      extract_features(points, params.features, scans.front().stamp);
  KeyframeSignature query;
  query.id = db.entries.back().id + cfg.exclusion_window + 1000000;
  query.stamp = scans.front().stamp;
  for (const auto& c : feats.corners) query.corners.push_back(c.position);
  // decimate to keyframe density for the ICP stage
  const size_t stride = std::max<size_t>(1, points.points.size() / 400);
  for (size_t i = 0; i < points.points.size(); i += stride) {
    query.scan_points.push_back(points.points[i]);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto constraint = detector.detect(query);
  const double total_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
  const DetectStats& stats = detector.last_stats();
  std::printf("query corners=%zu candidates=%d filtered=%d\n",
              query.corners.size(), stats.candidates_total,
              stats.candidates_after_filter);
  std::printf("timing_ms total=%.3f match=%.3f icp=%.3f\n", total_ms,
              stats.filter_ms + stats.match_ms, stats.icp_ms);
  if (!constraint) {
    std::printf("no match\n");
    return 1;
  }
  const KeyframeSignature* ref = detector.entry(constraint->from_id);
  const Pose2 pose = compose(ref->body_pose, constraint->relative_pose);
  std::printf("matched keyframe=%d pairs=%d icp_rms=%.4f\n",
              constraint->from_id, constraint->match_count,
              constraint->post_icp_rms);
  std::printf("pose x=%.6f y=%.6f yaw=%.6f\n", pose.xy.x(), pose.xy.y(),
              pose.yaw);
  return 0;
}

int cmd_export_map(const std::string& db_path, const std::string& out_prefix,
                   RunParams params) {
  const KeyframeDb db = load_keyframe_db(db_path);
  if (db.entries.empty()) {
    std::fprintf(stderr, "export-map: empty keyframe database\n");
    return 2;
  }
  GridMap map(params.map);
  for (const auto& e : db.entries) {
    map.integrate_points(e.scan_points, compose(e.body_pose, db.body_from_lidar));
  }
  const GridMap smoothed = smooth(map, params.map_smooth_sigma);
  export_map(smoothed, out_prefix + ".pgm", out_prefix + ".meta");
  if (verbosity() >= 1) {
    std::printf("map written to %s.pgm (%dx%d)\n", out_prefix.c_str(),
                smoothed.width(), smoothed.height());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D lidar + IMU + wheel odometry SLAM replay tool"};
  app.require_subcommand(1);

  RunParams params;
  std::vector<std::string> sets;
  app.add_option("--set", sets,
                 "override a config value (key=value, repeatable)")
      ->take_all();

  // run
  auto* run = app.add_subcommand("run", "replay a dataset through SLAM");
  std::string dataset_dir, calib_path, output_dir = "out";
  bool no_loop = false, no_wheel = false, no_ground = false;
  double range_clip = 0.0;
  run->add_option("dataset", dataset_dir, "dataset directory")->required();
  run->add_option("-o,--output", output_dir, "output directory");
  run->add_option("--calib", calib_path, "calibration override file");
  run->add_flag("--no-loop", no_loop, "disable loop closure");
  run->add_flag("--no-wheel", no_wheel, "disable the wheel factor");
  run->add_flag("--no-ground", no_ground, "disable the ground factor");
  run->add_option("--range-clip", range_clip,
                  "clip scan ranges to this many meters");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string scenario = "square_loop";
  uint64_t seed = 1;
  std::string sim_out = "dataset";
  sim->add_option("scenario", scenario,
                  "square_loop | corridor_clip | two_rooms")
      ->required();
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("-o,--output", sim_out, "output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "trajectory metrics vs ground truth");
  std::string est_path, gt_path, csv_path;
  double max_dt = 0.05, rpe_delta = 0.1;
  bool no_align = false;
  std::vector<std::string> gates;
  ev->add_option("estimate", est_path, "estimated trajectory (TUM)")->required();
  ev->add_option("groundtruth", gt_path, "ground-truth trajectory (TUM)")
      ->required();
  ev->add_option("--max-dt", max_dt, "association tolerance, s");
  ev->add_option("--rpe-delta", rpe_delta, "RPE arc-length spacing, m");
  ev->add_flag("--no-align", no_align, "skip planar alignment for APE");
  ev->add_option("--gate", gates, "fail when field exceeds threshold (k=v)")
      ->take_all();
  ev->add_option("--csv", csv_path, "also write the report as one CSV row");

  // localize
  auto* loc = app.add_subcommand("localize", "one-shot global localization");
  std::string db_path, scan_path;
  loc->add_option("keyframes", db_path, "keyframe database (keyframes.txt)")
      ->required();
  loc->add_option("scan", scan_path, "query scan (scan.csv format)")
      ->required();

  // export-map
  auto* em = app.add_subcommand("export-map", "occupancy grid from keyframes");
  std::string em_db, em_out = "map";
  em->add_option("keyframes", em_db, "keyframe database")->required();
  em->add_option("-o,--output", em_out, "output path prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_overrides(params, sets);
    if (run->parsed()) {
      params.toggles.loop_closure = !no_loop;
      params.toggles.wheel_factor = !no_wheel;
      params.toggles.ground_factor = !no_ground;
      if (range_clip > 0.0) params.toggles.range_clip = range_clip;
      return cmd_run(dataset_dir, calib_path, output_dir, params);
    }
    if (sim->parsed()) return cmd_simulate(scenario, seed, sim_out);
    if (ev->parsed()) {
      return cmd_evaluate(est_path, gt_path, max_dt, rpe_delta, !no_align,
                          gates, csv_path);
    }
    if (loc->parsed()) return cmd_localize(db_path, scan_path, params);
    if (em->parsed()) return cmd_export_map(em_db, em_out, params);
  } catch (const slam2d::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

#include "slam2d/runner.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "slam2d/errors.hpp"

namespace slam2d {

namespace {

double parse_num(const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str()) throw InvalidArgument("not a number: " + v);
  return x;
}

}  // namespace

void RunParams::apply_override(const std::string& key,
                               const std::string& value) {
  const double num = parse_num(value);
  auto deg = [](double d) { return d * M_PI / 180.0; };
  if (key == "features.d_break") features.d_break = num;
  else if (key == "features.skip") features.skip = int(num);
  else if (key == "features.nms_window") features.nms_window = int(num);
  else if (key == "features.theta_line_deg") features.theta_line = deg(num);
  else if (key == "features.theta_corner_deg") features.theta_corner = deg(num);
  else if (key == "features.n_min") features.n_min = int(num);
  else if (key == "features.len_min") features.len_min = num;
  else if (key == "features.d_adjacent") features.d_adjacent = num;
  else if (key == "features.max_fit_rms") features.max_fit_rms = num;
  else if (key == "frontend.window_size") frontend.window_size = int(num);
  else if (key == "frontend.init_frames") frontend.init_frames = int(num);
  else if (key == "frontend.init_min_matches") frontend.init_min_matches = int(num);
  else if (key == "frontend.stationary_d") frontend.stationary_d = num;
  else if (key == "frontend.reference_capacity") frontend.reference_capacity = int(num);
  else if (key == "frontend.keyframe_trans") frontend.keyframe_trans = num;
  else if (key == "frontend.keyframe_rot_deg") frontend.keyframe_rot = deg(num);
  else if (key == "frontend.keyframe_time") frontend.keyframe_time = num;
  else if (key == "frontend.theta_match_deg") frontend.match.theta_match = deg(num);
  else if (key == "frontend.d_match") frontend.match.d_match = num;
  else if (key == "frontend.min_overlap") frontend.match.min_overlap = num;
  else if (key == "frontend.huber_delta") frontend.huber_delta = num;
  else if (key == "frontend.solver_max_iters") frontend.solver_max_iters = int(num);
  else if (key == "loop.d_res") loop.d_res = num;
  else if (key == "loop.a_res_deg") loop.a_res = deg(num);
  else if (key == "loop.t_min") loop.t_min = int(num);
  else if (key == "loop.p_success") loop.p_success = num;
  else if (key == "loop.overlap_guess") loop.overlap_guess = num;
  else if (key == "loop.exclusion_window") loop.exclusion_window = int(num);
  else if (key == "loop.icp_gate") loop.icp_gate = num;
  else if (key == "loop.fast_filter_min") loop.fast_filter_min = num;
  else if (key == "loop.seed") loop.seed = uint64_t(num);
  else if (key == "map.resolution") map.resolution = num;
  else if (key == "map.p_hit") map.p_hit = num;
  else if (key == "map.p_miss") map.p_miss = num;
  else if (key == "map.smooth_sigma") map_smooth_sigma = num;
  else throw InvalidArgument("unknown config key: " + key);
}

void RunParams::print(FILE* out) const {
  std::fprintf(out, "config:\n");
  std::fprintf(out, "  features.d_break=%g\n", features.d_break);
  std::fprintf(out, "  features.skip=%d\n", features.skip);
  std::fprintf(out, "  features.nms_window=%d\n", features.nms_window);
  std::fprintf(out, "  features.theta_line_deg=%g\n",
               features.theta_line * 180.0 / M_PI);
  std::fprintf(out, "  features.theta_corner_deg=%g\n",
               features.theta_corner * 180.0 / M_PI);
  std::fprintf(out, "  features.n_min=%d\n", features.n_min);
  std::fprintf(out, "  features.len_min=%g\n", features.len_min);
  std::fprintf(out, "  features.d_adjacent=%g\n", features.d_adjacent);
  std::fprintf(out, "  features.max_fit_rms=%g\n", features.max_fit_rms);
  std::fprintf(out, "  frontend.window_size=%d\n", frontend.window_size);
  std::fprintf(out, "  frontend.init_frames=%d\n", frontend.init_frames);
  std::fprintf(out, "  frontend.init_min_matches=%d\n",
               frontend.init_min_matches);
  std::fprintf(out, "  frontend.reference_capacity=%d\n",
               frontend.reference_capacity);
  std::fprintf(out, "  frontend.keyframe_trans=%g\n", frontend.keyframe_trans);
  std::fprintf(out, "  frontend.keyframe_rot_deg=%g\n",
               frontend.keyframe_rot * 180.0 / M_PI);
  std::fprintf(out, "  frontend.keyframe_time=%g\n", frontend.keyframe_time);
  std::fprintf(out, "  frontend.theta_match_deg=%g\n",
               frontend.match.theta_match * 180.0 / M_PI);
  std::fprintf(out, "  frontend.d_match=%g\n", frontend.match.d_match);
  std::fprintf(out, "  loop.d_res=%g\n", loop.d_res);
  std::fprintf(out, "  loop.a_res_deg=%g\n", loop.a_res * 180.0 / M_PI);
  std::fprintf(out, "  loop.t_min=%d\n", loop.t_min);
  std::fprintf(out, "  loop.p_success=%g\n", loop.p_success);
  std::fprintf(out, "  loop.exclusion_window=%d\n", loop.exclusion_window);
  std::fprintf(out, "  loop.icp_gate=%g\n", loop.icp_gate);
  std::fprintf(out, "  loop.seed=%llu\n",
               static_cast<unsigned long long>(loop.seed));
  std::fprintf(out, "  map.resolution=%g\n", map.resolution);
  std::fprintf(out, "  map.smooth_sigma=%g\n", map_smooth_sigma);
  std::fprintf(out, "  toggles: loop=%d wheel=%d ground=%d clip=%g\n",
               toggles.loop_closure, toggles.wheel_factor,
               toggles.ground_factor,
               toggles.range_clip ? *toggles.range_clip : -1.0);
}

void clip_scans(std::vector<LaserScan>& scans, double clip) {
  for (auto& scan : scans) {
    scan.range_max = std::min(scan.range_max, clip);
  }
}

namespace {

KeyframeSignature signature_of(const Keyframe& kf) {
  KeyframeSignature sig;
  sig.id = kf.id;
  sig.stamp = kf.stamp;
  sig.body_pose = to_pose2(kf.state.pose());
  sig.corners.reserve(kf.corners.size());
  for (const auto& c : kf.corners) sig.corners.push_back(c.position);
  sig.scan_points = kf.scan_points;
  return sig;
}

// Serialized back-end work, one thread behind a FIFO. The replay loop
// drains the queue at frame boundaries (wait_idle) for determinism.
class BackendWorker {
 public:
  BackendWorker(PoseGraph& graph, LoopDetector& detector, Frontend& frontend,
                bool loop_enabled, RunResult& out)
      : graph_(graph),
        detector_(detector),
        frontend_(frontend),
        loop_enabled_(loop_enabled),
        out_(out),
        thread_([this] { run(); }) {}

  ~BackendWorker() { shutdown(); }

  void enqueue(Keyframe kf) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      queue_.push_back(std::move(kf));
    }
    cv_.notify_all();
  }

  void wait_idle() {
    std::unique_lock<std::mutex> lock(mu_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
  }

  void shutdown() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (stop_) return;
      stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  double total_match_ms = 0.0;
  double total_icp_ms = 0.0;
  int detect_calls = 0;

 private:
  void run() {
    while (true) {
      Keyframe kf;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;  // stop requested and drained
        kf = std::move(queue_.front());
        queue_.pop_front();
        busy_ = true;
      }
      process(kf);
      {
        std::lock_guard<std::mutex> lock(mu_);
        busy_ = false;
      }
      idle_cv_.notify_all();
    }
  }

  void process(const Keyframe& kf) {
    graph_.add_keyframe(kf);
    const KeyframeSignature sig = signature_of(kf);
    std::optional<LoopConstraint> constraint;
    if (loop_enabled_ && detector_.size() > 0) {
      constraint = detector_.detect(sig);
      const DetectStats& stats = detector_.last_stats();
      total_match_ms += stats.filter_ms + stats.match_ms;
      total_icp_ms += stats.icp_ms;
      ++detect_calls;
    }
    detector_.insert(sig);
    if (constraint) {
      graph_.add_loop(*constraint);
      out_.loops.push_back(*constraint);
      try {
        graph_.optimize();
      } catch (const Error&) {
        return;  // graph untouched per contract; skip the correction
      }
      const Pose2 offset = graph_.broadcast_correction();
      graph_.note_correction(offset);
      frontend_.apply_correction(offset);
    }
  }

  PoseGraph& graph_;
  LoopDetector& detector_;
  Frontend& frontend_;
  bool loop_enabled_;
  RunResult& out_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Keyframe> queue_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread thread_;
};

TrajectorySample sample_of(const State& s) {
  TrajectorySample out;
  out.stamp = s.stamp;
  out.pose = s.pose();
  return out;
}

}  // namespace

RunResult run_pipeline(const DatasetStreams& data, const RunParams& params,
                       const std::string& output_dir) {
  namespace fs = std::filesystem;
  RunResult result;
  if (data.scans.size() < 2) {
    throw InvalidArgument("run_pipeline: need at least 2 scans");
  }

  std::vector<LaserScan> scans = data.scans;
  if (params.toggles.range_clip) {
    clip_scans(scans, *params.toggles.range_clip);
  }

  FrontendConfig fe_cfg = params.frontend;
  fe_cfg.use_wheel = params.toggles.wheel_factor;
  fe_cfg.use_ground = params.toggles.ground_factor;
  Frontend frontend(fe_cfg, data.calib);

  const Pose2 body_from_lidar = to_pose2(data.calib.body_from_lidar());
  PoseGraph graph(params.graph);
  LoopDetector detector(params.loop, body_from_lidar);
  BackendWorker worker(graph, detector, frontend,
                       params.toggles.loop_closure, result);

  const auto wall_start = std::chrono::steady_clock::now();
  double track_ms_total = 0.0;
  double lines_total = 0.0, matches_total = 0.0;

  double prev_stamp = scans.front().stamp;
  for (size_t i = 1; i < scans.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    FrameBundle bundle = assemble_bundle(scans[i], prev_stamp, data.imu,
                                         data.wheel, params.features);
    prev_stamp = scans[i].stamp;
    ++result.stats.frames;
    lines_total += static_cast<double>(bundle.lines.size());

    Frontend::Result fr = frontend.process(bundle);
    track_ms_total += std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();

    if (fr.initialized_now) {
      result.stats.initialized = true;
      for (const auto& s : fr.backfill_states) {
        result.frontend_traj.samples.push_back(sample_of(s));
      }
    } else if (fr.tracked) {
      result.frontend_traj.samples.push_back(sample_of(fr.state));
    }
    if (fr.tracked) {
      ++result.stats.tracked_frames;
      matches_total += fr.line_matches;
      if (fr.degraded) ++result.stats.degraded_frames;
    }
    for (auto& kf : fr.keyframes) {
      result.keyframes.push_back(kf);
      worker.enqueue(std::move(kf));
    }
    worker.wait_idle();
  }
  worker.shutdown();

  result.stats.total_wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    wall_start)
          .count();
  result.stats.scan_span_s = scans.back().stamp - scans.front().stamp;
  result.stats.keyframes = graph.size();
  result.stats.loops_accepted = static_cast<int>(result.loops.size());
  if (result.stats.frames > 0) {
    result.stats.mean_lines_extracted = lines_total / result.stats.frames;
    result.stats.mean_track_ms = track_ms_total / result.stats.frames;
  }
  if (result.stats.tracked_frames > 0) {
    result.stats.mean_line_matches =
        matches_total / result.stats.tracked_frames;
  }
  if (worker.detect_calls > 0) {
    result.stats.mean_loop_match_ms =
        worker.total_match_ms / worker.detect_calls;
    result.stats.mean_loop_icp_ms = worker.total_icp_ms / worker.detect_calls;
  }

  for (int id = 0; id < graph.size(); ++id) {
    result.optimized_poses.push_back(graph.node(id));
    TrajectorySample s;
    s.stamp = graph.node_stamp(id);
    s.pose = to_pose3(graph.node(id));
    result.optimized_traj.samples.push_back(s);
  }

  if (!output_dir.empty() && result.stats.initialized) {
    fs::create_directories(output_dir);
    write_tum((fs::path(output_dir) / "frontend.tum").string(),
              result.frontend_traj);
    write_tum((fs::path(output_dir) / "optimized.tum").string(),
              result.optimized_traj);
    write_loops_csv((fs::path(output_dir) / "loops.csv").string(),
                    result.loops);
    save_keyframe_db((fs::path(output_dir) / "keyframes.txt").string(),
                     result.keyframes, result.optimized_poses,
                     body_from_lidar);

    if (!result.keyframes.empty()) {
      GridMap map(params.map);
      for (const auto& kf : result.keyframes) {
        const Pose2 node = result.optimized_poses.at(kf.id);
        integrate_keyframe(map, kf, compose(node, body_from_lidar));
      }
      const GridMap smoothed = smooth(map, params.map_smooth_sigma);
      export_map(smoothed, (fs::path(output_dir) / "map.pgm").string(),
                 (fs::path(output_dir) / "map.meta").string());
    }

    FILE* f = std::fopen(
        ((fs::path(output_dir) / "stats.txt").string()).c_str(), "w");
    if (f) {
      const RunStats& st = result.stats;
      std::fprintf(f, "frames=%d\n", st.frames);
      std::fprintf(f, "tracked_frames=%d\n", st.tracked_frames);
      std::fprintf(f, "degraded_frames=%d\n", st.degraded_frames);
      std::fprintf(f, "keyframes=%d\n", st.keyframes);
      std::fprintf(f, "loops_accepted=%d\n", st.loops_accepted);
      std::fprintf(f, "mean_track_ms=%.3f\n", st.mean_track_ms);
      std::fprintf(f, "mean_lines_extracted=%.2f\n", st.mean_lines_extracted);
      std::fprintf(f, "mean_line_matches=%.2f\n", st.mean_line_matches);
      std::fprintf(f, "mean_loop_match_ms=%.3f\n", st.mean_loop_match_ms);
      std::fprintf(f, "mean_loop_icp_ms=%.3f\n", st.mean_loop_icp_ms);
      std::fprintf(f, "wall_s=%.3f\n", st.total_wall_s);
      std::fprintf(f, "scan_span_s=%.3f\n", st.scan_span_s);
      std::fclose(f);
    }
  }
  return result;
}

void write_loops_csv(const std::string& path,
                     const std::vector<LoopConstraint>& loops) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open for writing: " + path);
  std::fprintf(f, "from_id,to_id,dx,dy,dyaw,match_count,icp_rms\n");
  for (const auto& l : loops) {
    std::fprintf(f, "%d,%d,%.9f,%.9f,%.9f,%d,%.9f\n", l.from_id, l.to_id,
                 l.relative_pose.xy.x(), l.relative_pose.xy.y(),
                 l.relative_pose.yaw, l.match_count, l.post_icp_rms);
  }
  std::fclose(f);
}

void save_keyframe_db(const std::string& path,
                      const std::vector<Keyframe>& keyframes,
                      const std::vector<Pose2>& poses,
                      const Pose2& body_from_lidar) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open for writing: " + path);
  std::fprintf(f, "# keyframe database v1\n");
  std::fprintf(f, "extrinsic_lidar %.9f %.9f %.9f\n", body_from_lidar.xy.x(),
               body_from_lidar.xy.y(), body_from_lidar.yaw);
  for (const auto& kf : keyframes) {
    const Pose2 pose = static_cast<size_t>(kf.id) < poses.size()
                           ? poses[kf.id]
                           : to_pose2(kf.state.pose());
    std::fprintf(f, "keyframe %d %.9f %.9f %.9f %.9f\n", kf.id, kf.stamp,
                 pose.xy.x(), pose.xy.y(), pose.yaw);
    std::fprintf(f, "corners %zu\n", kf.corners.size());
    for (const auto& c : kf.corners) {
      std::fprintf(f, "%.9f %.9f %.9f\n", c.position.x(), c.position.y(),
                   c.incident_angle);
    }
    std::fprintf(f, "points %zu\n", kf.scan_points.size());
    for (const auto& p : kf.scan_points) {
      std::fprintf(f, "%.9f %.9f\n", p.x(), p.y());
    }
  }
  std::fclose(f);
}

KeyframeDb load_keyframe_db(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("missing keyframe database: " + path);
  KeyframeDb db;
  std::string line;
  int lineno = 0;
  KeyframeSignature* current = nullptr;
  enum class Mode { None, Corners, Points } mode = Mode::None;
  int remaining = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (remaining > 0) {
      double x, y, extra;
      if (mode == Mode::Corners) {
        if (!(ss >> x >> y >> extra)) throw FormatError(where + " bad corner");
        current->corners.emplace_back(x, y);
      } else {
        if (!(ss >> x >> y)) throw FormatError(where + " bad point");
        current->scan_points.emplace_back(x, y);
      }
      --remaining;
      continue;
    }
    std::string tag;
    ss >> tag;
    if (tag == "extrinsic_lidar") {
      double x, y, yaw;
      if (!(ss >> x >> y >> yaw)) throw FormatError(where + " bad extrinsic");
      db.body_from_lidar = Pose2(yaw, x, y);
    } else if (tag == "keyframe") {
      KeyframeSignature sig;
      double x, y, yaw;
      if (!(ss >> sig.id >> sig.stamp >> x >> y >> yaw)) {
        throw FormatError(where + " bad keyframe header");
      }
      sig.body_pose = Pose2(yaw, x, y);
      db.entries.push_back(std::move(sig));
      current = &db.entries.back();
    } else if (tag == "corners") {
      if (!current || !(ss >> remaining)) {
        throw FormatError(where + " unexpected corners record");
      }
      mode = Mode::Corners;
    } else if (tag == "points") {
      if (!current || !(ss >> remaining)) {
        throw FormatError(where + " unexpected points record");
      }
      mode = Mode::Points;
    } else {
      throw FormatError(where + " unknown record '" + tag + "'");
    }
  }
  return db;
}

}  // namespace slam2d

#include "slam2d/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slam2d/errors.hpp"

namespace slam2d {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) {
    throw FormatError(where + " not a number: '" + s + "'");
  }
  return v;
}

std::string loc(const std::string& file, int line) {
  return file + ":" + std::to_string(line);
}

// Stamps use fixed 9-decimal notation, payload values full precision.
void print_stamp(FILE* f, double stamp) { std::fprintf(f, "%.9f", stamp); }
void print_value(FILE* f, double v) { std::fprintf(f, "%.17g", v); }

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_for_write(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open for writing: " + path);
  return FilePtr(f);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("missing file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Calibration load_calibration(const std::string& path) {
  Calibration calib;
  const auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(loc(path, static_cast<int>(i + 1)) + " expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const std::string where = loc(path, static_cast<int>(i + 1));
    auto vec3 = [&]() {
      std::stringstream ss(value);
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z())) {
        throw FormatError(where + " expected three numbers");
      }
      return v;
    };
    if (key == "T_base_lidar.xyz") {
      calib.T_base_lidar.translation = vec3();
    } else if (key == "T_base_lidar.rotvec") {
      calib.T_base_lidar.rotation = RotVec(vec3());
    } else if (key == "T_imu_base.xyz") {
      calib.T_imu_base.translation = vec3();
    } else if (key == "T_imu_base.rotvec") {
      calib.T_imu_base.rotation = RotVec(vec3());
    } else if (key == "gravity_magnitude") {
      calib.gravity_magnitude = parse_double(value, where);
    } else if (key == "imu_noise.accel_density") {
      calib.imu_noise.accel_density = parse_double(value, where);
    } else if (key == "imu_noise.gyro_density") {
      calib.imu_noise.gyro_density = parse_double(value, where);
    } else if (key == "imu_noise.accel_bias_walk") {
      calib.imu_noise.accel_bias_walk = parse_double(value, where);
    } else if (key == "imu_noise.gyro_bias_walk") {
      calib.imu_noise.gyro_bias_walk = parse_double(value, where);
    } else if (key == "wheel_sigma.d") {
      calib.wheel_sigma.d = parse_double(value, where);
    } else if (key == "wheel_sigma.theta_d") {
      calib.wheel_sigma.theta_d = parse_double(value, where);
    } else if (key == "wheel_sigma.theta") {
      calib.wheel_sigma.theta = parse_double(value, where);
    } else if (key == "ground_sigma.z_m") {
      calib.ground_sigma.z_m = parse_double(value, where);
    } else if (key == "ground_sigma.tilt_rad") {
      calib.ground_sigma.tilt_rad = parse_double(value, where);
    } else if (key == "line_sigma") {
      calib.line_sigma = parse_double(value, where);
    } else {
      throw FormatError(where + " unknown key '" + key + "'");
    }
  }
  if (calib.gravity_magnitude < 9.0 || calib.gravity_magnitude > 10.5) {
    throw FormatError(path + ": gravity_magnitude outside [9.0, 10.5]");
  }
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0)) throw FormatError(path + std::string(": ") + name + " must be > 0");
  };
  positive(calib.imu_noise.accel_density, "imu_noise.accel_density");
  positive(calib.imu_noise.gyro_density, "imu_noise.gyro_density");
  positive(calib.imu_noise.accel_bias_walk, "imu_noise.accel_bias_walk");
  positive(calib.imu_noise.gyro_bias_walk, "imu_noise.gyro_bias_walk");
  positive(calib.wheel_sigma.d, "wheel_sigma.d");
  positive(calib.wheel_sigma.theta_d, "wheel_sigma.theta_d");
  positive(calib.wheel_sigma.theta, "wheel_sigma.theta");
  positive(calib.ground_sigma.z_m, "ground_sigma.z_m");
  positive(calib.ground_sigma.tilt_rad, "ground_sigma.tilt_rad");
  positive(calib.line_sigma, "line_sigma");
  return calib;
}

void save_calibration(const std::string& path, const Calibration& c) {
  FilePtr f = open_for_write(path);
  auto vec3 = [&](const char* key, const Vec3& v) {
    std::fprintf(f.get(), "%s=%.17g %.17g %.17g\n", key, v.x(), v.y(), v.z());
  };
  vec3("T_base_lidar.xyz", c.T_base_lidar.translation);
  vec3("T_base_lidar.rotvec", c.T_base_lidar.rotation.axis_angle);
  vec3("T_imu_base.xyz", c.T_imu_base.translation);
  vec3("T_imu_base.rotvec", c.T_imu_base.rotation.axis_angle);
  std::fprintf(f.get(), "gravity_magnitude=%.17g\n", c.gravity_magnitude);
  std::fprintf(f.get(), "imu_noise.accel_density=%.17g\n", c.imu_noise.accel_density);
  std::fprintf(f.get(), "imu_noise.gyro_density=%.17g\n", c.imu_noise.gyro_density);
  std::fprintf(f.get(), "imu_noise.accel_bias_walk=%.17g\n", c.imu_noise.accel_bias_walk);
  std::fprintf(f.get(), "imu_noise.gyro_bias_walk=%.17g\n", c.imu_noise.gyro_bias_walk);
  std::fprintf(f.get(), "wheel_sigma.d=%.17g\n", c.wheel_sigma.d);
  std::fprintf(f.get(), "wheel_sigma.theta_d=%.17g\n", c.wheel_sigma.theta_d);
  std::fprintf(f.get(), "wheel_sigma.theta=%.17g\n", c.wheel_sigma.theta);
  std::fprintf(f.get(), "ground_sigma.z_m=%.17g\n", c.ground_sigma.z_m);
  std::fprintf(f.get(), "ground_sigma.tilt_rad=%.17g\n", c.ground_sigma.tilt_rad);
  std::fprintf(f.get(), "line_sigma=%.17g\n", c.line_sigma);
}

std::vector<LaserScan> load_scan_csv(const std::string& path) {
  const std::string label =
      std::filesystem::path(path).filename().string();
  std::vector<LaserScan> out;
  const auto lines = read_lines(path);
  double prev = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (i == 0 && lines[i].rfind("stamp,", 0) == 0) continue;  // header
    const std::string where = loc(label, static_cast<int>(i + 1));
    const auto fields = split(lines[i], ',');
    if (fields.size() != 7) {
      throw FormatError(where + " expected 7 comma fields");
    }
    LaserScan scan;
    scan.stamp = parse_double(fields[0], where);
    scan.angle_min = parse_double(fields[1], where);
    scan.angle_max = parse_double(fields[2], where);
    scan.angle_increment = parse_double(fields[3], where);
    scan.range_min = parse_double(fields[4], where);
    scan.range_max = parse_double(fields[5], where);
    for (const auto& r : split(fields[6], ';')) {
      scan.ranges.push_back(parse_double(r, where));
    }
    const int expected =
        static_cast<int>(std::lround((scan.angle_max - scan.angle_min) /
                                     scan.angle_increment)) + 1;
    if (static_cast<int>(scan.ranges.size()) != expected) {
      throw FormatError(where + " range count mismatch");
    }
    if (scan.stamp <= prev) throw FormatError(where + " non-monotone");
    prev = scan.stamp;
    out.push_back(std::move(scan));
  }
  return out;
}

DatasetStreams load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetStreams out;
  const std::string imu_path = (fs::path(dir) / "imu.csv").string();
  const std::string wheel_path = (fs::path(dir) / "wheel.csv").string();
  const std::string calib_path = (fs::path(dir) / "calib.txt").string();

  out.calib = load_calibration(calib_path);
  out.scans = load_scan_csv((fs::path(dir) / "scan.csv").string());

  // imu.csv
  {
    const auto lines = read_lines(imu_path);
    double prev = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      if (i == 0 && lines[i].rfind("stamp,", 0) == 0) continue;
      const std::string where = loc("imu.csv", static_cast<int>(i + 1));
      const auto fields = split(lines[i], ',');
      if (fields.size() != 7) throw FormatError(where + " expected 7 fields");
      ImuSample s;
      s.stamp = parse_double(fields[0], where);
      for (int k = 0; k < 3; ++k) s.accel[k] = parse_double(fields[1 + k], where);
      for (int k = 0; k < 3; ++k) s.gyro[k] = parse_double(fields[4 + k], where);
      if (s.stamp <= prev) throw FormatError(where + " non-monotone");
      prev = s.stamp;
      out.imu.push_back(s);
    }
  }

  // wheel.csv
  {
    const auto lines = read_lines(wheel_path);
    double prev = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      if (i == 0 && lines[i].rfind("stamp,", 0) == 0) continue;
      const std::string where = loc("wheel.csv", static_cast<int>(i + 1));
      const auto fields = split(lines[i], ',');
      if (fields.size() != 7) throw FormatError(where + " expected 7 fields");
      WheelOdomSample s;
      s.stamp = parse_double(fields[0], where);
      for (int k = 0; k < 3; ++k) {
        s.pose.translation[k] = parse_double(fields[1 + k], where);
        s.pose.rotation.axis_angle[k] = parse_double(fields[4 + k], where);
      }
      if (s.stamp <= prev) throw FormatError(where + " non-monotone");
      prev = s.stamp;
      out.wheel.push_back(s);
    }
  }

  return out;
}

void save_dataset(const std::string& dir, const DatasetStreams& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    FilePtr f = open_for_write((fs::path(dir) / "scan.csv").string());
    std::fprintf(f.get(),
                 "stamp,angle_min,angle_max,angle_increment,range_min,"
                 "range_max,ranges\n");
    for (const auto& s : data.scans) {
      print_stamp(f.get(), s.stamp);
      for (double v : {s.angle_min, s.angle_max, s.angle_increment, s.range_min,
                       s.range_max}) {
        std::fputc(',', f.get());
        print_value(f.get(), v);
      }
      std::fputc(',', f.get());
      for (size_t i = 0; i < s.ranges.size(); ++i) {
        if (i) std::fputc(';', f.get());
        print_value(f.get(), s.ranges[i]);
      }
      std::fputc('\n', f.get());
    }
  }
  {
    FilePtr f = open_for_write((fs::path(dir) / "imu.csv").string());
    std::fprintf(f.get(), "stamp,ax,ay,az,gx,gy,gz\n");
    for (const auto& s : data.imu) {
      print_stamp(f.get(), s.stamp);
      for (int k = 0; k < 3; ++k) {
        std::fputc(',', f.get());
        print_value(f.get(), s.accel[k]);
      }
      for (int k = 0; k < 3; ++k) {
        std::fputc(',', f.get());
        print_value(f.get(), s.gyro[k]);
      }
      std::fputc('\n', f.get());
    }
  }
  {
    FilePtr f = open_for_write((fs::path(dir) / "wheel.csv").string());
    std::fprintf(f.get(), "stamp,x,y,z,rx,ry,rz\n");
    for (const auto& s : data.wheel) {
      print_stamp(f.get(), s.stamp);
      for (int k = 0; k < 3; ++k) {
        std::fputc(',', f.get());
        print_value(f.get(), s.pose.translation[k]);
      }
      for (int k = 0; k < 3; ++k) {
        std::fputc(',', f.get());
        print_value(f.get(), s.pose.rotation.axis_angle[k]);
      }
      std::fputc('\n', f.get());
    }
  }
  save_calibration((fs::path(dir) / "calib.txt").string(), data.calib);
}

ScanPoints scan_to_points(const LaserScan& scan) {
  ScanPoints out;
  out.points.reserve(scan.ranges.size());
  for (size_t i = 0; i < scan.ranges.size(); ++i) {
    const double r = scan.ranges[i];
    if (!std::isfinite(r) || r < scan.range_min || r > scan.range_max) continue;
    const double phi = scan.angle_min + static_cast<double>(i) * scan.angle_increment;
    out.points.emplace_back(r * std::cos(phi), r * std::sin(phi));
    out.beam_indices.push_back(static_cast<int>(i));
  }
  return out;
}

Pose3 wheel_pose_at(const std::vector<WheelOdomSample>& stream, double t) {
  if (stream.empty() || t < stream.front().stamp || t > stream.back().stamp) {
    throw OutOfRange("wheel_pose_at: t outside stream coverage");
  }
  auto it = std::lower_bound(
      stream.begin(), stream.end(), t,
      [](const WheelOdomSample& s, double v) { return s.stamp < v; });
  if (it->stamp == t) return it->pose;
  const WheelOdomSample& hi = *it;
  const WheelOdomSample& lo = *(it - 1);
  const double s = (t - lo.stamp) / (hi.stamp - lo.stamp);
  Pose3 out;
  out.translation = (1.0 - s) * lo.pose.translation + s * hi.pose.translation;
  const Mat3 R0 = exp_so3(lo.pose.rotation);
  const Mat3 R1 = exp_so3(hi.pose.rotation);
  const RotVec delta = log_so3(R0.transpose() * R1);
  out.rotation = log_so3(R0 * exp_so3(RotVec(s * delta.axis_angle)));
  return out;
}

std::vector<ImuSample> imu_window(const std::vector<ImuSample>& stream,
                                  double t0, double t1, double max_gap) {
  if (!(t0 < t1)) throw InvalidArgument("imu_window: t0 must be < t1");
  if (stream.empty() || t0 < stream.front().stamp || t1 > stream.back().stamp) {
    throw OutOfRange("imu_window: window outside stream coverage");
  }
  auto interp = [&](const ImuSample& a, const ImuSample& b, double t) {
    const double s = (t - a.stamp) / (b.stamp - a.stamp);
    ImuSample out;
    out.stamp = t;
    out.accel = (1.0 - s) * a.accel + s * b.accel;
    out.gyro = (1.0 - s) * a.gyro + s * b.gyro;
    return out;
  };

  std::vector<ImuSample> out;
  auto it = std::lower_bound(
      stream.begin(), stream.end(), t0,
      [](const ImuSample& s, double v) { return s.stamp < v; });
  if (it->stamp == t0) {
    out.push_back(*it);
    ++it;
  } else {
    out.push_back(interp(*(it - 1), *it, t0));
  }
  while (it != stream.end() && it->stamp < t1) {
    out.push_back(*it);
    ++it;
  }
  if (it != stream.end() && it->stamp == t1) {
    out.push_back(*it);
  } else {
    out.push_back(interp(*(it - 1), *it, t1));
  }
  for (size_t i = 1; i < out.size(); ++i) {
    if (out[i].stamp - out[i - 1].stamp > max_gap) {
      throw DataGap("imu_window: coverage gap inside window");
    }
  }
  return out;
}

}  // namespace slam2d

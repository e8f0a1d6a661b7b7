#pragma once

// On-disk episode layout (one directory per episode, all CSV files have a header row,
// numbers are written with 17 significant digits so a read-back is exact):
//
//   metadata.json   format/version, seeds, policy, task, rig ground truth, effective config
//   frames.csv      frame,timestamp,center_u,center_v,area_prop,skew,full_view,px,py,pz,qw,qx,qy,qz
//                   (camera pose in the world frame, ground truth)
//   detections.csv  frame,timestamp,corner_id,u,v
//   imu.csv         timestamp,ax,ay,az,gx,gy,gz   (specific force m/s^2, rate rad/s, IMU frame)
//   rests.csv       rest,timestamp,frame,gx,gy,gz,px,py,pz,qw,qx,qy,qz
//                   (frame = -1 when the board was not fully seen at rest; g = gravity prior in the
//                    IMU frame; p/q = end-effector pose)

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/config.hpp"
#include "vical/harness.hpp"

namespace vical {

inline constexpr int kRecordingVersion = 1;

struct RecordingMeta {
  std::uint64_t rig_seed = 0;
  std::uint64_t episode_seed = 0;
  std::string policy;
  Task task = Task::Joint;
  nlohmann::json config; // effective config at record time
};

struct Recording {
  RecordingMeta meta;
  RigConfig rig;
  EpisodeData data;
};

namespace rec_detail {

using nlohmann::json;

inline json vec_json(const Eigen::Ref<const Eigen::VectorXd> &v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json pose_json(const Pose &p) {
  const Quat &q = p.orientation;
  return {{"position", vec_json(p.position)}, {"quaternion_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
}

inline Pose pose_from(const json &j) {
  Pose p;
  const auto &pos = j.at("position");
  const auto &q = j.at("quaternion_wxyz");
  p.position = Vec3(pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>());
  p.orientation = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                       q.at(3).get<double>());
  return p;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string pose_csv(const Pose &p) {
  const Quat &q = p.orientation;
  return num(p.position.x()) + "," + num(p.position.y()) + "," + num(p.position.z()) + "," + num(q.w()) +
         "," + num(q.x()) + "," + num(q.y()) + "," + num(q.z());
}

inline Pose pose_fields(const std::vector<double> &f, std::size_t at) {
  Pose p;
  p.position = Vec3(f[at], f[at + 1], f[at + 2]);
  p.orientation = Quat(f[at + 3], f[at + 4], f[at + 5], f[at + 6]);
  return p;
}

/// Numeric CSV reader: skips the header, checks the column count.
inline std::vector<std::vector<double>> read_csv(const std::filesystem::path &path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw RecordingError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception &) {
        throw RecordingError(path.filename().string() + ":" + std::to_string(lineno) + ": bad number '" +
                             cell + "'");
      }
    }
    if (row.size() != columns) {
      throw RecordingError(path.filename().string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace rec_detail

inline void write_recording(const std::filesystem::path &dir, const Recording &r) {
  using namespace rec_detail;
  std::filesystem::create_directories(dir);
  const RigConfig &rig = r.rig;
  const Intrinsics &K = rig.intrinsics;
  json meta;
  meta["format"] = "vical-episode";
  meta["version"] = kRecordingVersion;
  meta["rig_seed"] = r.meta.rig_seed;
  meta["episode_seed"] = r.meta.episode_seed;
  meta["policy"] = r.meta.policy;
  meta["task"] = to_string(r.meta.task);
  meta["rig"] = {{"width", K.width},
                 {"height", K.height},
                 {"intrinsics", vec_json(K.params())},
                 {"distortion_center", vec_json(rig.distortion_center)},
                 {"T_cam_imu", pose_json(rig.T_cam_imu)},
                 {"imu",
                  {{"rate", rig.imu.rate},
                   {"accel_noise", rig.imu.accel_noise},
                   {"accel_drift", rig.imu.accel_drift},
                   {"gyro_noise", rig.imu.gyro_noise},
                   {"gyro_drift", rig.imu.gyro_drift}}},
                 {"board",
                  {{"rows", rig.board.rows},
                   {"cols", rig.board.cols},
                   {"square", rig.board.square},
                   {"pose", pose_json(rig.board.pose)}}}};
  meta["config"] = r.meta.config;
  std::ofstream(dir / "metadata.json") << meta.dump(2) << "\n";

  std::ofstream frames(dir / "frames.csv"), dets(dir / "detections.csv");
  frames << "frame,timestamp,center_u,center_v,area_prop,skew,full_view,px,py,pz,qw,qx,qy,qz\n";
  dets << "frame,timestamp,corner_id,u,v\n";
  std::map<long long, int> frame_at; // by IMU tick
  for (std::size_t i = 0; i < r.data.frames.size(); ++i) {
    const Frame &f = r.data.frames[i];
    const Detection &d = f.detection;
    frame_at.emplace(std::llround(f.timestamp * rig.imu.rate), static_cast<int>(i));
    frames << i << "," << num(f.timestamp) << "," << num(d.center.x()) << "," << num(d.center.y()) << ","
           << num(d.area_prop) << "," << num(d.skew) << "," << (d.full_view ? 1 : 0) << ","
           << pose_csv(f.camera_pose) << "\n";
    for (const auto &[id, px] : d.corners) {
      dets << i << "," << num(f.timestamp) << "," << id << "," << num(px.x()) << "," << num(px.y()) << "\n";
    }
  }

  std::ofstream imu(dir / "imu.csv");
  imu << "timestamp,ax,ay,az,gx,gy,gz\n";
  for (std::size_t i = 0; i < r.data.imu.size(); ++i) {
    const Vec3 &a = r.data.imu.accel[i], &g = r.data.imu.gyro[i];
    imu << num(r.data.imu.timestamps[i]) << "," << num(a.x()) << "," << num(a.y()) << "," << num(a.z()) << ","
        << num(g.x()) << "," << num(g.y()) << "," << num(g.z()) << "\n";
  }

  std::ofstream rests(dir / "rests.csv");
  rests << "rest,timestamp,frame,gx,gy,gz,px,py,pz,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < r.data.rests.size(); ++i) {
    const RestObservation &o = r.data.rests[i];
    int frame = -1;
    if (o.detection) {
      auto it = frame_at.find(std::llround(o.time * rig.imu.rate));
      if (it == frame_at.end()) throw RecordingError("rest detection without a matching frame");
      frame = it->second;
    }
    const Vec3 g = o.gravity_prior.value_or(Vec3::Constant(std::nan("")));
    const Pose ee = i < r.data.waypoints.size() ? r.data.waypoints[i] : Pose::identity();
    rests << i << "," << num(o.time) << "," << frame << "," << num(g.x()) << "," << num(g.y()) << ","
          << num(g.z()) << "," << pose_csv(ee) << "\n";
  }
  if (!frames || !dets || !imu || !rests) throw RecordingError("write failed in " + dir.string());
}

inline Recording read_recording(const std::filesystem::path &dir) {
  using namespace rec_detail;
  Recording r;
  std::ifstream mf(dir / "metadata.json");
  if (!mf) throw RecordingError("no metadata.json in " + dir.string());
  json meta;
  try {
    meta = json::parse(mf);
    if (meta.at("format") != "vical-episode") throw RecordingError("unknown format");
    if (meta.at("version").get<int>() != kRecordingVersion) throw RecordingError("unsupported version");
    r.meta.rig_seed = meta.at("rig_seed").get<std::uint64_t>();
    r.meta.episode_seed = meta.at("episode_seed").get<std::uint64_t>();
    r.meta.policy = meta.at("policy").get<std::string>();
    r.meta.task = task_from_string(meta.at("task").get<std::string>());
    r.meta.config = meta.value("config", json());
    const json &rig = meta.at("rig");
    Intrinsics &K = r.rig.intrinsics;
    K.width = rig.at("width").get<int>();
    K.height = rig.at("height").get<int>();
    const auto p = rig.at("intrinsics").get<std::vector<double>>();
    if (p.size() != 8) throw RecordingError("intrinsics need 8 values");
    K.set_params(Eigen::Map<const Eigen::VectorXd>(p.data(), 8));
    const auto c = rig.at("distortion_center").get<std::vector<double>>();
    if (c.size() != 2) throw RecordingError("distortion_center needs 2 values");
    r.rig.distortion_center = Vec2(c[0], c[1]);
    r.rig.T_cam_imu = pose_from(rig.at("T_cam_imu"));
    const json &imu = rig.at("imu");
    r.rig.imu.rate = imu.at("rate").get<double>();
    r.rig.imu.accel_noise = imu.at("accel_noise").get<double>();
    r.rig.imu.accel_drift = imu.at("accel_drift").get<double>();
    r.rig.imu.gyro_noise = imu.at("gyro_noise").get<double>();
    r.rig.imu.gyro_drift = imu.at("gyro_drift").get<double>();
    const json &board = rig.at("board");
    r.rig.board.rows = board.at("rows").get<int>();
    r.rig.board.cols = board.at("cols").get<int>();
    r.rig.board.square = board.at("square").get<double>();
    r.rig.board.pose = pose_from(board.at("pose"));
    r.rig.seed = r.meta.rig_seed;
  } catch (const nlohmann::json::exception &e) {
    throw RecordingError(std::string("metadata.json: ") + e.what());
  }

  for (const auto &f : read_csv(dir / "frames.csv", 14)) {
    if (static_cast<std::size_t>(f[0]) != r.data.frames.size()) throw RecordingError("frames out of order");
    Frame fr;
    fr.timestamp = f[1];
    fr.detection.center = Vec2(f[2], f[3]);
    fr.detection.area_prop = f[4];
    fr.detection.skew = f[5];
    fr.detection.full_view = f[6] != 0.0;
    fr.camera_pose = pose_fields(f, 7);
    r.data.frames.push_back(std::move(fr));
  }
  for (const auto &d : read_csv(dir / "detections.csv", 5)) {
    const auto i = static_cast<std::size_t>(d[0]);
    if (d[0] < 0 || i >= r.data.frames.size()) throw RecordingError("detection for an unknown frame");
    r.data.frames[i].detection.corners.emplace_back(static_cast<int>(d[2]), Vec2(d[3], d[4]));
  }
  for (const auto &s : read_csv(dir / "imu.csv", 7)) {
    r.data.imu.timestamps.push_back(s[0]);
    r.data.imu.accel.emplace_back(s[1], s[2], s[3]);
    r.data.imu.gyro.emplace_back(s[4], s[5], s[6]);
  }
  for (const auto &s : read_csv(dir / "rests.csv", 13)) {
    RestObservation o;
    o.time = s[1];
    if (s[2] >= 0) {
      const auto i = static_cast<std::size_t>(s[2]);
      if (i >= r.data.frames.size()) throw RecordingError("rest refers to an unknown frame");
      o.detection = r.data.frames[i].detection;
    }
    if (std::isfinite(s[3])) o.gravity_prior = Vec3(s[3], s[4], s[5]);
    r.data.rests.push_back(std::move(o));
    r.data.waypoints.push_back(pose_fields(s, 6));
  }
  return r;
}

/// Offline solve of a recording; the result record mirrors CalibOutcome.
inline nlohmann::json solve_recording(const Recording &r, const Config &cfg) {
  EpisodeConfig ecfg = cfg.episode;
  ecfg.task = r.meta.task;
  ecfg.solver = SolverMode::Full;
  const CalibOutcome c = calibrate_episode(r.data, r.rig, ecfg, cfg.mdp);
  nlohmann::json j;
  j["task"] = to_string(r.meta.task);
  j["ok"] = c.ok;
  if (!c.ok) j["error"] = c.error;
  j["estimate"]["intrinsics"] = rec_detail::vec_json(c.intrinsics.params());
  if (r.meta.task != Task::Intrinsic) j["estimate"]["T_cam_imu"] = rec_detail::pose_json(c.T_cam_imu);
  j["truth"]["intrinsics"] = rec_detail::vec_json(r.rig.intrinsics.params());
  j["truth"]["T_cam_imu"] = rec_detail::pose_json(r.rig.T_cam_imu);
  j["errors"] = {{"task_pct", c.task_error_pct},
                 {"intrinsic_pct", c.intrinsic_error_pct},
                 {"extrinsic_pct", c.extrinsic_error_pct},
                 {"reproj_rms_px", c.reproj_rms}};
  j["timings"] = {{"solve_s", c.solve_s}};
  j["config"] = config_to_json(cfg);
  return j;
}

} // namespace vical

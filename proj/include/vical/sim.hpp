#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "vical/camera.hpp"
#include "vical/rng.hpp"
#include "vical/se3.hpp"

namespace vical {

inline constexpr double kGravity = 9.81;
inline const Vec3 kGravityWorld(0.0, 0.0, -kGravity);

struct ImuNoise {
  double rate = 200.0;           // Hz
  double accel_noise = 0.004;    // m/s^2
  double accel_drift = 0.006;    // m/s^2
  double gyro_noise = 0.0003394; // rad/s
  double gyro_drift = 0.000038785;
};

/// Checkerboard described by its interior corners; corner (r, c) sits at
/// (c * square, r * square, 0) in the board frame. Corner id = r * cols + c.
struct BoardSpec {
  int rows = 6;
  int cols = 7;
  double square = 0.07;
  Pose pose; // board frame in world

  int corner_count() const { return rows * cols; }
  Vec3 corner_local(int id) const {
    return {(id % cols) * square, (id / cols) * square, 0.0};
  }
  Vec3 corner_world(int id) const { return pose.transform(corner_local(id)); }
  std::array<int, 4> outer_ids() const {
    return {0, cols - 1, rows * cols - 1, (rows - 1) * cols};
  }
  Vec3 center_local() const {
    return {(cols - 1) * square / 2.0, (rows - 1) * square / 2.0, 0.0};
  }
};

/// Orientation of the camera on the end-effector: with an identity
/// end-effector the camera looks along world +x, image right is world -y and
/// image down is world -z.
inline Pose camera_mount() {
  Mat3 R;
  R.col(0) = Vec3(0, -1, 0);
  R.col(1) = Vec3(0, 0, -1);
  R.col(2) = Vec3(1, 0, 0);
  return {Vec3::Zero(), R};
}

/// End-effector pose at `position` whose camera looks at `target`, rolled
/// about the optical axis by `roll`.
inline Pose look_at(const Vec3 &position, const Vec3 &target, double roll = 0.0) {
  const Vec3 d = (target - position).normalized();
  return {position, euler_to_rot(roll, -std::asin(std::clamp(d.z(), -1.0, 1.0)),
                                 std::atan2(d.y(), d.x()))};
}

/// Vertical board whose center is `distance` meters ahead of the origin along
/// world +x, facing back towards the origin.
inline BoardSpec default_board(double distance = 1.5) {
  BoardSpec b;
  const Mat3 R = camera_mount().rotation();
  b.pose = Pose(Vec3(distance, 0, 0) - R * b.center_local(), R);
  return b;
}

struct SimConfig {
  int width = 640;
  int height = 480;
  double fov_mean = 1.0;
  double fov_std = 0.05;
  double k_std = 0.02;
  double center_std = 0.05; // normalized
  bool randomize_center = true;
  Vec3 extr_pos_mean{0.06, 0.0, -0.10};
  Vec3 extr_pos_std{0.01, 0.01, 0.01};
  Vec3 extr_rpy_mean{0.0, 0.0, 1.57};
  Vec3 extr_rpy_std{0.1, 0.1, 0.1};
  ImuNoise imu;
  double camera_rate = 10.0;
  double segment_duration = 2.0;
  double pixel_noise = 0.5;
  int min_corners = 0; // 0 = every corner must be visible
  double board_distance = 1.5;
};

/// Ground truth for one episode. T_cam_imu maps the camera pose onto the IMU
/// pose as T_world_imu = T_world_cam * inverse(T_cam_imu).
struct RigConfig {
  Intrinsics intrinsics;
  Vec2 distortion_center = Vec2::Zero(); // pixels
  Pose T_cam_imu;
  ImuNoise imu;
  BoardSpec board;
  std::uint64_t seed = 0;

  Vec2 distortion_offset() const {
    return {(distortion_center.x() - intrinsics.cx) / intrinsics.fx,
            (distortion_center.y() - intrinsics.cy) / intrinsics.fy};
  }
  Pose imu_pose(const Pose &camera_pose) const {
    return compose(camera_pose, inverse(T_cam_imu));
  }
};

/// Extrinsic parameter vector [x, y, z, roll, pitch, yaw].
inline Eigen::Matrix<double, 6, 1> extrinsic_params(const Pose &T) {
  const Euler e = T.euler();
  Eigen::Matrix<double, 6, 1> v;
  v << T.position, e.roll, e.pitch, e.yaw;
  return v;
}

/// Rig with the given standard-normal scores in draw order
/// [fov, k1, k2, center_u, center_v, x, y, z, roll, pitch, yaw].
inline RigConfig rig_from_scores(const std::array<double, 11> &z, const SimConfig &cfg) {
  RigConfig rig;
  const double fov = cfg.fov_mean + cfg.fov_std * z[0];
  rig.intrinsics = intrinsics_from_fov(fov, cfg.width, cfg.height, 0.5, 0.5,
                                       cfg.k_std * z[1], cfg.k_std * z[2]);
  Vec2 c(0.5, 0.5);
  if (cfg.randomize_center) c += cfg.center_std * Vec2(z[3], z[4]);
  rig.distortion_center = Vec2(c.x() * cfg.width, c.y() * cfg.height);
  const Vec3 pos = cfg.extr_pos_mean + cfg.extr_pos_std.cwiseProduct(Vec3(z[5], z[6], z[7]));
  const Vec3 rpy = cfg.extr_rpy_mean + cfg.extr_rpy_std.cwiseProduct(Vec3(z[8], z[9], z[10]));
  rig.T_cam_imu = Pose(pos, euler_to_rot(rpy.x(), rpy.y(), rpy.z()));
  rig.imu = cfg.imu;
  rig.board = default_board(cfg.board_distance);
  return rig;
}

inline RigConfig sample_rig(std::uint64_t seed, const SimConfig &cfg = {}) {
  Rng rng(seed);
  std::array<double, 11> z{};
  for (auto &v : z) v = rng.normal();
  RigConfig rig = rig_from_scores(z, cfg);
  rig.seed = seed;
  return rig;
}

// ---------------------------------------------------------------------------
// Trajectory segments

/// Minimum-jerk time scaling and its first two derivatives with respect to tau.
struct TimeScaling {
  double s, ds, dds;
};

inline TimeScaling min_jerk(double tau) {
  const double t2 = tau * tau, t3 = t2 * tau;
  return {10 * t3 - 15 * t3 * tau + 6 * t3 * t2, 30 * t2 - 60 * t3 + 30 * t2 * t2,
          60 * tau - 180 * t2 + 120 * t3};
}

/// Pose, body-frame angular rate and acceleration, and world linear acceleration.
struct FrameState {
  Pose pose;
  Vec3 omega_body = Vec3::Zero();
  Vec3 alpha_body = Vec3::Zero();
  Vec3 acc_world = Vec3::Zero();
};

/// Straight-line, minimum-jerk segment with SLERP orientation.
class SegmentCurve {
public:
  SegmentCurve(const Pose &start, const Pose &end, double duration)
      : start_(start), end_(end), duration_(duration) {
    const Eigen::AngleAxisd aa(start.orientation.conjugate() * end.orientation);
    rot_axis_angle_ = aa.angle() * aa.axis();
    if (aa.angle() > kPi) rot_axis_angle_ = (aa.angle() - 2 * kPi) * aa.axis();
  }

  double duration() const { return duration_; }
  const Pose &start() const { return start_; }
  const Pose &end() const { return end_; }

  FrameState state(double t) const {
    const double tau = std::clamp(t / duration_, 0.0, 1.0);
    const TimeScaling s = min_jerk(tau);
    const Vec3 delta = end_.position - start_.position;
    FrameState f;
    if (tau >= 1.0) {
      f.pose = end_;
    } else {
      f.pose.position = start_.position + s.s * delta;
      const Vec3 w = s.s * rot_axis_angle_;
      const double a = w.norm();
      const Quat inc = a > 0 ? Quat(Eigen::AngleAxisd(a, w / a)) : Quat::Identity();
      f.pose.orientation = (start_.orientation * inc).normalized();
    }
    f.omega_body = s.ds / duration_ * rot_axis_angle_;
    f.alpha_body = s.dds / (duration_ * duration_) * rot_axis_angle_;
    f.acc_world = s.dds / (duration_ * duration_) * delta;
    return f;
  }

  Pose pose(double t) const { return state(t).pose; }

private:
  Pose start_, end_;
  double duration_;
  Vec3 rot_axis_angle_;
};

inline SegmentCurve interpolate_segment(const Pose &start, const Pose &end, double duration) {
  return {start, end, duration};
}

/// Kinematics of a frame rigidly attached to a moving frame at offset T_parent_child.
inline FrameState attached_frame(const FrameState &parent, const Pose &T_parent_child) {
  FrameState c;
  c.pose = compose(parent.pose, T_parent_child);
  const Mat3 Rpc = T_parent_child.rotation();
  const Vec3 &r = T_parent_child.position;
  const Vec3 &w = parent.omega_body;
  const Vec3 lever = parent.alpha_body.cross(r) + w.cross(w.cross(r));
  c.acc_world = parent.acc_world + parent.pose.orientation * lever;
  c.omega_body = Rpc.transpose() * w;
  c.alpha_body = Rpc.transpose() * parent.alpha_body;
  return c;
}

// ---------------------------------------------------------------------------
// IMU

struct ImuSamples {
  std::vector<double> timestamps;
  std::vector<Vec3> accel;
  std::vector<Vec3> gyro;

  std::size_t size() const { return timestamps.size(); }
  void append(const ImuSamples &o) {
    timestamps.insert(timestamps.end(), o.timestamps.begin(), o.timestamps.end());
    accel.insert(accel.end(), o.accel.begin(), o.accel.end());
    gyro.insert(gyro.end(), o.gyro.begin(), o.gyro.end());
  }
};

struct BiasState {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Ideal accelerometer and gyroscope readings of a frame.
inline std::pair<Vec3, Vec3> ideal_imu(const FrameState &imu) {
  const Vec3 acc = imu.pose.orientation.conjugate() * (imu.acc_world - kGravityWorld);
  return {acc, imu.omega_body};
}

/// Clock counting IMU ticks so every timestamp is an exact multiple of 1/rate.
struct SimClock {
  std::int64_t tick = 0;
  double rate = 200.0;
  double time() const { return static_cast<double>(tick) / rate; }
};

/// Samples the IMU along a camera curve at ticks [0, duration*rate) relative to
/// first_tick. Noise and bias random walks are drawn from rng.
inline ImuSamples synth_imu(const SegmentCurve &curve, const RigConfig &rig, BiasState &bias,
                            Rng &rng, std::int64_t first_tick = 0) {
  const ImuNoise &n = rig.imu;
  const double dt = 1.0 / n.rate;
  const auto count = static_cast<std::int64_t>(std::llround(curve.duration() * n.rate));
  const Pose cam_to_imu = inverse(rig.T_cam_imu);
  const double sa = n.accel_drift * std::sqrt(dt), sg = n.gyro_drift * std::sqrt(dt);
  ImuSamples out;
  out.timestamps.reserve(count);
  out.accel.reserve(count);
  out.gyro.reserve(count);
  for (std::int64_t k = 0; k < count; ++k) {
    const FrameState imu = attached_frame(curve.state(k * dt), cam_to_imu);
    auto [acc, gyr] = ideal_imu(imu);
    for (int i = 0; i < 3; ++i) bias.accel[i] += rng.normal(0.0, sa);
    for (int i = 0; i < 3; ++i) bias.gyro[i] += rng.normal(0.0, sg);
    Vec3 an, gn;
    for (int i = 0; i < 3; ++i) an[i] = rng.normal(0.0, n.accel_noise);
    for (int i = 0; i < 3; ++i) gn[i] = rng.normal(0.0, n.gyro_noise);
    out.timestamps.push_back(static_cast<double>(first_tick + k) / n.rate);
    out.accel.push_back(acc + bias.accel + an);
    out.gyro.push_back(gyr + bias.gyro + gn);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Camera observations

struct Detection {
  std::vector<std::pair<int, Vec2>> corners;
  Vec2 center = Vec2::Zero();
  double area_prop = 0.0;
  double skew = 0.0;
  bool full_view = false;
};

/// Polygon area by the shoelace formula (absolute value).
inline double shoelace_area(const std::vector<Vec2> &poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 &a = poly[i], &b = poly[(i + 1) % poly.size()];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return std::abs(s) / 2.0;
}

/// Unsigned angle between two 2-D vectors, in [0, pi].
inline double vector_angle(const Vec2 &a, const Vec2 &b) {
  return std::atan2(std::abs(a.x() * b.y() - a.y() * b.x()), a.dot(b));
}

inline std::optional<Detection> observe_board(const Pose &camera_pose, const RigConfig &rig,
                                              Rng &rng, double pixel_noise = 0.5,
                                              int min_corners = 0) {
  const BoardSpec &b = rig.board;
  const int n = b.corner_count();
  const Vec2 offset = rig.distortion_offset();
  std::vector<std::optional<Vec2>> px(n);
  int visible = 0;
  for (int id = 0; id < n; ++id) {
    px[id] = project_point(b.corner_world(id), camera_pose, rig.intrinsics, offset);
    if (px[id]) ++visible;
  }
  const int needed = min_corners > 0 ? std::min(min_corners, n) : n;
  const auto outer = b.outer_ids();
  if (visible < needed) return std::nullopt;
  for (int id : outer) {
    if (!px[id]) return std::nullopt;
  }
  Detection d;
  d.full_view = visible == n;
  for (int id = 0; id < n; ++id) {
    if (!px[id]) continue;
    Vec2 p = *px[id];
    p.x() += rng.normal(0.0, pixel_noise);
    p.y() += rng.normal(0.0, pixel_noise);
    px[id] = p;
    d.corners.emplace_back(id, p);
  }
  std::vector<Vec2> quad;
  for (int id : outer) quad.push_back(*px[id]);
  d.center = (quad[0] + quad[1] + quad[2] + quad[3]) / 4.0;
  const double image_area = static_cast<double>(rig.intrinsics.width) * rig.intrinsics.height;
  d.area_prop = std::clamp(shoelace_area(quad) / image_area, 0.0, 1.0);
  const Vec2 origin = *px[0];
  d.skew = vector_angle(*px[(b.rows - 1) * b.cols] - origin, *px[b.cols - 1] - origin);
  return d;
}

// ---------------------------------------------------------------------------
// Segments

struct Frame {
  double timestamp = 0.0;
  Pose camera_pose;
  Detection detection;
};

struct SegmentData {
  std::vector<Frame> frames; // visible frames only
  ImuSamples imu;
};

/// Executes one segment. Camera frames fall at segment-local times
/// (1..n)/camera_rate so the final frame is the segment end pose, at rest;
/// IMU samples cover [start, end). Advances the clock to the segment end.
inline SegmentData run_segment(const Pose &start, const Pose &end, const RigConfig &rig,
                               const SimConfig &cfg, SimClock &clock, BiasState &bias,
                               Rng &rng) {
  const SegmentCurve curve = interpolate_segment(start, end, cfg.segment_duration);
  SegmentData out;
  out.imu = synth_imu(curve, rig, bias, rng, clock.tick);
  const auto ticks = static_cast<std::int64_t>(std::llround(cfg.segment_duration * rig.imu.rate));
  const auto per_frame = static_cast<std::int64_t>(std::llround(rig.imu.rate / cfg.camera_rate));
  for (std::int64_t k = per_frame; k <= ticks; k += per_frame) {
    const Pose pose = curve.pose(static_cast<double>(k) / rig.imu.rate);
    if (auto det = observe_board(pose, rig, rng, cfg.pixel_noise, cfg.min_corners)) {
      out.frames.push_back({static_cast<double>(clock.tick + k) / rig.imu.rate, pose,
                            std::move(*det)});
    }
  }
  clock.tick += ticks;
  return out;
}

} // namespace vical

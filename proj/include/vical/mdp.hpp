#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "vical/se3.hpp"
#include "vical/sim.hpp"

namespace vical {

inline constexpr int kStateDim = 24;
inline constexpr int kCoverageDim = 18;
using StateVector = Eigen::Matrix<double, kStateDim, 1>;

struct Thresholds {
  double poly = 0.15;  // coverage polygon area / image area
  double area = 0.03;  // a_max - a_min
  double skew = 0.10;  // eta_max - eta_min, rad
  double dp = 0.20;    // m
  double dtheta = 0.40; // rad
};

struct RewardCoefficients {
  double c1 = 1.0;
  double c2 = 0.5;
  double c3 = 10.0;
  double c4 = 5.0;
};

struct MdpConfig {
  int width = 640;
  int height = 480;
  double a_ref_lo = 0.01;
  double a_ref_hi = 0.5;
  double eta_center = kPi / 2.0;
  double eta_span = kPi / 3.0;
  double dp_ref = 0.6;
  double dtheta_ref = 1.2;
  Thresholds thresholds;
  RewardCoefficients reward;
};

/// Image quadrant: 0 left-up, 1 right-up, 2 right-down, 3 left-down.
inline int region_of(const Vec2 &px, int width, int height) {
  const bool right = px.x() >= width / 2.0;
  const bool down = px.y() >= height / 2.0;
  if (!down) return right ? 1 : 0;
  return right ? 2 : 3;
}

/// Euler angles without the gimbal-lock check; used for state bookkeeping.
inline Euler euler_unchecked(const Quat &q) {
  const Mat3 R = q.toRotationMatrix();
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  return {std::atan2(R(2, 1), R(2, 2)), pitch, std::atan2(R(1, 0), R(0, 0))};
}

/// Everything the MDP tracks about data collected so far in an episode.
struct CoverageState {
  std::array<Vec2, 4> vertices;
  std::array<bool, 4> seen{false, false, false, false};
  bool any_seen = false;
  double a_min = 0.0, a_max = 0.0;
  double eta_min = 0.0, eta_max = 0.0;
  double dp_max = 0.0;
  double dtheta_max = 0.0;
  Vec3 dp_axis_max = Vec3::Zero();
  Vec3 dtheta_axis_max = Vec3::Zero();
  Pose pose;
  int step_count = 0;
  double path_len = 0.0;
};

inline CoverageState init_state(const Pose &initial_pose, const MdpConfig &cfg = {}) {
  CoverageState s;
  s.vertices.fill(Vec2(cfg.width / 2.0, cfg.height / 2.0));
  s.pose = initial_pose;
  return s;
}

/// Folds one board observation into the coverage ranges.
inline void accumulate_detection(CoverageState &s, const Detection &d, const MdpConfig &cfg) {
  const Vec2 &c = d.center;
  const int r = region_of(c, cfg.width, cfg.height);
  Vec2 &v = s.vertices[r];
  if (!s.seen[r]) {
    v = c;
    s.seen[r] = true;
  } else {
    const bool left = r == 0 || r == 3;
    const bool up = r == 0 || r == 1;
    v.x() = left ? std::min(v.x(), c.x()) : std::max(v.x(), c.x());
    v.y() = up ? std::min(v.y(), c.y()) : std::max(v.y(), c.y());
  }
  if (!s.any_seen) {
    s.a_min = s.a_max = d.area_prop;
    s.eta_min = s.eta_max = d.skew;
    s.any_seen = true;
  } else {
    s.a_min = std::min(s.a_min, d.area_prop);
    s.a_max = std::max(s.a_max, d.area_prop);
    s.eta_min = std::min(s.eta_min, d.skew);
    s.eta_max = std::max(s.eta_max, d.skew);
  }
}

/// Records one executed step: detections gathered along the segment and the
/// motion from prev_pose to new_pose.
inline CoverageState update_state(CoverageState s, std::span<const Detection> detections,
                                  const Pose &prev_pose, const Pose &new_pose,
                                  const MdpConfig &cfg = {}) {
  for (const Detection &d : detections) accumulate_detection(s, d, cfg);
  const Vec3 dp = new_pose.position - prev_pose.position;
  const Euler e0 = euler_unchecked(prev_pose.orientation);
  const Euler e1 = euler_unchecked(new_pose.orientation);
  const Vec3 dth(wrap_angle(e1.roll - e0.roll), wrap_angle(e1.pitch - e0.pitch),
                 wrap_angle(e1.yaw - e0.yaw));
  s.dp_max = std::max(s.dp_max, dp.norm());
  s.dtheta_max = std::max(s.dtheta_max, dth.norm());
  s.dp_axis_max = s.dp_axis_max.cwiseMax(dp.cwiseAbs());
  s.dtheta_axis_max = s.dtheta_axis_max.cwiseMax(dth.cwiseAbs());
  s.pose = new_pose;
  s.path_len += dp.norm();
  s.step_count += 1;
  return s;
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

/// Normalized 24-vector: 8 vertex, 2 area, 2 skew, 3 + 3 motion-range
/// components (all in [0, 1]), then position and Euler orientation.
inline StateVector to_vector(const CoverageState &s, const MdpConfig &cfg = {}) {
  StateVector x = StateVector::Zero();
  const double hw = cfg.width / 2.0, hh = cfg.height / 2.0;
  for (int r = 0; r < 4; ++r) {
    if (!s.seen[r]) continue;
    const Vec2 &v = s.vertices[r];
    const bool left = r == 0 || r == 3;
    const bool up = r == 0 || r == 1;
    x[2 * r] = clamp01(left ? (hw - v.x()) / hw : (v.x() - hw) / hw);
    x[2 * r + 1] = clamp01(up ? (hh - v.y()) / hh : (v.y() - hh) / hh);
  }
  if (s.any_seen) {
    const double span = cfg.a_ref_hi - cfg.a_ref_lo;
    x[8] = clamp01((cfg.a_ref_hi - s.a_min) / span);
    x[9] = clamp01((s.a_max - cfg.a_ref_lo) / span);
    const double lo = cfg.eta_center - cfg.eta_span, hi = cfg.eta_center + cfg.eta_span;
    x[10] = clamp01((hi - s.eta_min) / (hi - lo));
    x[11] = clamp01((s.eta_max - lo) / (hi - lo));
  }
  for (int i = 0; i < 3; ++i) {
    x[12 + i] = clamp01(s.dp_axis_max[i] / cfg.dp_ref);
    x[15 + i] = clamp01(s.dtheta_axis_max[i] / cfg.dtheta_ref);
  }
  x.segment<3>(18) = s.pose.position;
  x.segment<3>(21) = euler_unchecked(s.pose.orientation).vec();
  return x;
}

/// Coverage gain (L1) minus weighted translation and rotation of the step.
inline double step_reward(const StateVector &prev, const StateVector &cur, const Pose &prev_pose,
                          const Pose &cur_pose, double c1, double c2) {
  const double gain = (cur.head<kCoverageDim>() - prev.head<kCoverageDim>()).lpNorm<1>();
  const double dp = (cur_pose.position - prev_pose.position).norm();
  const double dth =
      euler_distance(euler_unchecked(cur_pose.orientation), euler_unchecked(prev_pose.orientation));
  return gain - c1 * dp - c2 * dth;
}

/// Area of the quadrilateral V1..V4 as a fraction of the image.
inline double coverage_polygon_fraction(const CoverageState &s, const MdpConfig &cfg = {}) {
  const std::vector<Vec2> poly(s.vertices.begin(), s.vertices.end());
  return shoelace_area(poly) / (static_cast<double>(cfg.width) * cfg.height);
}

inline bool terminal_check(const CoverageState &s, const Thresholds &t, const MdpConfig &cfg = {}) {
  if (!s.any_seen) return false;
  return coverage_polygon_fraction(s, cfg) >= t.poly && (s.a_max - s.a_min) >= t.area &&
         (s.eta_max - s.eta_min) >= t.skew && s.dp_max >= t.dp && s.dtheta_max >= t.dtheta;
}

inline constexpr double kTerminalEpsilon = 1e-6;

/// Constant bonus plus a term inversely proportional to the relative error,
/// capped at 10 * c3.
inline double terminal_reward(const Eigen::VectorXd &truth, const Eigen::VectorXd &estimate,
                              double c3, double c4) {
  const double err = std::max((truth - estimate).norm(), kTerminalEpsilon);
  return std::min(c3 + c4 * truth.norm() / err, 10.0 * c3);
}

} // namespace vical

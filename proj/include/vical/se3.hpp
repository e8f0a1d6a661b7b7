#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vical/errors.hpp"

namespace vical {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

/// Roll-pitch-yaw triple in radians.
struct Euler {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  Vec3 vec() const { return {roll, pitch, yaw}; }
};

/// Extrinsic Z-Y-X composition: R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 euler_to_rot(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
          Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

inline Mat3 euler_to_rot(const Euler &e) {
  return euler_to_rot(e.roll, e.pitch, e.yaw);
}

/// Inverse of euler_to_rot. Throws GimbalLock within 1e-6 rad of pitch = +-pi/2.
inline Euler rot_to_euler(const Mat3 &R) {
  const double s = std::clamp(-R(2, 0), -1.0, 1.0);
  const double pitch = std::asin(s);
  if (kPi / 2.0 - std::abs(pitch) < 1e-6) {
    throw GimbalLock("pitch within 1e-6 rad of +-pi/2");
  }
  return {std::atan2(R(2, 1), R(2, 2)), pitch, std::atan2(R(1, 0), R(0, 0))};
}

/// Norm of the componentwise Euler-angle difference, each component wrapped.
inline double euler_distance(const Euler &a, const Euler &b) {
  const Vec3 d(wrap_angle(a.roll - b.roll), wrap_angle(a.pitch - b.pitch),
               wrap_angle(a.yaw - b.yaw));
  return d.norm();
}

/// Rigid transform mapping points of a child frame into its parent frame.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Pose() = default;
  Pose(const Vec3 &p, const Quat &q) : position(p), orientation(q.normalized()) {}
  Pose(const Vec3 &p, const Mat3 &R) : position(p), orientation(Quat(R).normalized()) {}

  static Pose identity() { return {}; }

  Mat3 rotation() const { return orientation.toRotationMatrix(); }
  Euler euler() const { return rot_to_euler(rotation()); }

  Mat4 matrix() const {
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = rotation();
    T.topRightCorner<3, 1>() = position;
    return T;
  }

  static Pose from_matrix(const Mat4 &T) {
    return {Vec3(T.topRightCorner<3, 1>()), Mat3(T.topLeftCorner<3, 3>())};
  }

  Vec3 transform(const Vec3 &p) const { return orientation * p + position; }
};

/// a * b: first apply b, then a.
inline Pose compose(const Pose &a, const Pose &b) {
  return {a.position + a.orientation * b.position, a.orientation * b.orientation};
}

inline Pose inverse(const Pose &a) {
  const Quat qi = a.orientation.conjugate();
  return {-(qi * a.position), qi};
}

inline Pose operator*(const Pose &a, const Pose &b) { return compose(a, b); }

/// Translation of length rho along azimuth theta and polar angle phi.
inline Vec3 spherical_translation(double rho, double theta, double phi) {
  return rho * Vec3(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta),
                    std::cos(phi));
}

struct ActionBounds {
  double rho_max = 0.3;
  double rot_max = 0.3;
};

/// One step of end-effector motion: a world-frame translation in spherical
/// coordinates followed by a world-frame Euler rotation increment.
struct Action {
  double rho = 0.0;
  double theta = 0.0;
  double phi = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  /// Builds an action with every component clamped into the bounds.
  static Action clamped(double rho, double theta, double phi, double alpha, double beta,
                        double gamma, const ActionBounds &b = {}) {
    Action a;
    a.rho = std::clamp(rho, 0.0, b.rho_max);
    a.theta = std::fmod(theta, 2.0 * kPi);
    if (a.theta < 0.0) a.theta += 2.0 * kPi;
    if (a.theta >= 2.0 * kPi) a.theta = 0.0;
    a.phi = std::clamp(phi, 0.0, kPi);
    a.alpha = std::clamp(alpha, -b.rot_max, b.rot_max);
    a.beta = std::clamp(beta, -b.rot_max, b.rot_max);
    a.gamma = std::clamp(gamma, -b.rot_max, b.rot_max);
    return a;
  }

  Vec3 translation() const { return spherical_translation(rho, theta, phi); }
  Mat3 rotation() const { return euler_to_rot(alpha, beta, gamma); }
};

/// Applies the translation in the world frame and left-composes the rotation
/// increment onto the current orientation.
inline Pose apply_action(const Pose &pose, const Action &a) {
  return {pose.position + a.translation(), Quat(a.rotation()) * pose.orientation};
}

} // namespace vical

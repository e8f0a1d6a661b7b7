#pragma once

#include <cmath>
#include <optional>

#include "vical/errors.hpp"
#include "vical/se3.hpp"

namespace vical {

/// Pinhole camera with radial-tangential distortion.
struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  double k1 = 0.0, k2 = 0.0;
  double p1 = 0.0, p2 = 0.0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx > 0.0 && cx < width && cy > 0.0 && cy < height;
  }

  /// [fx, fy, cx, cy, k1, k2, p1, p2], the layout used by the error metrics.
  Eigen::Matrix<double, 8, 1> params() const {
    Eigen::Matrix<double, 8, 1> v;
    v << fx, fy, cx, cy, k1, k2, p1, p2;
    return v;
  }

  void set_params(const Eigen::Ref<const Eigen::VectorXd> &v) {
    fx = v[0], fy = v[1], cx = v[2], cy = v[3];
    k1 = v[4], k2 = v[5], p1 = v[6], p2 = v[7];
  }
};

struct Radtan {
  double k1 = 0.0, k2 = 0.0, p1 = 0.0, p2 = 0.0;
};

inline Radtan distortion_of(const Intrinsics &K) { return {K.k1, K.k2, K.p1, K.p2}; }

/// Focal length from the horizontal field of view; (cx_norm, cy_norm) is the
/// principal point as a fraction of the image size.
inline Intrinsics intrinsics_from_fov(double fov, int width, int height, double cx_norm,
                                      double cy_norm, double k1 = 0.0, double k2 = 0.0,
                                      double p1 = 0.0, double p2 = 0.0) {
  Intrinsics K;
  K.fx = K.fy = (width / 2.0) / std::tan(fov / 2.0);
  K.cx = cx_norm * width;
  K.cy = cy_norm * height;
  K.width = width;
  K.height = height;
  K.k1 = k1, K.k2 = k2, K.p1 = p1, K.p2 = p2;
  return K;
}

inline Vec2 distort_radtan(double x, double y, const Radtan &d) {
  const double r2 = x * x + y * y;
  const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

/// Fixed-point inversion of distort_radtan.
inline Vec2 undistort_radtan(double xd, double yd, const Radtan &d) {
  double x = xd, y = yd;
  for (int it = 0; it < 50; ++it) {
    const double r2 = x * x + y * y;
    const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
    const double tx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
    const double ty = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
    const double nx = (xd - tx) / radial;
    const double ny = (yd - ty) / radial;
    const double step = std::hypot(nx - x, ny - y);
    x = nx, y = ny;
    if (!std::isfinite(x) || !std::isfinite(y)) break;
    if (step < 1e-12) break;
  }
  const Vec2 back = distort_radtan(x, y, d);
  const double residual = std::hypot(back.x() - xd, back.y() - yd);
  if (!(residual <= 1e-6)) {
    throw NoConvergence("undistortion residual " + std::to_string(residual));
  }
  return {x, y};
}

/// Minimum camera-frame depth for a point to count as visible, meters.
inline constexpr double kMinDepth = 0.05;

/// Projects a camera-frame point (z forward, x right, y down). The optional
/// offset moves the distortion center away from the principal point, in
/// normalized image coordinates.
inline std::optional<Vec2> project_camera_point(const Vec3 &p_cam, const Intrinsics &K,
                                                const Vec2 &distortion_offset = Vec2::Zero()) {
  if (p_cam.z() <= kMinDepth) return std::nullopt;
  const double x = p_cam.x() / p_cam.z() - distortion_offset.x();
  const double y = p_cam.y() / p_cam.z() - distortion_offset.y();
  const Vec2 xd = distort_radtan(x, y, distortion_of(K)) + distortion_offset;
  const Vec2 px(K.fx * xd.x() + K.cx, K.fy * xd.y() + K.cy);
  if (!(px.x() >= 0.0 && px.x() <= K.width && px.y() >= 0.0 && px.y() <= K.height)) {
    return std::nullopt;
  }
  return px;
}

/// Projects a world point seen by a camera at pose T_world_camera.
inline std::optional<Vec2> project_point(const Vec3 &p_world, const Pose &camera_pose,
                                         const Intrinsics &K,
                                         const Vec2 &distortion_offset = Vec2::Zero()) {
  const Vec3 p_cam = camera_pose.orientation.conjugate() * (p_world - camera_pose.position);
  return project_camera_point(p_cam, K, distortion_offset);
}

/// Normalized, undistorted ray coordinates (x/z, y/z) for a pixel.
inline Vec2 unproject_pixel(const Vec2 &px, const Intrinsics &K) {
  const double xd = (px.x() - K.cx) / K.fx;
  const double yd = (px.y() - K.cy) / K.fy;
  return undistort_radtan(xd, yd, distortion_of(K));
}

} // namespace vical

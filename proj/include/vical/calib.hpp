#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "vical/camera.hpp"
#include "vical/errors.hpp"
#include "vical/lm.hpp"
#include "vical/se3.hpp"
#include "vical/sim.hpp"

namespace vical {

using Mat33 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Small rotation helpers

inline Mat3 skew_symmetric(const Vec3 &w) {
  Mat3 S;
  S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return S;
}

inline Mat3 exp_so3(const Vec3 &w) {
  const double a = w.norm();
  if (a < 1e-15) return Mat3::Identity() + skew_symmetric(w);
  return Eigen::AngleAxisd(a, w / a).toRotationMatrix();
}

inline Vec3 log_so3(const Mat3 &R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

/// Angle of the relative rotation between two orientations.
inline double rotation_distance(const Mat3 &a, const Mat3 &b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

// ---------------------------------------------------------------------------
// Homography

/// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
inline Mat33 normalizing_transform(const std::vector<Vec2> &pts) {
  Vec2 c = Vec2::Zero();
  for (const auto &p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto &p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  const double s = d > 0 ? std::sqrt(2.0) / d : 1.0;
  Mat33 T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

inline bool nearly_collinear(const std::vector<Vec2> &pts) {
  Vec2 c = Vec2::Zero();
  for (const auto &p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  for (const auto &p : pts) C += (p - c) * (p - c).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C);
  return es.eigenvalues()[1] <= 0.0 || es.eigenvalues()[0] < 1e-12 * es.eigenvalues()[1];
}

/// Normalized DLT. Returns H with |H|_F = 1 and H(2,2) >= 0 mapping board
/// (x, y) onto image points.
inline Mat33 estimate_homography(const std::vector<Vec2> &board, const std::vector<Vec2> &image) {
  if (board.size() != image.size() || board.size() < 4) {
    throw Degenerate("homography needs at least 4 correspondences");
  }
  if (nearly_collinear(board) || nearly_collinear(image)) {
    throw Degenerate("homography correspondences are collinear");
  }
  const Mat33 Tb = normalizing_transform(board);
  const Mat33 Ti = normalizing_transform(image);
  const auto n = static_cast<Eigen::Index>(board.size());
  Eigen::MatrixXd M(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d X = Tb * board[i].homogeneous();
    const Eigen::Vector3d x = Ti * image[i].homogeneous();
    const double u = x.x() / x.z(), v = x.y() / x.z();
    M.row(2 * i) << X.x(), X.y(), X.z(), 0, 0, 0, -u * X.x(), -u * X.y(), -u * X.z();
    M.row(2 * i + 1) << 0, 0, 0, X.x(), X.y(), X.z(), -v * X.x(), -v * X.y(), -v * X.z();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const Eigen::VectorXd &sv = svd.singularValues();
  if (sv[7] < 1e-12 * sv[0]) throw Degenerate("homography system is rank deficient");
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat33 Hn;
  Hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  Mat33 H = Ti.inverse() * Hn * Tb;
  H /= H.norm();
  if (H(2, 2) < 0) H = -H;
  return H;
}

// ---------------------------------------------------------------------------
// Closed-form intrinsics

/// Skewless pinhole initialization from plane homographies (image conic
/// constraints). Distortion is returned as zero.
inline Intrinsics zhang_init(const std::vector<Mat33> &homographies, int width, int height) {
  if (homographies.size() < 3) throw Degenerate("need at least 3 homographies");
  // Work in a normalized pixel frame for conditioning.
  const double s = (width + height) / 2.0;
  Mat33 N;
  N << 1 / s, 0, -width / (2 * s), 0, 1 / s, -height / (2 * s), 0, 0, 1;

  auto vij = [](const Mat33 &H, int i, int j) {
    Eigen::Matrix<double, 6, 1> v;
    v << H(0, i) * H(0, j), H(0, i) * H(1, j) + H(1, i) * H(0, j), H(1, i) * H(1, j),
        H(2, i) * H(0, j) + H(0, i) * H(2, j), H(2, i) * H(1, j) + H(1, i) * H(2, j),
        H(2, i) * H(2, j);
    return v;
  };

  const auto m = static_cast<Eigen::Index>(homographies.size());
  Eigen::MatrixXd V(2 * m + 1, 6);
  for (Eigen::Index k = 0; k < m; ++k) {
    Mat33 H = N * homographies[k];
    H /= H.norm();
    V.row(2 * k) = vij(H, 0, 1).transpose();
    V.row(2 * k + 1) = (vij(H, 0, 0) - vij(H, 1, 1)).transpose();
  }
  V.row(2 * m) << 0, 1, 0, 0, 0, 0; // zero skew
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeFullV);
  const Eigen::VectorXd &sv = svd.singularValues();
  if (sv[4] < 1e-9 * sv[0]) throw Degenerate("absolute conic system is rank deficient");
  Eigen::Matrix<double, 6, 1> b = svd.matrixV().col(5);
  if (b[0] < 0) b = -b;
  const double B11 = b[0], B12 = b[1], B22 = b[2], B13 = b[3], B23 = b[4], B33 = b[5];
  const double den = B11 * B22 - B12 * B12;
  if (!(den > 0) || !(B11 > 0)) throw Degenerate("conic is not positive definite");
  const double v0 = (B12 * B13 - B11 * B23) / den;
  const double lambda = B33 - (B13 * B13 + v0 * (B12 * B13 - B11 * B23)) / B11;
  if (!(lambda / B11 > 0)) throw Degenerate("conic is not positive definite");
  const double alpha = std::sqrt(lambda / B11);
  const double beta = std::sqrt(lambda * B11 / den);
  const double u0 = -B13 * alpha * alpha / lambda;

  // Undo the normalization: K = N^-1 * Kn.
  Intrinsics K;
  K.width = width;
  K.height = height;
  K.fx = alpha * s;
  K.fy = beta * s;
  K.cx = u0 * s + width / 2.0;
  K.cy = v0 * s + height / 2.0;
  return K;
}

/// Camera-from-board pose from a homography expressed in normalized image
/// coordinates (K^-1 already applied).
inline Pose pose_from_normalized_homography(const Mat33 &Hn) {
  const double scale = 1.0 / Hn.col(0).norm();
  Vec3 r1 = scale * Hn.col(0), r2 = scale * Hn.col(1), t = scale * Hn.col(2);
  if (t.z() < 0) {
    r1 = -r1, r2 = -r2, t = -t;
  }
  Mat3 R;
  R.col(0) = r1;
  R.col(1) = r2;
  R.col(2) = r1.cross(r2);
  const Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) R = -R;
  return {t, R};
}

inline Mat33 camera_matrix(const Intrinsics &K) {
  Mat33 M;
  M << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
  return M;
}

// ---------------------------------------------------------------------------
// Reprojection

/// Projection without visibility checks, for use inside solvers.
inline Vec2 project_raw(const Vec3 &p_cam, const Intrinsics &K) {
  const Vec2 xd = distort_radtan(p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z(), distortion_of(K));
  return {K.fx * xd.x() + K.cx, K.fy * xd.y() + K.cy};
}

inline void pose_to_params(const Pose &T, double *out) {
  const Vec3 w = log_so3(T.rotation());
  for (int i = 0; i < 3; ++i) out[i] = w[i], out[3 + i] = T.position[i];
}

inline Pose pose_from_params(const double *p) {
  return {Vec3(p[3], p[4], p[5]), exp_so3(Vec3(p[0], p[1], p[2]))};
}

struct CalibOptions {
  int max_frames = 40;
  double rms_cap = 2.0;
  int min_frames = 8;
  int min_orientations = 3;
  double orientation_separation = 0.05; // rad between distinct views
  LmOptions lm;
};

struct CalibResult {
  Intrinsics intrinsics;
  Pose extrinsic; // T_cam_imu
  double reproj_rms = 0.0;
  bool converged = false;
  int iterations = 0;
  double solve_time = 0.0;
  std::vector<Pose> view_poses; // camera-from-board per used frame
};

inline std::vector<Vec2> board_plane_points(const BoardSpec &board, const Detection &d) {
  std::vector<Vec2> pts;
  pts.reserve(d.corners.size());
  for (const auto &[id, px] : d.corners) pts.push_back(board.corner_local(id).head<2>());
  return pts;
}

inline std::vector<Vec2> image_points(const Detection &d) {
  std::vector<Vec2> pts;
  pts.reserve(d.corners.size());
  for (const auto &[id, px] : d.corners) pts.push_back(px);
  return pts;
}

/// Evenly spaced subset of at most `limit` indices out of n.
inline std::vector<std::size_t> spread_indices(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  if (n <= limit) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t k = 0; k < limit; ++k) idx.push_back(k * (n - 1) / (limit - 1));
  return idx;
}

/// Joint reprojection problem over intrinsics and per-view board poses.
/// Parameters: [fx fy cx cy k1 k2 p1 p2 | (rotvec, t) per view].
class ReprojectionProblem {
public:
  ReprojectionProblem(const BoardSpec &board, std::vector<const Detection *> views, int width,
                      int height)
      : board_(board), views_(std::move(views)), width_(width), height_(height) {
    offsets_.push_back(0);
    for (const Detection *d : views_) {
      offsets_.push_back(offsets_.back() + 2 * static_cast<Eigen::Index>(d->corners.size()));
    }
  }

  Eigen::Index num_residuals() const { return offsets_.back(); }
  Eigen::Index num_params() const { return 8 + 6 * static_cast<Eigen::Index>(views_.size()); }

  Intrinsics intrinsics(const VecX &x) const {
    Intrinsics K;
    K.width = width_, K.height = height_;
    K.set_params(x.head<8>());
    return K;
  }

  void view_residual(const Intrinsics &K, const double *pose, std::size_t v,
                     double *out) const {
    const Pose T = pose_from_params(pose);
    const Detection &d = *views_[v];
    for (std::size_t i = 0; i < d.corners.size(); ++i) {
      const auto &[id, px] = d.corners[i];
      const Vec2 p = project_raw(T.transform(board_.corner_local(id)), K);
      out[2 * i] = p.x() - px.x();
      out[2 * i + 1] = p.y() - px.y();
    }
  }

  VecX residual(const VecX &x) const {
    VecX r(num_residuals());
    const Intrinsics K = intrinsics(x);
    for (std::size_t v = 0; v < views_.size(); ++v) {
      view_residual(K, x.data() + 8 + 6 * v, v, r.data() + offsets_[v]);
    }
    return r;
  }

  /// Forward differences exploiting that view parameters only touch their own rows.
  MatX jacobian(const VecX &x, const VecX &r, double rel) const {
    MatX J = MatX::Zero(num_residuals(), num_params());
    VecX xp = x;
    for (int j = 0; j < 8; ++j) {
      const double h = fd_step_for(x[j], rel);
      xp[j] = x[j] + h;
      J.col(j) = (residual(xp) - r) / h;
      xp[j] = x[j];
    }
    const Intrinsics K = intrinsics(x);
    VecX tmp;
    for (std::size_t v = 0; v < views_.size(); ++v) {
      const Eigen::Index rows = offsets_[v + 1] - offsets_[v];
      tmp.resize(rows);
      for (int k = 0; k < 6; ++k) {
        const Eigen::Index j = 8 + 6 * static_cast<Eigen::Index>(v) + k;
        const double h = fd_step_for(x[j], rel);
        xp[j] = x[j] + h;
        view_residual(K, xp.data() + 8 + 6 * v, v, tmp.data());
        J.block(offsets_[v], j, rows, 1) = (tmp - r.segment(offsets_[v], rows)) / h;
        xp[j] = x[j];
      }
    }
    return J;
  }

  NllsProblem problem(double rel) const {
    NllsProblem p;
    p.num_params = static_cast<int>(num_params());
    p.num_residuals = static_cast<int>(num_residuals());
    p.residual = [this](const VecX &x) { return residual(x); };
    p.jacobian = [this, rel](const VecX &x, const VecX &r) { return jacobian(x, r, rel); };
    return p;
  }

private:
  const BoardSpec &board_;
  std::vector<const Detection *> views_;
  int width_, height_;
  std::vector<Eigen::Index> offsets_;
};

/// Count of views whose orientation differs from every previously counted
/// one by more than `separation` rad.
inline int distinct_orientations(const std::vector<Pose> &poses, double separation) {
  std::vector<Mat3> reps;
  for (const Pose &p : poses) {
    const Mat3 R = p.rotation();
    bool fresh = true;
    for (const Mat3 &q : reps) {
      if (rotation_distance(R, q) <= separation) {
        fresh = false;
        break;
      }
    }
    if (fresh) reps.push_back(R);
  }
  return static_cast<int>(reps.size());
}

/// Planar-target intrinsic calibration from full-view detections.
inline CalibResult calibrate_intrinsics(const std::vector<Detection> &detections,
                                        const BoardSpec &board, int width, int height,
                                        const CalibOptions &opt = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  std::vector<const Detection *> full;
  for (const Detection &d : detections) {
    if (d.full_view) full.push_back(&d);
  }
  if (static_cast<int>(full.size()) < opt.min_frames) {
    throw InsufficientData("only " + std::to_string(full.size()) + " full-view frames");
  }
  std::vector<const Detection *> views;
  for (std::size_t i : spread_indices(full.size(), static_cast<std::size_t>(opt.max_frames))) {
    views.push_back(full[i]);
  }

  std::vector<Mat33> Hs;
  for (const Detection *d : views) {
    Hs.push_back(estimate_homography(board_plane_points(board, *d), image_points(*d)));
  }
  Intrinsics K0;
  try {
    K0 = zhang_init(Hs, width, height);
  } catch (const Degenerate &e) {
    throw InsufficientData(std::string("views do not constrain intrinsics: ") + e.what());
  }

  const Mat33 Kinv = camera_matrix(K0).inverse();
  std::vector<Pose> init_poses;
  for (const Mat33 &H : Hs) init_poses.push_back(pose_from_normalized_homography(Kinv * H));
  if (distinct_orientations(init_poses, opt.orientation_separation) < opt.min_orientations) {
    throw InsufficientData("fewer than " + std::to_string(opt.min_orientations) +
                           " distinct board orientations");
  }

  ReprojectionProblem prob(board, views, width, height);
  VecX x0(prob.num_params());
  x0.head<8>() = K0.params();
  for (std::size_t v = 0; v < views.size(); ++v) pose_to_params(init_poses[v], x0.data() + 8 + 6 * v);

  const LmResult lm = lm_solve(prob.problem(opt.lm.fd_step), x0, opt.lm);
  CalibResult res;
  res.intrinsics = prob.intrinsics(lm.x);
  res.reproj_rms = std::sqrt(2.0 * lm.cost / static_cast<double>(prob.num_residuals()));
  res.iterations = lm.iterations;
  for (std::size_t v = 0; v < views.size(); ++v) {
    res.view_poses.push_back(pose_from_params(lm.x.data() + 8 + 6 * v));
  }
  if (!(res.reproj_rms < opt.rms_cap)) {
    throw NotConverged("reprojection rms " + std::to_string(res.reproj_rms) + " px");
  }
  res.converged = lm.converged;
  res.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

/// Camera-from-board pose of one full-view detection for known intrinsics.
inline Pose pnp_board_pose(const Detection &d, const Intrinsics &K, const BoardSpec &board,
                           const LmOptions &lm_opt = {}) {
  if (d.corners.size() < 4) throw Degenerate("fewer than 4 corners");
  std::vector<Vec2> normalized;
  normalized.reserve(d.corners.size());
  try {
    for (const auto &[id, px] : d.corners) normalized.push_back(unproject_pixel(px, K));
  } catch (const NoConvergence &e) {
    throw Degenerate(e.what());
  }
  const Mat33 Hn = estimate_homography(board_plane_points(board, d), normalized);
  const Pose init = pose_from_normalized_homography(Hn);

  NllsProblem p;
  p.num_params = 6;
  p.num_residuals = 2 * static_cast<int>(d.corners.size());
  p.residual = [&](const VecX &x) {
    const Pose T = pose_from_params(x.data());
    VecX r(p.num_residuals);
    for (std::size_t i = 0; i < d.corners.size(); ++i) {
      const auto &[id, px] = d.corners[i];
      const Vec2 q = project_raw(T.transform(board.corner_local(id)), K);
      r[2 * i] = q.x() - px.x();
      r[2 * i + 1] = q.y() - px.y();
    }
    return r;
  };
  VecX x0(6);
  pose_to_params(init, x0.data());
  const LmResult lm = lm_solve(p, x0, lm_opt);
  const Pose T = pose_from_params(lm.x.data());
  if (!T.position.allFinite() || T.position.z() <= 0.0) throw Degenerate("pose behind camera");
  return T;
}

// ---------------------------------------------------------------------------
// IMU preintegration

/// Relative pose of the IMU frame between rest instants t0 and t1 (pose of B1
/// expressed in B0) from samples with timestamps in [t0, t1). `gravity_b0` is
/// the gravity vector in B0 at t0; the body starts at rest.
inline Pose preintegrate_imu(const ImuSamples &samples, double t0, double t1,
                             const Vec3 &gravity_b0) {
  const double eps = 1e-9;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double t = samples.timestamps[k];
    if (t >= t0 - eps && t < t1 - eps) idx.push_back(k);
  }
  Mat3 R = Mat3::Identity();
  Vec3 v = Vec3::Zero(), p = Vec3::Zero();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t k = idx[i];
    const bool has_next = i + 1 < idx.size();
    const double tn = has_next ? samples.timestamps[idx[i + 1]] : t1;
    const double dt = tn - samples.timestamps[k];
    const Vec3 &w0 = samples.gyro[k];
    const Vec3 &w1 = has_next ? samples.gyro[idx[i + 1]] : w0;
    const Vec3 &a0 = samples.accel[k];
    const Vec3 &a1 = has_next ? samples.accel[idx[i + 1]] : a0;
    const Mat3 Rn = R * exp_so3(0.5 * (w0 + w1) * dt);
    const Vec3 acc = 0.5 * (R * a0 + Rn * a1) + gravity_b0;
    p += v * dt + 0.5 * acc * dt * dt;
    v += acc * dt;
    R = Rn;
  }
  return {p, R};
}

/// Gravity in the body frame estimated from the accelerometer sample at a rest instant.
/// Falls back to the closest sample within one IMU period of t.
inline std::optional<Vec3> gravity_at_rest(const ImuSamples &samples, double t) {
  std::optional<std::size_t> best;
  double best_dt = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double dt = std::abs(samples.timestamps[k] - t);
    if (!best || dt < best_dt) best = k, best_dt = dt;
  }
  if (!best) return std::nullopt;
  if (samples.size() > 1) {
    const double period = samples.timestamps[1] - samples.timestamps[0];
    if (best_dt > period * 1.5) return std::nullopt;
  }
  return Vec3(-samples.accel[*best]);
}

// ---------------------------------------------------------------------------
// Hand-eye

inline Eigen::Matrix4d quat_left(const Quat &q) {
  Eigen::Matrix4d L;
  L << q.w(), -q.x(), -q.y(), -q.z(), q.x(), q.w(), -q.z(), q.y(), q.y(), q.z(), q.w(), -q.x(),
      q.z(), -q.y(), q.x(), q.w();
  return L;
}

inline Eigen::Matrix4d quat_right(const Quat &q) {
  Eigen::Matrix4d R;
  R << q.w(), -q.x(), -q.y(), -q.z(), q.x(), q.w(), q.z(), -q.y(), q.y(), -q.z(), q.w(), q.x(),
      q.z(), q.y(), -q.x(), q.w();
  return R;
}

/// Solves A_i X = X B_i: rotation from the stacked quaternion constraints
/// (L(q_A) - R(q_B)) q_X = 0, then translation by linear least squares on
/// (R_A - I) t_X = R_X t_B - t_A.
inline Pose hand_eye_solve(const std::vector<Pose> &A, const std::vector<Pose> &B) {
  if (A.size() != B.size() || A.size() < 2) {
    throw DegenerateMotion("need at least 2 motion pairs");
  }
  // Observability: at least two rotation axes that are not parallel.
  std::vector<Vec3> axes;
  for (const Pose &a : A) {
    const Eigen::AngleAxisd aa(a.orientation);
    if (aa.angle() > 1e-6) axes.push_back(aa.axis());
  }
  double max_sep = 0.0;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      const double c = std::min(1.0, std::abs(axes[i].dot(axes[j])));
      max_sep = std::max(max_sep, std::acos(c));
    }
  }
  if (max_sep < 1e-3) throw DegenerateMotion("rotation axes are parallel");

  const auto n = static_cast<Eigen::Index>(A.size());
  Eigen::MatrixXd M(4 * n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    Quat qa = A[i].orientation, qb = B[i].orientation;
    if (qa.w() < 0) qa.coeffs() = -qa.coeffs();
    if (qb.w() < 0) qb.coeffs() = -qb.coeffs();
    M.block<4, 4>(4 * i, 0) = quat_left(qa) - quat_right(qb);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const Eigen::Vector4d qv = svd.matrixV().col(3);
  const Quat qx(qv[0], qv[1], qv[2], qv[3]);
  const Mat3 Rx = qx.normalized().toRotationMatrix();

  Eigen::MatrixXd C(3 * n, 3);
  Eigen::VectorXd d(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    C.block<3, 3>(3 * i, 0) = A[i].rotation() - Mat3::Identity();
    d.segment<3>(3 * i) = Rx * B[i].position - A[i].position;
  }
  const Vec3 tx = C.colPivHouseholderQr().solve(d);
  return {tx, Rx};
}

// ---------------------------------------------------------------------------
// Camera-IMU extrinsics

/// A rest instant (segment boundary) with an optional board observation and
/// an optional gravity prior in the IMU frame.
struct RestObservation {
  double time = 0.0;
  std::optional<Detection> detection;
  std::optional<Vec3> gravity_prior;
};

enum class GravitySource { RestAccel, Prior };

/// Motion pairs (camera A_i, IMU B_i) between consecutive rest instants at
/// which the full board was seen. IMU motions spanning several segments are
/// composed from per-segment preintegrations.
inline std::pair<std::vector<Pose>, std::vector<Pose>>
collect_motion_pairs(const std::vector<RestObservation> &rests, const ImuSamples &imu,
                     const Intrinsics &K, const BoardSpec &board, GravitySource gravity) {
  std::vector<std::optional<Pose>> cam_from_board(rests.size());
  for (std::size_t i = 0; i < rests.size(); ++i) {
    const auto &d = rests[i].detection;
    if (!d || !d->full_view) continue;
    try {
      cam_from_board[i] = pnp_board_pose(*d, K, board);
    } catch (const Degenerate &) {
    }
  }
  auto gravity_at = [&](std::size_t i) -> std::optional<Vec3> {
    if (gravity == GravitySource::Prior && rests[i].gravity_prior) return rests[i].gravity_prior;
    if (auto g = gravity_at_rest(imu, rests[i].time)) return g;
    return rests[i].gravity_prior;
  };

  std::vector<Pose> A, B;
  std::optional<std::size_t> last;
  Pose imu_motion;
  bool imu_valid = true;
  for (std::size_t i = 0; i < rests.size(); ++i) {
    if (last && i > 0) {
      if (const auto g = gravity_at(i - 1)) {
        imu_motion = compose(imu_motion,
                             preintegrate_imu(imu, rests[i - 1].time, rests[i].time, *g));
      } else {
        imu_valid = false;
      }
    }
    if (!cam_from_board[i]) continue;
    if (last && imu_valid) {
      A.push_back(compose(*cam_from_board[*last], inverse(*cam_from_board[i])));
      B.push_back(imu_motion);
    }
    last = i;
    imu_motion = Pose::identity();
    imu_valid = true;
  }
  return {A, B};
}

/// Estimates T_cam_imu (T_world_imu = T_world_cam * inverse(T_cam_imu)).
inline Pose calibrate_extrinsic(const std::vector<RestObservation> &rests, const ImuSamples &imu,
                                const Intrinsics &K, const BoardSpec &board,
                                GravitySource gravity = GravitySource::RestAccel) {
  const auto [A, B] = collect_motion_pairs(rests, imu, K, board, gravity);
  if (A.size() < 2) throw InsufficientData("fewer than 2 camera/IMU motion pairs");
  // A_i X = X B_i holds for X = T_cam_imu^-1.
  return inverse(hand_eye_solve(A, B));
}

// ---------------------------------------------------------------------------
// Metrics

inline double percent_error(const Eigen::VectorXd &truth, const Eigen::VectorXd &estimate) {
  const double n = truth.norm();
  if (n == 0.0) throw ZeroTruth("truth vector has zero norm");
  return 100.0 * (truth - estimate).norm() / n;
}

} // namespace vical

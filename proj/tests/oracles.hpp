#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include "vical/calib.hpp"
#include "vical/mdp.hpp"
#include "vical/sac.hpp"
#include "views.hpp"

namespace testutil {

using namespace vical;

inline double sym_rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max(floor, std::abs(a) + std::abs(b));
}

// --- coverage state ---------------------------------------------------------

inline Detection det_at(double u, double v, double area = 0.07, double skew = kPi / 2) {
  Detection d;
  d.center = Vec2(u, v);
  d.area_prop = area;
  d.skew = skew;
  d.full_view = true;
  return d;
}

inline Detection random_detection(Rng &rng) {
  return det_at(rng.uniform(0, 640), rng.uniform(0, 480), rng.uniform(0.0, 0.6),
                rng.uniform(0.5, 2.6));
}

inline Pose random_step(const Pose &p, Rng &rng) {
  const Action a = Action::clamped(rng.uniform(0, 0.3), rng.uniform(0, 2 * kPi),
                                   rng.uniform(0, kPi), rng.uniform(-0.3, 0.3),
                                   rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  return apply_action(p, a);
}

/// Runs `episodes` random 20-step episodes and compares the incremental state
/// against min/max over the whole detection history. Returns the number of
/// mismatching episodes.
inline int brute_force_mismatches(int episodes, std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    CoverageState s = init_state(Pose::identity());
    std::vector<Vec2> centers;
    std::vector<double> areas, skews;
    double rho_sum = 0.0;
    for (int step = 0; step < 20; ++step) {
      std::vector<Detection> ds;
      const int n = static_cast<int>(rng.index(6));
      for (int i = 0; i < n; ++i) ds.push_back(random_detection(rng));
      for (const auto &d : ds) {
        centers.push_back(d.center);
        areas.push_back(d.area_prop);
        skews.push_back(d.skew);
      }
      const Pose next = random_step(s.pose, rng);
      rho_sum += (next.position - s.pose.position).norm();
      s = update_state(s, ds, s.pose, next);
    }
    bool ok = true;
    for (int r = 0; r < 4; ++r) {
      const bool left = r == 0 || r == 3, up = r == 0 || r == 1;
      bool any = false;
      Vec2 v(left ? 1e9 : -1e9, up ? 1e9 : -1e9);
      for (const Vec2 &c : centers) {
        if (region_of(c, 640, 480) != r) continue;
        any = true;
        v.x() = left ? std::min(v.x(), c.x()) : std::max(v.x(), c.x());
        v.y() = up ? std::min(v.y(), c.y()) : std::max(v.y(), c.y());
      }
      ok = ok && s.seen[r] == any && (!any || s.vertices[r] == v);
    }
    if (!areas.empty()) {
      ok = ok && s.a_min == *std::min_element(areas.begin(), areas.end()) &&
           s.a_max == *std::max_element(areas.begin(), areas.end()) &&
           s.eta_min == *std::min_element(skews.begin(), skews.end()) &&
           s.eta_max == *std::max_element(skews.begin(), skews.end());
    }
    ok = ok && std::abs(s.path_len - rho_sum) < 1e-9;
    bad += !ok;
  }
  return bad;
}

/// Number of coverage-component updates that decrease or leave [0, 1] over
/// fuzzed episodes totalling at least `updates` steps.
inline int monotonicity_violations(int updates, std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  for (int done = 0; done < updates;) {
    CoverageState s = init_state(Pose::identity());
    StateVector prev = to_vector(s);
    for (int step = 0; step < 20; ++step, ++done) {
      std::vector<Detection> ds;
      const int n = static_cast<int>(rng.index(4));
      for (int i = 0; i < n; ++i) ds.push_back(random_detection(rng));
      s = update_state(s, ds, s.pose, random_step(s.pose, rng));
      const StateVector cur = to_vector(s);
      for (int i = 0; i < kCoverageDim; ++i) bad += cur[i] < 0.0 || cur[i] > 1.0 || cur[i] < prev[i];
      prev = cur;
    }
  }
  return bad;
}

// --- geometry and calibration ---------------------------------------------

inline Pose random_pose(Rng &rng, double trans = 1.0, double rot = kPi) {
  const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  return {Vec3(rng.uniform(-trans, trans), rng.uniform(-trans, trans), rng.uniform(-trans, trans)),
          Quat(Eigen::AngleAxisd(rng.uniform(0.0, rot), axis))};
}

inline double pose_rot_err(const Pose &a, const Pose &b) {
  return rotation_distance(a.rotation(), b.rotation());
}

/// Camera motions A_i and IMU motions B_i for a camera trajectory and a known
/// camera-in-IMU transform.
inline void motions_from_trajectory(const std::vector<Pose> &cams, const Pose &T_cam_imu,
                                    std::vector<Pose> &A, std::vector<Pose> &B) {
  for (std::size_t i = 0; i + 1 < cams.size(); ++i) {
    A.push_back(inverse(cams[i]) * cams[i + 1]);
    const Pose b0 = cams[i] * inverse(T_cam_imu), b1 = cams[i + 1] * inverse(T_cam_imu);
    B.push_back(inverse(b0) * b1);
  }
}

/// Hand-derived Jacobian of one reprojected corner with respect to
/// [fx fy cx cy k1 k2 p1 p2 | rotvec t].
inline Eigen::Matrix<double, 2, 14> analytic_corner_jacobian(const Intrinsics &K, const Vec3 &w,
                                                             const Vec3 &t, const Vec3 &X) {
  const Mat3 R = exp_so3(w);
  const Vec3 p = R * X + t;
  const double x = p.x() / p.z(), y = p.y() / p.z();
  const double r2 = x * x + y * y;
  const double rad = 1 + K.k1 * r2 + K.k2 * r2 * r2;
  const double xd = x * rad + 2 * K.p1 * x * y + K.p2 * (r2 + 2 * x * x);
  const double yd = y * rad + K.p1 * (r2 + 2 * y * y) + 2 * K.p2 * x * y;
  const double drad = K.k1 + 2 * K.k2 * r2; // d(rad)/d(r2)

  Eigen::Matrix<double, 2, 14> J = Eigen::Matrix<double, 2, 14>::Zero();
  J(0, 0) = xd;
  J(1, 1) = yd;
  J(0, 2) = 1;
  J(1, 3) = 1;
  J(0, 4) = K.fx * x * r2;
  J(1, 4) = K.fy * y * r2;
  J(0, 5) = K.fx * x * r2 * r2;
  J(1, 5) = K.fy * y * r2 * r2;
  J(0, 6) = K.fx * 2 * x * y;
  J(1, 6) = K.fy * (r2 + 2 * y * y);
  J(0, 7) = K.fx * (r2 + 2 * x * x);
  J(1, 7) = K.fy * 2 * x * y;

  Eigen::Matrix2d dd; // d(xd, yd)/d(x, y)
  dd(0, 0) = rad + 2 * x * x * drad + 2 * K.p1 * y + 6 * K.p2 * x;
  dd(0, 1) = 2 * x * y * drad + 2 * K.p1 * x + 2 * K.p2 * y;
  dd(1, 0) = 2 * x * y * drad + 2 * K.p1 * x + 2 * K.p2 * y;
  dd(1, 1) = rad + 2 * y * y * drad + 6 * K.p1 * y + 2 * K.p2 * x;
  Eigen::Matrix<double, 2, 3> dn; // d(x, y)/dp
  dn << 1 / p.z(), 0, -x / p.z(), 0, 1 / p.z(), -y / p.z();
  const Eigen::Matrix<double, 2, 3> dp = Eigen::Vector2d(K.fx, K.fy).asDiagonal() * dd * dn;

  // d(R(w) X)/dw = -R [X]x Jr(w), with Jr the right Jacobian of SO(3).
  const double th = w.norm();
  const Mat3 W = skew_symmetric(w);
  const Mat3 Jr = Mat3::Identity() - (1 - std::cos(th)) / (th * th) * W +
                  (th - std::sin(th)) / (th * th * th) * W * W;
  J.block<2, 3>(0, 8) = dp * (-R * skew_symmetric(X) * Jr);
  J.block<2, 3>(0, 11) = dp;
  return J;
}

/// Worst column-relative difference between the solver's numeric Jacobian and
/// the analytic one, for two views of the board.
inline double reprojection_jacobian_error(const RigConfig &rig, const std::vector<View> &views) {
  std::vector<const Detection *> ptrs;
  for (const View &v : views) ptrs.push_back(&v.detection);
  ReprojectionProblem prob(rig.board, ptrs, 640, 480);
  VecX x(prob.num_params());
  x.head<8>() = rig.intrinsics.params();
  for (std::size_t v = 0; v < views.size(); ++v) {
    pose_to_params(inverse(views[v].camera) * rig.board.pose, x.data() + 8 + 6 * v);
  }
  const MatX J = prob.jacobian(x, prob.residual(x), 1e-6);

  MatX Ja = MatX::Zero(J.rows(), J.cols());
  Eigen::Index row = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const double *pp = x.data() + 8 + 6 * v;
    const Vec3 w(pp[0], pp[1], pp[2]), t(pp[3], pp[4], pp[5]);
    for (const auto &[id, px] : views[v].detection.corners) {
      const auto Jc = analytic_corner_jacobian(rig.intrinsics, w, t, rig.board.corner_local(id));
      Ja.block<2, 8>(row, 0) = Jc.leftCols<8>();
      Ja.block<2, 6>(row, 8 + 6 * static_cast<Eigen::Index>(v)) = Jc.rightCols<6>();
      row += 2;
    }
  }
  double worst = 0.0;
  for (Eigen::Index c = 0; c < J.cols(); ++c) {
    const double scale = Ja.col(c).cwiseAbs().maxCoeff();
    if (scale == 0.0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, (J.col(c) - Ja.col(c)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

// --- networks ---------------------------------------------------------------

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, Rng &rng) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

/// Finite-difference check of parameter gradients of L = sum(C .* net(X)),
/// visiting every `stride`-th weight. A ReLU net is piecewise linear in each
/// single parameter, so where the central difference straddles a kink the
/// analytic gradient must equal one of the one-sided differences.
inline double max_fd_error(Mlp<double> &net, const Matrix<double> &X, const Matrix<double> &C,
                           double h = 1e-5, Eigen::Index stride = 1) {
  MlpCache<double> cache;
  net.forward(X, &cache);
  const MlpGrad<double> g = net.backward(cache, C);
  auto loss = [&] { return net.forward(X).cwiseProduct(C).sum(); };
  auto rel = [](double a, double b) { return sym_rel_err(a, b, 1e-8); };
  double worst = 0.0;
  auto check = [&](double &p, double analytic) {
    const double keep = p;
    const double l0 = loss();
    p = keep + h;
    const double lp = loss();
    p = keep - h;
    const double lm = loss();
    p = keep;
    double e = rel((lp - lm) / (2 * h), analytic);
    if (e > 1e-4) e = std::min({e, rel((lp - l0) / h, analytic), rel((l0 - lm) / h, analytic)});
    worst = std::max(worst, e);
  };
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (Eigen::Index i = 0; i < net.W()[l].size(); i += stride) check(net.W()[l].data()[i], g.W[l].data()[i]);
    for (Eigen::Index i = 0; i < net.b()[l].size(); ++i) check(net.b()[l].data()[i], g.b[l].data()[i]);
  }
  return worst;
}

inline SacConfig tiny_sac_config() {
  SacConfig c;
  c.hidden = 4;
  c.batch = 2;
  return c;
}

inline std::vector<Transition> random_transitions(int n, int sd, int ad, Rng &rng, bool done = false) {
  std::vector<Transition> ts;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.state = Eigen::VectorXd::NullaryExpr(sd, [&] { return rng.normal(); });
    t.action = Eigen::VectorXd::NullaryExpr(ad, [&] { return rng.uniform(-1, 1); });
    t.reward = rng.normal();
    t.next_state = Eigen::VectorXd::NullaryExpr(sd, [&] { return rng.normal(); });
    t.done = done;
    ts.push_back(t);
  }
  return ts;
}

enum class Which { Value, Q1, Q2, Policy };

/// Central differences of one SAC loss over one network's parameters.
inline double sac_fd_error(SacAgent<double> &agent, const SacBatch<double> &b,
                           const Matrix<double> &eps, Which which) {
  SacGrads<double> g;
  agent.losses(b, eps, &g);
  Mlp<double> &net = which == Which::Value ? agent.value()
                     : which == Which::Q1  ? agent.q1()
                     : which == Which::Q2  ? agent.q2()
                                           : agent.policy();
  const MlpGrad<double> &grad = which == Which::Value ? g.value
                                : which == Which::Q1  ? g.q1
                                : which == Which::Q2  ? g.q2
                                                      : g.policy;
  auto loss = [&] {
    const auto L = agent.losses(b, eps, nullptr);
    return which == Which::Value ? L.value : which == Which::Q1 ? L.q1 : which == Which::Q2 ? L.q2 : L.policy;
  };
  const double h = 1e-6;
  double worst = 0.0;
  auto check = [&](double &p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double lp = loss();
    p = keep - h;
    const double lm = loss();
    p = keep;
    worst = std::max(worst, sym_rel_err((lp - lm) / (2 * h), analytic, 1e-7));
  };
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (Eigen::Index i = 0; i < net.W()[l].size(); ++i) check(net.W()[l].data()[i], grad.W[l].data()[i]);
    for (Eigen::Index i = 0; i < net.b()[l].size(); ++i) check(net.b()[l].data()[i], grad.b[l].data()[i]);
  }
  return worst;
}

/// Worst gradient error over all four SAC losses of a tiny agent.
inline double sac_worst_fd_error(std::uint64_t seed) {
  Rng rng(seed);
  SacAgent<double> agent(3, 2, tiny_sac_config(), seed + 100);
  // Move the target net away from the online value net.
  for (auto &w : agent.value_target().W()) w.array() += 0.1;
  const auto b = SacBatch<double>::from(random_transitions(2, 3, 2, rng));
  Matrix<double> eps(2, 2);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  double worst = 0.0;
  for (Which w : {Which::Value, Which::Q1, Which::Q2, Which::Policy}) {
    worst = std::max(worst, sac_fd_error(agent, b, eps, w));
  }
  return worst;
}

} // namespace testutil

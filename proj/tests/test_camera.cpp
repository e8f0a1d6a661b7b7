#include <gtest/gtest.h>

#include "vical/camera.hpp"
#include "vical/rng.hpp"

using namespace vical;
using Vec4 = Eigen::Vector4d;

TEST(IntrinsicsFromFov, FocalAndCenter) {
  const Intrinsics K = intrinsics_from_fov(1.0, 640, 480, 0.5, 0.5);
  // 320 / tan(0.5) = 585.756...
  EXPECT_NEAR(K.fx, 320.0 / std::tan(0.5), 1e-12);
  EXPECT_NEAR(K.fx, 585.756, 1e-3);
  EXPECT_EQ(K.fx, K.fy);
  EXPECT_EQ(K.cx, 320.0);
  EXPECT_EQ(K.cy, 240.0);
  EXPECT_NEAR(intrinsics_from_fov(kPi / 2, 640, 480, 0.5, 0.5).fx, 320.0, 1e-12);
  EXPECT_TRUE(K.valid());
}

TEST(DistortRadtan, ZeroCasesAndFormula) {
  const Vec2 c = distort_radtan(0, 0, {0.1, 0.05, 0.01, 0.02});
  EXPECT_EQ(c, Vec2::Zero());
  EXPECT_EQ(distort_radtan(0.3, -0.2, {}), Vec2(0.3, -0.2));
  // r^2 = 0.05, radial factor 1 + 0.01 * 0.05 = 1.0005
  const Vec2 d = distort_radtan(0.1, 0.2, {0.01, 0, 0, 0});
  EXPECT_NEAR(d.x(), 0.1 * 1.0005, 1e-15);
  EXPECT_NEAR(d.y(), 0.2 * 1.0005, 1e-15);
  // All four terms, evaluated by hand: x=0.2, y=-0.1, r2=0.05
  const Vec2 e = distort_radtan(0.2, -0.1, {0.1, 0.2, 0.01, -0.02});
  const double radial = 1 + 0.1 * 0.05 + 0.2 * 0.0025;
  EXPECT_NEAR(e.x(), 0.2 * radial + 2 * 0.01 * 0.2 * -0.1 + -0.02 * (0.05 + 2 * 0.04), 1e-15);
  EXPECT_NEAR(e.y(), -0.1 * radial + 0.01 * (0.05 + 2 * 0.01) + 2 * -0.02 * 0.2 * -0.1, 1e-15);
}

TEST(UndistortRadtan, IdentityAndRoundTrip) {
  const Vec2 u = undistort_radtan(0.25, -0.4, {});
  EXPECT_EQ(u, Vec2(0.25, -0.4));
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Radtan d{rng.normal(0, 0.02), rng.normal(0, 0.02), 0.0, 0.0};
    const double x = rng.uniform(-0.6, 0.6), y = rng.uniform(-0.45, 0.45);
    const Vec2 xd = distort_radtan(x, y, d);
    const Vec2 back = undistort_radtan(xd.x(), xd.y(), d);
    EXPECT_LT((back - Vec2(x, y)).norm(), 1e-9);
    EXPECT_LT((distort_radtan(back.x(), back.y(), d) - xd).norm(), 1e-9);
  }
}

TEST(UndistortRadtan, DivergesForStrongDistortion) {
  // With k1 = 1 and xd = 3 the fixed point x = 3 / (1 + x^2) sits at x ~ 1.213
  // where the map's slope is about -1.19, so the iteration cannot contract.
  EXPECT_THROW(undistort_radtan(3.0, 0.0, {1.0, 0.0, 0.0, 0.0}), NoConvergence);
}

TEST(ProjectPoint, AxisPointAndBehind) {
  const Intrinsics K = intrinsics_from_fov(1.0, 640, 480, 0.5, 0.5, 0.02, -0.01);
  const auto px = project_point(Vec3(0, 0, 1), Pose::identity(), K);
  ASSERT_TRUE(px.has_value());
  EXPECT_NEAR(px->x(), K.cx, 1e-12);
  EXPECT_NEAR(px->y(), K.cy, 1e-12);
  EXPECT_FALSE(project_point(Vec3(0, 0, -1), Pose::identity(), K).has_value());
  EXPECT_FALSE(project_point(Vec3(0, 0, 0.04), Pose::identity(), K).has_value());
  EXPECT_FALSE(project_point(Vec3(5, 0, 1), Pose::identity(), K).has_value());
}

TEST(ProjectPoint, MatchesStepwiseOracle) {
  Rng rng(5);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const Intrinsics K = intrinsics_from_fov(rng.normal(1.0, 0.05), 640, 480, 0.5, 0.5,
                                             rng.normal(0, 0.02), rng.normal(0, 0.02),
                                             rng.normal(0, 0.001), rng.normal(0, 0.001));
    const Pose T(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
                 Quat(Eigen::AngleAxisd(rng.uniform(0, 0.3), Vec3(rng.normal(), rng.normal(), rng.normal()).normalized())));
    const Vec3 pw = T.transform(Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4), rng.uniform(0.5, 3)));
    const auto px = project_point(pw, T, K);
    // Oracle: homogeneous inverse transform, normalize, distort, affine.
    const Vec4 ph = T.matrix().inverse() * Vec4(pw.x(), pw.y(), pw.z(), 1.0);
    const double x = ph.x() / ph.z(), y = ph.y() / ph.z();
    const double r2 = x * x + y * y;
    const double rad = 1 + K.k1 * r2 + K.k2 * r2 * r2;
    const double xd = x * rad + 2 * K.p1 * x * y + K.p2 * (r2 + 2 * x * x);
    const double yd = y * rad + K.p1 * (r2 + 2 * y * y) + 2 * K.p2 * x * y;
    const double u = K.fx * xd + K.cx, v = K.fy * yd + K.cy;
    const bool inside = u >= 0 && u <= 640 && v >= 0 && v <= 480;
    ASSERT_EQ(px.has_value(), inside);
    if (px) {
      EXPECT_NEAR(px->x(), u, 1e-9);
      EXPECT_NEAR(px->y(), v, 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 300);
}

TEST(ProjectPoint, ScaleInvarianceAndUnprojection) {
  Rng rng(9);
  const Intrinsics K = intrinsics_from_fov(1.0, 640, 480, 0.5, 0.5, 0.03, -0.02, 0.001, 0.0005);
  for (int i = 0; i < 500; ++i) {
    const double z = rng.uniform(0.5, 2.0);
    const Vec3 p(z * rng.uniform(-0.45, 0.45), z * rng.uniform(-0.35, 0.35), z);
    const double lambda = rng.uniform(0.2, 10.0);
    const auto a = project_camera_point(p, K);
    const auto b = project_camera_point(lambda * p, K);
    ASSERT_TRUE(a && b);
    EXPECT_LT((*a - *b).norm(), 1e-9);
    const Vec2 ray = unproject_pixel(*a, K);
    EXPECT_LT((ray - Vec2(p.x() / p.z(), p.y() / p.z())).norm(), 1e-8);
  }
}

TEST(ProjectPoint, DistortionOffsetShiftsCenter) {
  const Intrinsics K = intrinsics_from_fov(1.0, 640, 480, 0.5, 0.5, 0.05, 0.0);
  const Vec2 offset(0.02, -0.01);
  // A ray through the distortion center is not displaced by radial distortion.
  const Vec3 p(offset.x(), offset.y(), 1.0);
  const auto px = project_camera_point(p, K, offset);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->x(), K.fx * offset.x() + K.cx, 1e-12);
  EXPECT_NEAR(px->y(), K.fy * offset.y() + K.cy, 1e-12);
}

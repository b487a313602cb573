#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "rgbdpose/geometry.hpp"

using namespace rgbdpose;

namespace {

const CameraIntrinsics kCam{500, 500, 320, 240, 640, 480};

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

TEST(Project, PrincipalPoint) {
  const PixelCoord p = project({0, 0, 2}, kCam);
  EXPECT_DOUBLE_EQ(p.u, 320);
  EXPECT_DOUBLE_EQ(p.v, 240);
}

TEST(Project, OffAxis) {
  const PixelCoord p = project({0.4, 0, 2}, kCam);
  EXPECT_DOUBLE_EQ(p.u, 420);
  EXPECT_DOUBLE_EQ(p.v, 240);
}

TEST(Project, BehindCameraThrows) {
  EXPECT_THROW(project({0, 0, -1}, kCam), DegenerateProjection);
  EXPECT_THROW(project({0, 0, 0}, kCam), DegenerateProjection);
}

TEST(Backproject, Examples) {
  EXPECT_EQ(backproject({320, 240, {}}, 2, kCam), Vec3(0, 0, 2));
  const Vec3 w = backproject({420, 240, {}}, 2, kCam);
  EXPECT_NEAR((w - Vec3(0.4, 0, 2)).norm(), 0, 1e-15);
  EXPECT_THROW(backproject({320, 240, {}}, 0, kCam), InvalidDepth);
  EXPECT_THROW(backproject({320, 240, {}}, -1, kCam), InvalidDepth);
}

TEST(Backproject, RoundTripProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100, 740), v(-100, 580), d(0.01, 19.9);
  for (int i = 0; i < 20000; ++i) {
    const PixelCoord p{u(rng), v(rng), {}};
    const PixelCoord q = project(backproject(p, d(rng), kCam), kCam);
    ASSERT_LT(std::abs(q.u - p.u), 1e-9);
    ASSERT_LT(std::abs(q.v - p.v), 1e-9);
  }
}

TEST(Intrinsics, Validation) {
  EXPECT_TRUE(kCam.valid());
  EXPECT_FALSE((CameraIntrinsics{0, 500, 320, 240, 640, 480}.valid()));
  EXPECT_FALSE((CameraIntrinsics{500, 500, 640, 240, 640, 480}.valid()));
  EXPECT_THROW((CameraIntrinsics{500, -1, 320, 240, 640, 480}.validate()), InvalidArgument);
}

TEST(RigidTransform, InverseAndCompose) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    RigidTransform t{random_rotation(rng), Vec3(1, -2, 0.5) * (i * 0.1)};
    EXPECT_TRUE(t.valid());
    const Vec3 p(0.3, 0.2, 1.7);
    EXPECT_NEAR((t.inverse().apply(t.apply(p)) - p).norm(), 0, 1e-12);
    const RigidTransform s{random_rotation(rng), Vec3(0.1, 0.2, 0.3)};
    EXPECT_NEAR((t.compose(s).apply(p) - t.apply(s.apply(p))).norm(), 0, 1e-12);
  }
  RigidTransform bad;
  bad.rotation(0, 0) = -1;  // reflection
  EXPECT_FALSE(bad.valid());
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(DepthMap, ValidityEncoding) {
  DepthMap d(3, 2);
  EXPECT_EQ(d.valid_count(), 0u);
  d.at(1, 1) = 2.5f;
  d.at(0, 0) = 25.0f;  // beyond the valid range
  EXPECT_EQ(d.valid_count(), 1u);
  EXPECT_TRUE(d.valid_at(1, 1));
  EXPECT_FALSE(d.valid_at(0, 0));
  EXPECT_THROW(DepthMap(2, 2, std::vector<float>(3)), InvalidArgument);
}

TEST(WarpDepth, IdentityIsExactAtHitPixels) {
  const CameraIntrinsics cam{140, 140, 80, 60, 160, 120};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> depth(0.5f, 8.0f);
  std::bernoulli_distribution keep(0.6);
  DepthMap src(cam.width, cam.height);
  for (float& v : src.values())
    if (keep(rng)) v = depth(rng);
  const DepthMap out = warp_depth(src, cam, RigidTransform::identity(), cam);
  EXPECT_EQ(out, src);
}

TEST(WarpDepth, ZBufferKeepsNearest) {
  const CameraIntrinsics cam{100, 100, 2, 2, 5, 5};
  DepthMap src(5, 5);
  src.at(2, 2) = 3.0f;
  src.at(3, 2) = 1.0f;
  // Shifting by -1 cm moves the depth-1 pixel onto (2,2); the depth-3 pixel
  // moves by a third of a pixel and stays there.
  RigidTransform shift;
  shift.translation = Vec3(-0.01, 0, 0);
  const DepthMap out = warp_depth(src, cam, shift, cam);
  EXPECT_FLOAT_EQ(out.at(2, 2), 1.0f);
  EXPECT_EQ(out.valid_count(), 1u);
}

TEST(WarpDepth, TranslationAlongAxis) {
  const CameraIntrinsics cam{100, 100, 10, 10, 21, 21};
  DepthMap src(21, 21);
  src.at(13, 10) = 2.0f;
  RigidTransform t;
  t.translation = Vec3(0, 0, 1);
  const DepthMap out = warp_depth(src, cam, t, cam);
  // Oracle: lift (13,10) at depth 2, add (0,0,1), reproject.
  const double x = (13 - 10) / 100.0 * 2.0;
  const double u = 100.0 * x / 3.0 + 10.0;
  const int du = int(std::lround(u));
  EXPECT_EQ(out.valid_count(), 1u);
  EXPECT_FLOAT_EQ(out.at(du, 10), 3.0f);
}

TEST(WarpDepth, EmptyInputGivesEmptyOutput) {
  const CameraIntrinsics cam{100, 100, 10, 10, 21, 21};
  EXPECT_EQ(warp_depth(DepthMap(21, 21), cam, RigidTransform::identity(), cam).valid_count(), 0u);
}

TEST(WarpDepth, NeverBelowMinimumInputDepth) {
  const CameraIntrinsics cam{140, 140, 80, 60, 160, 120};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> depth(1.0f, 6.0f);
  std::uniform_real_distribution<double> lateral(-0.5, 0.5), away(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    DepthMap src(cam.width, cam.height);
    float min_in = 1e9f;
    for (float& v : src.values()) {
      v = depth(rng);
      min_in = std::min(min_in, v);
    }
    RigidTransform t;
    if (trial > 0) t.translation = Vec3(lateral(rng), lateral(rng), away(rng));
    const DepthMap out = warp_depth(src, cam, t, cam);
    ASSERT_GT(out.valid_count(), 0u);
    for (float v : out.values())
      if (DepthMap::is_valid(v)) ASSERT_GE(double(v), double(min_in) - 1e-9);
  }
}

TEST(RobustDepth, MedianOfThree) {
  DepthMap d(9, 9);
  d.at(4, 4) = 1.0f;
  d.at(5, 4) = 5.0f;
  d.at(4, 5) = 2.0f;
  d.at(0, 0) = 9.0f;
  EXPECT_DOUBLE_EQ(robust_depth_at(d, {4, 4, {}}), 2.0);
}

TEST(RobustDepth, PrincipalPointNeighbors) {
  DepthMap d(9, 9);
  d.at(4, 4) = 2.0f;
  d.at(3, 4) = 2.1f;
  d.at(5, 4) = 1.9f;
  EXPECT_NEAR(robust_depth_at(d, {4, 4, {}}), 2.0, 1e-7);
}

TEST(RobustDepth, SingleNeighbor) {
  DepthMap d(9, 9);
  d.at(7, 2) = 1.5f;
  EXPECT_DOUBLE_EQ(robust_depth_at(d, {4, 4, {}}), 1.5);
}

TEST(RobustDepth, TwoNeighborsGiveLowerValue) {
  DepthMap d(9, 9);
  d.at(4, 3) = 3.0f;
  d.at(4, 6) = 1.5f;
  EXPECT_DOUBLE_EQ(robust_depth_at(d, {4, 4, {}}), 1.5);
}

TEST(RobustDepth, NothingInRadius) {
  DepthMap d(64, 64);
  EXPECT_THROW(robust_depth_at(d, {10, 10, {}}), NoDepthAvailable);
  d.at(60, 60) = 1.0f;
  EXPECT_THROW(robust_depth_at(d, {10, 10, {}}, 25), NoDepthAvailable);
  EXPECT_DOUBLE_EQ(robust_depth_at(d, {10, 10, {}}, 80), 1.0);
}

TEST(RobustDepth, MatchesBruteForceOracle) {
  // Oracle: sort all valid pixels within the radius by (distance, row-major).
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-5, 45);
  std::uniform_real_distribution<float> depth(0.5f, 5.0f);
  for (int trial = 0; trial < 300; ++trial) {
    DepthMap d(40, 40);
    const double density = (trial % 5 + 1) * 0.01;
    std::bernoulli_distribution keep(density);
    for (float& v : d.values())
      if (keep(rng)) v = depth(rng);
    const PixelCoord p{pos(rng), pos(rng), {}};
    const int radius = 5 + trial % 20;
    struct C {
      double d2;
      int lin;
      float v;
    };
    std::vector<C> all;
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x)
        if (d.valid_at(x, y)) {
          const double d2 = (x - p.u) * (x - p.u) + (y - p.v) * (y - p.v);
          if (d2 <= double(radius) * radius) all.push_back({d2, y * 40 + x, d.at(x, y)});
        }
    std::sort(all.begin(), all.end(), [](const C& a, const C& b) {
      return a.d2 != b.d2 ? a.d2 < b.d2 : a.lin < b.lin;
    });
    if (all.empty()) {
      EXPECT_THROW(robust_depth_at(d, p, radius), NoDepthAvailable);
      continue;
    }
    std::vector<float> top;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, all.size()); ++i) top.push_back(all[i].v);
    std::sort(top.begin(), top.end());
    const double expected = top.size() == 3 ? top[1] : top[0];
    ASSERT_DOUBLE_EQ(robust_depth_at(d, p, radius), expected) << "trial " << trial;
  }
}

TEST(RobustDepth, PermutationInvariantInNeighborValues) {
  const std::array<float, 3> vals{1.0f, 4.0f, 2.5f};
  std::array<int, 3> perm{0, 1, 2};
  do {
    DepthMap d(9, 9);
    d.at(4, 4) = vals[std::size_t(perm[0])];
    d.at(5, 4) = vals[std::size_t(perm[1])];
    d.at(4, 5) = vals[std::size_t(perm[2])];
    EXPECT_DOUBLE_EQ(robust_depth_at(d, {4, 4, {}}), 2.5);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

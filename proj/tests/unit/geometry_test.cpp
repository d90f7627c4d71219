#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ctxvid/geometry/epipolar.hpp"
#include "ctxvid/geometry/pose_io.hpp"
#include "../oracles/geometry_oracle.hpp"

using namespace ctxvid;
using namespace ctxvid::geometry;

namespace {
Intrinsics unit_k(int w = 16, int h = 16) { return Intrinsics{1, 1, 0, 0, w, h}; }

CameraPose rot_y(double a) {
  CameraPose p;
  p.rotation = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
  return p;
}
}  // namespace

TEST(RayDirections, PrincipalPointIsOpticalAxis) {
  auto d = ray_directions(unit_k(), CameraPose::identity(), 2, 2);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.0);
  EXPECT_EQ(d[2], 1.0);
}

TEST(RayDirections, ScaledFocalLength) {
  Intrinsics K{2, 2, 0, 0, 4, 4};
  auto d = ray_directions(K, CameraPose::identity(), 4, 4);
  // Pixel (u=2, v=0): K^-1 [2,0,1] = (1, 0, 1).
  EXPECT_DOUBLE_EQ(d[2 * 3 + 0], 1.0);
  EXPECT_DOUBLE_EQ(d[2 * 3 + 1], 0.0);
  EXPECT_DOUBLE_EQ(d[2 * 3 + 2], 1.0);
}

TEST(RayDirections, HalfTurnAboutY) {
  auto d = ray_directions(unit_k(), rot_y(M_PI), 1, 1);
  EXPECT_NEAR(d[0], 0.0, 1e-15);
  EXPECT_NEAR(d[1], 0.0, 1e-15);
  EXPECT_NEAR(d[2], -1.0, 1e-15);
}

TEST(RayDirections, SingularIntrinsicsRejected) {
  Intrinsics K{0, 1, 0, 0, 4, 4};
  EXPECT_THROW(ray_directions(K, CameraPose::identity(), 4, 4), InvalidIntrinsics);
}

TEST(Plucker, CameraAtOriginHasZeroMoment) {
  auto f = plucker_embedding(Intrinsics::from_fov(1.0, 8, 8), rot_y(0.3), 8, 8);
  for (std::size_t v = 0; v < 8; ++v)
    for (std::size_t u = 0; u < 8; ++u) EXPECT_EQ(f.moment(u, v).norm(), 0.0);
}

TEST(Plucker, HandMoment) {
  // Identity rotation, centre (1,0,0) means t = -R c = (-1,0,0).
  CameraPose p;
  p.translation = {-1, 0, 0};
  auto f = plucker_embedding(unit_k(1, 1), p, 1, 1);
  EXPECT_NEAR((f.moment(0, 0) - Eigen::Vector3d(0, -1, 0)).norm(), 0.0, 1e-15);
}

TEST(Plucker, UnitDirectionOrthogonalMoment) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto rig = oracle::random_rig(rng, 12);
    auto f = plucker_embedding(rig.K, rig.a, 12, 12);
    for (std::size_t v = 0; v < 12; ++v)
      for (std::size_t u = 0; u < 12; ++u) {
        EXPECT_NEAR(f.direction(u, v).norm(), 1.0, 1e-9);
        EXPECT_NEAR(f.moment(u, v).dot(f.direction(u, v)), 0.0, 1e-9);
      }
  }
}

TEST(RelativePose, SelfIsIdentity) {
  std::mt19937_64 rng(2);
  CameraPose a{oracle::random_rotation(rng), {1, 2, 3}};
  auto r = relative_pose(a, a);
  EXPECT_LT((r.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  EXPECT_LT(r.translation.norm(), 1e-12);
}

TEST(RelativePose, FromIdentityIsTarget) {
  std::mt19937_64 rng(3);
  CameraPose b{oracle::random_rotation(rng), {0.5, -2, 4}};
  auto r = relative_pose(CameraPose::identity(), b);
  EXPECT_EQ(r.rotation, b.rotation);
  EXPECT_EQ(r.translation, b.translation);
}

TEST(RelativePose, ComposesBackToTarget) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) {
    CameraPose a{oracle::random_rotation(rng), {u(rng), u(rng), u(rng)}};
    CameraPose b{oracle::random_rotation(rng), {u(rng), u(rng), u(rng)}};
    const Eigen::Matrix4d composed = relative_pose(a, b).matrix() * a.matrix();
    EXPECT_LT((composed - b.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Fundamental, PureTranslationAlongX) {
  CameraPose b;
  b.translation = {1, 0, 0};
  const Eigen::Matrix3d F = fundamental_matrix(CameraPose::identity(), unit_k(), b, unit_k());
  Eigen::Matrix3d expected;
  expected << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_EQ(F, expected);
}

TEST(Fundamental, PureRotationVanishes) {
  std::mt19937_64 rng(5);
  CameraPose a{oracle::random_rotation(rng), Eigen::Vector3d::Zero()};
  CameraPose b{oracle::random_rotation(rng), Eigen::Vector3d::Zero()};
  auto K = Intrinsics::from_fov(1.0, 16, 16);
  EXPECT_LT(fundamental_matrix(a, K, b, K).norm(), 1e-12);
}

TEST(Fundamental, EpipolarConstraintOnRandomRigs) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int r = 0; r < 20; ++r) {
    auto rig = oracle::random_rig(rng);
    Eigen::Matrix3d F = fundamental_matrix(rig.a, rig.K, rig.b, rig.K);
    F /= F.norm();
    for (int i = 0; i < 100; ++i) {
      const Eigen::Vector3d X(u(rng), u(rng), u(rng));
      const Eigen::Vector3d xa = oracle::project(rig.K, rig.a, X), xb = oracle::project(rig.K, rig.b, X);
      EXPECT_LT(std::abs((xb / xb.z()).dot(F * (xa / xa.z()))), 1e-6);
    }
  }
}

TEST(Fundamental, MatchesProjectionOracleUpToScale) {
  std::mt19937_64 rng(7);
  for (int r = 0; r < 20; ++r) {
    auto rig = oracle::random_rig(rng);
    Eigen::Matrix3d F = fundamental_matrix(rig.a, rig.K, rig.b, rig.K);
    Eigen::Matrix3d G = oracle::fundamental_from_projections(rig.K, rig.a, rig.K, rig.b);
    F /= F.norm();
    G /= G.norm();
    if ((F - G).norm() > (F + G).norm()) G = -G;
    EXPECT_LT((F - G).norm(), 1e-9);
  }
}

TEST(Fundamental, SwappingViewsTransposes) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 15);
  for (int r = 0; r < 20; ++r) {
    auto rig = oracle::random_rig(rng);
    const Eigen::Matrix3d Fab = fundamental_matrix(rig.a, rig.K, rig.b, rig.K);
    const Eigen::Matrix3d Fba = fundamental_matrix(rig.b, rig.K, rig.a, rig.K);
    for (int i = 0; i < 20; ++i) {
      const Eigen::Vector3d x(u(rng), u(rng), 1), xp(u(rng), u(rng), 1);
      EXPECT_NEAR(xp.dot(Fab * x), x.dot(Fba * xp), 1e-6);
    }
  }
}

TEST(EpipolarLine, HorizontalLineForLateralTranslation) {
  Eigen::Matrix3d F;
  F << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  auto l = epipolar_line(F, 5, 7);
  EXPECT_EQ(l.a, 0.0);
  EXPECT_EQ(l.b, -1.0);
  EXPECT_EQ(l.c, 7.0);
  EXPECT_FALSE(l.degenerate);
}

TEST(EpipolarLine, ZeroMatrixIsDegenerate) {
  EXPECT_TRUE(epipolar_line(Eigen::Matrix3d::Zero(), 3, 4).degenerate);
  EXPECT_THROW(point_line_distance(epipolar_line(Eigen::Matrix3d::Zero(), 3, 4), 0, 0), DegenerateLineError);
}

TEST(EpipolarLine, MatchesHandMultiply) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix3d F;
    for (int k = 0; k < 9; ++k) F(k / 3, k % 3) = u(rng);
    const double x = u(rng), y = u(rng);
    auto l = epipolar_line(F, x, y);
    EXPECT_NEAR(l.a, F(0, 0) * x + F(0, 1) * y + F(0, 2), 1e-12);
    EXPECT_NEAR(l.b, F(1, 0) * x + F(1, 1) * y + F(1, 2), 1e-12);
    EXPECT_NEAR(l.c, F(2, 0) * x + F(2, 1) * y + F(2, 2), 1e-12);
  }
}

TEST(PointLineDistance, Examples) {
  EXPECT_EQ(point_line_distance({1, 0, 0, false}, 3, 4), 3.0);
  EXPECT_DOUBLE_EQ(point_line_distance({3, 4, 0, false}, 1, 1), 1.4);
  EXPECT_EQ(point_line_distance({1, -1, 0, false}, 2, 2), 0.0);
}

TEST(EpipolarMask, DefaultThresholdHalfDiagonal) { EXPECT_NEAR(default_threshold(16, 16), 11.313708498984761, 1e-12); }

TEST(EpipolarMask, IdenticalViewsGiveAllOnes) {
  std::mt19937_64 rng(10);
  auto rig = oracle::random_rig(rng, 8);
  auto m = epipolar_mask({rig.a, rig.b}, {rig.a}, rig.K, 8, 8, 1.0);
  for (std::size_t r = 0; r < 64; ++r) EXPECT_EQ(m.count_row(r), 64u);
  EXPECT_LT(m.count(), m.rows() * m.cols());  // the b->a block is genuinely sparse
}

TEST(EpipolarMask, IncludesTrueCorrespondences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> depth(2.0, 6.0);
  for (int r = 0; r < 20; ++r) {
    auto rig = oracle::random_rig(rng);
    auto m = epipolar_mask({rig.a}, {rig.b}, rig.K, 16, 16, default_threshold(16, 16));
    int checked = 0;
    while (checked < 50) {
      const std::size_t u = rng() % 16, v = rng() % 16;
      const Eigen::Vector3d ray = ray_direction(rig.K, rig.a, double(u), double(v));
      const Eigen::Vector3d X = rig.a.center() + depth(rng) * ray;
      const Eigen::Vector3d xb = oracle::project(rig.K, rig.b, X);
      if (xb.z() <= 0) continue;
      const long ub = std::lround(xb.x() / xb.z()), vb = std::lround(xb.y() / xb.z());
      if (ub < 0 || ub >= 16 || vb < 0 || vb >= 16) continue;
      EXPECT_TRUE(m.get(v * 16 + u, std::size_t(vb) * 16 + std::size_t(ub)));
      ++checked;
    }
  }
}

TEST(EpipolarMask, EqualsBruteForceOracle) {
  std::mt19937_64 rng(12);
  for (int r = 0; r < 3; ++r) {
    auto rig = oracle::random_rig(rng);
    auto rig2 = oracle::random_rig(rng);
    const std::vector<CameraPose> qs{rig.a, rig2.a}, cs{rig.b, rig2.b, rig.a};
    for (double delta : {0.75, 2.0, default_threshold(16, 16)}) {
      EXPECT_TRUE(epipolar_mask(qs, cs, rig.K, 16, 16, delta) == oracle::brute_force_mask(qs, cs, rig.K, 16, 16, delta));
    }
  }
}

TEST(EpipolarMask, NoEmptyRows) {
  std::mt19937_64 rng(13);
  for (int r = 0; r < 10; ++r) {
    auto rig = oracle::random_rig(rng, 8);
    auto m = epipolar_mask({rig.a}, {rig.b}, rig.K, 8, 8, 0.05);
    for (std::size_t row = 0; row < m.rows(); ++row) EXPECT_GT(m.count_row(row), 0u);
  }
}

TEST(EpipolarMask, MismatchedIntrinsicsIsShapeError) {
  auto K = Intrinsics::from_fov(1.0, 16, 16);
  EXPECT_THROW(epipolar_mask({CameraPose::identity()}, {CameraPose::identity()}, K, 8, 8, 1.0), ShapeError);
  EXPECT_THROW(epipolar_mask({}, {CameraPose::identity()}, K, 16, 16, 1.0), ShapeError);
}

TEST(Intrinsics, DownsampledKeepsRaysAtBlockCentres) {
  auto K = Intrinsics::from_fov(1.1, 32, 32);
  auto k = K.downsampled(4);
  // Grid sample (1, 2) covers image pixels 4..7 x 8..11; its centre is (5.5, 9.5).
  const Eigen::Vector3d a = k.inverse() * Eigen::Vector3d(1, 2, 1);
  const Eigen::Vector3d b = K.inverse() * Eigen::Vector3d(5.5, 9.5, 1);
  EXPECT_LT((a - b).norm(), 1e-12);
}

TEST(PoseFile, LineRoundTripIsBitExact) {
  std::mt19937_64 rng(14);
  auto K = Intrinsics::from_fov(0.9, 64, 48);
  CameraPose p{oracle::random_rotation(rng), {0.1, -0.25, 3.3}};
  auto rec = PoseRecord::from(123456789, K, p);
  const std::string line = format_pose_line(rec);
  auto back = parse_pose_line(line);
  EXPECT_EQ(format_pose_line(back), line);
  EXPECT_EQ(back.pose.rotation, p.rotation);
  EXPECT_EQ(back.pose.translation, p.translation);
  EXPECT_EQ(back.timestamp, 123456789);
  auto K2 = back.intrinsics(64, 48);
  EXPECT_NEAR(K2.fx, K.fx, 1e-12);
  EXPECT_NEAR(K2.cx, K.cx, 1e-12);
}

TEST(PoseFile, ParsesRealEstateLayout) {
  const std::string line = "1000 0.5 0.8 0.5 0.5 0 0 1 0 0 0.1 0 1 0 0.2 0 0 1 0.3";
  auto r = parse_pose_line(line);
  EXPECT_EQ(r.timestamp, 1000);
  EXPECT_EQ(r.fy, 0.8);
  EXPECT_EQ(r.pose.translation, Eigen::Vector3d(0.1, 0.2, 0.3));
  EXPECT_EQ(r.pose.rotation, Eigen::Matrix3d::Identity());
  EXPECT_THROW(parse_pose_line("1 2 3"), PoseFileError);
  EXPECT_THROW(parse_pose_line("1000 0.5 0.8 0.5 0.5 0 0 1 0 0 x 0 1 0 0.2 0 0 1 0.3"), PoseFileError);
}

TEST(PoseFile, FileSkipsUrlHeader) {
  const auto path = std::filesystem::temp_directory_path() / "ctxvid_pose_test.txt";
  {
    std::ofstream out(path);
    out << "https://example.invalid/video\n"
        << "1 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 1 0\n\n"
        << "2 0.5 0.5 0.5 0.5 0 0 1 0 0 1 0 1 0 0 0 0 1 0\n";
  }
  auto recs = read_pose_file(path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].pose.translation.x(), 1.0);
  std::filesystem::remove(path);
}

TEST(MaskSlices, WritesOnePgmPerBlock) {
  const auto dir = std::filesystem::temp_directory_path() / "ctxvid_mask_slices";
  std::filesystem::remove_all(dir);
  BitMatrix m(2 * 4, 3 * 4, true);
  auto files = write_mask_slices(dir, m, 2, 3, 4);
  ASSERT_EQ(files.size(), 6u);
  std::ifstream in(dir / "mask_t1_j2.pgm", std::ios::binary);
  std::string magic;
  in >> magic;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(std::filesystem::file_size(dir / "mask_t1_j2.pgm"), std::string("P5\n4 4\n255\n").size() + 16);
  std::filesystem::remove_all(dir);
}

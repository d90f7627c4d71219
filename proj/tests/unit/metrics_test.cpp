#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ctxvid/metrics/report.hpp"
#include "../oracles/geometry_oracle.hpp"
#include "test_util.hpp"

using namespace ctxvid;
using namespace ctxvid::metrics;
using geometry::CameraPose;

namespace {
Video random_video(std::size_t T, std::size_t H, std::size_t W, std::mt19937_64& rng) {
  Video v;
  std::uniform_real_distribution<double> d(0, 255);
  for (std::size_t t = 0; t < T; ++t) {
    Frame f({H, W, 3});
    for (auto& x : f.vec()) x = d(rng);
    v.push_back(std::move(f));
  }
  return v;
}

CameraPose rot_z(double a) {
  CameraPose p;
  p.rotation = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return p;
}

std::vector<CameraPose> random_traj(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<CameraPose> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({oracle::random_rotation(rng), {u(rng), u(rng), u(rng)}});
  return out;
}
}  // namespace

TEST(Mse, IdenticalIsZero) {
  std::mt19937_64 rng(1);
  auto v = random_video(3, 12, 12, rng);
  for (double e : mse_per_frame(v, v)) EXPECT_EQ(e, 0.0);
}

TEST(Mse, ConstantOffset) {
  std::mt19937_64 rng(2);
  auto gt = random_video(4, 12, 12, rng);
  auto gen = gt;
  for (auto& f : gen)
    for (auto& x : f.vec()) x += 10;
  for (double e : mse_per_frame(gen, gt)) EXPECT_NEAR(e, 100.0, 1e-9);
}

TEST(Mse, MatchesTwoPassOracle) {
  std::mt19937_64 rng(3);
  auto a = random_video(3, 13, 11, rng), b = random_video(3, 13, 11, rng);
  auto got = mse_per_frame(a, b);
  for (std::size_t t = 0; t < 3; ++t) {
    // Pass one: per-row partial sums; pass two: combine rows.
    std::vector<double> rows(13, 0.0);
    for (std::size_t y = 0; y < 13; ++y)
      for (std::size_t i = 0; i < 11 * 3; ++i) {
        const double d = a[t][y * 33 + i] - b[t][y * 33 + i];
        rows[y] += d * d;
      }
    double s = 0;
    for (double r : rows) s += r;
    EXPECT_NEAR(got[t], s / (13 * 33), 1e-9);
  }
}

TEST(Mse, ShapeMismatchThrows) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(mse_per_frame(random_video(2, 12, 12, rng), random_video(3, 12, 12, rng)), ShapeError);
  EXPECT_THROW(mse_per_frame(random_video(2, 12, 12, rng), random_video(2, 12, 13, rng)), ShapeError);
}

TEST(Mse, QuantizationBound) {
  std::mt19937_64 rng(5);
  auto v = random_video(2, 12, 12, rng);
  auto q = v;
  for (auto& f : q)
    for (auto& x : f.vec()) x = std::round(x);
  for (double e : mse_per_frame(q, v)) EXPECT_LE(e, 0.25);
}

TEST(Ssim, IdenticalIsExactlyOne) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 5; ++i) {
    auto v = random_video(1, 16, 20, rng);
    EXPECT_EQ(ssim(v[0], v[0]), 1.0);
  }
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  Frame a({16, 16, 1}), b({16, 16, 1});
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      a[y * 16 + x] = ((x + y) % 2) ? 1.0 : 0.0;
      b[y * 16 + x] = 1.0 - a[y * 16 + x];
    }
  EXPECT_LT(ssim(a, b, {1.0}), 0.0);
}

TEST(Ssim, ConstantFramesReduceToLuminance) {
  Frame a({12, 12, 1}), b({12, 12, 1});
  a.fill(40.0);
  b.fill(90.0);
  const double c1 = std::pow(0.01 * 255, 2);
  EXPECT_NEAR(ssim(a, b), (2 * 40.0 * 90.0 + c1) / (40.0 * 40.0 + 90.0 * 90.0 + c1), 1e-12);
}

TEST(Ssim, SymmetricAndBounded) {
  std::mt19937_64 rng(7);
  auto a = random_video(1, 16, 16, rng), b = random_video(1, 16, 16, rng);
  const double s = ssim(a[0], b[0]);
  EXPECT_NEAR(s, ssim(b[0], a[0]), 1e-12);
  EXPECT_LE(s, 1.0);
  EXPECT_GE(s, -1.0);
}

TEST(Ssim, SmallFrameIsConfigError) {
  Frame a({8, 8, 3});
  EXPECT_THROW(ssim(a, a), ConfigError);
}

TEST(TrajectoryMetrics, IdenticalIsZero) {
  std::mt19937_64 rng(8);
  auto t = random_traj(6, rng);
  TrajectoryPair tp{t, t};
  EXPECT_EQ(rot_err(tp), 0.0);
  EXPECT_EQ(trans_err(tp), 0.0);
  EXPECT_EQ(cam_mc(tp), 0.0);
}

TEST(TrajectoryMetrics, QuarterTurn) {
  TrajectoryPair one{{rot_z(M_PI / 2)}, {CameraPose::identity()}};
  EXPECT_NEAR(rot_err(one), M_PI / 2, 1e-9);
  TrajectoryPair two{{rot_z(M_PI / 2), rot_z(M_PI / 2)}, {CameraPose::identity(), CameraPose::identity()}};
  EXPECT_NEAR(rot_err(two), M_PI, 1e-9);
}

TEST(TrajectoryMetrics, TranslationOffsets) {
  CameraPose off;
  off.translation = {3, 4, 0};
  TrajectoryPair tp{{off}, {CameraPose::identity()}};
  EXPECT_EQ(trans_err(tp), 5.0);
  EXPECT_EQ(cam_mc(tp), 5.0);
  std::vector<CameraPose> est(7), ref(7);
  for (auto& p : est) p.translation = {1, 0, 0};
  EXPECT_EQ(trans_err({est, ref}), 7.0);
}

TEST(TrajectoryMetrics, HalfTurnCamMc) {
  TrajectoryPair tp{{rot_z(M_PI)}, {CameraPose::identity()}};
  EXPECT_NEAR(cam_mc(tp), std::sqrt(8.0), 1e-12);
}

TEST(TrajectoryMetrics, ClampedArccos) {
  // Rounding can push the trace argument past 1; the result must stay finite.
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity() * (1 + 1e-15);
  EXPECT_EQ(rotation_angle(R, Eigen::Matrix3d::Identity()), 0.0);
}

TEST(TrajectoryMetrics, AdditiveOverConcatenation) {
  std::mt19937_64 rng(9);
  auto a1 = random_traj(3, rng), b1 = random_traj(3, rng), a2 = random_traj(4, rng), b2 = random_traj(4, rng);
  auto cat = [](auto x, const auto& y) { x.insert(x.end(), y.begin(), y.end()); return x; };
  TrajectoryPair p1{a1, b1}, p2{a2, b2}, p{cat(a1, a2), cat(b1, b2)};
  EXPECT_NEAR(rot_err(p), rot_err(p1) + rot_err(p2), 1e-12);
  EXPECT_NEAR(trans_err(p), trans_err(p1) + trans_err(p2), 1e-12);
  EXPECT_NEAR(cam_mc(p), cam_mc(p1) + cam_mc(p2), 1e-12);
}

TEST(TrajectoryMetrics, RotErrInvariantToGlobalRotation) {
  std::mt19937_64 rng(10);
  auto a = random_traj(5, rng), b = random_traj(5, rng);
  const Eigen::Matrix3d R0 = oracle::random_rotation(rng);
  auto ra = a, rb = b;
  for (auto& p : ra) p.rotation = R0 * p.rotation;
  for (auto& p : rb) p.rotation = R0 * p.rotation;
  EXPECT_NEAR(rot_err({ra, rb}), rot_err({a, b}), 1e-9);
}

TEST(TrajectoryMetrics, NonNegativeAndPositiveWhenDifferent) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    TrajectoryPair tp{random_traj(4, rng), random_traj(4, rng)};
    EXPECT_GT(rot_err(tp), 0.0);
    EXPECT_GT(trans_err(tp), 0.0);
    EXPECT_GT(cam_mc(tp), 0.0);
  }
}

TEST(TrajectoryMetrics, LengthMismatchThrows) {
  EXPECT_THROW(rot_err({{CameraPose::identity()}, {}}), ShapeError);
}

TEST(Normalize, RebasedUnitLengthUnchanged) {
  std::vector<CameraPose> ref(3), est(3);
  ref[1].translation = {0.5, 0, 0};
  ref[2].translation = {1.0, 0, 0};
  est[1].translation = {0.4, 0.1, 0};
  est[2].translation = {0.9, 0, 0};
  auto n = normalize_trajectory({est, ref});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR((n.reference[i].translation - ref[i].translation).norm(), 0.0, 1e-12);
    EXPECT_NEAR((n.estimated[i].translation - est[i].translation).norm(), 0.0, 1e-12);
  }
}

TEST(Normalize, ScaleInvariance) {
  std::mt19937_64 rng(12);
  auto est = random_traj(5, rng), ref = random_traj(5, rng);
  auto es = est, rs = ref;
  for (auto& p : es) p.translation *= 10;
  for (auto& p : rs) p.translation *= 10;
  auto a = normalize_trajectory({est, ref}), b = normalize_trajectory({es, rs});
  EXPECT_NEAR(trans_err(a), trans_err(b), 1e-9);
  EXPECT_NEAR(cam_mc(a), cam_mc(b), 1e-9);
  EXPECT_NEAR(rot_err(a), rot_err(b), 1e-9);
}

TEST(Normalize, SingleFrameIsIdentity) {
  std::mt19937_64 rng(13);
  auto n = normalize_trajectory({random_traj(1, rng), random_traj(1, rng)});
  EXPECT_EQ(n.estimated[0].rotation, Eigen::Matrix3d::Identity());
  EXPECT_EQ(trans_err(n), 0.0);
  EXPECT_EQ(rot_err(n), 0.0);
}

TEST(Report, CsvRoundTrip) {
  MetricReport r;
  r.header = {{"strategy", "end_plus_1"}, {"epipolar_mask", "on"}};
  r.mse_per_frame = {1.5, 2.25, 1e-17};
  r.ssim_per_frame = {0.9, 0.8, -0.1};
  r.rot_err = 0.125;
  r.trans_err = 3;
  r.cam_mc = 1.0 / 3.0;
  const std::string csv = to_csv(r);
  EXPECT_NE(csv.find("frame,mse,ssim\n0,1.5,0.9\n"), std::string::npos);
  EXPECT_NE(csv.find("rot_err,trans_err,cam_mc\n"), std::string::npos);
  std::istringstream in(csv);
  auto back = parse_report(in);
  EXPECT_EQ(back.mse_per_frame, r.mse_per_frame);
  EXPECT_EQ(back.ssim_per_frame, r.ssim_per_frame);
  EXPECT_EQ(back.cam_mc, r.cam_mc);
  EXPECT_EQ(back.annotation("epipolar_mask"), "on");
  EXPECT_EQ(to_csv(back), csv);
}

TEST(Report, MissingFooterRejected) {
  std::istringstream in("frame,mse,ssim\n0,1,1\n");
  EXPECT_THROW(parse_report(in), ReportError);
}

TEST(Report, SummaryColumns) {
  MetricReport r;
  r.mse_per_frame = {1, 2, 3};
  r.ssim_per_frame = {1, 1, 1};
  auto s = summary_table({{"full", r}});
  EXPECT_EQ(s, "run,mse_total,mse_t2,mse_tlast,ssim_mean,trans_err,rot_err,cam_mc\nfull,2,2,3,1,0,0,0\n");
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ctxvid/diffusion/sampler.hpp"
#include "ctxvid/diffusion/trainer.hpp"
#include "ctxvid/nn/grad_check.hpp"
#include "../oracles/model_fixture.hpp"
#include "test_util.hpp"

using namespace ctxvid;
using namespace ctxvid::diffusion;
using ctxvid::testing::random_condition;
using ctxvid::testing::random_tensor;
using ctxvid::testing::randomize;
using ctxvid::testing::randomize_prefix;
using ctxvid::testing::tiny_model;

namespace {

double sample_variance(const std::vector<double>& x, double* mean_out = nullptr) {
  double m = 0;
  for (double v : x) m += v;
  m /= double(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  if (mean_out) *mean_out = m;
  return s / double(x.size() - 1);
}

// Noise that reproduces x exactly from the clean latent.
EpsFn<double> true_eps(const Tensor<double>& z0, const NoiseSchedule& s) {
  return [&z0, &s](const Tensor<double>& x, std::size_t t) {
    Tensor<double> e(x.shape());
    const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = (x[i] - a * z0[i]) / b;
    return e;
  };
}

std::vector<TrainSample<double>> random_dataset(const ModelConfig& m, std::size_t n, std::size_t n_ctx, std::mt19937_64& rng) {
  std::vector<TrainSample<double>> data;
  for (std::size_t i = 0; i < n; ++i) data.push_back({random_tensor({m.tokens(), m.channels}, rng), random_condition(m, n_ctx, rng)});
  return data;
}

}  // namespace

TEST(Schedule, SingleStep) {
  auto s = build_schedule(1, 0.3, 0.3);
  EXPECT_EQ(s.steps(), 1u);
  EXPECT_EQ(s.alpha_bar[1], 1.0 - s.beta[1]);
}

TEST(Schedule, ConstantBetaIsGeometric) {
  const double c = 0.01;
  auto s = build_schedule(200, c, c);
  for (std::size_t t = 0; t <= 200; ++t) EXPECT_NEAR(s.alpha_bar[t], std::pow(1.0 - c, double(t)), 1e-14);
}

TEST(Schedule, DefaultEndsNearPureNoise) {
  auto s = build_schedule();
  EXPECT_EQ(s.steps(), 1000u);
  EXPECT_DOUBLE_EQ(s.beta[1], 1e-4);
  EXPECT_DOUBLE_EQ(s.beta[1000], 2e-2);
  EXPECT_LT(s.alpha_bar[1000], 1e-4);
  for (std::size_t t = 1; t <= 1000; ++t) EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
  EXPECT_THROW(s.check_step(0), ConfigError);
  EXPECT_THROW(s.check_step(1001), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.5, 0.1), ConfigError);
}

TEST(ForwardNoising, ZeroSignalIsScaledNoise) {
  auto s = build_schedule();
  std::mt19937_64 rng(1);
  auto eps = gaussian_like<double>({5, 3}, rng);
  auto z = forward_noising(Tensor<double>({5, 3}), 400, eps, s);
  const double b = std::sqrt(1.0 - s.alpha_bar[400]);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], b * eps[i]);
}

TEST(ForwardNoising, MonteCarloMoments) {
  auto s = build_schedule();
  std::mt19937_64 rng(5);
  const std::size_t n = 10000, t = 300;
  Tensor<double> z0({n, 1}, 1.0);
  auto z = forward_noising(z0, t, gaussian_like<double>({n, 1}, rng), s);
  double mean = 0;
  const double var = sample_variance(z.vec(), &mean);
  const double v = 1.0 - s.alpha_bar[t];
  EXPECT_LT(std::abs(mean - std::sqrt(s.alpha_bar[t])), 3 * std::sqrt(v / double(n)));
  EXPECT_LT(std::abs(var - v), 3 * v * std::sqrt(2.0 / double(n - 1)));
}

TEST(ForwardNoising, StepwiseChainMatchesClosedForm) {
  auto s = build_schedule();
  std::mt19937_64 rng(3);
  const std::size_t n = 10000, t = 120;
  Tensor<double> z({n, 1}, 1.0);
  for (std::size_t k = 1; k <= t; ++k) z = noising_step(z, k, gaussian_like<double>({n, 1}, rng), s);
  double mean = 0;
  const double var = sample_variance(z.vec(), &mean);
  const double v = 1.0 - s.alpha_bar[t];
  EXPECT_LT(std::abs(mean - std::sqrt(s.alpha_bar[t])), 3 * std::sqrt(v / double(n)));
  EXPECT_LT(std::abs(var - v), 3 * v * std::sqrt(2.0 / double(n - 1)));
}

TEST(Losses, UniformIdentities) {
  std::mt19937_64 rng(4);
  auto eps = random_tensor({16, 5}, rng);
  EXPECT_EQ(loss_uniform(eps, eps), 0.0);
  auto shifted = eps;
  for (auto& v : shifted.vec()) v += 1.0;
  EXPECT_NEAR(loss_uniform(eps, shifted), 1.0, 1e-12);

  auto other = random_tensor({16, 5}, rng);
  // Two-pass oracle: per-row means, then the mean of those.
  double acc = 0;
  for (std::size_t r = 0; r < 16; ++r) {
    double row = 0;
    for (std::size_t c = 0; c < 5; ++c) row += (other.at(r, c) - eps.at(r, c)) * (other.at(r, c) - eps.at(r, c));
    acc += row / 5;
  }
  EXPECT_NEAR(loss_uniform(eps, other), acc / 16, 1e-12);
  EXPECT_THROW(loss_uniform(eps, Tensor<double>({5, 16})), ShapeError);
}

TEST(Losses, LogWeightsAndNormalizer) {
  const auto w = log_frame_weights(16);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[15], std::log10(16.0), 1e-15);
  double fact = 1;
  for (int k = 2; k <= 16; ++k) fact *= k;
  EXPECT_NEAR(log_weight_normalizer(16), std::log10(fact), 1e-9);
  EXPECT_NEAR(log_weight_normalizer(16), 13.3206, 5e-5);
}

TEST(Losses, LogWeightedBasicProperties) {
  EXPECT_NEAR(loss_log_weighted(std::vector<double>(16, 0.37)), 0.37, 1e-12);
  std::vector<double> first(16, 0.0);
  first[0] = 100.0;
  EXPECT_EQ(loss_log_weighted(first), 0.0);
  EXPECT_THROW(loss_log_weighted(std::vector<double>{1.0}), ConfigError);
}

TEST(Losses, LogWeightedEmphasizesLateFrames) {
  std::vector<double> late(16, 0.1), early(16, 0.1);
  for (std::size_t k = 9; k < 16; ++k) late[k] = 1.0;
  for (std::size_t k = 0; k < 7; ++k) early[k] = 1.0;
  const auto uniform = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  EXPECT_GT(loss_log_weighted(late), uniform(late));
  EXPECT_LT(loss_log_weighted(early), uniform(early));
}

TEST(Losses, DifferentiableFormMatchesAndGradChecks) {
  std::mt19937_64 rng(5);
  nn::ParamStore<double> store;
  auto& pred = store.add("pred", random_tensor({16 * 4, 3}, rng));
  const auto eps = random_tensor({16 * 4, 3}, rng);

  nn::Graph<double> g(false);
  auto per_frame = nn::group_mse(g.param(pred), g.constant(eps), 16);
  EXPECT_NEAR(loss_log_weighted(per_frame).value()[0], loss_log_weighted(per_frame.value().vec()), 1e-12);

  auto res = nn::grad_check([&](nn::Graph<double>& gg) {
    return loss_log_weighted(nn::group_mse(gg.param(pred), gg.constant(eps), 16));
  }, store);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Losses, CfgCombine) {
  std::mt19937_64 rng(6);
  auto c = random_tensor({4, 3}, rng), u = random_tensor({4, 3}, rng);
  EXPECT_EQ(cfg_combine(c, u, 1.0), c);
  EXPECT_EQ(cfg_combine(c, u, 0.0), u);
  Tensor<double> one({1, 1}, 1.0), zero({1, 1}, 0.0);
  EXPECT_EQ(cfg_combine(one, zero, 7.5)[0], 7.5);
  EXPECT_THROW(cfg_combine(c, Tensor<double>({3, 4}), 2.0), ShapeError);
}

TEST(Ddim, TimestepGrid) {
  EXPECT_EQ(ddim_timesteps(1000, 4), (std::vector<std::size_t>{250, 500, 750, 1000}));
  EXPECT_EQ(ddim_timesteps(7, 7), (std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(ddim_timesteps(10, 3).back(), 10u);
  EXPECT_THROW(ddim_timesteps(5, 6), ConfigError);
  EXPECT_THROW(ddim_timesteps(5, 0), ConfigError);
}

TEST(Ddim, TrueNoiseRecoversSignalFromAnyStart) {
  auto s = build_schedule();
  std::mt19937_64 rng(7);
  auto z0 = random_tensor({32, 4}, rng);
  for (std::size_t start : {1, 2, 17, 250, 999, 1000})
    for (std::size_t steps : {std::size_t(1), std::min<std::size_t>(start, 25), start}) {
      auto x = forward_noising(z0, start, gaussian_like<double>(z0.shape(), rng), s);
      auto out = ddim_sample_from(true_eps(z0, s), x, start, steps, s);
      EXPECT_LE(nn::max_abs_diff(out, z0), 1e-5) << "start " << start << " steps " << steps;
    }
}

TEST(Ddim, StepCountDoesNotMatterForTrueNoise) {
  auto s = build_schedule();
  std::mt19937_64 rng(8);
  auto z0 = random_tensor({16, 2}, rng);
  auto x = forward_noising(z0, 1000, gaussian_like<double>(z0.shape(), rng), s);
  auto full = ddim_sample_from(true_eps(z0, s), x, 1000, 1000, s);
  auto single = ddim_sample_from(true_eps(z0, s), x, 1000, 1, s);
  EXPECT_LE(nn::max_abs_diff(full, single), 1e-5);
}

TEST(Ddim, LooseClipIsInert) {
  auto s = build_schedule();
  std::mt19937_64 rng(21);
  auto z0 = random_tensor({16, 3}, rng);
  auto x = gaussian_like<double>(z0.shape(), rng);
  EXPECT_EQ(ddim_sample_from(true_eps(z0, s), x, 1000, 25, s, 1e9), ddim_sample_from(true_eps(z0, s), x, 1000, 25, s));
}

TEST(Ddim, ClipBoundsTheSample) {
  auto s = build_schedule();
  std::mt19937_64 rng(22);
  auto x = gaussian_like<double>({16, 3}, rng);
  // A constant noise guess far from the truth drives x0_hat out of range.
  EpsFn<double> wild = [](const Tensor<double>& v, std::size_t) {
    Tensor<double> e(v.shape());
    for (auto& a : e.vec()) a = -3.0;
    return e;
  };
  const auto free = ddim_sample_from(wild, x, 1000, 10, s);
  const auto clipped = ddim_sample_from(wild, x, 1000, 10, s, 1.5);
  double free_max = 0, clipped_max = 0;
  for (double v : free.vec()) free_max = std::max(free_max, std::abs(v));
  for (double v : clipped.vec()) clipped_max = std::max(clipped_max, std::abs(v));
  EXPECT_GT(free_max, 1.5);
  EXPECT_LE(clipped_max, 1.5);
}

TEST(Ddim, AnchorPinsLeadingRowsOnly) {
  auto s = build_schedule();
  std::mt19937_64 rng(23);
  auto z0 = random_tensor({12, 2}, rng);
  auto anchor = random_tensor({4, 2}, rng);
  auto x = gaussian_like<double>(z0.shape(), rng);
  // The true-noise oracle is elementwise, so unanchored entries must match
  // an unanchored run exactly.
  auto plain = ddim_sample_from(true_eps(z0, s), x, 1000, 25, s);
  auto pinned = ddim_sample_from(true_eps(z0, s), x, 1000, 25, s, 0.0, &anchor);
  for (std::size_t k = 0; k < anchor.size(); ++k) EXPECT_DOUBLE_EQ(pinned[k], anchor[k]);
  for (std::size_t k = anchor.size(); k < x.size(); ++k) EXPECT_EQ(pinned[k], plain[k]);
  auto too_big = random_tensor({13, 2}, rng);
  EXPECT_THROW(ddim_sample_from(true_eps(z0, s), x, 1000, 5, s, 0.0, &too_big), ShapeError);
}

TEST(Ddim, AnchoredModelSampleKeepsReference) {
  auto m = tiny_model();
  std::mt19937_64 rng(24);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  randomize(store, rng, 0.3);
  auto cond = random_condition(m, 2, rng);
  auto s = build_schedule(50);
  auto out = ddim_sample(model, cond, 5, 2.0, 3, s, 0.0, true);
  for (std::size_t k = 0; k < cond.z_ref.size(); ++k) EXPECT_DOUBLE_EQ(out[k], cond.z_ref[k]);
}

TEST(Ddim, SeededSamplingIsDeterministic) {
  auto m = tiny_model();
  std::mt19937_64 rng(9);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  randomize(store, rng, 0.3);
  auto cond = random_condition(m, 2, rng);
  auto s = build_schedule(50);
  auto a = ddim_sample(model, cond, 5, 2.0, 11, s);
  auto b = ddim_sample(model, cond, 5, 2.0, 11, s);
  auto c = ddim_sample(model, cond, 5, 2.0, 12, s);
  EXPECT_EQ(a, b);
  EXPECT_GT(nn::max_abs_diff(a, c), 1e-6);
  EXPECT_THROW(ddim_sample(model, cond, 51, 2.0, 11, s), ConfigError);
}

TEST(Ddim, GuidedEpsUsesBothBranches) {
  auto m = tiny_model();
  std::mt19937_64 rng(10);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  randomize(store, rng, 0.3);
  auto cond = random_condition(m, 1, rng);
  auto x = random_tensor({m.tokens(), m.channels}, rng);
  auto c = model.predict(x, 10, cond, false), u = model.predict(x, 10, cond, true);
  EXPECT_GT(nn::max_abs_diff(c, u), 1e-8);
  EXPECT_EQ(guided_eps(model, cond, 1.0)(x, 10), c);
  EXPECT_EQ(guided_eps(model, cond, 0.0)(x, 10), u);
  EXPECT_EQ(guided_eps(model, cond, 3.0)(x, 10), cfg_combine(c, u, 3.0));
}

TEST(DenoiserModel, ZeroHeadPredictsZero) {
  auto m = tiny_model();
  std::mt19937_64 rng(11);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  auto out = model.predict(random_tensor({m.tokens(), m.channels}, rng), 500, random_condition(m, 2, rng));
  for (double v : out.vec()) EXPECT_EQ(v, 0.0);
}

TEST(DenoiserModel, SkipPathGivesScaledInput) {
  auto m = tiny_model();
  std::mt19937_64 rng(14);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  auto& w = store.get("bb.skip.w");
  for (std::size_t i = 0; i < m.channels; ++i) w.value.at(i, i) = 1.0;
  const auto sched = build_schedule(m.diffusion_steps, m.beta_start, m.beta_end);
  auto x = random_tensor({m.tokens(), m.channels}, rng);
  auto cond = random_condition(m, 2, rng);
  for (std::size_t t : {1, 400, 1000}) {
    auto out = model.predict(x, t, cond);
    const double g = std::sqrt(1.0 - sched.alpha_bar[t]);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(out[k], g * x[k], 1e-12);
  }
  EXPECT_THROW(model.predict(x, 1001, cond), ConfigError);
}

TEST(DenoiserModel, ContextBranchIsNeutralAtInit) {
  auto m = tiny_model(3, 4);
  auto base_cfg = m;
  base_cfg.use_context = false;
  for (int trial = 0; trial < 3; ++trial) {
    std::mt19937_64 ra(100 + trial), rb(100 + trial), rp(7 + trial), rq(7 + trial);
    nn::ParamStore<double> sa, sb;
    Denoiser<double> with(sa, m, ra), without(sb, base_cfg, rb);
    randomize_prefix(sa, "bb.", rp);
    randomize_prefix(sb, "bb.", rq);
    std::mt19937_64 rng(50 + trial);
    auto cond = random_condition(m, 1 + trial, rng);
    auto x = random_tensor({m.tokens(), m.channels}, rng);
    for (bool unc : {false, true}) {
      auto a = with.predict(x, 321, cond, unc), b = without.predict(x, 321, cond, unc);
      EXPECT_EQ(a, b);
      EXPECT_GT(nn::max_abs_diff(a, Tensor<double>(a.shape())), 0.0);
    }
  }
}

TEST(DenoiserModel, ShapeAndContextErrors) {
  auto m = tiny_model();
  std::mt19937_64 rng(12);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  auto cond = random_condition(m, 1, rng);
  EXPECT_THROW(model.predict(Tensor<double>({5, 3}), 10, cond), ShapeError);
  auto none = random_condition(m, 0, rng);
  EXPECT_THROW(model.predict(random_tensor({m.tokens(), m.channels}, rng), 10, none), encoder::MissingContextError);
  auto bad = m;
  bad.dim = 10;
  nn::ParamStore<double> s2;
  EXPECT_THROW(Denoiser<double>(s2, bad, rng), ConfigError);
}

TEST(DenoiserModel, GradCheckTwoFrames8x8) {
  auto m = tiny_model(2, 8);
  std::mt19937_64 rng(13);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  randomize(store, rng, 0.4);
  auto cond = random_condition(m, 2, rng);
  auto x = random_tensor({m.tokens(), m.channels}, rng);
  auto res = nn::grad_check([&](nn::Graph<double>& g) {
    auto o = model.forward(g, g.constant(x), 77, cond);
    return nn::mean(nn::mul(o, o));
  }, store, 1e-5, 12);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "]";
  EXPECT_GT(res.checked, 100u);
}

TEST(Training, ZeroLearningRateKeepsParameters) {
  auto m = tiny_model();
  std::mt19937_64 rng(14);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  randomize(store, rng, 0.3);
  const auto all = [](const nn::Parameter<double>&) { return true; };
  const auto before = parameter_hash(store, all);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch = 2;
  cfg.adam.lr = 0.0;
  auto data = random_dataset(m, 2, 1, rng);
  train(model, store, data, build_schedule(), cfg);
  EXPECT_EQ(parameter_hash(store, all), before);
}

TEST(Training, FrozenBackboneHashUnchanged) {
  auto m = tiny_model();
  std::mt19937_64 rng(15);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  randomize(store, rng, 0.3);
  const auto backbone = [](const nn::Parameter<double>& p) { return !is_context_param(p.name); };
  const auto context = [](const nn::Parameter<double>& p) { return is_context_param(p.name); };
  const auto bb = parameter_hash(store, backbone), cx = parameter_hash(store, context);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.adam.lr = 1e-2;
  cfg.freeze_backbone = true;
  train(model, store, random_dataset(m, 3, 2, rng), build_schedule(), cfg);
  EXPECT_EQ(parameter_hash(store, backbone), bb);
  EXPECT_NE(parameter_hash(store, context), cx);
}

TEST(Training, NonFiniteLossAborts) {
  auto m = tiny_model();
  std::mt19937_64 rng(16);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  store.get("bb.out.b").value[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.batch = 1;
  EXPECT_THROW(train(model, store, random_dataset(m, 1, 1, rng), build_schedule(), cfg), TrainingDivergedError);
}

TEST(Training, VariantsShareFirstStepLoss) {
  auto m = tiny_model(3, 4);
  auto base = m;
  base.use_context = false;
  std::mt19937_64 ra(17), rb(17), rd(18);
  nn::ParamStore<double> sa, sb;
  Denoiser<double> with(sa, m, ra), without(sb, base, rb);
  auto data = random_dataset(m, 4, 2, rd);
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch = 3;
  cfg.seed = 5;
  auto a = train(with, sa, data, build_schedule(), cfg);
  auto b = train(without, sb, data, build_schedule(), cfg);
  EXPECT_EQ(a[0].loss, b[0].loss);
  EXPECT_EQ(a[0].loss_weighted, b[0].loss_weighted);
}

TEST(Training, SmoothedLossDecreases) {
  auto m = tiny_model();
  std::mt19937_64 rng(19);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  auto data = random_dataset(m, 2, 1, rng);
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.batch = 1;
  cfg.adam.lr = 3e-3;
  cfg.seed = 3;
  auto trace = train(model, store, data, build_schedule(), cfg);
  ASSERT_EQ(trace.size(), 500u);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    head += trace[i].loss;
    tail += trace[400 + i].loss;
  }
  EXPECT_LT(tail, head);
}

TEST(Training, MemorizesFixedExample) {
  // Fixed clip, timestep and noise: the objective is a plain regression and
  // must be driven to near zero.
  auto m = tiny_model();
  std::mt19937_64 rng(20);
  nn::ParamStore<double> store;
  Denoiser<double> model(store, m, rng);
  auto s = build_schedule();
  auto cond = random_condition(m, 1, rng);
  auto z0 = random_tensor({m.tokens(), m.channels}, rng);
  auto eps = gaussian_like<double>(z0.shape(), rng);
  auto z_t = forward_noising(z0, 400, eps, s);
  nn::Adam<double> opt({3e-3});
  double loss = 1e9;
  std::size_t step = 0;
  for (; step < 2000 && loss >= 1e-3; ++step) {
    store.zero_grad();
    nn::Graph<double> g;
    auto l = nn::mse(model.forward(g, g.constant(z_t), 400, cond), g.constant(eps));
    loss = l.value()[0];
    g.backward(l);
    opt.step(store);
  }
  EXPECT_LT(loss, 1e-3) << "after " << step << " steps";
}

TEST(Training, LossCsvFormat) {
  std::vector<LossRow> rows{{1, 0.5, 0.25}, {2, 1.0 / 3.0, 0.125}};
  EXPECT_EQ(format_loss_csv(rows), "step,loss,loss_weighted\n1,0.5,0.25\n2,0.3333333333333333,0.125\n");
}

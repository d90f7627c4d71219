#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>

#include "ctxvid/diffusion/denoiser.hpp"
#include "ctxvid/diffusion/losses.hpp"
#include "ctxvid/diffusion/schedule.hpp"
#include "ctxvid/nn/adam.hpp"

namespace ctxvid::diffusion {

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One training clip: the clean latent video and its conditions.
template <class S>
struct TrainSample {
  Tensor<S> z0;  // (T*h*w, C)
  ConditionSet<S> cond;
};

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 4;
  nn::AdamConfig adam{1e-4};
  bool log_weighted = true;     // otherwise the uniform loss is optimized
  double cond_dropout = 0.1;    // probability of the unconditional branch
  bool freeze_backbone = false; // train only "ctx.*" parameters
  double clip_grad_norm = 0;    // 0 disables clipping
  std::uint64_t seed = 0;
  std::size_t max_timestep = 0; // 0 means the full schedule
};

struct LossRow {
  std::size_t step;
  double loss;           // uniform MSE, batch mean
  double loss_weighted;  // log-weighted, batch mean
};

/// FNV-1a over the bytes of every parameter accepted by `pred`, in store order.
template <class S, class Pred>
std::uint64_t parameter_hash(const ParamStore<S>& store, Pred pred) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    if (!pred(p)) continue;
    for (char c : p.name) h = (h ^ std::uint8_t(c)) * 1099511628211ull;
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.value.data());
    for (std::size_t k = 0; k < p.value.size() * sizeof(S); ++k) h = (h ^ bytes[k]) * 1099511628211ull;
  }
  return h;
}

inline bool is_context_param(const std::string& name) { return name.rfind("ctx.", 0) == 0; }

/// Adam training of the epsilon objective. Random draws per batch element
/// happen in a fixed order (clip, timestep, dropout, noise), independent of
/// the model variant, so two variants trained from one seed see identical
/// data. Aborts with TrainingDivergedError on a non-finite loss.
template <class S>
std::vector<LossRow> train(const Denoiser<S>& model, ParamStore<S>& store, const std::vector<TrainSample<S>>& data,
                           const NoiseSchedule& schedule, const TrainConfig& cfg,
                           const std::function<void(const LossRow&)>& on_step = {}) {
  if (data.empty()) throw ConfigError("train: empty dataset");
  if (cfg.batch == 0) throw ConfigError("train: batch size must be positive");
  const std::size_t frames = model.config().frames;
  if (cfg.log_weighted && frames < 2) throw ConfigError("train: log-weighted loss needs at least two frames");
  const std::size_t t_max = cfg.max_timestep == 0 ? schedule.steps() : std::min(cfg.max_timestep, schedule.steps());
  if (cfg.freeze_backbone) store.set_trainable_prefixes({"ctx."});
  else store.set_all_trainable(true);

  nn::Adam<S> opt(cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1), step_dist(1, t_max);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<LossRow> trace;
  trace.reserve(cfg.steps);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    store.zero_grad();
    double loss_u = 0, loss_w = 0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& sample = data[pick(rng)];
      const std::size_t t = step_dist(rng);
      const bool drop = coin(rng) < cfg.cond_dropout;
      const Tensor<S> eps = gaussian_like<S>(sample.z0.shape(), rng);
      nn::Graph<S> g;
      auto z_t = g.constant(forward_noising(sample.z0, t, eps, schedule));
      auto pred = model.forward(g, z_t, t, sample.cond, drop);
      auto per_frame = nn::group_mse(pred, g.constant(eps), frames);
      auto uniform = nn::mean(per_frame);
      auto weighted = frames >= 2 ? loss_log_weighted(per_frame) : uniform;
      const double lu = double(uniform.value()[0]), lw = double(weighted.value()[0]);
      if (!std::isfinite(lu) || !std::isfinite(lw))
        throw TrainingDivergedError("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(lu) + ")");
      loss_u += lu;
      loss_w += lw;
      g.backward(cfg.log_weighted ? weighted : uniform, S(1.0 / double(cfg.batch)));
    }
    if (cfg.clip_grad_norm > 0) {
      double n2 = 0;
      for (std::size_t i = 0; i < store.size(); ++i)
        if (store[i].trainable)
          for (auto v : store[i].grad.vec()) n2 += double(v) * double(v);
      const double n = std::sqrt(n2);
      if (!std::isfinite(n)) throw TrainingDivergedError("non-finite gradient at step " + std::to_string(step));
      opt.step(store, n > cfg.clip_grad_norm ? cfg.clip_grad_norm / n : 1.0);
    } else {
      opt.step(store);
    }
    trace.push_back({step, loss_u / double(cfg.batch), loss_w / double(cfg.batch)});
    if (on_step) on_step(trace.back());
  }
  return trace;
}

inline std::string format_loss_csv(const std::vector<LossRow>& rows) {
  std::string out = "step,loss,loss_weighted\n";
  char buf[64];
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    for (double v : {r.loss, r.loss_weighted}) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out += ',';
      out.append(buf, p);
    }
    out += '\n';
  }
  return out;
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_loss_csv(rows);
}

}  // namespace ctxvid::diffusion

// ctxvid command-line driver.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "ctxvid/harness/experiment.hpp"

using namespace ctxvid;
using namespace ctxvid::harness;

namespace {

struct Overrides {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::size_t> ctx_n;
  std::optional<double> cfg_scale;
  std::optional<std::size_t> ddim_steps;
  std::optional<std::string> stream;
  bool no_mask = false, no_temporal = false, freeze = false;

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config.empty()) c = load_config(config);
    if (!output.empty()) c.output = output;
    if (seed) c.seed = *seed;
    if (strategy) c.strategy = parse_context_strategy(*strategy);
    if (ctx_n) c.context_n = *ctx_n;
    if (cfg_scale) c.cfg_scale = *cfg_scale;
    if (ddim_steps) c.ddim_steps = *ddim_steps;
    if (stream) c.stream = encoder::parse_stream(*stream);
    if (no_mask) c.epipolar_mask = false;
    if (no_temporal) c.temporal_embedding = false;
    if (freeze) c.train.freeze_backbone = true;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "experiment config file (see the key list below)")->check(CLI::ExistingFile);
  app->add_option("--output", o.output, "output directory, overrides experiment.output");
  app->add_option("--seed", o.seed, "master seed, overrides experiment.seed");
  app->add_option("--ctx-strategy", o.strategy, "evaluation context strategy")
      ->check(CLI::IsMember({"range_after_end", "end_plus_1", "furthest"}));
  app->add_option("--ctx-n", o.ctx_n, "context frames per clip")->check(CLI::Range(1, 4));
  app->add_option("--cfg-scale", o.cfg_scale, "classifier-free guidance scale");
  app->add_option("--ddim-steps", o.ddim_steps, "DDIM sampling steps")->check(CLI::PositiveNumber);
  app->add_flag("--no-epipolar-mask", o.no_mask, "unrestricted context attention");
  app->add_flag("--no-temporal-embedding", o.no_temporal, "zero the frame-index embeddings");
  app->add_option("--stream", o.stream, "context streams to use")->check(CLI::IsMember({"both", "semantic", "visual"}));
  app->add_flag("--freeze-backbone", o.freeze, "train only the context modules");
}

void print_report(const metrics::MetricReport& r) {
  std::cout << "mean mse " << metrics::format_number(r.mean_mse()) << ", mean ssim " << metrics::format_number(r.mean_ssim());
  if (r.mse_per_frame.size() > 9) std::cout << ", frames 9-15 mse " << metrics::format_number(r.mean_mse_range(9, 15));
  std::cout << '\n';
}

// Video id 7 of the eval split becomes "eval_007".
std::string video_name(bool eval, std::size_t id) { return numbered(eval ? "eval_" : "train_", id); }

void synth(const ExperimentConfig& c, const std::string& frames_mode) {
  const Dataset d = run_stage("synth", [&] { return build_dataset(c); });
  const auto root = c.output / "synth";
  fs::create_directories(root / "poses");
  fs::create_directories(root / "scenes");
  std::ofstream captions(root / "captions.txt");
  const auto K = image_intrinsics(c);
  auto emit = [&](const VideoData& v, bool eval) {
    const std::string name = video_name(eval, v.id);
    std::vector<geometry::PoseRecord> records;
    // 30 fps timestamps in microseconds.
    for (std::size_t k = 0; k < v.poses.size(); ++k) records.push_back(geometry::PoseRecord::from(std::int64_t(k) * 33333, K, v.poses[k]));
    geometry::write_pose_file(root / "poses" / (name + ".txt"), records);
    std::ofstream(root / "scenes" / (name + ".txt")) << serialize(v.scene);
    captions << name << " stride=" << v.clip.stride << " kind=" << to_string(v.clip.kind) << " " << v.caption << '\n';
    if (frames_mode == "none") return;
    const auto dir = root / "frames" / name;
    fs::create_directories(dir);
    std::vector<std::size_t> idx;
    if (frames_mode == "all")
      for (std::size_t k = 0; k < v.frames.size(); ++k) idx.push_back(k);
    else
      idx = v.clip.frame_indices();
    for (std::size_t k : idx) io::write_ppm(dir / (numbered("frame_", k, 2) + ".ppm"), v.frames[k]);
  };
  for (const auto& v : d.train) emit(v, false);
  for (const auto& v : d.eval) emit(v, true);
  std::cout << "wrote " << d.train.size() << " training and " << d.eval.size() << " evaluation videos to " << root << '\n';
}

void train(const ExperimentConfig& c) {
  fs::create_directories(c.output);
  const Dataset d = run_stage("synth", [&] { return build_dataset(c); });
  auto codec = run_stage("codec", [&] {
    auto b = train_codec(c, d);
    nn::write_checkpoint(c.output / "codec.ckpt", b->store, checkpoint_meta(c, "codec"));
    return b;
  });
  std::cout << "codec rmse " << metrics::format_number(codec->rmse) << '\n';
  const std::size_t every = std::max<std::size_t>(1, c.train.steps / 20);
  run_stage("train", [&] {
    auto b = train_model(c, d, codec->codec, [&](const diffusion::LossRow& r) {
      if (r.step % every == 0 || r.step + 1 == c.train.steps)
        std::cout << "step " << r.step << " loss " << metrics::format_number(r.loss) << " weighted "
                  << metrics::format_number(r.loss_weighted) << std::endl;
    });
    nn::write_checkpoint(c.output / "model.ckpt", b->store, checkpoint_meta(c, "model"));
    diffusion::write_loss_csv(c.output / "loss.csv", b->losses);
  });
  std::cout << "checkpoints in " << c.output << '\n';
}

void sample(const ExperimentConfig& c) {
  const Dataset d = run_stage("synth", [&] { return build_dataset(c); });
  auto codec = run_stage("load", [&] { return load_codec(c); });
  auto model = run_stage("load", [&] { return load_model(c); });
  run_stage("sample", [&] {
    const auto root = c.output / "samples";
    auto clips = parallel_map(d.eval.size(), [&](std::size_t i) {
      const auto ex = eval_example(c, d.eval[i], codec->codec, c.strategy);
      return sample_clip(c, *model->model, codec->codec, ex, d.eval[i].id);
    });
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto dir = root / numbered("clip_", d.eval[i].id);
      fs::create_directories(dir);
      for (std::size_t t = 0; t < clips[i].size(); ++t) io::write_ppm(dir / (numbered("gen_", t, 2) + ".ppm"), clips[i][t]);
    }
    std::cout << "sampled " << clips.size() << " clips into " << root << '\n';
  });
}

void eval(const ExperimentConfig& c) {
  const Dataset d = run_stage("synth", [&] { return build_dataset(c); });
  auto codec = run_stage("load", [&] { return load_codec(c); });
  auto model = run_stage("load", [&] { return load_model(c); });
  const auto dir = c.output / ("eval_" + to_string(c.strategy));
  const auto r = run_stage("eval", [&] { return evaluate_model(c, d, codec->codec, *model->model, c.strategy, dir); });
  print_report(r);
  std::cout << "report in " << dir / "report.csv" << '\n';
}

void mask_viz(const ExperimentConfig& c, std::size_t clip_id) {
  if (clip_id >= c.eval_clips) throw ConfigError("--clip " + std::to_string(clip_id) + " exceeds data.eval_clips");
  const VideoData v = make_video(c, scene_seed(c.seed, true, clip_id), clip_id, false);
  ClipSpec clip = v.clip;
  clip.strategy = c.strategy;
  std::mt19937_64 rng(c.seed ^ (0xe1a1ull + v.id * 0x10001ull));
  const auto ctx = sample_context(clip, v.poses.size(), rng);
  std::vector<CameraPose> q, k;
  for (std::size_t i : clip.frame_indices()) q.push_back(v.poses[i]);
  for (std::size_t i : ctx) k.push_back(v.poses[i]);
  const std::size_t h = c.latent_size();
  const auto mask = geometry::epipolar_mask(q, k, latent_intrinsics(c), h, h, mask_threshold(c));
  const auto dir = c.output / "masks" / numbered("clip_", clip_id);
  const auto files = geometry::write_mask_slices(dir, mask, q.size(), k.size(), h * h);
  std::cout << "wrote " << files.size() << " mask slices (delta " << metrics::format_number(mask_threshold(c)) << ", admissible fraction "
            << metrics::format_number(double(mask.count()) / double(mask.rows() * mask.cols())) << ") to " << dir << '\n';
}

void report(const std::vector<std::string>& files, const std::string& out) {
  std::vector<std::pair<std::string, metrics::MetricReport>> runs;
  for (const auto& f : files) {
    const fs::path p(f);
    auto r = metrics::read_report(p);
    std::string name = r.annotation("name");
    if (!r.annotation("ctx_strategy").empty()) name += "/" + r.annotation("ctx_strategy");
    if (name.empty()) name = p.parent_path().filename().string();
    runs.emplace_back(name, std::move(r));
  }
  const auto table = metrics::summary_table(runs);
  if (out.empty()) {
    std::cout << table;
  } else {
    std::ofstream(out) << table;
    std::cout << "wrote " << out << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-conditioned video diffusion at toy scale: synthetic data, training, sampling and evaluation."};
  app.require_subcommand(1);
  app.footer("\n" + config_help());

  Overrides o;
  std::string frames_mode = "clip";
  std::size_t clip_id = 0;
  std::vector<std::string> report_files;
  std::string report_out;

  auto* s_synth = app.add_subcommand("synth", "render the synthetic videos and write pose files, scenes and frames");
  add_common(s_synth, o);
  s_synth->add_option("--frames", frames_mode, "which frames to write as PPM")->check(CLI::IsMember({"none", "clip", "all"}));
  auto* s_train = app.add_subcommand("train", "fit the codec and train the denoiser; writes codec.ckpt, model.ckpt, loss.csv");
  add_common(s_train, o);
  auto* s_sample = app.add_subcommand("sample", "sample the evaluation clips from saved checkpoints");
  add_common(s_sample, o);
  auto* s_eval = app.add_subcommand("eval", "sample and score the evaluation clips; writes MetricReport CSVs");
  add_common(s_eval, o);
  auto* s_mask = app.add_subcommand("mask-viz", "write the epipolar mask of one evaluation clip as PGM slices");
  add_common(s_mask, o);
  s_mask->add_option("--clip", clip_id, "evaluation clip id");
  auto* s_report = app.add_subcommand("report", "merge MetricReport CSVs into one summary table");
  s_report->add_option("reports", report_files, "report CSV files")->required()->check(CLI::ExistingFile);
  s_report->add_option("--out", report_out, "write the table here instead of stdout");
  auto* s_run = app.add_subcommand("run", "full pipeline: synth, codec, train, sample, eval");
  add_common(s_run, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s_report->parsed()) {
      report(report_files, report_out);
      return 0;
    }
    const ExperimentConfig c = run_stage("config", [&] { return o.resolve(); });
    if (s_synth->parsed()) synth(c, frames_mode);
    if (s_train->parsed()) train(c);
    if (s_sample->parsed()) sample(c);
    if (s_eval->parsed()) eval(c);
    if (s_mask->parsed()) mask_viz(c, clip_id);
    if (s_run->parsed()) {
      const auto r = run_experiment(c);
      print_report(r);
      std::cout << "artifacts in " << c.output << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

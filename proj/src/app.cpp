#include "ftgan/app.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

#include "ftgan/error.hpp"
#include "ftgan/rng.hpp"

namespace fs = std::filesystem;

namespace ftgan::app {

namespace {

std::string numbered(const char* prefix, int i, const char* suffix) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s%03d%s", prefix, i, suffix);
  return buf;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

}  // namespace

std::vector<synth::Sample> generate_dataset(const io::RunConfig& cfg) {
  return synth::render_dataset(synth::plan_dataset(cfg.data, cfg.train.seed));
}

train::TrainLog run_training(train::Models& models, const std::vector<synth::Sample>& data,
                             const io::RunConfig& cfg, train::Stage stage, const std::string& out_dir,
                             const Progress& progress) {
  cfg.validate();
  train::TrainConfig tc = cfg.train;
  tc.stage = stage;
  fs::create_directories(out_dir);
  train::TrainHooks hooks;
  hooks.on_checkpoint = [&](int done, const train::Models& m) {
    const auto ck = io::make_checkpoint(m, stage, done, tc.seed, cfg.arch);
    if (done == tc.total_iters) {
      io::save_checkpoint(join(out_dir, "checkpoint"), ck);
    } else {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06d", done);
      io::save_checkpoint(join(join(out_dir, "checkpoints"), name), ck);
    }
  };
  if (progress) hooks.on_iteration = [&](const train::TrainRecord& r, train::Models&) { progress(r); };
  const auto log = train::train_stage(models, data, tc, cfg.pipeline, hooks);
  io::write_file_atomic(join(out_dir, "train_log.jsonl"), log.to_jsonl());
  return log;
}

std::vector<GeneratedClip> generate_clips(train::Models& models, int n, std::uint64_t seed,
                                          const std::optional<FlowVideo>& condition) {
  require(models.gen_tex.has_value(), ErrorKind::kPrecondition, "sampling needs a texture generator");
  require(condition || models.gen_flow, ErrorKind::kPrecondition,
          "sampling needs a flow generator or a conditioning flow");
  std::vector<GeneratedClip> out;
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rf(mix_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    std::mt19937_64 rt(mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
    const auto zf = nn::LatentVector::sample(rf);
    const auto zt = nn::LatentVector::sample(rt);
    FlowVideo flow = condition ? *condition : nn::flow_generator_forward(zf, *models.gen_flow).flow;
    auto tex = nn::texture_generator_forward(zt, flow, *models.gen_tex);
    out.push_back({std::move(tex.video), std::move(flow), std::move(tex.mask)});
  }
  return out;
}

FlowVideo condition_from_clip(const FlowVideo& flow, const io::RunConfig& cfg) {
  require_channels(flow, 2, "conditioning flow");
  const auto& a = cfg.arch;
  if (flow.height() == a.height && flow.width() == a.width) {
    require(flow.frames() >= a.frames, ErrorKind::kShape, "conditioning flow is shorter than the network input");
    return flow.frames_range(0, a.frames);
  }
  synth::Sample raw{Volume(flow.frames(), flow.height(), flow.width(), 3), flow, 0};
  require(flow.frames() >= a.frames, ErrorKind::kShape, "conditioning flow is shorter than the network input");
  return train::prepare_clip(raw, train::center_crop(raw, cfg.pipeline), cfg.pipeline, 0, a.frames).flow;
}

void write_samples(const std::vector<GeneratedClip>& clips, const io::RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (int i = 0; i < static_cast<int>(clips.size()); ++i) {
    const auto& c = clips[i];
    io::write_clip(join(out_dir, numbered("sample_", i, ".video.ftcl")), c.video);
    io::write_clip(join(out_dir, numbered("sample_", i, ".flow.ftcl")), c.flow);
    io::export_gif(c.video, join(out_dir, numbered("sample_", i, ".gif")), cfg.fps);
    io::export_panel(c.video, c.flow, join(out_dir, numbered("sample_", i, ".png")), cfg.arch.flow_scale);
  }
}

synth::Sample probe_clip(const synth::Sample& raw, const io::RunConfig& cfg) {
  return train::prepare_clip(raw, train::center_crop(raw, cfg.pipeline), cfg.pipeline, 0, raw.video.frames());
}

eval::EvalReport run_eval(train::Models& models, const std::vector<synth::Sample>& data, const io::RunConfig& cfg,
                          const std::string& out_dir) {
  cfg.validate();
  require(models.disc_flow && models.disc_tex, ErrorKind::kPrecondition, "eval needs both discriminators");
  require(models.disc_flow->arch() == cfg.arch && models.disc_tex->arch() == cfg.arch, ErrorKind::kPrecondition,
          "model architecture differs from the configuration");
  require(!data.empty(), ErrorKind::kInvalidArgument, "eval dataset is empty");

  std::vector<eval::FeatureRecord> flow_feats, tex_feats;
  std::vector<int> labels;
  std::vector<double> me_real, wc_real;
  int n_classes = 0;
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    const auto clip = probe_clip(data[i], cfg);
    auto [f, t] = eval::extract_features(clip.video, clip.flow, *models.disc_flow, *models.disc_tex, cfg.windows, i,
                                         data[i].label);
    flow_feats.push_back(std::move(f));
    tex_feats.push_back(std::move(t));
    labels.push_back(data[i].label);
    n_classes = std::max(n_classes, data[i].label + 1);
    me_real.push_back(eval::motion_energy(clip.video));
    wc_real.push_back(eval::warp_consistency(clip.video, clip.flow));
  }

  eval::EvalReport r;
  r.n_classes = n_classes;
  r.chance = 1.0 / n_classes;
  const auto split = eval::stratified_split(labels, cfg.test_fraction, mix_seed(cfg.train.seed, 201));
  r.n_train = static_cast<int>(split.train.size());
  r.n_test = static_cast<int>(split.test.size());
  r.flow = eval::classify_stream(flow_feats, split, n_classes);
  r.texture = eval::classify_stream(tex_feats, split, n_classes);
  r.fused = eval::fuse_and_classify(flow_feats, tex_feats, split, n_classes, cfg.fusion);
  r.fusion = cfg.fusion == eval::Fusion::kConcat ? "concat" : "score_average";
  r.motion_energy_real = eval::summarize(me_real);
  r.warp_consistency_real = eval::summarize(wc_real);

  if (models.gen_flow && models.gen_tex) {
    std::vector<double> me_gen, wc_gen;
    for (const auto& c : generate_clips(models, cfg.n_samples, mix_seed(cfg.train.seed, 202))) {
      me_gen.push_back(eval::motion_energy(c.video));
      wc_gen.push_back(eval::warp_consistency(c.video, c.flow));
    }
    r.motion_energy_generated = eval::summarize(me_gen);
    r.warp_consistency_generated = eval::summarize(wc_gen);
  }

  if (!out_dir.empty()) {
    io::write_file_atomic(join(out_dir, "report.json"), r.to_json());
    io::write_file_atomic(join(out_dir, "confusion_flow.csv"), eval::confusion_csv(r.flow.confusion));
    io::write_file_atomic(join(out_dir, "confusion_texture.csv"), eval::confusion_csv(r.texture.confusion));
    io::write_file_atomic(join(out_dir, "confusion_fused.csv"), eval::confusion_csv(r.fused.confusion));
  }
  return r;
}

std::string BaselineReport::to_json() const {
  const auto summary = [](const eval::Summary& s) {
    return nlohmann::json{{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
  };
  nlohmann::json j{{"dataset", {{"per_frame_error", dataset_error},
                                {"warp_consistency", summary(dataset_warp_consistency)}}}};
  if (!generated_error.empty())
    j["generated"] = {{"per_frame_error", generated_error},
                      {"warp_consistency", summary(generated_warp_consistency)}};
  return j.dump(2) + "\n";
}

BaselineReport run_baseline_warp(const std::vector<synth::Sample>& data, const io::RunConfig& cfg,
                                 train::Models* models, const std::string& out_dir) {
  require(!data.empty(), ErrorKind::kInvalidArgument, "baseline dataset is empty");
  BaselineReport r;
  std::vector<double> wc;
  for (const auto& s : data) {
    const auto err = eval::warp_baseline_errors(s.video, s.flow);
    if (r.dataset_error.empty()) r.dataset_error.assign(err.size(), 0.0);
    require(err.size() == r.dataset_error.size(), ErrorKind::kShape, "dataset clips differ in length");
    for (std::size_t t = 0; t < err.size(); ++t) r.dataset_error[t] += err[t] / static_cast<double>(data.size());
    wc.push_back(eval::warp_consistency(s.video, s.flow));
  }
  r.dataset_warp_consistency = eval::summarize(wc);

  if (models && models->gen_flow && models->gen_tex) {
    const auto clips = generate_clips(*models, cfg.n_samples, mix_seed(cfg.train.seed, 202));
    std::vector<double> gwc;
    for (const auto& c : clips) {
      const auto err = eval::warp_baseline_errors(c.video, c.flow);
      if (r.generated_error.empty()) r.generated_error.assign(err.size(), 0.0);
      for (std::size_t t = 0; t < err.size(); ++t) r.generated_error[t] += err[t] / static_cast<double>(clips.size());
      gwc.push_back(eval::warp_consistency(c.video, c.flow));
    }
    r.generated_warp_consistency = eval::summarize(gwc);
  }
  if (!out_dir.empty()) io::write_file_atomic(join(out_dir, "baseline_warp.json"), r.to_json());
  return r;
}

}  // namespace ftgan::app

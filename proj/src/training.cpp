#include "ftgan/training.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ftgan/rng.hpp"
#include "json.hpp"

namespace ftgan::train {

using nn::Discriminator;
using nn::FlowGenerator;
using nn::NetworkKind;
using nn::ParameterSet;
using nn::Tape;
using nn::Tensor;
using nn::TextureGenerator;
using nn::Var;

const char* to_string(Stage s) {
  switch (s) {
    case Stage::kFlow: return "flow";
    case Stage::kTexture: return "texture";
    case Stage::kJoint: return "joint";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  if (s == "flow") return Stage::kFlow;
  if (s == "texture") return Stage::kTexture;
  if (s == "joint") return Stage::kJoint;
  fail(ErrorKind::kInvalidArgument, "unknown stage '" + s + "'");
}

void TrainConfig::validate() const {
  require(total_iters >= 7, ErrorKind::kInvalidArgument,
          "total_iters must be at least 7 to fit six learning-rate halvings");
  require(batch_size >= 1, ErrorKind::kInvalidArgument, "batch_size must be positive");
  require(lr_initial > 0 && joint_lr_flow > 0 && joint_lr_texture > 0, ErrorKind::kInvalidArgument,
          "learning rates must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorKind::kInvalidArgument,
          "Adam betas must be in [0, 1)");
  require(adam_eps > 0, ErrorKind::kInvalidArgument, "adam_eps must be positive");
  require(lambda_joint >= 0 && lambda_mask >= 0, ErrorKind::kInvalidArgument, "loss weights must be >= 0");
  require(checkpoint_every >= 0, ErrorKind::kInvalidArgument, "checkpoint_every must be >= 0");
}

std::vector<int> decay_boundaries(int total_iters) {
  require(total_iters >= 7, ErrorKind::kInvalidArgument, "total_iters must be at least 7");
  std::vector<int> b;
  for (int j = 1; j <= kHalvings; ++j) b.push_back(static_cast<int>(std::lround(j * total_iters / 7.0)));
  return b;
}

double lr_at(int iter, int total_iters, double lr_initial) {
  require(iter >= 0 && iter < total_iters, ErrorKind::kInvalidArgument,
          "iteration " + std::to_string(iter) + " outside [0, " + std::to_string(total_iters) + ")");
  int k = 0;
  for (int b : decay_boundaries(total_iters))
    if (iter >= b) ++k;
  return std::ldexp(lr_initial, -k);
}

namespace {

double clamp_prob(double p) { return std::min(std::max(p, nn::kLogEps), 1.0 - nn::kLogEps); }

}  // namespace

double discriminator_loss(double d_real, double d_fake) {
  return -(std::log(clamp_prob(d_real)) + std::log(1.0 - clamp_prob(d_fake)));
}

double generator_loss(double d_fake) { return -std::log(clamp_prob(d_fake)); }

double joint_flow_generator_loss(double own, double through, double lambda_joint) {
  return own + lambda_joint * through;
}

OptimizerState make_optimizer_state(const ParameterSet& ps) {
  OptimizerState st;
  for (const auto& p : ps) {
    st.m.emplace_back(p.value.shape(), 0.0);
    st.v.emplace_back(p.value.shape(), 0.0);
  }
  return st;
}

void adam_step(ParameterSet& ps, OptimizerState& st, double lr, double beta1, double beta2, double eps) {
  require(st.m.size() == ps.size() && st.v.size() == ps.size(), ErrorKind::kShape,
          "optimizer state does not match the parameter set");
  for (const auto& p : ps) {
    if (!p.trainable || p.grad.empty()) continue;
    for (double g : p.grad.data())
      require(std::isfinite(g), ErrorKind::kNonFinite, "non-finite gradient in " + p.name);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    if (!p.trainable || p.grad.empty()) continue;
    require(p.grad.shape() == p.value.shape() && st.m[i].shape() == p.value.shape(), ErrorKind::kShape,
            "gradient shape mismatch for " + p.name);
    double* w = p.value.ptr();
    double* m = st.m[i].ptr();
    double* v = st.v[i].ptr();
    const double* g = p.grad.ptr();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = beta1 * m[k] + (1 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1 - beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

DataPipeline micro_pipeline() {
  DataPipeline p;
  p.downsample = 4;
  return p;
}

synth::AugmentDecision center_crop(const synth::Sample& raw, const DataPipeline& p) {
  require(raw.video.height() >= p.crop && raw.video.width() >= p.crop, ErrorKind::kShape,
          "clip smaller than the crop size");
  return {(raw.video.height() - p.crop) / 2, (raw.video.width() - p.crop) / 2, false};
}

synth::Sample prepare_clip(const synth::Sample& raw, const synth::AugmentDecision& d, const DataPipeline& p,
                           int start, int frames) {
  synth::Sample s = synth::apply_augment(raw, d, p.crop, p.crop);
  if (p.downsample > 1) s = synth::downsample(s, p.downsample);
  require(start >= 0 && start + frames <= s.video.frames(), ErrorKind::kShape,
          "temporal window outside the clip");
  if (frames != s.video.frames()) {
    s.video = s.video.frames_range(start, frames);
    s.flow = s.flow.frames_range(start, frames);
  }
  return s;
}

BatchSampler::BatchSampler(const std::vector<synth::Sample>& data, DataPipeline pipeline, nn::ArchConfig arch,
                           std::uint64_t seed)
    : data_(&data), pipeline_(pipeline), arch_(std::move(arch)), seed_(seed) {
  require(!data.empty(), ErrorKind::kInvalidArgument, "training set is empty");
  for (const auto& s : data) {
    require(s.video.frames() >= arch_.frames, ErrorKind::kShape, "clip shorter than the network window");
    require(s.video.height() >= pipeline_.crop && s.video.width() >= pipeline_.crop, ErrorKind::kShape,
            "clip smaller than the crop size");
  }
  require(pipeline_.crop / pipeline_.downsample == arch_.height && arch_.height == arch_.width,
          ErrorKind::kShape, "crop / downsample must equal the network resolution");
}

Batch BatchSampler::draw(int iteration, int batch_size) const {
  std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(iteration)));
  std::vector<synth::Sample> clips;
  Batch b;
  for (int i = 0; i < batch_size; ++i) {
    const int idx = static_cast<int>(rng() % data_->size());
    const auto& raw = (*data_)[idx];
    const std::uint64_t aug_seed = rng();
    const int span = raw.video.frames() - arch_.frames;
    const int start = span > 0 ? static_cast<int>(rng() % static_cast<std::uint64_t>(span + 1)) : 0;
    const auto d = pipeline_.augment
                       ? synth::draw_augment(aug_seed, raw.video.height(), raw.video.width(), pipeline_.crop,
                                             pipeline_.crop)
                       : center_crop(raw, pipeline_);
    clips.push_back(prepare_clip(raw, d, pipeline_, start, arch_.frames));
    b.indices.push_back(idx);
  }
  std::vector<const Volume*> videos, flows;
  for (const auto& c : clips) {
    videos.push_back(&c.video);
    flows.push_back(&c.flow);
  }
  b.video = nn::to_network(videos);
  b.flow = nn::to_network(flows, arch_.flow_scale);
  return b;
}

Models Models::init(Stage stage, const nn::ArchConfig& arch, std::uint64_t seed) {
  Models m;
  if (stage != Stage::kTexture) {
    m.gen_flow.emplace(arch, mix_seed(seed, 1));
    m.disc_flow.emplace(NetworkKind::kFlowDiscriminator, arch, mix_seed(seed, 2));
  }
  if (stage != Stage::kFlow) {
    m.gen_tex.emplace(arch, mix_seed(seed, 3));
    m.disc_tex.emplace(NetworkKind::kTextureDiscriminator, arch, mix_seed(seed, 4));
  }
  return m;
}

std::string TrainLog::to_jsonl() const {
  std::ostringstream os;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["iter"] = r.iter;
    j["stage"] = to_string(r.stage);
    j["L_D"] = r.loss_d;
    j["L_G"] = r.loss_g;
    j["mask_l1"] = r.mask_l1;
    j["lr"] = r.lr;
    j["grad_norm_D"] = r.grad_norm_d;
    j["grad_norm_G"] = r.grad_norm_g;
    if (r.stage == Stage::kJoint) {
      j["L_D_tex"] = r.loss_d_tex;
      j["L_G_tex"] = r.loss_g_tex;
      j["mask_l1_tex"] = r.mask_l1_tex;
      j["lr_tex"] = r.lr_tex;
    }
    os << j.dump() << '\n';
  }
  return os.str();
}

namespace {

Tensor latent_tensor(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<nn::LatentVector> zs;
  for (int i = 0; i < n; ++i) zs.push_back(nn::LatentVector::sample(rng));
  return nn::latent_batch(zs);
}

void require_finite(double v, const char* what, int iter) {
  require(std::isfinite(v), ErrorKind::kNonFinite,
          std::string(what) + " is not finite at iteration " + std::to_string(iter));
}

struct DStepResult {
  double loss = 0;
  double grad_norm = 0;
};

// One discriminator update on real vs fake inputs (flow only, or video + flow).
DStepResult discriminator_step(Discriminator& d, OptimizerState& st, const TrainConfig& cfg, double lr, int iter,
                               const Tensor& real_a, const Tensor* real_b, const Tensor& fake_a,
                               const Tensor* fake_b) {
  d.params().zero_grad();
  Tape tape;
  auto score = [&](const Tensor& a, const Tensor* b) {
    return b ? d.forward(tape, tape.constant(a), tape.constant(*b), true).score
             : d.forward(tape, tape.constant(a), true).score;
  };
  Var real = score(real_a, real_b);
  Var fake = score(fake_a, fake_b);
  Var loss = nn::gan_discriminator_loss(real, fake);
  require_finite(loss->value[0], "discriminator loss", iter);
  tape.backward(loss);
  DStepResult r{loss->value[0], d.params().grad_norm()};
  adam_step(d.params(), st, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  return r;
}

}  // namespace

JointGeneratorLosses joint_generator_backward(Discriminator& df, Discriminator& dt, const nn::FlowGenOutput& fo,
                                              const nn::TextureGenOutput& to, Var cond, double lambda_joint,
                                              double lambda_mask) {
  require(cond->tape == to.video->tape && cond->needs_grad, ErrorKind::kPrecondition,
          "condition must be an input leaf on the texture tape");
  require(cond->value == fo.flow->value, ErrorKind::kPrecondition, "condition must hold the generated flow");
  Tape& tex_tape = *to.video->tape;
  Tape& flow_tape = *fo.flow->tape;
  JointGeneratorLosses out;

  Var adv_t = nn::gan_generator_loss(dt.forward(tex_tape, to.video, cond, true).score);
  Var mask_t = nn::mean_abs(to.mask);
  Var loss_t = nn::add(adv_t, nn::scale(mask_t, lambda_mask));
  out.through = loss_t->value[0];
  out.mask_tex = mask_t->value[0];
  tex_tape.backward(loss_t);

  Var adv_f = nn::gan_generator_loss(df.forward(flow_tape, fo.flow, true).score);
  Var mask_f = nn::mean_abs(fo.mask);
  Var own = nn::add(adv_f, nn::scale(mask_f, lambda_mask));
  out.own = own->value[0];
  out.mask_flow = mask_f->value[0];
  Var total = own;
  // The texture loss reaches the flow generator through its output: seed that
  // output with lambda times the gradient collected at the condition leaf.
  if (lambda_joint != 0.0) {
    Tensor w = cond->grad.empty() ? Tensor(cond->value.shape(), 0.0) : cond->grad;
    for (double& v : w.data()) v *= lambda_joint;
    total = nn::add(own, nn::weighted_sum(fo.flow, w));
  }
  flow_tape.backward(total);
  return out;
}

namespace {

class StageRunner {
 public:
  StageRunner(Models& m, const std::vector<synth::Sample>& data, const TrainConfig& cfg, const DataPipeline& p)
      : m_(m), cfg_(cfg), arch_(arch_of(m, cfg.stage)),
        sampler_(data, p, arch_, mix_seed(cfg.seed, 101)),
        z_flow_seed_(mix_seed(cfg.seed, 102)),
        z_tex_seed_(mix_seed(cfg.seed, 103)) {
    if (m_.gen_flow) opt_gf_ = make_optimizer_state(m_.gen_flow->params());
    if (m_.disc_flow) opt_df_ = make_optimizer_state(m_.disc_flow->params());
    if (m_.gen_tex) opt_gt_ = make_optimizer_state(m_.gen_tex->params());
    if (m_.disc_tex) opt_dt_ = make_optimizer_state(m_.disc_tex->params());
  }

  TrainRecord step(int it) {
    const Batch batch = sampler_.draw(it, cfg_.batch_size);
    const int n = cfg_.batch_size;
    const std::uint64_t zi = static_cast<std::uint64_t>(it);
    switch (cfg_.stage) {
      case Stage::kFlow: return flow_step(it, batch, latent_tensor(mix_seed(z_flow_seed_, zi), n));
      case Stage::kTexture: return texture_step(it, batch, latent_tensor(mix_seed(z_tex_seed_, zi), n));
      case Stage::kJoint:
        return joint_step(it, batch, latent_tensor(mix_seed(z_flow_seed_, zi), n),
                          latent_tensor(mix_seed(z_tex_seed_, zi), n));
    }
    return {};
  }

 private:
  static const nn::ArchConfig& arch_of(const Models& m, Stage s) {
    const bool need_flow = s != Stage::kTexture, need_tex = s != Stage::kFlow;
    require(!need_flow || m.has_flow_pair(), ErrorKind::kPrecondition,
            std::string(to_string(s)) + " stage requires a flow generator and flow discriminator");
    require(!need_tex || m.has_texture_pair(), ErrorKind::kPrecondition,
            std::string(to_string(s)) + " stage requires a texture generator and texture discriminator");
    const nn::ArchConfig& a = need_flow ? m.gen_flow->arch() : m.gen_tex->arch();
    const bool same = (!m.disc_flow || m.disc_flow->arch() == a) && (!m.gen_tex || !need_tex ||
                                                                       m.gen_tex->arch() == a) &&
                      (!m.disc_tex || !need_tex || m.disc_tex->arch() == a);
    require(same, ErrorKind::kShape, "networks of one stage must share an architecture");
    return a;
  }

  TrainRecord flow_step(int it, const Batch& batch, const Tensor& z) {
    const double lr = lr_at(it, cfg_.total_iters, cfg_.lr_initial);
    auto& g = *m_.gen_flow;
    auto& d = *m_.disc_flow;
    Tape tape;
    const auto out = g.forward(tape, tape.constant(z), true);
    const DStepResult ds = discriminator_step(d, opt_df_, cfg_, lr, it, batch.flow, nullptr, out.flow->value, nullptr);

    g.params().zero_grad();
    Var adv = nn::gan_generator_loss(d.forward(tape, out.flow, true).score);
    Var mask = nn::mean_abs(out.mask);
    Var loss = nn::add(adv, nn::scale(mask, cfg_.lambda_mask));
    require_finite(loss->value[0], "flow generator loss", it);
    tape.backward(loss);
    TrainRecord r{it, Stage::kFlow, ds.loss, loss->value[0], mask->value[0], lr, ds.grad_norm, g.params().grad_norm()};
    adam_step(g.params(), opt_gf_, lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    return r;
  }

  TrainRecord texture_step(int it, const Batch& batch, const Tensor& z) {
    const double lr = lr_at(it, cfg_.total_iters, cfg_.lr_initial);
    auto& g = *m_.gen_tex;
    auto& d = *m_.disc_tex;
    Tape tape;
    Var cond = tape.constant(batch.flow);
    const auto out = g.forward(tape, tape.constant(z), cond, true);
    const DStepResult ds =
        discriminator_step(d, opt_dt_, cfg_, lr, it, batch.video, &batch.flow, out.video->value, &batch.flow);

    g.params().zero_grad();
    Var adv = nn::gan_generator_loss(d.forward(tape, out.video, cond, true).score);
    Var mask = nn::mean_abs(out.mask);
    Var loss = nn::add(adv, nn::scale(mask, cfg_.lambda_mask));
    require_finite(loss->value[0], "texture generator loss", it);
    tape.backward(loss);
    TrainRecord r{it, Stage::kTexture, ds.loss, loss->value[0], mask->value[0], lr, ds.grad_norm,
                  g.params().grad_norm()};
    adam_step(g.params(), opt_gt_, lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    return r;
  }

  // Flow-side operations mirror flow_step exactly; the texture pair runs on a
  // separate tape whose condition is the generated flow.
  TrainRecord joint_step(int it, const Batch& batch, const Tensor& z_flow, const Tensor& z_tex) {
    const double lr_f = lr_at(it, cfg_.total_iters, cfg_.joint_lr_flow);
    const double lr_t = lr_at(it, cfg_.total_iters, cfg_.joint_lr_texture);
    auto& gf = *m_.gen_flow;
    auto& df = *m_.disc_flow;
    auto& gt = *m_.gen_tex;
    auto& dt = *m_.disc_tex;

    Tape flow_tape;
    const auto fo = gf.forward(flow_tape, flow_tape.constant(z_flow), true);
    Tape tex_tape;
    Var cond = tex_tape.input(fo.flow->value);
    const auto to = gt.forward(tex_tape, tex_tape.constant(z_tex), cond, true);

    const DStepResult dsf =
        discriminator_step(df, opt_df_, cfg_, lr_f, it, batch.flow, nullptr, fo.flow->value, nullptr);
    const DStepResult dst =
        discriminator_step(dt, opt_dt_, cfg_, lr_t, it, batch.video, &batch.flow, to.video->value, &fo.flow->value);

    gt.params().zero_grad();
    gf.params().zero_grad();
    const JointGeneratorLosses jl =
        joint_generator_backward(df, dt, fo, to, cond, cfg_.lambda_joint, cfg_.lambda_mask);
    require_finite(jl.own, "flow generator loss", it);
    require_finite(jl.through, "texture generator loss", it);
    TrainRecord r{it, Stage::kJoint, dsf.loss, joint_flow_generator_loss(jl.own, jl.through, cfg_.lambda_joint),
                  jl.mask_flow, lr_f, dsf.grad_norm, gf.params().grad_norm()};
    r.loss_d_tex = dst.loss;
    r.loss_g_tex = jl.through;
    r.mask_l1_tex = jl.mask_tex;
    r.lr_tex = lr_t;
    adam_step(gt.params(), opt_gt_, lr_t, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    adam_step(gf.params(), opt_gf_, lr_f, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    return r;
  }

  Models& m_;
  const TrainConfig& cfg_;
  nn::ArchConfig arch_;
  BatchSampler sampler_;
  std::uint64_t z_flow_seed_, z_tex_seed_;
  OptimizerState opt_gf_, opt_df_, opt_gt_, opt_dt_;
};

}  // namespace

TrainLog train_stage(Models& models, const std::vector<synth::Sample>& data, const TrainConfig& cfg,
                     const DataPipeline& pipeline, const TrainHooks& hooks) {
  cfg.validate();
  StageRunner runner(models, data, cfg, pipeline);
  TrainLog log;
  for (int it = 0; it < cfg.total_iters; ++it) {
    log.records.push_back(runner.step(it));
    if (hooks.on_iteration) hooks.on_iteration(log.records.back(), models);
    const int done = it + 1;
    const bool periodic = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0;
    if (periodic || done == cfg.total_iters) {
      log.checkpoints.push_back(done);
      if (hooks.on_checkpoint) hooks.on_checkpoint(done, models);
    }
  }
  return log;
}

}  // namespace ftgan::train

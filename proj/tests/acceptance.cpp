// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "ftgan/app.hpp"
#include "ftgan/core.hpp"
#include "ftgan/evaluation.hpp"
#include "ftgan/io.hpp"
#include "ftgan/rng.hpp"
#include "ftgan/training.hpp"
#include "gradcheck.hpp"

using namespace ftgan;
using namespace ftgan::nn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Volume random_volume(int t, int h, int w, int c, std::mt19937_64& rng, float lo = -1, float hi = 1) {
  Volume v(t, h, w, c);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& x : v.data()) x = u(rng);
  return v;
}

Tensor latents(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LatentVector> zs;
  for (int i = 0; i < n; ++i) zs.push_back(LatentVector::sample(rng));
  return latent_batch(zs);
}

Tensor bounded(const Shape& s, std::mt19937_64& rng) {
  Tensor t(s);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : t.data()) v = u(rng);
  return t;
}

bool same_params(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].value.size() != b[i].value.size() ||
        std::memcmp(a[i].value.ptr(), b[i].value.ptr(), a[i].value.size() * sizeof(double)) != 0)
      return false;
  return true;
}

std::vector<synth::Sample> dataset(int per_class, std::uint64_t seed) {
  synth::DatasetConfig dc;
  dc.clips_per_class = per_class;
  return synth::render_dataset(synth::plan_dataset(dc, seed));
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ftgan_accept_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_tree(const fs::path& a, const fs::path& b, int* files = nullptr) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || io::read_file(e.path()) != io::read_file(b / rel)) return false;
    ++n;
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) return false;
  if (files) *files = n;
  return true;
}

std::optional<ErrorKind> load_error(const fs::path& dir) {
  try {
    io::load_checkpoint(dir);
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

// 1 -----------------------------------------------------------------------
Outcome compositing() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst = 0;
  bool exact = true;
  for (int i = 0; i < 200; ++i) {
    const int t = dim(rng), h = dim(rng), w = dim(rng);
    const Volume m = random_volume(t, h, w, 1, rng, 0, 1);
    const Volume f = random_volume(t, h, w, 3, rng), b = random_volume(t, h, w, 3, rng);
    const Volume fl = random_volume(t, h, w, 2, rng, -3, 3);
    const Volume c = composite(m, f, b), fc = flow_composite(m, fl);
    for (int a = 0; a < t; ++a)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double mv = m.at(a, y, x);
          for (int k = 0; k < 3; ++k)
            worst = std::max(worst, std::fabs(c.at(a, y, x, k) - (mv * f.at(a, y, x, k) + (1 - mv) * b.at(a, y, x, k))));
          for (int k = 0; k < 2; ++k) worst = std::max(worst, std::fabs(fc.at(a, y, x, k) - mv * fl.at(a, y, x, k)));
        }
    const Volume bg = random_volume(1, h, w, 3, rng);
    const Volume rep = replicate_background(bg, t);
    for (int a = 0; a < t; ++a)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int k = 0; k < 3; ++k) exact = exact && rep.at(a, y, x, k) == bg.at(0, y, x, k);
    const Volume ones(t, h, w, 1, 1.0f), zeros(t, h, w, 1, 0.0f);
    exact = exact && composite(ones, f, b) == f && composite(zeros, f, b) == b;
    exact = exact && flow_composite(ones, fl) == fl;
    const Volume masked_out = flow_composite(zeros, fl);
    for (float v : masked_out.data()) exact = exact && v == 0.0f;
  }
  // float32 arithmetic against a float64 oracle on values in [-1, 1]
  const bool ok = worst <= 4 * 1.1920929e-7 && exact;
  return {ok, fmt("max |impl - oracle| = %.3g, extreme-mask identities %s", worst, exact ? "exact" : "broken")};
}

// 2 -----------------------------------------------------------------------
Outcome gradients() {
  std::mt19937_64 rng(102);
  const ArchConfig a = ArchConfig::micro();
  const Tensor z = latents(2, 103);
  const Tensor flow = bounded({2, 2, 8, 16, 16}, rng), video = bounded({2, 3, 8, 16, 16}, rng);
  constexpr int kSamples = 50;

  FlowGenerator gf(a, 31);
  const Tensor wf = testing::random_tensor({2, 2, 8, 16, 16}, rng);
  const auto rf = testing::check_param_grads(
      gf.params(), [&](Tape& t) { return weighted_sum(gf.forward(t, t.constant(z), true).flow, wf); }, kSamples, 1);

  TextureGenerator gt(a, 32);
  const Tensor wv = testing::random_tensor({2, 3, 8, 16, 16}, rng);
  const auto rt = testing::check_param_grads(
      gt.params(),
      [&](Tape& t) { return weighted_sum(gt.forward(t, t.constant(z), t.constant(flow), true).video, wv); }, kSamples,
      2);

  Discriminator df(NetworkKind::kFlowDiscriminator, a, 33);
  const Tensor fake_flow = bounded({2, 2, 8, 16, 16}, rng);
  const auto rdf = testing::check_param_grads(
      df.params(),
      [&](Tape& t) {
        return gan_discriminator_loss(df.forward(t, t.constant(flow), true).score,
                                      df.forward(t, t.constant(fake_flow), true).score);
      },
      kSamples, 3);

  Discriminator dt(NetworkKind::kTextureDiscriminator, a, 34);
  const Tensor fake_video = bounded({2, 3, 8, 16, 16}, rng);
  const auto rdt = testing::check_param_grads(
      dt.params(),
      [&](Tape& t) {
        return gan_discriminator_loss(dt.forward(t, t.constant(video), t.constant(flow), true).score,
                                      dt.forward(t, t.constant(fake_video), t.constant(fake_flow), true).score);
      },
      kSamples, 4);

  const double worst = std::max({rf.worst, rt.worst, rdf.worst, rdt.worst});
  const int n = rf.checked + rt.checked + rdf.checked + rdt.checked;
  return {worst < 1e-4 && n == 4 * kSamples,
          fmt("worst relative error: flow G %.2e, texture G %.2e, flow D %.2e, texture D %.2e (%d params)", rf.worst,
              rt.worst, rdf.worst, rdt.worst, n)};
}

// 3 -----------------------------------------------------------------------
Outcome joint_gradient() {
  const ArchConfig arch = ArchConfig::micro();
  train::Models m = train::Models::init(train::Stage::kJoint, arch, 41);
  const Tensor zf = latents(2, 42), zt = latents(2, 43);
  const double lambda_mask = 0.1;

  m.gen_flow->params().zero_grad();
  m.gen_tex->params().zero_grad();
  {
    Tape flow_tape, tex_tape;
    const auto fo = m.gen_flow->forward(flow_tape, flow_tape.constant(zf), true);
    Var cond = tex_tape.input(fo.flow->value);
    const auto to = m.gen_tex->forward(tex_tape, tex_tape.constant(zt), cond, true);
    train::joint_generator_backward(*m.disc_flow, *m.disc_tex, fo, to, cond, 0.1, lambda_mask);
  }
  std::vector<Tensor> analytic;
  for (const auto& p : m.gen_flow->params()) analytic.push_back(p.grad);

  const auto own = [&] {
    Tape t;
    const auto fo = m.gen_flow->forward(t, t.constant(zf), true);
    return gan_generator_loss(m.disc_flow->forward(t, fo.flow, true).score)->value[0] +
           lambda_mask * mean_abs(fo.mask)->value[0];
  };
  const auto through = [&] {
    Tape t;
    const auto fo = m.gen_flow->forward(t, t.constant(zf), true);
    const auto to = m.gen_tex->forward(t, t.constant(zt), fo.flow, true);
    return gan_generator_loss(m.disc_tex->forward(t, to.video, fo.flow, true).score)->value[0] +
           lambda_mask * mean_abs(to.mask)->value[0];
  };
  auto& ps = m.gen_flow->params();
  std::vector<Tensor> stats;
  for (auto& q : ps)
    if (!q.trainable) stats.push_back(q.value);
  const auto restore = [&] {
    std::size_t j = 0;
    for (auto& q : ps)
      if (!q.trainable) q.value = stats[j++];
  };
  std::mt19937_64 rng(44);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    std::size_t pi;
    do pi = rng() % ps.size();
    while (!ps[pi].trainable);
    const std::size_t k = rng() % ps[pi].value.size();
    const double saved = ps[pi].value[k];
    const auto probe = [&](const std::function<double()>& loss) {
      return testing::numeric_derivative(
          [&](double v) {
            ps[pi].value[k] = v;
            const double out = loss();
            restore();
            return out;
          },
          saved);
    };
    const double expected = probe(own) + 0.1 * probe(through);
    ps[pi].value[k] = saved;
    worst = std::max(worst, testing::rel_error(analytic[pi][k], expected));
  }

  // lambda = 0: the flow pair must follow the flow-only trajectory bit for bit
  const auto data = dataset(2, 45);
  const train::Models flow_init = train::Models::init(train::Stage::kFlow, arch, 46);
  const train::Models tex_init = train::Models::init(train::Stage::kTexture, arch, 47);
  train::TrainConfig fc;
  fc.stage = train::Stage::kFlow;
  fc.total_iters = 50;
  fc.batch_size = 2;
  fc.seed = 48;
  train::Models a = flow_init;
  train::train_stage(a, data, fc, train::micro_pipeline());
  train::TrainConfig jc = fc;
  jc.stage = train::Stage::kJoint;
  jc.joint_lr_flow = fc.lr_initial;
  jc.lambda_joint = 0.0;
  train::Models b = flow_init;
  b.gen_tex = tex_init.gen_tex;
  b.disc_tex = tex_init.disc_tex;
  train::train_stage(b, data, jc, train::micro_pipeline());
  const bool bit_exact = same_params(a.gen_flow->params(), b.gen_flow->params()) &&
                         same_params(a.disc_flow->params(), b.disc_flow->params());
  return {worst < 1e-4 && bit_exact,
          fmt("worst relative error %.2e over 50 params; lambda=0 over 50 iterations %s", worst,
              bit_exact ? "bit-exact" : "diverged")};
}

// 4 -----------------------------------------------------------------------
Outcome loss_points() {
  const double ed = std::fabs(train::discriminator_loss(0.5, 0.5) - 2 * std::log(2.0));
  const double eg = std::fabs(train::generator_loss(0.5) - std::log(2.0));
  Tape tape;
  const Var half = tape.constant(Tensor({3, 1}, 0.5));
  const double eg_graph = std::fabs(gan_generator_loss(half)->value[0] - std::log(2.0));
  const double ed_graph = std::fabs(gan_discriminator_loss(half, half)->value[0] - 2 * std::log(2.0));
  bool schedule = true;
  std::string worst_total;
  for (int total : {7, 8, 50, 300, 1000, 2000, 12345}) {
    int halvings = 0;
    double prev = train::lr_at(0, total, 2e-4);
    schedule = schedule && prev == 2e-4;
    for (int i = 1; i < total; ++i) {
      const double lr = train::lr_at(i, total, 2e-4);
      if (lr != prev) {
        schedule = schedule && lr == prev / 2;
        ++halvings;
      }
      prev = lr;
    }
    if (halvings != 6 || prev != 2e-4 / 64) {
      schedule = false;
      worst_total = std::to_string(total);
    }
  }
  const double worst = std::max({ed, eg, eg_graph, ed_graph});
  return {worst < 1e-12 && schedule,
          fmt("max loss error %.2e; schedule %s", worst,
              schedule ? "ends at lr0/64 after 6 halvings for 7 run lengths" : ("broken at " + worst_total).c_str())};
}

// 5 -----------------------------------------------------------------------
Outcome structure() {
  const ArchConfig a = ArchConfig::micro();
  std::mt19937_64 rng(105);
  FlowGenerator gf(a, 51), saturated_f(a, 51);
  saturated_f.params().get("mask_head.bias").value[0] = -800;
  TextureGenerator gt(a, 52), saturated_t(a, 52);
  saturated_t.params().get("mask_head.bias").value[0] = -800;
  long zero_mask = 0, flow_violations = 0, product_violations = 0, bg_violations = 0, static_violations = 0;
  for (int i = 0; i < 100; ++i) {
    const LatentVector z = LatentVector::sample(rng);
    for (FlowGenerator* g : {&gf, &saturated_f}) {
      Tape tape;
      const auto out = g->forward(tape, tape.constant(latent_batch({z})), false);
      const std::size_t plane = out.mask->value.size();
      for (std::size_t k = 0; k < out.flow->value.size(); ++k) {
        const double m = out.mask->value[k % plane];
        if (out.flow->value[k] != m * out.foreground->value[k]) ++product_violations;
        if (m == 0.0) {
          ++zero_mask;
          if (out.flow->value[k] != 0.0) ++flow_violations;
        }
      }
      const auto dom = flow_generator_forward(z, *g);
      for (std::size_t p = 0; p < dom.mask.size(); ++p)
        if (dom.mask.data()[p] == 0.0f && (dom.flow.data()[2 * p] != 0.0f || dom.flow.data()[2 * p + 1] != 0.0f))
          ++flow_violations;
    }

    const FlowVideo cond = random_volume(a.frames, a.height, a.width, 2, rng, -2, 2);
    for (TextureGenerator* g : {&gt, &saturated_t}) {
      const auto out = texture_generator_forward(z, cond, *g);
      if (out.background.frames() != 1) ++bg_violations;
      const VideoTensor rep = replicate_background(out.background, a.frames);
      for (int t = 1; t < a.frames; ++t)
        for (int y = 0; y < a.height; ++y)
          for (int x = 0; x < a.width; ++x)
            for (int c = 0; c < 3; ++c)
              if (rep.at(t, y, x, c) != rep.at(0, y, x, c)) ++bg_violations;
      if (g == &saturated_t) {
        // mask exactly 0 everywhere: the clip is the replicated background
        for (int t = 1; t < a.frames; ++t)
          for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x)
              for (int c = 0; c < 3; ++c)
                if (out.video.at(t, y, x, c) != out.video.at(0, y, x, c)) ++static_violations;
      }
    }
  }
  const bool ok = zero_mask > 0 && flow_violations == 0 && product_violations == 0 && bg_violations == 0 &&
                  static_violations == 0;
  return {ok, fmt("100 latents: %ld zero-mask flow entries, %ld nonzero; flow != mask*fg %ld; background "
                  "temporal deviations %ld; masked-out clip temporal deviations %ld",
                  zero_mask, flow_violations, product_violations, bg_violations, static_violations)};
}

// 6 -----------------------------------------------------------------------
Outcome overfit() {
  io::RunConfig cfg;
  std::vector<synth::Sample> clips;
  {
    std::mt19937_64 rng(106);
    const synth::MotionKind kinds[] = {synth::MotionKind::kLinear, synth::MotionKind::kOscillate,
                                       synth::MotionKind::kCircular, synth::MotionKind::kLinear};
    for (int i = 0; i < 4; ++i)
      clips.push_back(synth::render_scene(synth::sample_scene(kinds[i], i % 3, rng), mix_seed(106, i)));
  }
  const ArchConfig& arch = cfg.arch;
  std::vector<synth::Sample> targets;
  std::vector<LatentVector> zs;
  std::mt19937_64 zr(107);
  for (const auto& c : clips) {
    targets.push_back(train::prepare_clip(c, train::center_crop(c, cfg.pipeline), cfg.pipeline, 0, arch.frames));
    zs.push_back(LatentVector::sample(zr));
  }
  struct Probe {
    double l1 = 0, energy = 0;
  };
  const auto probe = [&](train::Models& m) {
    Probe p;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto out = texture_generator_forward(zs[i], targets[i].flow, *m.gen_tex);
      double s = 0;
      for (std::size_t k = 0; k < out.video.size(); ++k)
        s += std::fabs(out.video.data()[k] - targets[i].video.data()[k]);
      p.l1 += s / out.video.size() / targets.size();
      p.energy += eval::motion_energy(out.video) / targets.size();
    }
    return p;
  };
  double gt_energy = 0;
  for (const auto& t : targets) gt_energy += eval::motion_energy(t.video) / targets.size();

  train::TrainConfig tc;
  tc.stage = train::Stage::kTexture;
  tc.total_iters = 2000;
  tc.batch_size = 4;
  tc.seed = 108;
  train::Models m = train::Models::init(train::Stage::kTexture, arch, 109);
  Probe at100;
  train::TrainHooks hooks;
  hooks.on_iteration = [&](const train::TrainRecord& r, train::Models& models) {
    if (r.iter + 1 == 100) at100 = probe(models);
  };
  train::train_stage(m, clips, tc, cfg.pipeline, hooks);
  const Probe end = probe(m);
  const bool ok = end.l1 < at100.l1 && end.energy > 0.25 * gt_energy;
  return {ok, fmt("mean |gen - target| %.4f at 100 -> %.4f at 2000; motion energy generated %.4f vs 0.25 x GT %.4f",
                  at100.l1, end.l1, end.energy, 0.25 * gt_energy)};
}

// 7 -----------------------------------------------------------------------
Outcome ordinal_pattern() {
  constexpr int kFlowIters = 600, kTextureIters = 600, kJointIters = 200;
  std::vector<double> flow, texture, fused;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    io::RunConfig cfg;
    cfg.train.seed = seed;
    cfg.data.clips_per_class = 100;
    const auto data = app::generate_dataset(cfg);
    train::Models fm = train::Models::init(train::Stage::kFlow, cfg.arch, seed);
    train::Models tm = train::Models::init(train::Stage::kTexture, cfg.arch, seed);
    train::TrainConfig tc = cfg.train;
    tc.stage = train::Stage::kFlow;
    tc.total_iters = kFlowIters;
    train::train_stage(fm, data, tc, cfg.pipeline);
    tc.stage = train::Stage::kTexture;
    tc.total_iters = kTextureIters;
    train::train_stage(tm, data, tc, cfg.pipeline);
    train::Models jm;
    jm.gen_flow = fm.gen_flow;
    jm.disc_flow = fm.disc_flow;
    jm.gen_tex = tm.gen_tex;
    jm.disc_tex = tm.disc_tex;
    tc.stage = train::Stage::kJoint;
    tc.total_iters = kJointIters;
    train::train_stage(jm, data, tc, cfg.pipeline);
    const auto r = app::run_eval(jm, data, cfg);
    flow.push_back(r.flow.accuracy);
    texture.push_back(r.texture.accuracy);
    fused.push_back(r.fused.accuracy);
    per_seed += fmt(" seed %d: %.3f/%.3f/%.3f;", static_cast<int>(seed), r.flow.accuracy, r.texture.accuracy,
                    r.fused.accuracy);
    std::fprintf(stderr, "  criterion 7 seed %d: flow %.3f texture %.3f fused %.3f\n", static_cast<int>(seed),
                 r.flow.accuracy, r.texture.accuracy, r.fused.accuracy);
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  const double chance = 1.0 / 3, mf = median(flow), mt = median(texture), mu = median(fused);
  const bool ok = mf > chance + 0.10 && mt > chance && mu >= std::max(mf, mt) - 0.02;
  return {ok, fmt("median flow %.3f (need > %.3f), texture %.3f (need > %.3f), fused %.3f (need >= %.3f);", mf,
                  chance + 0.10, mt, chance, mu, std::max(mf, mt) - 0.02) +
                  per_seed};
}

// 8 -----------------------------------------------------------------------
Outcome augmentation() {
  std::mt19937_64 rng(108);
  long mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const int t = 1 + static_cast<int>(rng() % 4), h = 2 + static_cast<int>(rng() % 10),
              w = 2 + static_cast<int>(rng() % 10);
    synth::Sample s{random_volume(t, h, w, 3, rng), random_volume(t, h, w, 2, rng, -3, 3), 0};
    const int oh = 1 + static_cast<int>(rng() % h), ow = 1 + static_cast<int>(rng() % w);
    const synth::AugmentDecision d{static_cast<int>(rng() % (h - oh + 1)), static_cast<int>(rng() % (w - ow + 1)),
                                   (rng() & 1) != 0};
    const auto out = synth::apply_augment(s, d, oh, ow);
    for (int a = 0; a < t; ++a)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const int sx = d.crop_x + (d.flip ? ow - 1 - x : x), sy = d.crop_y + y;
          for (int c = 0; c < 3; ++c) mismatches += out.video.at(a, y, x, c) != s.video.at(a, sy, sx, c);
          const float u = s.flow.at(a, sy, sx, 0);
          mismatches += out.flow.at(a, y, x, 0) != (d.flip ? -u : u);
          mismatches += out.flow.at(a, y, x, 1) != s.flow.at(a, sy, sx, 1);
        }
    const synth::AugmentDecision flip{0, 0, true};
    const auto twice = synth::apply_augment(synth::apply_augment(s, flip, h, w), flip, h, w);
    mismatches += !(twice.video == s.video) + !(twice.flow == s.flow);
  }
  return {mismatches == 0, fmt("1000 random cases, %ld mismatches", mismatches)};
}

// 9 -----------------------------------------------------------------------
synth::SceneSpec square(double vx, double vy, double x0, double y0) {
  synth::SceneSpec s;
  s.size_px = 10;
  s.color = {0.9f, -0.5f, 0.2f};
  s.background.color_a = {-0.8f, -0.8f, -0.8f};
  s.background.color_b = {-0.2f, -0.6f, 0.1f};
  s.background.noise = 0.1;
  s.motion.start = {x0, y0};
  s.motion.velocity = {vx, vy};
  return s;
}

Outcome warping() {
  double worst = 0;
  const std::array<std::array<double, 4>, 5> cases{{{2, 0, 6, 30}, {1, 1, 10, 10}, {-1, 2, 50, 6}, {0, 0, 30, 30},
                                                    {0, -1, 30, 50}}};
  for (const auto& k : cases)
    worst = std::max(worst, eval::warp_consistency(synth::render_scene(square(k[0], k[1], k[2], k[3]), 9).video,
                                                   synth::render_scene(square(k[0], k[1], k[2], k[3]), 9).flow));
  std::mt19937_64 rng(109);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  constexpr int kClips = 24;
  std::vector<double> mean;
  for (int i = 0; i < kClips; ++i) {
    const double vx = u(rng), vy = u(rng);
    const auto s = synth::render_scene(square(vx, vy, 38 - 15.5 * vx, 38 - 15.5 * vy), mix_seed(109, i));
    const auto err = eval::warp_baseline_errors(s.video, s.flow);
    if (mean.empty()) mean.assign(err.size(), 0.0);
    for (std::size_t t = 0; t < err.size(); ++t) mean[t] += err[t] / kClips;
  }
  int drops = 0;
  for (std::size_t t = 1; t < mean.size(); ++t) drops += !(mean[t] > mean[t - 1]);
  const bool ok = worst == 0.0 && drops == 0;
  return {ok, fmt("integer-velocity warp consistency max %.3g; baseline error over %d fractional clips %.4f at t=1 "
                  "-> %.4f at t=%zu, %d non-increasing steps",
                  worst, kClips, mean[1], mean.back(), mean.size() - 1, drops)};
}

// 10 ----------------------------------------------------------------------
Outcome persistence() {
  std::vector<std::string> broken;
  io::RunConfig cfg;
  cfg.train.seed = 110;
  cfg.data.clips_per_class = 2;
  cfg.train.total_iters = 7;
  cfg.train.batch_size = 2;
  const fs::path root = scratch("c10");

  io::write_dataset(root / "d1", app::generate_dataset(cfg), io::config_to_json(cfg));
  io::write_dataset(root / "d2", app::generate_dataset(cfg), io::config_to_json(cfg));
  int dataset_files = 0;
  if (!same_tree(root / "d1", root / "d2", &dataset_files)) broken.push_back("dataset");
  const auto data = io::read_dataset(root / "d1");

  for (const char* run : {"r1", "r2"}) {
    train::Models m = train::Models::init(train::Stage::kTexture, cfg.arch, cfg.train.seed);
    app::run_training(m, data, cfg, train::Stage::kTexture, root / run);
  }
  if (!same_tree(root / "r1", root / "r2")) broken.push_back("checkpoint");

  for (const char* run : {"s1", "s2"}) {
    train::Models m = train::Models::init(train::Stage::kJoint, cfg.arch, cfg.train.seed);
    app::write_samples(app::generate_clips(m, 2, 111), cfg, root / run);
  }
  if (!same_tree(root / "s1", root / "s2")) broken.push_back("samples");

  const auto ck = io::load_checkpoint(root / "r1" / "checkpoint");
  io::save_checkpoint(root / "resaved", ck);
  train::Models restored = io::restore_models(ck);
  io::save_checkpoint(root / "rebuilt", io::make_checkpoint(restored, ck.stage, ck.iteration, ck.seed, ck.arch));
  if (!same_tree(root / "r1" / "checkpoint", root / "resaved") ||
      !same_tree(root / "r1" / "checkpoint", root / "rebuilt"))
    broken.push_back("round trip");

  const std::string tensors = io::read_file(root / "resaved" / "tensors.bin");
  auto corrupt = [&](const std::string& name, const std::string& bytes, ErrorKind expected) {
    const fs::path dir = root / name;
    fs::copy(root / "resaved", dir);
    io::write_file_atomic(dir / "tensors.bin", bytes);
    if (load_error(dir) != expected) broken.push_back(name);
  };
  std::string flipped = tensors;
  flipped[flipped.size() - 5] ^= 0x10;
  corrupt("bitflip", flipped, ErrorKind::kIntegrity);
  corrupt("truncated", tensors.substr(0, tensors.size() / 2), ErrorKind::kFormat);
  corrupt("foreign", io::encode_clip(data[0].flow), ErrorKind::kFormat);
  std::string version = tensors;
  version[4] = 9;
  corrupt("version", version, ErrorKind::kVersion);
  try {
    io::decode_clip(io::encode_gif(data[0].video));
    broken.push_back("gif as clip");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kFormat) broken.push_back("gif as clip");
  }
  fs::remove_all(root.parent_path());

  std::string detail = fmt("%d dataset files, checkpoints, samples and resaves compared byte for byte; bit flip, "
                           "truncation, foreign file and version bump rejected",
                           dataset_files);
  if (!broken.empty()) {
    detail = "failed:";
    for (const auto& b : broken) detail += " " + b;
  }
  return {broken.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"compositing algebra", compositing},
      {"network gradients", gradients},
      {"joint-loss gradient", joint_gradient},
      {"loss points and schedule", loss_points},
      {"structural invariants", structure},
      {"overfit smoke training", overfit},
      {"two-stream ordinal pattern", ordinal_pattern},
      {"augmentation semantics", augmentation},
      {"warping baseline", warping},
      {"determinism and persistence", persistence},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (int i = 0; i < static_cast<int>(criteria.size()); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

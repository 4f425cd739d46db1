#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <random>

#include "doctest.h"
#include "ftgan/synthdata.hpp"

using namespace ftgan;
using namespace ftgan::synth;

namespace {

SceneSpec linear_square(double vx, double vy, double size = 10) {
  SceneSpec s;
  s.shape = ShapeKind::kSquare;
  s.size_px = size;
  s.color = {0.9f, -0.5f, 0.2f};
  s.background.color_a = {-0.8f, -0.8f, -0.8f};
  s.background.color_b = {-0.2f, -0.6f, 0.1f};
  s.motion.kind = MotionKind::kLinear;
  s.motion.start = {8, 30};
  s.motion.velocity = {vx, vy};
  return s;
}

std::uint64_t hash_volume(const Volume& v) {
  std::uint64_t h = 1469598103934665603ULL;
  for (float f : v.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    h = (h ^ bits) * 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("static shape has zero flow and zero flow energy") {
  const Sample s = render_scene(linear_square(0, 0), 1);
  for (float v : s.flow.data()) CHECK(v == 0.0f);
  CHECK(flow_energy(s.flow) == 0.0);
}

TEST_CASE("translating square carries its velocity inside and zero outside") {
  const SceneSpec spec = linear_square(2, 0);
  const Sample s = render_scene(spec, 3);
  for (int t = 0; t < spec.n_frames; ++t) {
    const int src = std::min(t, spec.n_frames - 2);
    const double cx = 8 + 2.0 * src, cy = 30;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const bool in = std::fabs(x - cx) <= 5 && std::fabs(y - cy) <= 5;
        CHECK(s.flow.at(t, y, x, 0) == (in ? 2.0f : 0.0f));
        CHECK(s.flow.at(t, y, x, 1) == 0.0f);
      }
  }
  CHECK(flow_energy(s.flow) > 0.0);
}

TEST_CASE("circular motion displacement equals the chord length") {
  SceneSpec spec = linear_square(0, 0, 8);
  spec.motion.kind = MotionKind::kCircular;
  spec.motion.center = {38, 38};
  spec.motion.radius = 12.5;
  spec.motion.omega = 0.37;
  spec.motion.phase = 0.3;
  validate(spec);
  for (int t = 0; t + 1 < spec.n_frames; ++t) {
    const auto d = displacement(spec, t);
    CHECK(std::hypot(d[0], d[1]) == doctest::Approx(2 * 12.5 * std::sin(0.37 / 2)).epsilon(1e-9));
  }
}

TEST_CASE("oscillation has zero flow at turning frames") {
  SceneSpec spec = linear_square(0, 0, 8);
  spec.motion.kind = MotionKind::kOscillate;
  spec.motion.start = {38, 38};
  spec.motion.axis = {0.6, 0.8};
  spec.motion.amplitude = 10;
  spec.motion.half_period = 6;
  validate(spec);
  for (int t : {0, 6, 12, 18, 24}) {
    const FlowVideo f = analytic_flow(spec, t);
    for (float v : f.data()) CHECK(std::fabs(v) <= 1e-12);
  }
  const FlowVideo moving = analytic_flow(spec, 3);
  CHECK(flow_energy(moving) > 0.0);
}

TEST_CASE("analytic_flow validates the frame index and duplicates the last frame") {
  const SceneSpec spec = linear_square(1, 1);
  CHECK_THROWS_AS(analytic_flow(spec, -1), Error);
  CHECK_THROWS_AS(analytic_flow(spec, spec.n_frames), Error);
  CHECK(analytic_flow(spec, spec.n_frames - 1) == analytic_flow(spec, spec.n_frames - 2));
}

TEST_CASE("invalid scenes are rejected") {
  SceneSpec escaping = linear_square(3, 0);
  CHECK_THROWS_AS(render_scene(escaping, 0), Error);
  SceneSpec short_clip = linear_square(0, 0);
  short_clip.n_frames = 16;
  CHECK_THROWS_AS(validate(short_clip), Error);
  SceneSpec fast = linear_square(0, 0);
  fast.motion.kind = MotionKind::kCircular;
  fast.motion.center = {38, 38};
  fast.motion.radius = 20;
  fast.motion.omega = 1.2;
  CHECK_THROWS_AS(validate(fast), Error);
}

TEST_CASE("rendering is deterministic given spec and seed") {
  std::mt19937_64 rng(11);
  const SceneSpec spec = sample_scene(MotionKind::kCircular, 2, rng);
  const Sample a = render_scene(spec, 5), b = render_scene(spec, 5), c = render_scene(spec, 6);
  CHECK(a.video == b.video);
  CHECK(a.flow == b.flow);
  CHECK(a.label == 2);
  CHECK(hash_volume(a.video) != hash_volume(c.video));
}

TEST_CASE("sampled scenes respect the flow_scale bound for every motion kind") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 60; ++i) {
    const auto kind = static_cast<MotionKind>(i % 3);
    const SceneSpec spec = sample_scene(kind, i % 3, rng);
    CHECK(spec.motion.kind == kind);
    for (int t = 0; t + 1 < spec.n_frames; ++t) {
      const auto d = displacement(spec, t);
      CHECK(std::hypot(d[0], d[1]) <= spec.flow_scale);
    }
  }
}

TEST_CASE("augment: flip negates u, double flip restores, crop matches index oracle") {
  std::mt19937_64 rng(13);
  const SceneSpec spec = sample_scene(MotionKind::kLinear, 0, rng);
  const Sample s = render_scene(spec, 1);

  const AugmentDecision flip{3, 5, true};
  const Sample once = apply_augment(s, flip, 64, 64);
  for (int t = 0; t < s.video.frames(); ++t)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        CHECK(once.flow.at(t, y, x, 0) == -s.flow.at(t, y + 3, 5 + 63 - x, 0));
        CHECK(once.flow.at(t, y, x, 1) == s.flow.at(t, y + 3, 5 + 63 - x, 1));
      }
  const Sample twice = apply_augment(once, AugmentDecision{0, 0, true}, 64, 64);
  CHECK(twice.video == apply_augment(s, AugmentDecision{3, 5, false}, 64, 64).video);
  CHECK(twice.flow == apply_augment(s, AugmentDecision{3, 5, false}, 64, 64).flow);

  Sample tiny;
  tiny.video = Volume(32, 1, 1, 3, 0);
  tiny.flow = Volume(32, 1, 1, 2, 0);
  tiny.flow.at(0, 0, 0, 0) = 2;
  tiny.flow.at(0, 0, 0, 1) = 1;
  const Sample mirrored = apply_augment(tiny, AugmentDecision{0, 0, true}, 1, 1);
  CHECK(mirrored.flow.at(0, 0, 0, 0) == -2.0f);
  CHECK(mirrored.flow.at(0, 0, 0, 1) == 1.0f);

  CHECK_THROWS_AS(augment(tiny, 0, 64, 64), Error);
}

TEST_CASE("augment agrees with rendering the transformed scene") {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 12; ++i) {
    const SceneSpec spec = sample_scene(static_cast<MotionKind>(i % 3), i % 3, rng);
    const Sample s = render_scene(spec, 100 + i);
    const AugmentDecision d = draw_augment(i, 76, 76, 64, 64);
    const Sample aug = apply_augment(s, d, 64, 64);
    const SceneSpec view = transform_scene(spec, d.crop_y, d.crop_x, d.flip, 64, 64);
    const Sample re = render_scene(view, 100 + i);
    CHECK(re.flow == aug.flow);
    CHECK(re.video == aug.video);
    CHECK(aug.label == s.label);
    CHECK(aug.video.frames() == s.video.frames());
  }
}

TEST_CASE("dataset planning is balanced and deterministic") {
  DatasetConfig cfg;
  const auto plan = plan_dataset(cfg, 42);
  REQUIRE(plan.size() == 300);
  std::map<int, int> counts;
  for (const auto& e : plan) {
    counts[e.spec.motion.class_label]++;
    CHECK(static_cast<int>(e.spec.motion.kind) == e.spec.motion.class_label);
  }
  CHECK(counts == std::map<int, int>{{0, 100}, {1, 100}, {2, 100}});

  DatasetConfig small;
  small.clips_per_class = 1;
  const auto a = render_dataset(plan_dataset(small, 7));
  const auto b = render_dataset(plan_dataset(small, 7));
  const auto c = render_dataset(plan_dataset(small, 8));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].video == b[i].video);
    CHECK(a[i].flow == b[i].flow);
  }
  CHECK(hash_volume(a[0].video) != hash_volume(c[0].video));
}

TEST_CASE("downsample averages pixels and rescales flow") {
  const Sample s = render_scene(linear_square(1, 0), 2);
  const Sample d = downsample(s, 4);
  CHECK(d.video.height() == 19);
  double sum = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) sum += s.flow.at(0, 28 + y, 4 + x, 0);
  CHECK(d.flow.at(0, 7, 1, 0) == doctest::Approx(sum / 16 / 4));
  CHECK_THROWS_AS(downsample(s, 3), Error);
}

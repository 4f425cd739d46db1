#include "ftgan/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ftgan/rng.hpp"

namespace ftgan::synth {

namespace {

constexpr double kQuantum = 1.0 / 64.0;

double quantize(double v) { return std::round(v / kQuantum) * kQuantum; }

std::array<double, 2> half_extent(const SceneSpec& spec) {
  const double h = spec.size_px / 2.0;
  if (spec.shape == ShapeKind::kBar) return {h, spec.size_px / 6.0};
  return {h, h};
}

std::array<double, 2> world_center(const MotionSpec& m, int t) {
  switch (m.kind) {
    case MotionKind::kLinear:
      return {m.start[0] + t * m.velocity[0], m.start[1] + t * m.velocity[1]};
    case MotionKind::kOscillate: {
      const double omega = std::numbers::pi / m.half_period;
      const double s = m.amplitude * std::cos(omega * t - omega / 2.0);
      return {m.start[0] + m.axis[0] * s, m.start[1] + m.axis[1] * s};
    }
    case MotionKind::kCircular: {
      const double a = m.omega * t + m.phase;
      return {m.center[0] + m.radius * std::cos(a), m.center[1] + m.radius * std::sin(a)};
    }
  }
  return {0, 0};
}

std::array<double, 2> world_to_view(const SceneSpec& spec, double x, double y) {
  double vx = x - spec.view.offset_x;
  const double vy = y - spec.view.offset_y;
  if (spec.view.flip) vx = (spec.width - 1) - vx;
  return {vx, vy};
}

Rgb background_at(const SceneSpec& spec, std::uint64_t seed, int x, int y) {
  int wx = x;
  if (spec.view.flip) wx = (spec.width - 1) - x;
  wx += spec.view.offset_x;
  const int wy = y + spec.view.offset_y;

  const auto& bg = spec.background;
  const double dx = bg.gradient_dir[0], dy = bg.gradient_dir[1];
  const double lo = std::min(0.0, dx * (spec.world_width - 1)) + std::min(0.0, dy * (spec.world_height - 1));
  const double hi = std::max(0.0, dx * (spec.world_width - 1)) + std::max(0.0, dy * (spec.world_height - 1));
  const double s = hi > lo ? std::clamp((wx * dx + wy * dy - lo) / (hi - lo), 0.0, 1.0) : 0.0;

  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    double v = (1 - s) * bg.color_a[c] + s * bg.color_b[c];
    if (bg.noise > 0) {
      const std::uint64_t key = mix_seed(seed, static_cast<std::uint64_t>(wy) * 65536u +
                                                   static_cast<std::uint64_t>(wx) * 4u + c);
      v += bg.noise * (2.0 * unit_double(key) - 1.0);
    }
    out[c] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

void check_unit(double v, const char* what) {
  require(std::isfinite(v) && v >= -1.0 && v <= 1.0, ErrorKind::kInvalidArgument,
          std::string(what) + " must lie in [-1, 1]");
}

}  // namespace

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kDisk: return "disk";
    case ShapeKind::kBar: return "bar";
  }
  return "?";
}

const char* to_string(MotionKind k) {
  switch (k) {
    case MotionKind::kLinear: return "linear";
    case MotionKind::kOscillate: return "oscillate";
    case MotionKind::kCircular: return "circular";
  }
  return "?";
}

MotionKind motion_kind_from_string(const std::string& s) {
  if (s == "linear") return MotionKind::kLinear;
  if (s == "oscillate") return MotionKind::kOscillate;
  if (s == "circular") return MotionKind::kCircular;
  fail(ErrorKind::kInvalidArgument, "unknown motion kind '" + s + "'");
}

void validate(const SceneSpec& spec) {
  require(spec.n_frames >= kMinFrames, ErrorKind::kInvalidArgument,
          "scene needs at least " + std::to_string(kMinFrames) + " frames, got " +
              std::to_string(spec.n_frames));
  require(spec.height >= 1 && spec.width >= 1 && spec.world_height >= 1 && spec.world_width >= 1,
          ErrorKind::kInvalidArgument, "scene canvas must be non-empty");
  require(spec.size_px > 0, ErrorKind::kInvalidArgument, "shape size must be positive");
  require(spec.flow_scale > 0, ErrorKind::kInvalidArgument, "flow_scale must be positive");
  for (float c : spec.color) check_unit(c, "shape color");
  for (float c : spec.background.color_a) check_unit(c, "background color");
  for (float c : spec.background.color_b) check_unit(c, "background color");
  if (spec.motion.kind == MotionKind::kOscillate) {
    require(spec.motion.half_period >= 1, ErrorKind::kInvalidArgument,
            "oscillation half period must be >= 1");
  }

  const auto ext = half_extent(spec);
  for (int t = 0; t < spec.n_frames; ++t) {
    const auto c = world_center(spec.motion, t);
    const bool fits = c[0] - ext[0] >= 0 && c[0] + ext[0] <= spec.world_width - 1 &&
                      c[1] - ext[1] >= 0 && c[1] + ext[1] <= spec.world_height - 1;
    require(fits, ErrorKind::kInvalidArgument,
            "shape escapes the canvas at frame " + std::to_string(t));
    if (t + 1 < spec.n_frames) {
      const auto d = displacement(spec, t);
      require(std::hypot(d[0], d[1]) <= spec.flow_scale, ErrorKind::kInvalidArgument,
              "displacement at frame " + std::to_string(t) + " exceeds flow_scale");
    }
  }
}

std::array<double, 2> shape_center(const SceneSpec& spec, int t) {
  const auto w = world_center(spec.motion, t);
  return world_to_view(spec, w[0], w[1]);
}

std::array<double, 2> displacement(const SceneSpec& spec, int t) {
  const auto a = world_center(spec.motion, t);
  const auto b = world_center(spec.motion, t + 1);
  const double dx = b[0] - a[0];
  return {spec.view.flip ? -dx : dx, b[1] - a[1]};
}

bool inside_shape(const SceneSpec& spec, int t, double x, double y) {
  const auto c = shape_center(spec, t);
  const double dx = x - c[0];
  const double dy = y - c[1];
  const double h = spec.size_px / 2.0;
  switch (spec.shape) {
    case ShapeKind::kSquare: return std::fabs(dx) <= h && std::fabs(dy) <= h;
    case ShapeKind::kDisk: return dx * dx + dy * dy <= h * h;
    case ShapeKind::kBar: return std::fabs(dx) <= h && std::fabs(dy) <= spec.size_px / 6.0;
  }
  return false;
}

FlowVideo analytic_flow(const SceneSpec& spec, int t) {
  require(t >= 0 && t < spec.n_frames, ErrorKind::kInvalidArgument,
          "analytic_flow: frame " + std::to_string(t) + " outside [0, " +
              std::to_string(spec.n_frames) + ")");
  const int src = std::min(t, spec.n_frames - 2);
  const auto d = displacement(spec, src);
  FlowVideo out(1, spec.height, spec.width, 2);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (!inside_shape(spec, src, x, y)) continue;
      out.at(0, y, x, 0) = static_cast<float>(d[0]);
      out.at(0, y, x, 1) = static_cast<float>(d[1]);
    }
  }
  return out;
}

Sample render_scene(const SceneSpec& spec, std::uint64_t seed) {
  validate(spec);
  Sample s;
  s.label = spec.motion.class_label;
  s.video = VideoTensor(spec.n_frames, spec.height, spec.width, 3);
  s.flow = FlowVideo(spec.n_frames, spec.height, spec.width, 2);

  BackgroundImage bg(1, spec.height, spec.width, 3);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const auto c = background_at(spec, seed, x, y);
      for (int k = 0; k < 3; ++k) bg.at(0, y, x, k) = c[k];
    }

  for (int t = 0; t < spec.n_frames; ++t) {
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const bool in = inside_shape(spec, t, x, y);
        for (int k = 0; k < 3; ++k) s.video.at(t, y, x, k) = in ? spec.color[k] : bg.at(0, y, x, k);
      }
    }
    const FlowVideo f = analytic_flow(spec, t);
    std::copy(f.data().begin(), f.data().end(), s.flow.data().begin() + t * f.size());
  }
  return s;
}

SceneSpec transform_scene(const SceneSpec& spec, int crop_y, int crop_x, bool flip, int out_h,
                          int out_w) {
  require(!spec.view.flip, ErrorKind::kInvalidArgument,
          "transform_scene: composing with an already flipped view is not supported");
  SceneSpec out = spec;
  out.view.offset_x = spec.view.offset_x + crop_x;
  out.view.offset_y = spec.view.offset_y + crop_y;
  out.view.flip = flip;
  out.height = out_h;
  out.width = out_w;
  return out;
}

AugmentDecision draw_augment(std::uint64_t seed, int in_h, int in_w, int out_h, int out_w) {
  require(in_h >= out_h && in_w >= out_w, ErrorKind::kShape,
          "augment: input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
              " smaller than crop " + std::to_string(out_h) + "x" + std::to_string(out_w));
  std::mt19937_64 rng(seed);
  AugmentDecision d;
  d.crop_y = std::uniform_int_distribution<int>(0, in_h - out_h)(rng);
  d.crop_x = std::uniform_int_distribution<int>(0, in_w - out_w)(rng);
  d.flip = std::bernoulli_distribution(0.5)(rng);
  return d;
}

Sample apply_augment(const Sample& sample, const AugmentDecision& d, int out_h, int out_w) {
  const int in_h = sample.video.height(), in_w = sample.video.width();
  require(in_h >= out_h && in_w >= out_w, ErrorKind::kShape,
          "augment: input smaller than crop");
  require(d.crop_y >= 0 && d.crop_x >= 0 && d.crop_y + out_h <= in_h && d.crop_x + out_w <= in_w,
          ErrorKind::kInvalidArgument, "augment: crop window outside input");
  require(sample.video.same_grid(sample.flow), ErrorKind::kShape, "augment: video/flow grid mismatch");

  Sample out;
  out.label = sample.label;
  const int T = sample.video.frames();
  out.video = VideoTensor(T, out_h, out_w, sample.video.channels());
  out.flow = FlowVideo(T, out_h, out_w, 2);
  for (int t = 0; t < T; ++t) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const int sx = d.crop_x + (d.flip ? out_w - 1 - x : x);
        const int sy = d.crop_y + y;
        for (int c = 0; c < out.video.channels(); ++c) out.video.at(t, y, x, c) = sample.video.at(t, sy, sx, c);
        const float u = sample.flow.at(t, sy, sx, 0);
        out.flow.at(t, y, x, 0) = d.flip ? -u : u;
        out.flow.at(t, y, x, 1) = sample.flow.at(t, sy, sx, 1);
      }
    }
  }
  return out;
}

Sample augment(const Sample& sample, std::uint64_t seed, int out_h, int out_w) {
  const auto d = draw_augment(seed, sample.video.height(), sample.video.width(), out_h, out_w);
  return apply_augment(sample, d, out_h, out_w);
}

SceneSpec sample_scene(MotionKind kind, int class_label, std::mt19937_64& rng, int canvas,
                       int n_frames, double flow_scale) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto color = [&] {
    return Rgb{static_cast<float>(uni(-1, 1)), static_cast<float>(uni(-1, 1)),
               static_cast<float>(uni(-1, 1))};
  };

  SceneSpec s;
  s.n_frames = n_frames;
  s.height = s.width = s.world_height = s.world_width = canvas;
  s.flow_scale = flow_scale;
  s.shape = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  s.size_px = quantize(uni(0.14, 0.24) * canvas);

  // Keep the shape visibly distinct from the background.
  s.background.color_a = color();
  s.background.color_b = uni(0, 1) < 0.5 ? s.background.color_a : color();
  for (int attempt = 0; attempt < 64; ++attempt) {
    s.color = color();
    double diff = 0;
    for (int c = 0; c < 3; ++c)
      diff += std::fabs(s.color[c] - 0.5 * (s.background.color_a[c] + s.background.color_b[c]));
    if (diff / 3 >= 0.5) break;
  }
  const double gang = uni(0, 2 * std::numbers::pi);
  s.background.gradient_dir = {std::cos(gang), std::sin(gang)};
  s.background.noise = 0.05;

  const auto ext = half_extent(s);
  const double lo_x = ext[0], hi_x = canvas - 1 - ext[0];
  const double lo_y = ext[1], hi_y = canvas - 1 - ext[1];
  auto place = [&](double lo, double hi) {
    require(hi >= lo, ErrorKind::kInvalidArgument, "sample_scene: canvas too small for motion");
    return quantize(uni(lo, hi));
  };

  MotionSpec& m = s.motion;
  m.kind = kind;
  m.class_label = class_label;
  const double span = n_frames - 1;
  switch (kind) {
    case MotionKind::kLinear: {
      const double max_speed = std::min({1.5, 0.9 * flow_scale,
                                         0.8 * std::min(hi_x - lo_x, hi_y - lo_y) / span});
      const double speed = uni(0.5 * max_speed, max_speed);
      const double a = uni(0, 2 * std::numbers::pi);
      m.velocity = {quantize(speed * std::cos(a)), quantize(speed * std::sin(a))};
      const double dx = span * m.velocity[0], dy = span * m.velocity[1];
      m.start = {place(std::max(lo_x, lo_x - dx), std::min(hi_x, hi_x - dx)),
                 place(std::max(lo_y, lo_y - dy), std::min(hi_y, hi_y - dy))};
      break;
    }
    case MotionKind::kOscillate: {
      m.half_period = std::uniform_int_distribution<int>(4, 8)(rng);
      const double max_amp = std::min({0.2 * canvas, 0.9 * flow_scale /
                                                          (2 * std::sin(std::numbers::pi / (2 * m.half_period))),
                                       0.45 * std::min(hi_x - lo_x, hi_y - lo_y)});
      m.amplitude = uni(0.5 * max_amp, max_amp);
      const double a = uni(0, std::numbers::pi);
      m.axis = {std::cos(a), std::sin(a)};
      const double ax = std::fabs(m.axis[0]) * m.amplitude, ay = std::fabs(m.axis[1]) * m.amplitude;
      m.start = {place(lo_x + ax, hi_x - ax), place(lo_y + ay, hi_y - ay)};
      break;
    }
    case MotionKind::kCircular: {
      const double max_r = std::min(0.2 * canvas, 0.45 * std::min(hi_x - lo_x, hi_y - lo_y));
      m.radius = uni(0.5 * max_r, max_r);
      double w = uni(0.25, 0.5);
      w = std::min(w, 2 * std::asin(std::min(1.0, 0.9 * flow_scale / (2 * m.radius))));
      m.omega = uni(0, 1) < 0.5 ? -w : w;
      m.phase = uni(0, 2 * std::numbers::pi);
      m.center = {place(lo_x + m.radius, hi_x - m.radius), place(lo_y + m.radius, hi_y - m.radius)};
      break;
    }
  }
  validate(s);
  return s;
}

std::vector<SceneEntry> plan_dataset(const DatasetConfig& config, std::uint64_t seed) {
  require(!config.classes.empty(), ErrorKind::kInvalidArgument, "dataset needs at least one class");
  require(config.clips_per_class >= 1, ErrorKind::kInvalidArgument, "clips_per_class must be >= 1");
  const int n_classes = static_cast<int>(config.classes.size());
  const int total = n_classes * config.clips_per_class;
  std::vector<SceneEntry> plan;
  plan.reserve(total);
  for (int i = 0; i < total; ++i) {
    const int label = i % n_classes;
    std::mt19937_64 rng(mix_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    SceneEntry e;
    e.spec = sample_scene(config.classes[label], label, rng, config.canvas, config.n_frames,
                          config.flow_scale);
    e.render_seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1);
    plan.push_back(e);
  }
  return plan;
}

std::vector<Sample> render_dataset(const std::vector<SceneEntry>& plan) {
  std::vector<Sample> out;
  out.reserve(plan.size());
  for (const auto& e : plan) out.push_back(render_scene(e.spec, e.render_seed));
  return out;
}

Sample downsample(const Sample& sample, int factor) {
  require(factor >= 1, ErrorKind::kInvalidArgument, "downsample factor must be >= 1");
  if (factor == 1) return sample;
  const auto pool = [factor](const Volume& v, float scale) {
    require(v.height() % factor == 0 && v.width() % factor == 0, ErrorKind::kShape,
            "downsample: " + v.shape_string() + " not divisible by " + std::to_string(factor));
    Volume out(v.frames(), v.height() / factor, v.width() / factor, v.channels());
    const float norm = scale / static_cast<float>(factor * factor);
    for (int t = 0; t < v.frames(); ++t)
      for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
          for (int c = 0; c < v.channels(); ++c) {
            float acc = 0;
            for (int dy = 0; dy < factor; ++dy)
              for (int dx = 0; dx < factor; ++dx) acc += v.at(t, y * factor + dy, x * factor + dx, c);
            out.at(t, y, x, c) = acc * norm;
          }
    return out;
  };
  Sample out;
  out.label = sample.label;
  out.video = pool(sample.video, 1.0f);
  out.flow = pool(sample.flow, 1.0f / static_cast<float>(factor));
  return out;
}

double flow_energy(const FlowVideo& flow) {
  require_channels(flow, 2, "flow_energy");
  const auto d = flow.data();
  double acc = 0;
  for (std::size_t i = 0; i < d.size(); i += 2) acc += std::hypot(d[i], d[i + 1]);
  return acc / static_cast<double>(d.size() / 2);
}

}  // namespace ftgan::synth

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ftgan/core.hpp"
#include "ftgan/volume.hpp"

namespace ftgan::synth {

enum class ShapeKind { kSquare, kDisk, kBar };
enum class MotionKind { kLinear, kOscillate, kCircular };

const char* to_string(ShapeKind k);
const char* to_string(MotionKind k);
MotionKind motion_kind_from_string(const std::string& s);

using Rgb = std::array<float, 3>;

// Position of the shape centre at frame t, in world pixel coordinates:
//   linear:    start + t * velocity
//   oscillate: start + axis * amplitude * cos(omega * t - omega / 2),
//              omega = pi / half_period, so displacement vanishes at t = k * half_period
//   circular:  center + radius * (cos(omega * t + phase), sin(omega * t + phase))
struct MotionSpec {
  MotionKind kind = MotionKind::kLinear;
  std::array<double, 2> start{0, 0};     // linear / oscillate anchor (x, y)
  std::array<double, 2> velocity{0, 0};  // linear, px/frame
  std::array<double, 2> axis{1, 0};      // oscillate, unit vector
  double amplitude = 0;                  // oscillate
  int half_period = 8;                   // oscillate, frames between turning points
  std::array<double, 2> center{0, 0};    // circular
  double radius = 0;                     // circular
  double omega = 0;                      // circular, rad/frame (sign = direction)
  double phase = 0;                      // circular
  int class_label = 0;
};

// Background: linear gradient from color_a to color_b along `gradient_dir`
// (flat when the colors agree) plus static per-pixel noise keyed by the
// render seed and world coordinates.
struct BackgroundSpec {
  Rgb color_a{0, 0, 0};
  Rgb color_b{0, 0, 0};
  std::array<double, 2> gradient_dir{1, 0};
  double noise = 0.0;
};

// Maps world coordinates onto the rendered canvas: subtract `offset`, then
// mirror horizontally when `flip` is set. Identity for freshly sampled scenes.
struct ViewTransform {
  int offset_x = 0;
  int offset_y = 0;
  bool flip = false;
};

struct SceneSpec {
  ShapeKind shape = ShapeKind::kSquare;
  double size_px = 12;
  Rgb color{1, 1, 1};
  BackgroundSpec background;
  MotionSpec motion;
  int n_frames = 32;
  int height = 76;
  int width = 76;
  // World canvas the shape must stay inside (set at sampling time).
  int world_height = 76;
  int world_width = 76;
  ViewTransform view;
  double flow_scale = kDefaultFlowScale;
};

struct Sample {
  VideoTensor video;
  FlowVideo flow;
  int label = 0;
};

inline constexpr int kMinFrames = 32;

// Throws kInvalidArgument when the spec violates its invariants.
void validate(const SceneSpec& spec);

// Centre position at frame t in canvas (view) coordinates.
std::array<double, 2> shape_center(const SceneSpec& spec, int t);
// Displacement from frame t to frame t + 1 in canvas coordinates.
std::array<double, 2> displacement(const SceneSpec& spec, int t);
bool inside_shape(const SceneSpec& spec, int t, double x, double y);

// Exact flow frame t ([1, H, W, 2]); the last frame repeats frame n_frames - 2.
FlowVideo analytic_flow(const SceneSpec& spec, int t);

Sample render_scene(const SceneSpec& spec, std::uint64_t seed);

// Spec describing the crop/flip view of `spec`. Rendering the result equals
// augmenting the rendered original with the same decisions.
SceneSpec transform_scene(const SceneSpec& spec, int crop_y, int crop_x, bool flip, int out_h,
                          int out_w);

struct AugmentDecision {
  int crop_y = 0;
  int crop_x = 0;
  bool flip = false;
};

AugmentDecision draw_augment(std::uint64_t seed, int in_h, int in_w, int out_h, int out_w);
Sample apply_augment(const Sample& sample, const AugmentDecision& d, int out_h, int out_w);
// One random crop shared by every frame of video and flow, then a
// horizontal flip with probability 0.5 (u negated on flip).
Sample augment(const Sample& sample, std::uint64_t seed, int out_h = 64, int out_w = 64);

// Random scene of the given motion kind on a canvas, with the shape inside the
// canvas at every frame and per-frame displacement below flow_scale.
SceneSpec sample_scene(MotionKind kind, int class_label, std::mt19937_64& rng, int canvas = 76,
                       int n_frames = kMinFrames, double flow_scale = kDefaultFlowScale);

struct DatasetConfig {
  std::vector<MotionKind> classes{MotionKind::kLinear, MotionKind::kOscillate,
                                  MotionKind::kCircular};
  int clips_per_class = 100;
  int canvas = 76;
  int n_frames = 32;
  double flow_scale = kDefaultFlowScale;
};

struct SceneEntry {
  SceneSpec spec;
  std::uint64_t render_seed = 0;
};

// Class-balanced, index-ordered scene list; deterministic given seed.
std::vector<SceneEntry> plan_dataset(const DatasetConfig& config, std::uint64_t seed);

// Renders the plan in index order.
std::vector<Sample> render_dataset(const std::vector<SceneEntry>& plan);

// Average-pools space by `factor` (flow divided by `factor`).
Sample downsample(const Sample& sample, int factor);

double flow_energy(const FlowVideo& flow);

}  // namespace ftgan::synth

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ftgan/autograd.hpp"
#include "ftgan/core.hpp"
#include "ftgan/params.hpp"
#include "ftgan/volume.hpp"

namespace ftgan::nn {

inline constexpr int kLatentDim = 100;

struct ArchConfig {
  int frames = 32;
  int height = 64;
  int width = 64;
  int base_channels = 32;
  int max_channels = 256;
  int n_levels = 4;
  int latent_dim = kLatentDim;
  double leaky_slope = 0.2;
  double flow_scale = kDefaultFlowScale;
  // U-net skip levels of the texture generator; empty means 1 .. n_levels - 1.
  std::vector<int> skip_levels;

  // 32 x 64 x 64, base 32, four levels.
  static ArchConfig desk();
  // 8 x 16 x 16, base 8, two levels; flow_scale follows a 4x spatial downsample.
  static ArchConfig micro();

  void validate() const;
  int channels(int level) const;
  int frames_at(int level) const;
  int height_at(int level) const { return height >> level; }
  int width_at(int level) const { return width >> level; }
  // Length of the discriminator's last-layer feature vector.
  int feature_dim() const;
  std::vector<int> effective_skips() const;
  bool has_skip(int level) const;
  // Geometry of the sampling convolution between level - 1 and level.
  ConvGeom level_geom(int level) const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// 100-dimensional standard Gaussian sample.
class LatentVector {
 public:
  LatentVector() : values_(kLatentDim, 0.0) {}
  explicit LatentVector(std::vector<double> values);
  static LatentVector sample(std::mt19937_64& rng);
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
};

enum class NetworkKind { kFlowGenerator, kTextureGenerator, kFlowDiscriminator, kTextureDiscriminator };
const char* to_string(NetworkKind k);

// Parameter layout for a network, values per the initialization rule:
// sampling weights ~ Normal(0, 0.02), normalization scale 1 and shift 0,
// biases 0, running mean 0 and running variance 1.
ParameterSet init_params(NetworkKind kind, const ArchConfig& arch, std::uint64_t seed);

// Graph-level outputs are laid out [N, C, T, H, W].
struct FlowGenOutput {
  Var flow;  // normalized: mask * tanh head, |value| <= 1
  Var mask;  // sigmoid head
  Var foreground;
};

struct TextureGenOutput {
  Var video;       // composite(mask, foreground, replicated background)
  Var foreground;  // tanh head
  Var mask;        // sigmoid head
  Var background;  // [N, 3, 1, H, W]
};

struct DiscOutput {
  Var score;     // [N, 1], sigmoid of an affine map of the features
  Var features;  // [N, feature_dim]
};

class FlowGenerator {
 public:
  FlowGenerator(ArchConfig arch, std::uint64_t seed);
  FlowGenOutput forward(Tape& tape, Var z, bool training);
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  const ArchConfig& arch() const noexcept { return arch_; }

 private:
  ArchConfig arch_;
  ParameterSet params_;
};

class TextureGenerator {
 public:
  TextureGenerator(ArchConfig arch, std::uint64_t seed);
  // flow is the normalized condition (pixels / flow_scale).
  TextureGenOutput forward(Tape& tape, Var z, Var flow, bool training);
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  const ArchConfig& arch() const noexcept { return arch_; }

 private:
  ArchConfig arch_;
  ParameterSet params_;
};

// Strided down-sampling trunk shared by both discriminators.
class Discriminator {
 public:
  Discriminator(NetworkKind kind, ArchConfig arch, std::uint64_t seed);
  // Flow discriminator: input is the normalized flow [N, 2, T, H, W].
  DiscOutput forward(Tape& tape, Var input, bool training);
  // Texture discriminator: video [N, 3, ...] concatenated with normalized flow.
  DiscOutput forward(Tape& tape, Var video, Var flow, bool training);
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  const ArchConfig& arch() const noexcept { return arch_; }
  NetworkKind kind() const noexcept { return kind_; }
  int in_channels() const noexcept { return kind_ == NetworkKind::kFlowDiscriminator ? 2 : 5; }

 private:
  NetworkKind kind_;
  ArchConfig arch_;
  ParameterSet params_;
};

// Volume <-> network layout. Flow volumes are divided by flow_scale on the
// way in and multiplied on the way out.
Tensor to_network(const std::vector<const Volume*>& batch, double scale = 1.0);
Tensor to_network(const Volume& v, double scale = 1.0);
Volume from_network(const Tensor& t, int index, double scale = 1.0);
Tensor latent_batch(const std::vector<LatentVector>& zs);

// Domain-level single-clip forwards in inference mode.
struct FlowGenResult {
  FlowVideo flow;  // pixels/frame
  MaskVolume mask;
};
FlowGenResult flow_generator_forward(const LatentVector& z, FlowGenerator& net);

struct TextureGenResult {
  VideoTensor video;
  MaskVolume mask;
  BackgroundImage background;
  VideoTensor foreground;
};
TextureGenResult texture_generator_forward(const LatentVector& z, const FlowVideo& condition_flow,
                                           TextureGenerator& net);

struct DiscriminatorResult {
  double score = 0;
  std::vector<double> features;
};
DiscriminatorResult flow_discriminator_forward(const FlowVideo& flow, Discriminator& net);
DiscriminatorResult texture_discriminator_forward(const VideoTensor& video, const FlowVideo& flow,
                                                  Discriminator& net);

}  // namespace ftgan::nn

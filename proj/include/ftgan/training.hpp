#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ftgan/networks.hpp"
#include "ftgan/synthdata.hpp"

namespace ftgan::train {

enum class Stage { kFlow, kTexture, kJoint };
const char* to_string(Stage s);
Stage stage_from_string(const std::string& s);

inline constexpr int kHalvings = 6;

struct TrainConfig {
  Stage stage = Stage::kFlow;
  double lr_initial = 2e-4;
  // Joint stage learning rates for the flow pair and the texture pair.
  double joint_lr_flow = 1e-7;
  double joint_lr_texture = 1e-6;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int total_iters = 1000;
  double lambda_joint = 0.1;
  double lambda_mask = 0.1;
  std::uint64_t seed = 0;
  // 0 writes only the final checkpoint.
  int checkpoint_every = 0;

  void validate() const;
};

// Iterations at which the learning rate halves.
std::vector<int> decay_boundaries(int total_iters);
double lr_at(int iter, int total_iters, double lr_initial);

// Scalar forms of the losses, for reporting and tests.
double discriminator_loss(double d_real, double d_fake);
double generator_loss(double d_fake);
double joint_flow_generator_loss(double own, double through, double lambda_joint);

struct OptimizerState {
  std::vector<nn::Tensor> m;
  std::vector<nn::Tensor> v;
  long step = 0;
};
OptimizerState make_optimizer_state(const nn::ParameterSet& ps);
// Bias-corrected Adam over the trainable entries of ps, reading Parameter::grad.
// Throws kNonFinite on a non-finite gradient.
void adam_step(nn::ParameterSet& ps, OptimizerState& st, double lr, double beta1, double beta2 = 0.999,
               double eps = 1e-8);

// Clip preparation between the stored dataset and the network input.
struct DataPipeline {
  int crop = 64;        // random crop side
  int downsample = 1;   // average-pool factor after cropping
  bool augment = true;  // random crop + flip; otherwise a center crop
};
DataPipeline micro_pipeline();

// Crops, pools and cuts a temporal window of `frames` starting at frame `start`.
synth::Sample prepare_clip(const synth::Sample& raw, const synth::AugmentDecision& d, const DataPipeline& p,
                           int start, int frames);
synth::AugmentDecision center_crop(const synth::Sample& raw, const DataPipeline& p);

struct Batch {
  nn::Tensor video;  // [N, 3, T, H, W]
  nn::Tensor flow;   // [N, 2, T, H, W], divided by flow_scale
  std::vector<int> indices;
};

// Seed-determined batches: the draw for iteration i depends only on (seed, i).
class BatchSampler {
 public:
  BatchSampler(const std::vector<synth::Sample>& data, DataPipeline pipeline, nn::ArchConfig arch,
               std::uint64_t seed);
  Batch draw(int iteration, int batch_size) const;

 private:
  const std::vector<synth::Sample>* data_;
  DataPipeline pipeline_;
  nn::ArchConfig arch_;
  std::uint64_t seed_;
};

struct Models {
  std::optional<nn::FlowGenerator> gen_flow;
  std::optional<nn::Discriminator> disc_flow;
  std::optional<nn::TextureGenerator> gen_tex;
  std::optional<nn::Discriminator> disc_tex;

  // Fresh networks for a stage; the joint stage needs all four.
  static Models init(Stage stage, const nn::ArchConfig& arch, std::uint64_t seed);
  bool has_flow_pair() const { return gen_flow && disc_flow; }
  bool has_texture_pair() const { return gen_tex && disc_tex; }
};

struct JointGeneratorLosses {
  double own = 0;      // flow generator adversarial loss + mask penalty
  double through = 0;  // texture generator loss on the generated flow
  double mask_flow = 0;
  double mask_tex = 0;
};

// Generator half of a joint iteration. fo lives on one tape; to was produced on
// a second tape from cond, an input leaf holding fo.flow's value. Accumulates the
// texture generator loss gradient into the texture generator's parameters and the
// gradient of own + lambda_joint * through into the flow generator's. Callers zero
// gradients beforehand.
JointGeneratorLosses joint_generator_backward(nn::Discriminator& df, nn::Discriminator& dt,
                                              const nn::FlowGenOutput& fo, const nn::TextureGenOutput& to,
                                              nn::Var cond, double lambda_joint, double lambda_mask);

struct TrainRecord {
  int iter = 0;
  Stage stage = Stage::kFlow;
  double loss_d = 0;
  double loss_g = 0;
  double mask_l1 = 0;
  double lr = 0;
  double grad_norm_d = 0;
  double grad_norm_g = 0;
  // joint stage only
  double loss_d_tex = 0;
  double loss_g_tex = 0;
  double mask_l1_tex = 0;
  double lr_tex = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<int> checkpoints;
  std::string to_jsonl() const;
};

struct TrainHooks {
  // Called after iterations (i + 1) % checkpoint_every == 0 and after the last one.
  std::function<void(int completed, const Models&)> on_checkpoint;
  std::function<void(const TrainRecord&, Models&)> on_iteration;
};

// Runs cfg.total_iters alternating discriminator/generator iterations on the
// stage's networks. Throws kPrecondition when the stage's networks are missing
// and kNonFinite when a loss or gradient stops being finite.
TrainLog train_stage(Models& models, const std::vector<synth::Sample>& data, const TrainConfig& cfg,
                     const DataPipeline& pipeline, const TrainHooks& hooks = {});

}  // namespace ftgan::train

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ftgan/evaluation.hpp"
#include "ftgan/io.hpp"
#include "ftgan/training.hpp"

// Whole-run operations behind the C API and the command-line tool.
namespace ftgan::app {

std::vector<synth::Sample> generate_dataset(const io::RunConfig& cfg);

// Writes <out>/train_log.jsonl, <out>/checkpoint and, when checkpoint_every is
// set, <out>/checkpoints/iter_NNNNNN.
using Progress = std::function<void(const train::TrainRecord&)>;
train::TrainLog run_training(train::Models& models, const std::vector<synth::Sample>& data,
                             const io::RunConfig& cfg, train::Stage stage, const std::string& out_dir,
                             const Progress& progress = {});

struct GeneratedClip {
  VideoTensor video;
  FlowVideo flow;  // pixels per frame
  MaskVolume mask;
};

// Clip i draws its latents from (seed, i) alone. With condition set, every clip
// is conditioned on that flow instead of the flow generator's output.
std::vector<GeneratedClip> generate_clips(train::Models& models, int n, std::uint64_t seed,
                                          const std::optional<FlowVideo>& condition = std::nullopt);

// A flow clip at network resolution is used as is; a larger one goes through
// the center crop and downsample of the pipeline and keeps its first frames.
FlowVideo condition_from_clip(const FlowVideo& flow, const io::RunConfig& cfg);

// sample_NNN.{video,flow}.ftcl, .gif and .png under out_dir.
void write_samples(const std::vector<GeneratedClip>& clips, const io::RunConfig& cfg, const std::string& out_dir);

// Center-cropped, downsampled, full-length clip for probing.
synth::Sample probe_clip(const synth::Sample& raw, const io::RunConfig& cfg);

// Probes both discriminators on the dataset and, when the generators are
// present, adds motion statistics of cfg.n_samples generated clips. Writes
// report.json and confusion_{flow,texture,fused}.csv under out_dir when set.
eval::EvalReport run_eval(train::Models& models, const std::vector<synth::Sample>& data, const io::RunConfig& cfg,
                          const std::string& out_dir = "");

struct BaselineReport {
  // Mean over clips of |warp_video(frame 0, flow)_t - frame_t|.
  std::vector<double> dataset_error;
  eval::Summary dataset_warp_consistency;
  // Same per-frame error for generated clips, warping their first frame with
  // the generated flow; empty without generators.
  std::vector<double> generated_error;
  eval::Summary generated_warp_consistency;
  std::string to_json() const;
};

BaselineReport run_baseline_warp(const std::vector<synth::Sample>& data, const io::RunConfig& cfg,
                                 train::Models* models = nullptr, const std::string& out_dir = "");

}  // namespace ftgan::app

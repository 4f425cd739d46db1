#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftgan/evaluation.hpp"
#include "ftgan/networks.hpp"
#include "ftgan/synthdata.hpp"
#include "ftgan/training.hpp"
#include "ftgan/volume.hpp"
#include "json.hpp"

namespace ftgan::io {

// Effective configuration of a run. The file form is one flat JSON object whose
// keys are the field names below; "preset" (micro or desk) is applied first and
// every other key overrides it.
struct RunConfig {
  std::string preset = "micro";
  train::TrainConfig train;
  nn::ArchConfig arch = nn::ArchConfig::micro();
  synth::DatasetConfig data;
  train::DataPipeline pipeline = train::micro_pipeline();
  eval::ProbeWindows windows{8, 4};
  double test_fraction = 1.0 / 3.0;
  eval::Fusion fusion = eval::Fusion::kConcat;
  int n_samples = 4;
  double fps = 16;

  static RunConfig for_preset(const std::string& name);
  void validate() const;
};

// Throws kInvalidArgument on unknown keys and mistyped values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
// Every key with its resolved value.
nlohmann::json config_to_json(const RunConfig& cfg);

// Writes to a sibling temporary file, then renames over path.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

inline constexpr std::uint32_t kClipVersion = 1;

struct ClipData {
  Volume volume;
  std::optional<int> label;
};

// "FTCL" header (version, T, H, W, channels, dtype, label) + float32 LE payload.
std::string encode_clip(const Volume& v, std::optional<int> label = std::nullopt);
ClipData decode_clip(const std::string& bytes, const std::string& what = "clip");
void write_clip(const std::string& path, const Volume& v, std::optional<int> label = std::nullopt);
ClipData read_clip(const std::string& path);

// Directory of clip_NNNNN.video.ftcl / clip_NNNNN.flow.ftcl plus dataset.json.
void write_dataset(const std::string& dir, const std::vector<synth::Sample>& samples,
                   const nlohmann::json& config);
std::vector<synth::Sample> read_dataset(const std::string& dir);

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;  // "<network>/<parameter>"
  nn::Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  int schema_version = kCheckpointVersion;
  train::Stage stage = train::Stage::kFlow;
  int iteration = 0;
  std::uint64_t seed = 0;
  nn::ArchConfig arch;
  std::vector<NamedTensor> tensors;
};

Checkpoint make_checkpoint(const train::Models& models, train::Stage stage, int iteration, std::uint64_t seed,
                           const nn::ArchConfig& arch);
// dir/manifest.json and dir/tensors.bin; each tensor carries a CRC32.
void save_checkpoint(const std::string& dir, const Checkpoint& ck);
// kVersion for a foreign schema, kFormat for truncated or malformed files,
// kIntegrity on a checksum mismatch.
Checkpoint load_checkpoint(const std::string& dir);
// Builds the networks named by the checkpoint and copies its tensors in.
// kStageMismatch when expected is given and differs, kUnknownTensor for a
// tensor the networks do not have.
train::Models restore_models(const Checkpoint& ck, std::optional<train::Stage> expected = std::nullopt);
// Flow pair from a flow-stage checkpoint, texture pair from a texture-stage one.
train::Models combine_pretrained(const Checkpoint& flow, const Checkpoint& texture);

// Animated GIF, [-1, 1] mapped to [0, 255] and quantized to a 6x6x6 colour cube.
std::string encode_gif(const VideoTensor& video, double fps = 16);
void export_gif(const VideoTensor& video, const std::string& path, double fps = 16);

inline constexpr int kPanelColumns = 8;
inline constexpr int kPanelGutter = 2;

std::vector<int> panel_columns(int frames, int columns = kPanelColumns);
// Flow colour row above the RGB row, gutters black. RGB in [-1, 1].
Volume make_panel(const VideoTensor& video, const FlowVideo& flow, double max_magnitude);
std::string encode_png(const Volume& image);
void export_panel(const VideoTensor& video, const FlowVideo& flow, const std::string& path, double max_magnitude);

}  // namespace ftgan::io

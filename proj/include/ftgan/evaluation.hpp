#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftgan/networks.hpp"
#include "ftgan/volume.hpp"

namespace ftgan::eval {

enum class Stream { kFlow, kTexture };
const char* to_string(Stream s);

struct FeatureRecord {
  int clip_id = 0;
  Stream stream = Stream::kFlow;
  std::vector<double> vector;
  int label = 0;
};

// Window start frames: 0, stride, 2 * stride, ... while the window fits.
std::vector<int> window_offsets(int frames, int window, int stride);

struct ProbeWindows {
  int window = 32;
  int stride = 16;
};

// Window-averaged last-layer features of both discriminators for one clip,
// in inference mode. The window must equal the discriminators' frame count.
std::pair<FeatureRecord, FeatureRecord> extract_features(const VideoTensor& video, const FlowVideo& flow,
                                                         nn::Discriminator& flow_disc,
                                                         nn::Discriminator& texture_disc,
                                                         const ProbeWindows& windows, int clip_id = 0,
                                                         int label = 0);

// Multinomial logistic regression on standardized features, L2 penalty
// 1 / (2 C) on the weights, fitted by L-BFGS from zero.
struct ClassifierConfig {
  double c = 1.0;
  int max_iterations = 500;
};

class LinearClassifier {
 public:
  static LinearClassifier fit(const std::vector<std::vector<double>>& x, const std::vector<int>& labels,
                              const ClassifierConfig& cfg = {});
  // Class probabilities per row.
  std::vector<std::vector<double>> predict_proba(const std::vector<std::vector<double>>& x) const;
  std::vector<int> predict(const std::vector<std::vector<double>>& x) const;
  int n_classes() const noexcept { return n_classes_; }
  int n_features() const noexcept { return n_features_; }
  const std::vector<double>& weights() const noexcept { return w_; }

 private:
  int n_classes_ = 0;
  int n_features_ = 0;
  std::vector<double> mean_, scale_;
  std::vector<double> w_;  // [n_classes, n_features + 1], bias last
};

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);
// counts[truth][predicted]
std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& predicted, const std::vector<int>& truth,
                                               int n_classes);

// Stratified held-out split, deterministic in seed.
struct Split {
  std::vector<int> train;
  std::vector<int> test;
};
Split stratified_split(const std::vector<int>& labels, double test_fraction, std::uint64_t seed);

enum class Fusion { kConcat, kScoreAverage };

struct StreamResult {
  double accuracy = 0;
  std::vector<std::vector<int>> confusion;
};

// Fits on the split's train rows and scores its test rows.
StreamResult classify_stream(const std::vector<FeatureRecord>& records, const Split& split, int n_classes,
                             const ClassifierConfig& cfg = {});
// Records must be aligned by clip_id and label.
StreamResult fuse_and_classify(const std::vector<FeatureRecord>& flow, const std::vector<FeatureRecord>& texture,
                               const Split& split, int n_classes, Fusion fusion = Fusion::kConcat,
                               const ClassifierConfig& cfg = {});

// Mean absolute difference of consecutive frames.
double motion_energy(const VideoTensor& video);

inline constexpr double kFlowAgreement = 0.5;

// Pixels scored by warp_consistency for the pair (t, t + 1): the flow at p moves
// by at most `tolerance` pixels between the two frames and the source p - flow
// lies inside the frame. Occlusion and disocclusion boundaries fall outside.
std::vector<bool> consistent_pixels(const FlowVideo& flow, int t, double tolerance = kFlowAgreement);
// Mean |warp(frame_t, flow_t) - frame_{t+1}| over consistent pixels and channels,
// for t = 0 .. T - 3. The last pair is skipped: its test would read the final
// flow frame, which repeats the one before it. NaN when no pixel qualifies.
double warp_consistency(const VideoTensor& video, const FlowVideo& flow, double tolerance = kFlowAgreement);
// Mean |warp_video(frame_0, flow)_t - frame_t| for every t.
std::vector<double> warp_baseline_errors(const VideoTensor& video, const FlowVideo& flow);

// Statistics over the finite values; count excludes NaNs.
struct Summary {
  double mean = 0;
  double min = 0;
  double max = 0;
  int count = 0;
};
Summary summarize(const std::vector<double>& values);

struct EvalReport {
  int n_classes = 0;
  double chance = 0;
  int n_train = 0;
  int n_test = 0;
  StreamResult flow;
  StreamResult texture;
  StreamResult fused;
  std::string fusion = "concat";
  Summary motion_energy_generated;
  Summary motion_energy_real;
  Summary warp_consistency_generated;
  Summary warp_consistency_real;

  std::string to_json() const;
};

std::string confusion_csv(const std::vector<std::vector<int>>& counts);

}  // namespace ftgan::eval

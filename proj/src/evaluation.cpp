#include "ftgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <ceres/ceres.h>

#include "ftgan/core.hpp"
#include "ftgan/error.hpp"
#include "ftgan/rng.hpp"
#include "json.hpp"

namespace ftgan::eval {

const char* to_string(Stream s) { return s == Stream::kFlow ? "flow" : "texture"; }

std::vector<int> window_offsets(int frames, int window, int stride) {
  require(window > 0 && stride > 0, ErrorKind::kInvalidArgument, "window and stride must be positive");
  require(frames >= window, ErrorKind::kShape,
          "clip of " + std::to_string(frames) + " frames is shorter than the " + std::to_string(window) +
              "-frame window");
  std::vector<int> out;
  for (int s = 0; s + window <= frames; s += stride) out.push_back(s);
  return out;
}

std::pair<FeatureRecord, FeatureRecord> extract_features(const VideoTensor& video, const FlowVideo& flow,
                                                         nn::Discriminator& flow_disc,
                                                         nn::Discriminator& texture_disc,
                                                         const ProbeWindows& windows, int clip_id, int label) {
  require(video.same_grid(flow), ErrorKind::kShape,
          "extract_features: video " + video.shape_string() + " vs flow " + flow.shape_string());
  require(flow_disc.arch().frames == windows.window && texture_disc.arch().frames == windows.window,
          ErrorKind::kInvalidArgument, "extract_features: window must match the discriminators' frame count");
  const auto offsets = window_offsets(video.frames(), windows.window, windows.stride);

  FeatureRecord f{clip_id, Stream::kFlow, {}, label};
  FeatureRecord t{clip_id, Stream::kTexture, {}, label};
  for (int s : offsets) {
    const FlowVideo fw = flow.frames_range(s, windows.window);
    const auto rf = nn::flow_discriminator_forward(fw, flow_disc);
    const auto rt = nn::texture_discriminator_forward(video.frames_range(s, windows.window), fw, texture_disc);
    if (f.vector.empty()) f.vector.assign(rf.features.size(), 0.0);
    if (t.vector.empty()) t.vector.assign(rt.features.size(), 0.0);
    for (std::size_t i = 0; i < rf.features.size(); ++i) f.vector[i] += rf.features[i];
    for (std::size_t i = 0; i < rt.features.size(); ++i) t.vector[i] += rt.features[i];
  }
  const double inv = 1.0 / static_cast<double>(offsets.size());
  for (double& v : f.vector) v *= inv;
  for (double& v : t.vector) v *= inv;
  return {std::move(f), std::move(t)};
}

namespace {

// Softmax cross-entropy summed over rows plus 0.5 / C * ||W||^2 (bias excluded).
class LogisticObjective final : public ceres::FirstOrderFunction {
 public:
  LogisticObjective(const std::vector<std::vector<double>>& z, const std::vector<int>& y, int k, double c)
      : z_(z), y_(y), k_(k), d_(z.empty() ? 0 : static_cast<int>(z[0].size())), inv_c_(1.0 / c) {}

  int NumParameters() const override { return k_ * (d_ + 1); }

  bool Evaluate(const double* w, double* cost, double* grad) const override {
    const int stride = d_ + 1;
    double f = 0;
    if (grad) std::fill(grad, grad + NumParameters(), 0.0);
    std::vector<double> logits(k_);
    for (std::size_t i = 0; i < z_.size(); ++i) {
      const auto& row = z_[i];
      for (int c = 0; c < k_; ++c) {
        const double* wc = w + c * stride;
        double a = wc[d_];
        for (int j = 0; j < d_; ++j) a += wc[j] * row[j];
        logits[c] = a;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0;
      for (double& a : logits) {
        a = std::exp(a - mx);
        sum += a;
      }
      f += std::log(sum) + mx - (std::log(logits[y_[i]]) + mx);
      if (grad) {
        for (int c = 0; c < k_; ++c) {
          const double r = logits[c] / sum - (c == y_[i] ? 1.0 : 0.0);
          double* gc = grad + c * stride;
          for (int j = 0; j < d_; ++j) gc[j] += r * row[j];
          gc[d_] += r;
        }
      }
    }
    for (int c = 0; c < k_; ++c) {
      const double* wc = w + c * stride;
      for (int j = 0; j < d_; ++j) {
        f += 0.5 * inv_c_ * wc[j] * wc[j];
        if (grad) grad[c * stride + j] += inv_c_ * wc[j];
      }
    }
    *cost = f;
    return std::isfinite(f);
  }

 private:
  const std::vector<std::vector<double>>& z_;
  const std::vector<int>& y_;
  int k_, d_;
  double inv_c_;
};

std::vector<std::vector<double>> rows_of(const std::vector<FeatureRecord>& recs, const std::vector<int>& idx) {
  std::vector<std::vector<double>> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(recs.at(i).vector);
  return out;
}

std::vector<int> labels_of(const std::vector<FeatureRecord>& recs, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(recs.at(i).label);
  return out;
}

int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

StreamResult score(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes) {
  return {accuracy(pred, truth), confusion_matrix(pred, truth, n_classes)};
}

}  // namespace

LinearClassifier LinearClassifier::fit(const std::vector<std::vector<double>>& x, const std::vector<int>& labels,
                                       const ClassifierConfig& cfg) {
  require(!x.empty() && x.size() == labels.size(), ErrorKind::kInvalidArgument,
          "classifier: need one label per non-empty feature row");
  require(cfg.c > 0, ErrorKind::kInvalidArgument, "classifier: C must be positive");
  const int d = static_cast<int>(x[0].size());
  require(d > 0, ErrorKind::kInvalidArgument, "classifier: empty feature vectors");
  for (const auto& r : x)
    require(static_cast<int>(r.size()) == d, ErrorKind::kShape, "classifier: ragged feature rows");
  for (int y : labels) require(y >= 0, ErrorKind::kInvalidArgument, "classifier: negative label");
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> present(k, 0);
  for (int y : labels) present[y] = 1;
  require(std::accumulate(present.begin(), present.end(), 0) >= 2, ErrorKind::kInvalidArgument,
          "classifier: training labels contain a single class");

  LinearClassifier m;
  m.n_classes_ = k;
  m.n_features_ = d;
  m.mean_.assign(d, 0.0);
  m.scale_.assign(d, 0.0);
  const double n = static_cast<double>(x.size());
  for (const auto& r : x)
    for (int j = 0; j < d; ++j) m.mean_[j] += r[j] / n;
  for (const auto& r : x)
    for (int j = 0; j < d; ++j) m.scale_[j] += (r[j] - m.mean_[j]) * (r[j] - m.mean_[j]) / n;
  for (double& s : m.scale_) s = s > 1e-24 ? std::sqrt(s) : 1.0;

  std::vector<std::vector<double>> z = x;
  for (auto& r : z)
    for (int j = 0; j < d; ++j) r[j] = (r[j] - m.mean_[j]) / m.scale_[j];

  m.w_.assign(static_cast<std::size_t>(k) * (d + 1), 0.0);
  ceres::GradientProblem problem(new LogisticObjective(z, labels, k, cfg.c));
  ceres::GradientProblemSolver::Options opts;
  opts.line_search_direction_type = ceres::LBFGS;
  opts.max_num_iterations = cfg.max_iterations;
  opts.function_tolerance = 1e-12;
  opts.gradient_tolerance = 1e-10;
  opts.parameter_tolerance = 1e-12;
  opts.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(opts, problem, m.w_.data(), &summary);
  require(summary.IsSolutionUsable(), ErrorKind::kNonFinite,
          "classifier: solver failed: " + summary.message);
  return m;
}

std::vector<std::vector<double>> LinearClassifier::predict_proba(const std::vector<std::vector<double>>& x) const {
  std::vector<std::vector<double>> out;
  out.reserve(x.size());
  const int stride = n_features_ + 1;
  for (const auto& r : x) {
    require(static_cast<int>(r.size()) == n_features_, ErrorKind::kShape,
            "classifier: feature length " + std::to_string(r.size()) + ", expected " +
                std::to_string(n_features_));
    std::vector<double> p(n_classes_);
    for (int c = 0; c < n_classes_; ++c) {
      const double* wc = w_.data() + c * stride;
      double a = wc[n_features_];
      for (int j = 0; j < n_features_; ++j) a += wc[j] * (r[j] - mean_[j]) / scale_[j];
      p[c] = a;
    }
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0;
    for (double& a : p) {
      a = std::exp(a - mx);
      sum += a;
    }
    for (double& a : p) a /= sum;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<int> LinearClassifier::predict(const std::vector<std::vector<double>>& x) const {
  std::vector<int> out;
  for (const auto& p : predict_proba(x)) out.push_back(argmax(p));
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorKind::kInvalidArgument,
          "accuracy: size mismatch or empty input");
  int hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& predicted, const std::vector<int>& truth,
                                               int n_classes) {
  require(predicted.size() == truth.size(), ErrorKind::kInvalidArgument, "confusion_matrix: size mismatch");
  std::vector<std::vector<int>> m(n_classes, std::vector<int>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < n_classes && predicted[i] >= 0 && predicted[i] < n_classes,
            ErrorKind::kInvalidArgument, "confusion_matrix: label out of range");
    ++m[truth[i]][predicted[i]];
  }
  return m;
}

Split stratified_split(const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0 && test_fraction < 1, ErrorKind::kInvalidArgument,
          "stratified_split: test fraction must be in (0, 1)");
  std::vector<std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    require(labels[i] >= 0, ErrorKind::kInvalidArgument, "stratified_split: negative label");
    if (labels[i] >= static_cast<int>(by_class.size())) by_class.resize(labels[i] + 1);
    by_class[labels[i]].push_back(i);
  }
  Split s;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::mt19937_64 rng(mix_seed(seed, c));
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng() % i]);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * members.size()));
    s.test.insert(s.test.end(), members.begin(), members.begin() + n_test);
    s.train.insert(s.train.end(), members.begin() + n_test, members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

StreamResult classify_stream(const std::vector<FeatureRecord>& records, const Split& split, int n_classes,
                             const ClassifierConfig& cfg) {
  const auto clf = LinearClassifier::fit(rows_of(records, split.train), labels_of(records, split.train), cfg);
  auto pred = clf.predict(rows_of(records, split.test));
  for (int& p : pred) require(p < n_classes, ErrorKind::kInvalidArgument, "classify_stream: n_classes too small");
  return score(pred, labels_of(records, split.test), n_classes);
}

StreamResult fuse_and_classify(const std::vector<FeatureRecord>& flow, const std::vector<FeatureRecord>& texture,
                               const Split& split, int n_classes, Fusion fusion, const ClassifierConfig& cfg) {
  require(flow.size() == texture.size(), ErrorKind::kInvalidArgument, "fusion: stream record counts differ");
  for (std::size_t i = 0; i < flow.size(); ++i)
    require(flow[i].clip_id == texture[i].clip_id && flow[i].label == texture[i].label,
            ErrorKind::kInvalidArgument,
            "fusion: records misaligned at position " + std::to_string(i) + " (clip " +
                std::to_string(flow[i].clip_id) + " vs " + std::to_string(texture[i].clip_id) + ")");
  const auto truth = labels_of(flow, split.test);

  if (fusion == Fusion::kConcat) {
    std::vector<FeatureRecord> fused(flow.size());
    for (std::size_t i = 0; i < flow.size(); ++i) {
      fused[i] = flow[i];
      fused[i].vector.insert(fused[i].vector.end(), texture[i].vector.begin(), texture[i].vector.end());
    }
    return classify_stream(fused, split, n_classes, cfg);
  }

  const auto ytrain = labels_of(flow, split.train);
  const auto cf = LinearClassifier::fit(rows_of(flow, split.train), ytrain, cfg);
  const auto ct = LinearClassifier::fit(rows_of(texture, split.train), ytrain, cfg);
  const auto pf = cf.predict_proba(rows_of(flow, split.test));
  const auto pt = ct.predict_proba(rows_of(texture, split.test));
  std::vector<int> pred;
  for (std::size_t i = 0; i < pf.size(); ++i) {
    std::vector<double> p(pf[i].size());
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = 0.5 * (pf[i][c] + pt[i][c]);
    pred.push_back(argmax(p));
  }
  return score(pred, truth, n_classes);
}

double motion_energy(const VideoTensor& video) {
  require(video.frames() >= 2, ErrorKind::kShape, "motion_energy: need at least 2 frames");
  const std::size_t per = video.size() / video.frames();
  const auto d = video.data();
  double sum = 0;
  for (std::size_t i = per; i < d.size(); ++i) sum += std::fabs(static_cast<double>(d[i]) - d[i - per]);
  return sum / static_cast<double>(d.size() - per);
}

std::vector<bool> consistent_pixels(const FlowVideo& flow, int t, double tolerance) {
  require_channels(flow, 2, "consistent_pixels flow");
  require(t >= 0 && t + 1 < flow.frames(), ErrorKind::kInvalidArgument, "consistent_pixels: frame out of range");
  const int h = flow.height(), w = flow.width();
  std::vector<bool> keep(static_cast<std::size_t>(h) * w, false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = flow.at(t, y, x, 0), v = flow.at(t, y, x, 1);
      const double du = flow.at(t + 1, y, x, 0) - u, dv = flow.at(t + 1, y, x, 1) - v;
      const double sx = x - u, sy = y - v;
      keep[static_cast<std::size_t>(y) * w + x] = std::hypot(du, dv) <= tolerance && sx >= 0 &&
                                                   sx <= w - 1 && sy >= 0 && sy <= h - 1;
    }
  }
  return keep;
}

double warp_consistency(const VideoTensor& video, const FlowVideo& flow, double tolerance) {
  require(video.same_grid(flow), ErrorKind::kShape,
          "warp_consistency: video " + video.shape_string() + " vs flow " + flow.shape_string());
  require(video.frames() >= 3, ErrorKind::kShape, "warp_consistency: need at least 3 frames");
  double sum = 0;
  long count = 0;
  for (int t = 0; t + 2 < video.frames(); ++t) {
    const auto keep = consistent_pixels(flow, t, tolerance);
    const Volume warped = warp_frame(video.frame(t), flow, t);
    for (int y = 0; y < video.height(); ++y) {
      for (int x = 0; x < video.width(); ++x) {
        if (!keep[static_cast<std::size_t>(y) * video.width() + x]) continue;
        for (int c = 0; c < video.channels(); ++c) {
          sum += std::fabs(static_cast<double>(warped.at(0, y, x, c)) - video.at(t + 1, y, x, c));
          ++count;
        }
      }
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> warp_baseline_errors(const VideoTensor& video, const FlowVideo& flow) {
  require(video.same_grid(flow), ErrorKind::kShape,
          "warp baseline: video " + video.shape_string() + " vs flow " + flow.shape_string());
  const VideoTensor warped = warp_video(video.frame(0), flow);
  const std::size_t per = video.size() / video.frames();
  std::vector<double> out;
  for (int t = 0; t < video.frames(); ++t) {
    double s = 0;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i)
      s += std::fabs(static_cast<double>(warped.data()[i]) - video.data()[i]);
    out.push_back(s / static_cast<double>(per));
  }
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  double sum = 0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    if (s.count == 0) s.min = s.max = v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
    ++s.count;
  }
  if (s.count) s.mean = sum / s.count;
  return s;
}

namespace {

nlohmann::json to_json(const Summary& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

nlohmann::json to_json(const StreamResult& r) { return {{"accuracy", r.accuracy}, {"confusion", r.confusion}}; }

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["n_classes"] = n_classes;
  j["chance"] = chance;
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  j["fusion"] = fusion;
  j["flow"] = eval::to_json(flow);
  j["texture"] = eval::to_json(texture);
  j["fused"] = eval::to_json(fused);
  j["motion_energy"] = {{"generated", eval::to_json(motion_energy_generated)},
                        {"real", eval::to_json(motion_energy_real)}};
  j["warp_consistency"] = {{"generated", eval::to_json(warp_consistency_generated)},
                           {"real", eval::to_json(warp_consistency_real)}};
  return j.dump(2) + "\n";
}

std::string confusion_csv(const std::vector<std::vector<int>>& counts) {
  std::ostringstream os;
  os << "truth\\predicted";
  for (std::size_t c = 0; c < counts.size(); ++c) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < counts.size(); ++r) {
    os << r;
    for (int v : counts[r]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace ftgan::eval

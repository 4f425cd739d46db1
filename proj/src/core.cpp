#include "ftgan/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ftgan {

namespace {

void require_grid(const Volume& a, const Volume& b, const char* what) {
  require(a.same_grid(b), ErrorKind::kShape,
          std::string(what) + ": grid mismatch " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace

Volume composite(const MaskVolume& mask, const Volume& foreground, const Volume& background) {
  require_channels(mask, 1, "composite mask");
  require_grid(mask, foreground, "composite foreground");
  require_grid(mask, background, "composite background");
  require(foreground.channels() == background.channels(), ErrorKind::kShape,
          "composite: foreground " + foreground.shape_string() + " vs background " +
              background.shape_string());

  Volume out(foreground.frames(), foreground.height(), foreground.width(), foreground.channels());
  const int c = foreground.channels();
  const auto m = mask.data();
  const auto f = foreground.data();
  const auto b = background.data();
  auto o = out.data();
  for (std::size_t p = 0; p < m.size(); ++p) {
    const float mp = m[p];
    for (int k = 0; k < c; ++k) {
      const std::size_t i = p * c + k;
      o[i] = mp * f[i] + (1.0f - mp) * b[i];
    }
  }
  return out;
}

FlowVideo flow_composite(const MaskVolume& mask, const FlowVideo& foreground_flow) {
  require_channels(mask, 1, "flow_composite mask");
  require_channels(foreground_flow, 2, "flow_composite flow");
  require_grid(mask, foreground_flow, "flow_composite");
  FlowVideo out(foreground_flow.frames(), foreground_flow.height(), foreground_flow.width(), 2);
  const auto m = mask.data();
  const auto f = foreground_flow.data();
  auto o = out.data();
  for (std::size_t p = 0; p < m.size(); ++p) {
    o[2 * p] = m[p] * f[2 * p];
    o[2 * p + 1] = m[p] * f[2 * p + 1];
  }
  return out;
}

VideoTensor replicate_background(const BackgroundImage& image, int frames) {
  require(frames >= 1, ErrorKind::kInvalidArgument,
          "replicate_background: frame count must be >= 1, got " + std::to_string(frames));
  require(image.frames() == 1, ErrorKind::kShape,
          "replicate_background: image must be a single frame, got " + image.shape_string());
  VideoTensor out(frames, image.height(), image.width(), image.channels());
  const auto src = image.data();
  auto dst = out.data();
  for (int t = 0; t < frames; ++t) std::copy(src.begin(), src.end(), dst.begin() + t * src.size());
  return out;
}

float sample_bilinear(const Volume& image, int frame, double x, double y, int channel) {
  x = std::clamp(x, 0.0, static_cast<double>(image.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(image.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1 - ax) * image.at(frame, y0, x0, channel) + ax * image.at(frame, y0, x1, channel);
  const double bot = (1 - ax) * image.at(frame, y1, x0, channel) + ax * image.at(frame, y1, x1, channel);
  return static_cast<float>((1 - ay) * top + ay * bot);
}

Volume warp_frame(const Volume& image, const FlowVideo& flow, int flow_frame) {
  require_channels(flow, 2, "warp_frame flow");
  require(image.frames() == 1 && image.height() == flow.height() && image.width() == flow.width(),
          ErrorKind::kShape,
          "warp_frame: image " + image.shape_string() + " vs flow " + flow.shape_string());
  require(flow_frame >= 0 && flow_frame < flow.frames(), ErrorKind::kInvalidArgument,
          "warp_frame: flow frame out of range");
  Volume out(1, image.height(), image.width(), image.channels());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double sx = x - flow.at(flow_frame, y, x, 0);
      const double sy = y - flow.at(flow_frame, y, x, 1);
      for (int c = 0; c < image.channels(); ++c) out.at(0, y, x, c) = sample_bilinear(image, 0, sx, sy, c);
    }
  }
  return out;
}

VideoTensor warp_video(const BackgroundImage& first_frame, const FlowVideo& flow) {
  require_channels(flow, 2, "warp_video flow");
  require(first_frame.frames() == 1, ErrorKind::kShape,
          "warp_video: first frame must be a single frame, got " + first_frame.shape_string());
  VideoTensor out(flow.frames(), first_frame.height(), first_frame.width(), first_frame.channels());
  Volume current = first_frame;
  const std::size_t per_frame = current.size();
  for (int t = 0; t < flow.frames(); ++t) {
    if (t > 0) current = warp_frame(current, flow, t - 1);
    std::copy(current.data().begin(), current.data().end(), out.data().begin() + t * per_frame);
  }
  return out;
}

std::array<double, 3> hsv_to_rgb(double hue_deg, double saturation, double value) {
  double h = std::fmod(hue_deg, 360.0);
  if (h < 0) h += 360.0;
  const double c = value * saturation;
  const double hp = h / 60.0;
  const double x = c * (1 - std::fabs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = value - c;
  return {r + m, g + m, b + m};
}

VideoTensor flow_to_color(const FlowVideo& flow, double max_magnitude) {
  require(max_magnitude > 0, ErrorKind::kInvalidArgument,
          "flow_to_color: max_magnitude must be positive");
  require_channels(flow, 2, "flow_to_color");
  VideoTensor out(flow.frames(), flow.height(), flow.width(), 3);
  for (int t = 0; t < flow.frames(); ++t) {
    for (int y = 0; y < flow.height(); ++y) {
      for (int x = 0; x < flow.width(); ++x) {
        const double u = flow.at(t, y, x, 0);
        const double v = flow.at(t, y, x, 1);
        const double sat = std::min(std::hypot(u, v) / max_magnitude, 1.0);
        const double hue = std::atan2(v, u) * 180.0 / std::numbers::pi;
        const auto rgb = hsv_to_rgb(hue, sat, 1.0);
        for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = static_cast<float>(2.0 * rgb[c] - 1.0);
      }
    }
  }
  return out;
}

}  // namespace ftgan

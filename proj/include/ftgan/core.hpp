#pragma once

#include <array>

#include "ftgan/volume.hpp"

namespace ftgan {

// Default divisor mapping pixel flow to the [-1, 1] range seen by networks.
inline constexpr double kDefaultFlowScale = 8.0;

// out = mask * foreground + (1 - mask) * background. foreground and background
// must share the mask's [T, H, W] grid and have equal channel counts.
Volume composite(const MaskVolume& mask, const Volume& foreground, const Volume& background);

// out = mask * foreground_flow. The background flow of a fixed camera is zero.
FlowVideo flow_composite(const MaskVolume& mask, const FlowVideo& foreground_flow);

// Tiles a single-frame image over `frames` time steps.
VideoTensor replicate_background(const BackgroundImage& image, int frames);

// Bilinear sample at continuous pixel coordinates, clamped to the border.
float sample_bilinear(const Volume& image, int frame, double x, double y, int channel);

// Backward warp of one frame: out(p) = image(p - flow(p)).
Volume warp_frame(const Volume& image, const FlowVideo& flow, int flow_frame);

// Warping baseline: frame 0 is first_frame, frame t+1 is frame t backward
// warped by flow frame t. Output has flow.frames() frames.
VideoTensor warp_video(const BackgroundImage& first_frame, const FlowVideo& flow);

// HSV wheel: hue is flow direction, saturation is magnitude / max_magnitude
// clipped to 1, value is 1. Zero flow is white. Output RGB in [-1, 1].
VideoTensor flow_to_color(const FlowVideo& flow, double max_magnitude);

// HSV (hue in degrees, s and v in [0, 1]) to RGB in [0, 1].
std::array<double, 3> hsv_to_rgb(double hue_deg, double saturation, double value);

}  // namespace ftgan

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ftgan/error.hpp"

namespace ftgan {

// Channels-last float volume [frames, height, width, channels]. The channel
// count distinguishes the domain roles: 3 for RGB video, 2 for flow (u, v in
// pixels/frame), 1 for masks. Images are volumes with a single frame.
class Volume {
 public:
  Volume() = default;
  Volume(int frames, int height, int width, int channels, float fill = 0.0f);

  int frames() const noexcept { return t_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int channels() const noexcept { return c_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int t, int y, int x, int c = 0) const noexcept {
    return ((static_cast<std::size_t>(t) * h_ + y) * w_ + x) * c_ + c;
  }
  float& at(int t, int y, int x, int c = 0) noexcept { return data_[index(t, y, x, c)]; }
  float at(int t, int y, int x, int c = 0) const noexcept { return data_[index(t, y, x, c)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  // One frame as a single-frame volume.
  Volume frame(int t) const;
  // Frames [begin, begin + count).
  Volume frames_range(int begin, int count) const;

  bool same_grid(const Volume& o) const noexcept {
    return t_ == o.t_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const;

  friend bool operator==(const Volume& a, const Volume& b) = default;

 private:
  int t_ = 0, h_ = 0, w_ = 0, c_ = 0;
  std::vector<float> data_;
};

using VideoTensor = Volume;      // [T, H, W, 3], values in [-1, 1]
using FlowVideo = Volume;        // [T, H, W, 2], pixels per frame
using MaskVolume = Volume;       // [T, H, W, 1], values in [0, 1]
using BackgroundImage = Volume;  // [1, H, W, 3]

void require_channels(const Volume& v, int channels, const char* what);

}  // namespace ftgan

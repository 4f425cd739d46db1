#include "ftgan/volume.hpp"

#include <algorithm>

namespace ftgan {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kStageMismatch: return "stage-mismatch";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kUnknownTensor: return "unknown-tensor";
  }
  return "unknown";
}

Volume::Volume(int frames, int height, int width, int channels, float fill)
    : t_(frames), h_(height), w_(width), c_(channels) {
  require(frames >= 1 && height >= 1 && width >= 1 && channels >= 1, ErrorKind::kShape,
          "volume dimensions must be positive, got " + shape_string());
  data_.assign(static_cast<std::size_t>(frames) * height * width * channels, fill);
}

Volume Volume::frame(int t) const { return frames_range(t, 1); }

Volume Volume::frames_range(int begin, int count) const {
  require(begin >= 0 && count >= 1 && begin + count <= t_, ErrorKind::kShape,
          "frame range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") outside volume " + shape_string());
  Volume out(count, h_, w_, c_);
  const std::size_t per_frame = static_cast<std::size_t>(h_) * w_ * c_;
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * per_frame), count * per_frame,
              out.data_.begin());
  return out;
}

std::string Volume::shape_string() const {
  return "[" + std::to_string(t_) + ", " + std::to_string(h_) + ", " + std::to_string(w_) + ", " +
         std::to_string(c_) + "]";
}

void require_channels(const Volume& v, int channels, const char* what) {
  require(v.channels() == channels, ErrorKind::kShape,
          std::string(what) + ": expected " + std::to_string(channels) + " channels, got " +
              v.shape_string());
}

}  // namespace ftgan

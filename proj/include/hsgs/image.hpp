#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "hsgs/common.hpp"

namespace hsgs {

// Row-major interleaved image, values in [0,1] for color data.
struct Image {
  int width = 0, height = 0, channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {
    require(w > 0 && h > 0 && (c == 1 || c == 3), "image: bad dimensions");
  }

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }

  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
};

struct Mask {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // nonzero = valid

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int y, int x) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }

  size_t count_valid() const {
    size_t n = 0;
    for (uint8_t v : data) n += v != 0;
    return n;
  }
};

inline void require_same_shape(const Image& a, const Image& b, const char* who) {
  require(a.same_shape(b), std::string(who) + ": image dimension mismatch");
}

// Copies target values into masked-out pixels of `img` so that windowed
// metrics see zero error there.
inline Image substitute_masked(const Image& img, const Image& target, const Mask& mask) {
  require_same_shape(img, target, "substitute_masked");
  require(mask.width == img.width && mask.height == img.height,
          "substitute_masked: mask dimension mismatch");
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (!mask.at(y, x))
        for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = target.at(y, x, c);
  return out;
}

// Output of both renderers. depth is +infinity wherever nothing was drawn;
// mask marks pixels that received any contribution.
struct RenderedImage {
  Image rgb;
  std::vector<double> depth;
  Mask mask;

  RenderedImage() = default;
  RenderedImage(int w, int h)
      : rgb(w, h, 3),
        depth(static_cast<size_t>(w) * h, std::numeric_limits<double>::infinity()),
        mask(w, h) {}
};

inline uint8_t to_byte(double v) {
  double s = v * 255.0 + 0.5;
  if (s < 0) s = 0;
  if (s > 255) s = 255;
  return static_cast<uint8_t>(s);
}

inline double from_byte(uint8_t b) { return b / 255.0; }

}  // namespace hsgs

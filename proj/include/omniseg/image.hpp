#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace omniseg {

/// RGB image stored as interleaved bytes, the on-disk representation.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // height*width*3, row-major

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(std::size_t(h) * w * 3, 0) {}

  std::uint8_t& at(int r, int c, int ch) { return rgb[(std::size_t(r) * width + c) * 3 + ch]; }
  std::uint8_t at(int r, int c, int ch) const { return rgb[(std::size_t(r) * width + c) * 3 + ch]; }

  bool operator==(const Image&) const = default;
};

/// Unit-interval RGB image, the representation the model and the augmenters
/// operate on.
struct FloatImage {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;  // height*width*3, row-major

  FloatImage() = default;
  FloatImage(int h, int w) : height(h), width(w), rgb(std::size_t(h) * w * 3, 0.0) {}

  double& at(int r, int c, int ch) { return rgb[(std::size_t(r) * width + c) * 3 + ch]; }
  double at(int r, int c, int ch) const { return rgb[(std::size_t(r) * width + c) * 3 + ch]; }

  bool operator==(const FloatImage&) const = default;
};

inline FloatImage to_float(const Image& img) {
  FloatImage out(img.height, img.width);
  constexpr double kInv255 = 1.0 / 255.0;
  for (std::size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = img.rgb[i] * kInv255;
  return out;
}

}  // namespace omniseg

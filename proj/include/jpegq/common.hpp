// Copyright (c) the jpegq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jpegq {

inline constexpr const char* kVersion = "0.1.0";

// All recoverable failures (bad input, malformed streams, invalid
// configuration) are reported as this exception type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Layout { k444, k420 };

inline const char* layout_name(Layout layout) {
  return layout == Layout::k420 ? "420" : "444";
}

inline Layout parse_layout(const std::string& s) {
  if (s == "420") return Layout::k420;
  if (s == "444") return Layout::k444;
  throw Error("unknown layout '" + s + "' (expected 420 or 444)");
}

inline constexpr int kBlockSize = 8;
inline constexpr int kBlockArea = 64;

// Natural (row-major) index of the i-th coefficient in zigzag scan order.
inline constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// A luma/chroma pair of 8x8 tables stored in natural row-major order.
// TablePair<double> is the optimization variable; TablePair<int> is what
// the codec actually writes into DQT segments.
template <typename T>
struct TablePair {
  std::array<T, 64> luma{};
  std::array<T, 64> chroma{};

  std::array<T, 64>& operator[](int channel_class) {
    return channel_class == 0 ? luma : chroma;
  }
  const std::array<T, 64>& operator[](int channel_class) const {
    return channel_class == 0 ? luma : chroma;
  }
  bool operator==(const TablePair&) const = default;
};

using QuantTableParams = TablePair<double>;
using IntQuantTablePair = TablePair<int>;

// ITU-T T.81 Annex K.1 example tables (natural order).
inline constexpr std::array<int, 64> kAnnexKLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

inline constexpr std::array<int, 64> kAnnexKChroma = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

inline QuantTableParams default_tables() {
  QuantTableParams p;
  for (int k = 0; k < 64; ++k) {
    p.luma[k] = kAnnexKLuma[k];
    p.chroma[k] = kAnnexKChroma[k];
  }
  return p;
}

// Interleaved 8-bit RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), samples(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return samples[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  bool operator==(const RgbImage&) const = default;
};

// The codec requires at least one 4:2:0 MCU.
inline void require_codec_size(const RgbImage& img) {
  if (img.width < 16 || img.height < 16) {
    throw Error("image must be at least 16x16, got " +
                std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  if (img.samples.size() != img.pixel_count() * 3) {
    throw Error("RgbImage sample buffer does not match its dimensions");
  }
}

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  double at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

// Real-valued three-channel image, planar. Used for the differentiable
// reconstruction and for gradients with respect to it.
struct ImageF {
  int width = 0;
  int height = 0;
  std::array<Plane, 3> planes;

  ImageF() = default;
  ImageF(int w, int h, double fill = 0.0) : width(w), height(h) {
    for (auto& p : planes) p = Plane(w, h, fill);
  }
  double& at(int x, int y, int c) { return planes[c].at(x, y); }
  double at(int x, int y, int c) const { return planes[c].at(x, y); }
};

inline ImageF to_real(const RgbImage& img) {
  ImageF out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
  return out;
}

// Clamps to [0,255] and rounds half away from zero.
inline std::uint8_t to_u8(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::round(v));
}

inline RgbImage to_u8(const ImageF& img) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_u8(img.at(x, y, c));
  return out;
}

struct YcbcrImage {
  Layout layout = Layout::k444;
  Plane y;
  Plane cb;
  Plane cr;

  Plane& plane(int c) { return c == 0 ? y : (c == 1 ? cb : cr); }
  const Plane& plane(int c) const { return c == 0 ? y : (c == 1 ? cb : cr); }
  int width() const { return y.width; }
  int height() const { return y.height; }
};

inline int blocks_for(int extent) { return (extent + kBlockSize - 1) / kBlockSize; }

// DCT coefficients of one color component, 64 per block in natural order,
// blocks in raster order over the 8-padded plane.
template <typename T>
struct CoeffChannel {
  int plane_width = 0;
  int plane_height = 0;
  int blocks_x = 0;
  int blocks_y = 0;
  std::vector<T> coeffs;

  CoeffChannel() = default;
  CoeffChannel(int pw, int ph)
      : plane_width(pw),
        plane_height(ph),
        blocks_x(blocks_for(pw)),
        blocks_y(blocks_for(ph)),
        coeffs(static_cast<std::size_t>(blocks_x) * blocks_y * kBlockArea, T{}) {}

  int block_count() const { return blocks_x * blocks_y; }
  std::span<T, 64> block(int i) {
    return std::span<T, 64>(coeffs.data() + static_cast<std::size_t>(i) * 64, 64);
  }
  std::span<const T, 64> block(int i) const {
    return std::span<const T, 64>(coeffs.data() + static_cast<std::size_t>(i) * 64, 64);
  }
  bool same_shape(const CoeffChannel& o) const {
    return plane_width == o.plane_width && plane_height == o.plane_height &&
           coeffs.size() == o.coeffs.size();
  }
  bool operator==(const CoeffChannel&) const = default;
};

// Channel 0 is Y, 1 is Cb, 2 is Cr.
template <typename T>
struct CoeffPlanes {
  Layout layout = Layout::k444;
  int image_width = 0;
  int image_height = 0;
  std::array<CoeffChannel<T>, 3> channels;

  bool operator==(const CoeffPlanes&) const = default;

  template <typename U>
  CoeffPlanes<U> zeros_like() const {
    CoeffPlanes<U> out;
    out.layout = layout;
    out.image_width = image_width;
    out.image_height = image_height;
    for (int c = 0; c < 3; ++c)
      out.channels[c] = CoeffChannel<U>(channels[c].plane_width, channels[c].plane_height);
    return out;
  }
  bool same_shape(const CoeffPlanes& o) const {
    for (int c = 0; c < 3; ++c)
      if (!channels[c].same_shape(o.channels[c])) return false;
    return true;
  }
};

// 0 for luma, 1 for both chroma channels.
inline constexpr int table_class(int channel) { return channel == 0 ? 0 : 1; }

}  // namespace jpegq

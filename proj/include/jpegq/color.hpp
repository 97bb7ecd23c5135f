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

#include <algorithm>
#include <array>

#include "jpegq/common.hpp"

namespace jpegq {

namespace color_detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr Mat3 kRgbToYcc = {{{0.299, 0.587, 0.114},
                                    {-0.168736, -0.331264, 0.5},
                                    {0.5, -0.418688, -0.081312}}};

inline constexpr Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

// Exact inverse of the forward matrix, so that the real-valued round trip
// is the identity up to floating-point error.
inline constexpr Mat3 kYccToRgb = invert(kRgbToYcc);

inline constexpr std::array<double, 3> kOffset = {0.0, 128.0, 128.0};

}  // namespace color_detail

inline YcbcrImage ycbcr_from_real(const ImageF& rgb) {
  using namespace color_detail;
  YcbcrImage out;
  out.layout = Layout::k444;
  for (int c = 0; c < 3; ++c) out.plane(c) = Plane(rgb.width, rgb.height);
  const std::size_t n = static_cast<std::size_t>(rgb.width) * rgb.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rgb.planes[0].data[i];
    const double g = rgb.planes[1].data[i];
    const double b = rgb.planes[2].data[i];
    for (int c = 0; c < 3; ++c) {
      out.plane(c).data[i] =
          kRgbToYcc[c][0] * r + kRgbToYcc[c][1] * g + kRgbToYcc[c][2] * b + kOffset[c];
    }
  }
  return out;
}

inline YcbcrImage rgb_to_ycbcr(const RgbImage& img) { return ycbcr_from_real(to_real(img)); }

// Inverse color map without any clamping or rounding.
inline ImageF real_from_ycbcr(const YcbcrImage& ycc) {
  using namespace color_detail;
  if (ycc.layout != Layout::k444) throw Error("ycbcr_to_rgb requires a 4:4:4 image");
  ImageF out(ycc.width(), ycc.height());
  const std::size_t n = ycc.y.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v[3] = {ycc.y.data[i], ycc.cb.data[i] - 128.0, ycc.cr.data[i] - 128.0};
    for (int c = 0; c < 3; ++c) {
      out.planes[c].data[i] = kYccToRgb[c][0] * v[0] + kYccToRgb[c][1] * v[1] + kYccToRgb[c][2] * v[2];
    }
  }
  return out;
}

inline RgbImage ycbcr_to_rgb(const YcbcrImage& ycc) { return to_u8(real_from_ycbcr(ycc)); }

// Adjoint of real_from_ycbcr: maps a gradient on RGB to a gradient on YCbCr.
inline YcbcrImage real_from_ycbcr_adjoint(const ImageF& grad_rgb) {
  using namespace color_detail;
  YcbcrImage out;
  out.layout = Layout::k444;
  for (int c = 0; c < 3; ++c) out.plane(c) = Plane(grad_rgb.width, grad_rgb.height);
  const std::size_t n = static_cast<std::size_t>(grad_rgb.width) * grad_rgb.height;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += kYccToRgb[c][j] * grad_rgb.planes[c].data[i];
      out.plane(j).data[i] = acc;
    }
  }
  return out;
}

inline int chroma_extent(int luma_extent) { return (luma_extent + 1) / 2; }

// 2x2 average pooling; edge windows average only the samples that exist.
inline Plane downsample_plane(const Plane& in) {
  Plane out(chroma_extent(in.width), chroma_extent(in.height));
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx, sy = 2 * y + dy;
          if (sx < in.width && sy < in.height) {
            sum += in.at(sx, sy);
            ++count;
          }
        }
      }
      out.at(x, y) = sum / count;
    }
  }
  return out;
}

// Adjoint of downsample_plane onto a full-resolution plane of the given size.
inline Plane downsample_plane_adjoint(const Plane& grad, int full_width, int full_height) {
  Plane out(full_width, full_height);
  for (int y = 0; y < full_height; ++y) {
    for (int x = 0; x < full_width; ++x) {
      const int cx = x / 2, cy = y / 2;
      const int wx = std::min(2, full_width - 2 * cx);
      const int wy = std::min(2, full_height - 2 * cy);
      out.at(x, y) = grad.at(cx, cy) / (wx * wy);
    }
  }
  return out;
}

namespace color_detail {

// Bilinear taps for full-resolution index `i` when chroma sample j is
// centered at full-resolution coordinate 2j + 0.5. Clamped at edges.
struct Taps {
  int lo;
  int hi;
  double w_hi;
};

inline Taps upsample_taps(int i, int chroma_n) {
  double pos = (i - 0.5) / 2.0;
  pos = std::clamp(pos, 0.0, static_cast<double>(chroma_n - 1));
  const int lo = static_cast<int>(std::floor(pos));
  const int hi = std::min(lo + 1, chroma_n - 1);
  return {lo, hi, pos - lo};
}

}  // namespace color_detail

inline Plane upsample_plane(const Plane& in, int full_width, int full_height) {
  using color_detail::upsample_taps;
  Plane out(full_width, full_height);
  for (int y = 0; y < full_height; ++y) {
    const auto ty = upsample_taps(y, in.height);
    for (int x = 0; x < full_width; ++x) {
      const auto tx = upsample_taps(x, in.width);
      const double top = (1.0 - tx.w_hi) * in.at(tx.lo, ty.lo) + tx.w_hi * in.at(tx.hi, ty.lo);
      const double bot = (1.0 - tx.w_hi) * in.at(tx.lo, ty.hi) + tx.w_hi * in.at(tx.hi, ty.hi);
      out.at(x, y) = (1.0 - ty.w_hi) * top + ty.w_hi * bot;
    }
  }
  return out;
}

inline Plane upsample_plane_adjoint(const Plane& grad, int chroma_width, int chroma_height) {
  using color_detail::upsample_taps;
  Plane out(chroma_width, chroma_height);
  for (int y = 0; y < grad.height; ++y) {
    const auto ty = upsample_taps(y, chroma_height);
    for (int x = 0; x < grad.width; ++x) {
      const auto tx = upsample_taps(x, chroma_width);
      const double g = grad.at(x, y);
      out.at(tx.lo, ty.lo) += g * (1.0 - tx.w_hi) * (1.0 - ty.w_hi);
      out.at(tx.hi, ty.lo) += g * tx.w_hi * (1.0 - ty.w_hi);
      out.at(tx.lo, ty.hi) += g * (1.0 - tx.w_hi) * ty.w_hi;
      out.at(tx.hi, ty.hi) += g * tx.w_hi * ty.w_hi;
    }
  }
  return out;
}

inline YcbcrImage downsample_420(const YcbcrImage& img) {
  if (img.layout != Layout::k444) throw Error("downsample_420 requires a 4:4:4 image");
  YcbcrImage out;
  out.layout = Layout::k420;
  out.y = img.y;
  out.cb = downsample_plane(img.cb);
  out.cr = downsample_plane(img.cr);
  return out;
}

inline YcbcrImage upsample_420(const YcbcrImage& img) {
  if (img.layout != Layout::k420) throw Error("upsample_420 requires a 4:2:0 image");
  YcbcrImage out;
  out.layout = Layout::k444;
  out.y = img.y;
  out.cb = upsample_plane(img.cb, img.y.width, img.y.height);
  out.cr = upsample_plane(img.cr, img.y.width, img.y.height);
  return out;
}

}  // namespace jpegq

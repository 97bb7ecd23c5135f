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
#include <cmath>
#include <numbers>
#include <span>

#include "jpegq/common.hpp"

namespace jpegq {

namespace dct_detail {

// basis[u][x] = C(u)/2 * cos((2x+1) u pi / 16); orthonormal rows.
inline const std::array<std::array<double, 8>, 8>& basis() {
  static const auto table = [] {
    std::array<std::array<double, 8>, 8> m{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
      for (int x = 0; x < 8; ++x)
        m[u][x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return m;
  }();
  return table;
}

}  // namespace dct_detail

// 2-D type-II DCT of one block, JPEG normalization (orthonormal).
// Index layout is row * 8 + column for both samples and coefficients.
inline void fdct_block(std::span<const double, 64> in, std::span<double, 64> out) {
  const auto& a = dct_detail::basis();
  std::array<double, 64> tmp{};
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += a[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += a[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
}

inline void idct_block(std::span<const double, 64> in, std::span<double, 64> out) {
  const auto& a = dct_detail::basis();
  std::array<double, 64> tmp{};
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += a[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += a[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
}

// Level-shifts by -128, pads to a multiple of 8 by edge replication and
// transforms every block.
inline CoeffChannel<double> fdct_plane(const Plane& plane) {
  CoeffChannel<double> ch(plane.width, plane.height);
  std::array<double, 64> block{};
  for (int by = 0; by < ch.blocks_y; ++by) {
    for (int bx = 0; bx < ch.blocks_x; ++bx) {
      for (int y = 0; y < 8; ++y) {
        const int sy = std::min(by * 8 + y, plane.height - 1);
        for (int x = 0; x < 8; ++x) {
          const int sx = std::min(bx * 8 + x, plane.width - 1);
          block[y * 8 + x] = plane.at(sx, sy) - 128.0;
        }
      }
      fdct_block(block, ch.block(by * ch.blocks_x + bx));
    }
  }
  return ch;
}

inline Plane idct_plane(const CoeffChannel<double>& ch) {
  Plane out(ch.plane_width, ch.plane_height);
  std::array<double, 64> block{};
  for (int by = 0; by < ch.blocks_y; ++by) {
    for (int bx = 0; bx < ch.blocks_x; ++bx) {
      idct_block(ch.block(by * ch.blocks_x + bx), block);
      for (int y = 0; y < 8; ++y) {
        const int py = by * 8 + y;
        if (py >= ch.plane_height) break;
        for (int x = 0; x < 8; ++x) {
          const int px = bx * 8 + x;
          if (px >= ch.plane_width) break;
          out.at(px, py) = block[y * 8 + x] + 128.0;
        }
      }
    }
  }
  return out;
}

// Adjoint of idct_plane: a gradient on the cropped plane becomes a gradient
// on the coefficients. The IDCT is orthonormal, so its adjoint is the FDCT.
inline CoeffChannel<double> idct_plane_adjoint(const Plane& grad) {
  CoeffChannel<double> ch(grad.width, grad.height);
  std::array<double, 64> block{};
  for (int by = 0; by < ch.blocks_y; ++by) {
    for (int bx = 0; bx < ch.blocks_x; ++bx) {
      for (int y = 0; y < 8; ++y) {
        const int py = by * 8 + y;
        for (int x = 0; x < 8; ++x) {
          const int px = bx * 8 + x;
          block[y * 8 + x] = (px < grad.width && py < grad.height) ? grad.at(px, py) : 0.0;
        }
      }
      fdct_block(block, ch.block(by * ch.blocks_x + bx));
    }
  }
  return ch;
}

inline CoeffPlanes<double> fdct_image(const YcbcrImage& img) {
  CoeffPlanes<double> out;
  out.layout = img.layout;
  out.image_width = img.width();
  out.image_height = img.height();
  for (int c = 0; c < 3; ++c) out.channels[c] = fdct_plane(img.plane(c));
  return out;
}

inline YcbcrImage idct_image(const CoeffPlanes<double>& coeffs) {
  YcbcrImage out;
  out.layout = coeffs.layout;
  for (int c = 0; c < 3; ++c) out.plane(c) = idct_plane(coeffs.channels[c]);
  return out;
}

}  // namespace jpegq

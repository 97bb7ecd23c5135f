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
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "jpegq/common.hpp"
#include "jpegq/taskloss.hpp"

namespace jpegq::synth {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Bilinearly interpolated lattice noise with the given lattice spacing.
inline Plane value_noise(int w, int h, double spacing, std::mt19937_64& rng) {
  const int gw = static_cast<int>(std::ceil(w / spacing)) + 2;
  const int gh = static_cast<int>(std::ceil(h / spacing)) + 2;
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& g : grid) g = n01(rng);
  std::uniform_real_distribution<double> phase(0.0, 1.0);
  const double ox = phase(rng), oy = phase(rng);
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    const double gy = y / spacing + oy;
    const int iy = static_cast<int>(gy);
    const double fy = gy - iy;
    for (int x = 0; x < w; ++x) {
      const double gx = x / spacing + ox;
      const int ix = static_cast<int>(gx);
      const double fx = gx - ix;
      auto at = [&](int a, int b) { return grid[static_cast<std::size_t>(b) * gw + a]; };
      const double top = (1 - fx) * at(ix, iy) + fx * at(ix + 1, iy);
      const double bot = (1 - fx) * at(ix, iy + 1) + fx * at(ix + 1, iy + 1);
      out.at(x, y) = (1 - fy) * top + fy * bot;
    }
  }
  return out;
}

// Power-law multi-octave noise: amplitude grows with spacing^roughness.
inline Plane fractal_noise(int w, int h, double roughness, double finest, std::mt19937_64& rng) {
  Plane out(w, h);
  const double coarsest = std::max(w, h);
  double norm = 0.0;
  for (double s = finest; s <= coarsest * 1.01; s *= 2.0) {
    const double amp = std::pow(s / coarsest, roughness);
    norm += amp * amp;
    const Plane layer = value_noise(w, h, s, rng);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += amp * layer.data[i];
  }
  const double inv = 1.0 / std::sqrt(norm);
  for (double& v : out.data) v *= inv;
  return out;
}

// A natural-looking test image: fractal luminance with locally varying
// detail, flat-colored occluding shapes with hard edges, smooth chroma and
// mild sensor noise. Different seeds give a wide spread of coding costs.
inline RgbImage natural_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double roughness = 0.4 + 0.9 * u01(rng);
  const double contrast = 25.0 + 45.0 * u01(rng);
  const double mean = 70.0 + 110.0 * u01(rng);
  const double finest = u01(rng) < 0.5 ? 1.0 : 2.0;
  Plane lum = fractal_noise(w, h, roughness, finest, rng);
  Plane detail_mask = value_noise(w, h, std::max(w, h) / 2.0, rng);
  Plane fine = value_noise(w, h, 1.5, rng);
  const double fine_amp = 12.0 * u01(rng);
  Plane cb = fractal_noise(w, h, 1.2, 4.0, rng);
  Plane cr = fractal_noise(w, h, 1.2, 4.0, rng);
  const double chroma_amp = 8.0 + 22.0 * u01(rng);
  const double tint_b = 20.0 * (u01(rng) - 0.5), tint_r = 20.0 * (u01(rng) - 0.5);

  ImageF img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = 1.0 / (1.0 + std::exp(-2.0 * detail_mask.at(x, y)));
      const double Y = mean + contrast * lum.at(x, y) + m * fine_amp * fine.at(x, y);
      const double B = tint_b + chroma_amp * cb.at(x, y);
      const double R = tint_r + chroma_amp * cr.at(x, y);
      img.at(x, y, 0) = Y + 1.402 * R;
      img.at(x, y, 1) = Y - 0.344136 * B - 0.714136 * R;
      img.at(x, y, 2) = Y + 1.772 * B;
    }

  const int shapes = static_cast<int>(u01(rng) * 6.0);
  for (int s = 0; s < shapes; ++s) {
    const double cx = u01(rng) * w, cy = u01(rng) * h;
    const double rx = (0.08 + 0.3 * u01(rng)) * w, ry = (0.08 + 0.3 * u01(rng)) * h;
    const bool ellipse = u01(rng) < 0.6;
    const std::array<double, 3> col = {255 * u01(rng), 255 * u01(rng), 255 * u01(rng)};
    const double shade = 20.0 * (u01(rng) - 0.5);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c] + shade * dy;
      }
  }

  std::normal_distribution<double> noise(0.0, 1.0 + 2.0 * u01(rng));
  for (auto& p : img.planes)
    for (double& v : p.data) v += noise(rng);
  return to_u8(img);
}

inline std::vector<RgbImage> natural_corpus(int count, int w, int h, std::uint64_t seed) {
  std::vector<RgbImage> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(natural_image(w, h, mix_seed(seed, i)));
  return out;
}

inline constexpr int kPatternClasses = 4;

// Sign of the class pattern on the 8x8 block grid: horizontal stripes,
// vertical stripes, checkerboard, left/right halves. Mutually orthogonal.
inline double pattern_sign(int label, int bx, int by, int grid_x) {
  switch (label) {
    case 0: return (by % 2) ? -1.0 : 1.0;
    case 1: return (bx % 2) ? -1.0 : 1.0;
    case 2: return ((bx + by) % 2) ? -1.0 : 1.0;
    default: return bx < grid_x / 2 ? 1.0 : -1.0;
  }
}

// Textured image whose class is carried by a weak block-scale luminance
// pattern; coarse quantization of the block means erases it.
inline LabeledImage pattern_image(int size, int label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double level = 90.0 + 70.0 * u01(rng);
  const double amplitude = 4.0 + 4.0 * u01(rng);
  const double texture = 10.0 + 15.0 * u01(rng);
  const double tint_b = 16.0 * (u01(rng) - 0.5), tint_r = 16.0 * (u01(rng) - 0.5);
  const int grid_x = blocks_for(size);
  Plane fine = value_noise(size, size, 1.0 + u01(rng), rng);
  std::normal_distribution<double> n01(0.0, 1.0);
  ImageF img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double Y = level + amplitude * pattern_sign(label, x / 8, y / 8, grid_x) +
                       texture * (0.7 * fine.at(x, y) + 0.7 * n01(rng));
      img.at(x, y, 0) = Y + 1.402 * tint_r;
      img.at(x, y, 1) = Y - 0.344136 * tint_b - 0.714136 * tint_r;
      img.at(x, y, 2) = Y + 1.772 * tint_b;
    }
  return {to_u8(img), label};
}

inline std::vector<LabeledImage> pattern_corpus(int count, int size, std::uint64_t seed) {
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(pattern_image(size, i % kPatternClasses, mix_seed(seed, i)));
  return out;
}

}  // namespace jpegq::synth

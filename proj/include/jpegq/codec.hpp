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

#include <cmath>
#include <limits>
#include <vector>

#include "jpegq/color.hpp"
#include "jpegq/common.hpp"
#include "jpegq/dct.hpp"
#include "jpegq/huffman.hpp"
#include "jpegq/jfif.hpp"
#include "jpegq/quant.hpp"

namespace jpegq {

// PSNR written to CSV and averaged in sweeps when the MSE is zero.
inline constexpr double kPsnrCap = 99.0;

inline double mse(const RgbImage& a, const RgbImage& b) {
  if (a.width != b.width || a.height != b.height) throw Error("PSNR of images with different sizes");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = static_cast<double>(a.samples[i]) - b.samples[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.samples.size());
}

// 10 log10(255^2 / MSE) over all RGB samples; +inf for identical images.
inline double psnr(const RgbImage& a, const RgbImage& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

inline double capped_psnr(double v) { return std::min(v, kPsnrCap); }

// Forward transform of an 8-bit image up to (unquantized) coefficients.
inline CoeffPlanes<double> analyze(const RgbImage& x, Layout layout) {
  require_codec_size(x);
  auto ycc = rgb_to_ycbcr(x);
  if (layout == Layout::k420) ycc = downsample_420(ycc);
  return fdct_image(ycc);
}

// Real-valued reconstruction before the final clamp and rounding.
inline ImageF synthesize_real(const CoeffPlanes<double>& dequantized) {
  auto ycc = idct_image(dequantized);
  if (ycc.layout == Layout::k420) ycc = upsample_420(ycc);
  return real_from_ycbcr(ycc);
}

inline ImageF reconstruct_real(const CoeffPlanes<int>& q, const IntQuantTablePair& t) {
  return synthesize_real(dequantize(q, t));
}

inline RgbImage reconstruct(const CoeffPlanes<int>& q, const IntQuantTablePair& t) {
  return to_u8(reconstruct_real(q, t));
}

struct Measurement {
  double bpp_actual = 0.0;
  double psnr = 0.0;  // may be +inf
  std::vector<std::uint8_t> bytes;
  EntropyStats stats;
  CoeffPlanes<int> qcoeffs;
  RgbImage reconstruction;
};

inline Measurement encode_measure(const RgbImage& x, const IntQuantTablePair& tables, Layout layout) {
  Measurement m;
  m.qcoeffs = quantize_hard(analyze(x, layout), tables);
  auto bs = write_jfif(tables, m.qcoeffs);
  m.bytes = std::move(bs.bytes);
  m.stats = bs.stats;
  m.bpp_actual = 8.0 * static_cast<double>(m.bytes.size()) / static_cast<double>(x.pixel_count());
  m.reconstruction = reconstruct(m.qcoeffs, tables);
  m.psnr = psnr(x, m.reconstruction);
  return m;
}

inline Measurement encode_measure(const RgbImage& x, const QuantTableParams& p, int q, Layout layout) {
  return encode_measure(x, scale_table(p, q), layout);
}

}  // namespace jpegq

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
#include <optional>

#include "jpegq/codec.hpp"
#include "jpegq/color.hpp"
#include "jpegq/common.hpp"
#include "jpegq/dct.hpp"
#include "jpegq/quant.hpp"

namespace jpegq {

enum class RoundingMode { kSoft, kHard };

struct SoftRound {
  double value;
  double derivative;
};

// round(x) + (x - round(x))^3, with half-away-from-zero rounding inside.
inline SoftRound soft_round(double x) {
  const double r = std::round(x);
  const double f = x - r;
  return {r + f * f * f, 3.0 * f * f};
}

// Real-valued tables actually applied at quality q: p * s(q) / 100, floored
// at 1 but neither rounded nor clipped above.
struct EffectiveTables {
  QuantTableParams values;
  TablePair<bool> floored;
  double scale = 1.0;  // d(value)/d(p) where not floored
};

inline EffectiveTables effective_tables(const QuantTableParams& p, int q) {
  EffectiveTables e;
  e.scale = quality_scale(q) / 100.0;
  for (int cls = 0; cls < 2; ++cls) {
    for (int k = 0; k < 64; ++k) {
      const double v = p[cls][k] * e.scale;
      e.floored[cls][k] = v < 1.0;
      e.values[cls][k] = v < 1.0 ? 1.0 : v;
    }
  }
  return e;
}

inline QuantTableParams effective_table(const QuantTableParams& p, int q) {
  return effective_tables(p, q).values;
}

// Everything backward() needs from one forward pass.
struct ForwardTape {
  RoundingMode mode = RoundingMode::kSoft;
  int quality = 50;
  CoeffPlanes<double> coeffs;      // pre-quantization DCT coefficients d
  EffectiveTables tables;
  CoeffPlanes<double> normalized;  // d / t
  CoeffPlanes<double> quantized;   // soft_round(d / t) or round(d / t)
  ImageF unclamped;                // reconstruction before the [0,255] clamp
};

struct ProxyOutput {
  ImageF reconstruction;  // clamped to [0,255], not rounded
  ForwardTape tape;

  const CoeffPlanes<double>& quantized() const { return tape.quantized; }
  const CoeffPlanes<double>& normalized() const { return tape.normalized; }
};

// Color conversion, optional subsampling and DCT; independent of the tables,
// so training loops compute it once per image.
inline CoeffPlanes<double> analyze_real(const ImageF& x, Layout layout) {
  auto ycc = ycbcr_from_real(x);
  if (layout == Layout::k420) ycc = downsample_420(ycc);
  return fdct_image(ycc);
}

inline ProxyOutput forward(const CoeffPlanes<double>& coeffs, const QuantTableParams& p, int q,
                           RoundingMode mode) {
  ProxyOutput out;
  auto& tape = out.tape;
  tape.mode = mode;
  tape.quality = q;
  tape.coeffs = coeffs;
  tape.tables = effective_tables(p, q);
  tape.normalized = coeffs.zeros_like<double>();
  tape.quantized = coeffs.zeros_like<double>();
  auto dequantized = coeffs.zeros_like<double>();
  for (int c = 0; c < 3; ++c) {
    const auto& t = tape.tables.values[table_class(c)];
    const auto& d = coeffs.channels[c].coeffs;
    auto& u = tape.normalized.channels[c].coeffs;
    auto& v = tape.quantized.channels[c].coeffs;
    auto& dq = dequantized.channels[c].coeffs;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double step = t[i % 64];
      u[i] = d[i] / step;
      v[i] = mode == RoundingMode::kSoft ? soft_round(u[i]).value : std::round(u[i]);
      dq[i] = v[i] * step;
    }
  }
  tape.unclamped = synthesize_real(dequantized);
  out.reconstruction = tape.unclamped;
  for (auto& plane : out.reconstruction.planes)
    for (double& s : plane.data) s = std::clamp(s, 0.0, 255.0);
  return out;
}

inline ProxyOutput forward(const RgbImage& x, const QuantTableParams& p, int q, Layout layout,
                           RoundingMode mode) {
  require_codec_size(x);
  return forward(analyze_real(to_real(x), layout), p, q, mode);
}

// Reverse-mode gradient with respect to the table parameters p, given the
// gradient of a scalar with respect to the clamped reconstruction and
// (optionally) with respect to the quantized coefficients in table units.
inline QuantTableParams backward(const ForwardTape& tape, const ImageF& grad_reconstruction,
                                 const CoeffPlanes<double>* grad_quantized = nullptr) {
  if (tape.mode != RoundingMode::kSoft) throw Error("backward requires a soft-mode forward tape");
  const auto& un = tape.unclamped;
  if (grad_reconstruction.width != un.width || grad_reconstruction.height != un.height)
    throw Error("reconstruction gradient has the wrong size");
  if (grad_quantized && !grad_quantized->same_shape(tape.quantized))
    throw Error("coefficient gradient has the wrong shape");

  ImageF g = grad_reconstruction;
  for (int c = 0; c < 3; ++c) {
    const auto& src = un.planes[c].data;
    auto& dst = g.planes[c].data;
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (src[i] < 0.0 || src[i] > 255.0) dst[i] = 0.0;
  }
  YcbcrImage gy = real_from_ycbcr_adjoint(g);
  if (tape.coeffs.layout == Layout::k420) {
    for (int c = 1; c < 3; ++c) {
      const auto& ch = tape.coeffs.channels[c];
      gy.plane(c) = upsample_plane_adjoint(gy.plane(c), ch.plane_width, ch.plane_height);
    }
  }

  QuantTableParams grad_t;
  for (int c = 0; c < 3; ++c) {
    const int cls = table_class(c);
    const auto& t = tape.tables.values[cls];
    const auto g_dq = idct_plane_adjoint(gy.plane(c));
    const auto& u = tape.normalized.channels[c].coeffs;
    const auto& v = tape.quantized.channels[c].coeffs;
    const double* g_soft = grad_quantized ? grad_quantized->channels[c].coeffs.data() : nullptr;
    auto& acc = grad_t[cls];
    for (std::size_t i = 0; i < u.size(); ++i) {
      const int k = static_cast<int>(i % 64);
      const double step = t[k];
      // dq = v * t with v = soft_round(d / t).
      double g_v = g_dq.coeffs[i] * step;
      if (g_soft) g_v += g_soft[i];
      const double g_u = g_v * soft_round(u[i]).derivative;
      acc[k] += g_dq.coeffs[i] * v[i] - g_u * u[i] / step;
    }
  }

  QuantTableParams grad_p;
  for (int cls = 0; cls < 2; ++cls)
    for (int k = 0; k < 64; ++k)
      grad_p[cls][k] = tape.tables.floored[cls][k] ? 0.0 : grad_t[cls][k] * tape.tables.scale;
  return grad_p;
}

struct LossAndGradient {
  double loss = 0.0;
  ImageF grad;
};

// Sum of squared differences over all RGB samples.
inline LossAndGradient distortion_loss(const ImageF& x, const ImageF& reconstruction) {
  if (x.width != reconstruction.width || x.height != reconstruction.height)
    throw Error("distortion_loss: size mismatch");
  LossAndGradient out{0.0, ImageF(x.width, x.height)};
  for (int c = 0; c < 3; ++c) {
    const auto& a = x.planes[c].data;
    const auto& b = reconstruction.planes[c].data;
    auto& g = out.grad.planes[c].data;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = b[i] - a[i];
      out.loss += d * d;
      g[i] = 2.0 * d;
    }
  }
  return out;
}

inline LossAndGradient distortion_loss(const RgbImage& x, const ImageF& reconstruction) {
  return distortion_loss(to_real(x), reconstruction);
}

}  // namespace jpegq

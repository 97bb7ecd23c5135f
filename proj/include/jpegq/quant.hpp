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
#include <string>

#include "jpegq/common.hpp"

namespace jpegq {

inline void require_quality(int q) {
  if (q < 1 || q > 100) throw Error("quality factor must be in [1,100], got " + std::to_string(q));
}

// Conventional IJG quality scaling percentage (integer division below 50).
inline int quality_scale(int q) {
  require_quality(q);
  return q < 50 ? 5000 / q : 200 - 2 * q;
}

inline int scale_entry(double entry, int q) {
  const double scaled = std::round(entry * quality_scale(q) / 100.0);
  return static_cast<int>(std::clamp(scaled, 1.0, 255.0));
}

inline IntQuantTablePair scale_table(const QuantTableParams& p, int q) {
  IntQuantTablePair out;
  for (int k = 0; k < 64; ++k) {
    if (!(p.luma[k] > 0.0) || !(p.chroma[k] > 0.0))
      throw Error("quantization table entries must be positive");
    out.luma[k] = scale_entry(p.luma[k], q);
    out.chroma[k] = scale_entry(p.chroma[k], q);
  }
  return out;
}

inline QuantTableParams to_real(const IntQuantTablePair& t) {
  QuantTableParams p;
  for (int k = 0; k < 64; ++k) {
    p.luma[k] = t.luma[k];
    p.chroma[k] = t.chroma[k];
  }
  return p;
}

inline CoeffPlanes<int> quantize_hard(const CoeffPlanes<double>& coeffs, const IntQuantTablePair& t) {
  auto out = coeffs.zeros_like<int>();
  for (int c = 0; c < 3; ++c) {
    const auto& table = t[table_class(c)];
    const auto& in = coeffs.channels[c].coeffs;
    auto& q = out.channels[c].coeffs;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const int step = table[i % 64];
      if (step < 1) throw Error("quantization table entry below 1");
      q[i] = static_cast<int>(std::round(in[i] / step));
    }
  }
  return out;
}

inline CoeffPlanes<double> dequantize(const CoeffPlanes<int>& qcoeffs, const IntQuantTablePair& t) {
  auto out = qcoeffs.zeros_like<double>();
  for (int c = 0; c < 3; ++c) {
    const auto& table = t[table_class(c)];
    const auto& in = qcoeffs.channels[c].coeffs;
    auto& d = out.channels[c].coeffs;
    for (std::size_t i = 0; i < in.size(); ++i) d[i] = static_cast<double>(in[i]) * table[i % 64];
  }
  return out;
}

}  // namespace jpegq

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
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "jpegq/adam.hpp"
#include "jpegq/common.hpp"

namespace jpegq {

// Univariate monotone cumulative model (the "factorized prior" construction):
//   f_k(x) = softplus(H_k) x + b_k,  then  x + tanh(a_k) * tanh(x)  for k < 4,
// with filter widths 1 -> 3 -> 3 -> 3 -> 1 and a sigmoid on the output.
// Positivity of softplus(H) and |tanh(a)| < 1 make the output non-decreasing.
struct DensityModel {
  static constexpr int kWidth = 3;
  static constexpr int kParamCount = 43;

  // Offsets of each parameter group in `params`.
  static constexpr int kH1 = 0;   // 3x1
  static constexpr int kH2 = 3;   // 3x3, [out][in]
  static constexpr int kH3 = 12;  // 3x3
  static constexpr int kH4 = 21;  // 1x3
  static constexpr int kB1 = 24;
  static constexpr int kB2 = 27;
  static constexpr int kB3 = 30;
  static constexpr int kB4 = 33;
  static constexpr int kA1 = 34;
  static constexpr int kA2 = 37;
  static constexpr int kA3 = 40;

  std::array<double, kParamCount> params{};

  bool operator==(const DensityModel&) const = default;

  // Near-linear start: every layer's softplus(H) is 1 / (fan_in * s) with
  // s = init_scale^(1/4), so the composed slope is 1 / init_scale; gates are
  // zero and hidden biases are spread to break channel symmetry.
  static DensityModel initial(double init_scale = 10.0) {
    DensityModel m;
    const double s = std::pow(init_scale, 1.0 / 4.0);
    auto inv_softplus = [](double y) { return std::log(std::expm1(y)); };
    for (int i = 0; i < 3; ++i) m.params[kH1 + i] = inv_softplus(1.0 / s);
    for (int i = 0; i < 9; ++i) {
      m.params[kH2 + i] = inv_softplus(1.0 / (3.0 * s));
      m.params[kH3 + i] = inv_softplus(1.0 / (3.0 * s));
    }
    for (int i = 0; i < 3; ++i) m.params[kH4 + i] = inv_softplus(1.0 / (3.0 * s));
    constexpr std::array<double, 3> spread = {-0.25, 0.0, 0.25};
    for (int i = 0; i < 3; ++i) {
      m.params[kB1 + i] = spread[i];
      m.params[kB2 + i] = spread[2 - i];
      m.params[kB3 + i] = spread[i];
    }
    return m;
  }
};

namespace entropy_detail {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Constrained weights derived once per parameter set.
struct Prepared {
  std::array<double, 3> w1;
  std::array<std::array<double, 3>, 3> w2, w3;
  std::array<double, 3> w4;
  std::array<double, 3> b1, b2, b3;
  double b4;
  std::array<double, 3> g1, g2, g3;  // tanh(a)

  explicit Prepared(const DensityModel& m) {
    const auto& p = m.params;
    for (int i = 0; i < 3; ++i) {
      w1[i] = softplus(p[DensityModel::kH1 + i]);
      w4[i] = softplus(p[DensityModel::kH4 + i]);
      b1[i] = p[DensityModel::kB1 + i];
      b2[i] = p[DensityModel::kB2 + i];
      b3[i] = p[DensityModel::kB3 + i];
      g1[i] = std::tanh(p[DensityModel::kA1 + i]);
      g2[i] = std::tanh(p[DensityModel::kA2 + i]);
      g3[i] = std::tanh(p[DensityModel::kA3 + i]);
      for (int j = 0; j < 3; ++j) {
        w2[i][j] = softplus(p[DensityModel::kH2 + 3 * i + j]);
        w3[i][j] = softplus(p[DensityModel::kH3 + 3 * i + j]);
      }
    }
    b4 = p[DensityModel::kB4];
  }
};

// Gradients with respect to the constrained quantities in Prepared.
struct PreparedGrad {
  std::array<double, 3> w1{}, w4{}, b1{}, b2{}, b3{}, g1{}, g2{}, g3{};
  std::array<std::array<double, 3>, 3> w2{}, w3{};
  double b4 = 0.0;

  // Chains through softplus and tanh into raw-parameter gradients.
  void accumulate_into(const DensityModel& m, std::span<double, DensityModel::kParamCount> out) const {
    const auto& p = m.params;
    for (int i = 0; i < 3; ++i) {
      out[DensityModel::kH1 + i] += w1[i] * sigmoid(p[DensityModel::kH1 + i]);
      out[DensityModel::kH4 + i] += w4[i] * sigmoid(p[DensityModel::kH4 + i]);
      out[DensityModel::kB1 + i] += b1[i];
      out[DensityModel::kB2 + i] += b2[i];
      out[DensityModel::kB3 + i] += b3[i];
      const double t1 = std::tanh(p[DensityModel::kA1 + i]);
      const double t2 = std::tanh(p[DensityModel::kA2 + i]);
      const double t3 = std::tanh(p[DensityModel::kA3 + i]);
      out[DensityModel::kA1 + i] += g1[i] * (1.0 - t1 * t1);
      out[DensityModel::kA2 + i] += g2[i] * (1.0 - t2 * t2);
      out[DensityModel::kA3 + i] += g3[i] * (1.0 - t3 * t3);
      for (int j = 0; j < 3; ++j) {
        out[DensityModel::kH2 + 3 * i + j] += w2[i][j] * sigmoid(p[DensityModel::kH2 + 3 * i + j]);
        out[DensityModel::kH3 + 3 * i + j] += w3[i][j] * sigmoid(p[DensityModel::kH3 + 3 * i + j]);
      }
    }
    out[DensityModel::kB4] += b4;
  }
};

struct LogitTrace {
  double x;
  std::array<double, 3> t1, t2, t3;  // tanh of pre-gate activations
  std::array<double, 3> f1, f2, f3;  // post-gate activations
  double out;
};

inline void logit_forward(const Prepared& p, double x, LogitTrace& tr) {
  tr.x = x;
  for (int i = 0; i < 3; ++i) {
    const double z = p.w1[i] * x + p.b1[i];
    tr.t1[i] = std::tanh(z);
    tr.f1[i] = z + p.g1[i] * tr.t1[i];
  }
  for (int i = 0; i < 3; ++i) {
    const double z = p.w2[i][0] * tr.f1[0] + p.w2[i][1] * tr.f1[1] + p.w2[i][2] * tr.f1[2] + p.b2[i];
    tr.t2[i] = std::tanh(z);
    tr.f2[i] = z + p.g2[i] * tr.t2[i];
  }
  for (int i = 0; i < 3; ++i) {
    const double z = p.w3[i][0] * tr.f2[0] + p.w3[i][1] * tr.f2[1] + p.w3[i][2] * tr.f2[2] + p.b3[i];
    tr.t3[i] = std::tanh(z);
    tr.f3[i] = z + p.g3[i] * tr.t3[i];
  }
  tr.out = p.w4[0] * tr.f3[0] + p.w4[1] * tr.f3[1] + p.w4[2] * tr.f3[2] + p.b4;
}

// Backpropagates d(scalar)/d(logit) = g. Returns d(scalar)/dx; adds
// parameter gradients into `pg` when non-null.
inline double logit_backward(const Prepared& p, const LogitTrace& tr, double g, PreparedGrad* pg) {
  std::array<double, 3> gf3, gz3, gf2{}, gz2, gf1{}, gz1;
  for (int j = 0; j < 3; ++j) gf3[j] = g * p.w4[j];
  for (int i = 0; i < 3; ++i) gz3[i] = gf3[i] * (1.0 + p.g3[i] * (1.0 - tr.t3[i] * tr.t3[i]));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) gf2[j] += gz3[i] * p.w3[i][j];
  for (int i = 0; i < 3; ++i) gz2[i] = gf2[i] * (1.0 + p.g2[i] * (1.0 - tr.t2[i] * tr.t2[i]));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) gf1[j] += gz2[i] * p.w2[i][j];
  for (int i = 0; i < 3; ++i) gz1[i] = gf1[i] * (1.0 + p.g1[i] * (1.0 - tr.t1[i] * tr.t1[i]));
  double gx = 0.0;
  for (int i = 0; i < 3; ++i) gx += gz1[i] * p.w1[i];
  if (pg) {
    pg->b4 += g;
    for (int j = 0; j < 3; ++j) pg->w4[j] += g * tr.f3[j];
    for (int i = 0; i < 3; ++i) {
      pg->g3[i] += gf3[i] * tr.t3[i];
      pg->g2[i] += gf2[i] * tr.t2[i];
      pg->g1[i] += gf1[i] * tr.t1[i];
      pg->b3[i] += gz3[i];
      pg->b2[i] += gz2[i];
      pg->b1[i] += gz1[i];
      pg->w1[i] += gz1[i] * tr.x;
      for (int j = 0; j < 3; ++j) {
        pg->w3[i][j] += gz3[i] * tr.f2[j];
        pg->w2[i][j] += gz2[i] * tr.f1[j];
      }
    }
  }
  return gx;
}

inline constexpr double kProbabilityFloor = 1e-9;

struct BitsResult {
  double bits;
  double dbits_dv;
};

// -log2 of the mass the model assigns to [v - 1/2, v + 1/2].
inline BitsResult bits_for_value(const Prepared& p, double v, PreparedGrad* pg) {
  LogitTrace lo, hi;
  logit_forward(p, v - 0.5, lo);
  logit_forward(p, v + 0.5, hi);
  // Evaluate in the tail where both sigmoids are small, for precision.
  const double s = (lo.out + hi.out > 0.0) ? -1.0 : 1.0;
  const double prob = std::abs(sigmoid(s * hi.out) - sigmoid(s * lo.out));
  if (std::isnan(prob)) return {prob, prob};
  if (!(prob > kProbabilityFloor)) return {-std::log2(kProbabilityFloor), 0.0};
  const double dbits_dprob = -1.0 / (prob * std::numbers::ln2);
  const double dprob_dhi = sigmoid(hi.out) * sigmoid(-hi.out);
  const double dprob_dlo = -sigmoid(lo.out) * sigmoid(-lo.out);
  const double gx = logit_backward(p, hi, dbits_dprob * dprob_dhi, pg) +
                    logit_backward(p, lo, dbits_dprob * dprob_dlo, pg);
  return {-std::log2(prob), gx};
}

}  // namespace entropy_detail

inline double cumulative(const DensityModel& m, double x) {
  entropy_detail::Prepared p(m);
  entropy_detail::LogitTrace tr;
  entropy_detail::logit_forward(p, x, tr);
  return entropy_detail::sigmoid(tr.out);
}

struct ValueBits {
  double bits = 0.0;
  double grad_value = 0.0;
  std::array<double, DensityModel::kParamCount> grad_params{};
};

inline ValueBits bits_for_value(const DensityModel& m, double v) {
  entropy_detail::Prepared p(m);
  entropy_detail::PreparedGrad pg;
  const auto r = entropy_detail::bits_for_value(p, v, &pg);
  ValueBits out;
  out.bits = r.bits;
  out.grad_value = r.dbits_dv;
  pg.accumulate_into(m, out.grad_params);
  return out;
}

// Model index: 0 luma DC, 1 luma AC, 2 chroma DC, 3 chroma AC.
struct EntropyEstimatorSet {
  std::array<DensityModel, 4> models;

  static constexpr int kLumaDc = 0;
  static constexpr int kLumaAc = 1;
  static constexpr int kChromaDc = 2;
  static constexpr int kChromaAc = 3;
  static constexpr std::size_t kFlatSize = 4 * DensityModel::kParamCount;

  static EntropyEstimatorSet initial() {
    EntropyEstimatorSet s;
    for (auto& m : s.models) m = DensityModel::initial();
    return s;
  }

  static int dc_model(int channel) { return channel == 0 ? kLumaDc : kChromaDc; }
  static int ac_model(int channel) { return channel == 0 ? kLumaAc : kChromaAc; }

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(kFlatSize);
    for (const auto& m : models) out.insert(out.end(), m.params.begin(), m.params.end());
    return out;
  }
  void set_flat(std::span<const double> v) {
    if (v.size() != kFlatSize) throw Error("entropy parameter vector has the wrong size");
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < DensityModel::kParamCount; ++k)
        models[i].params[k] = v[i * DensityModel::kParamCount + k];
  }
  bool operator==(const EntropyEstimatorSet&) const = default;
};

struct RateEstimate {
  double bits = 0.0;
  std::array<double, 3> channel_bits{};
  std::optional<CoeffPlanes<double>> grad_coeffs;  // d(bits)/d(coefficient)
  std::vector<double> grad_params;                 // flat, EntropyEstimatorSet layout
};

struct RateGradRequest {
  bool coeffs = false;
  bool params = false;
};

// Estimated code length of table-normalized coefficients: for each channel
// and block in raster order, the DC model on the DPCM difference (previous
// DC starts at 0, per channel) and the AC model on the 63 AC values.
// Cb and Cr keep separate predictors but share the chroma models.
inline RateEstimate estimate_bits_image(const CoeffPlanes<double>& coeffs, const EntropyEstimatorSet& set,
                                        RateGradRequest want = {}) {
  using namespace entropy_detail;
  const std::array<Prepared, 4> prepared = {Prepared(set.models[0]), Prepared(set.models[1]),
                                            Prepared(set.models[2]), Prepared(set.models[3])};
  std::array<PreparedGrad, 4> pgrads{};
  RateEstimate out;
  if (want.coeffs) out.grad_coeffs = coeffs.zeros_like<double>();
  for (int c = 0; c < 3; ++c) {
    const auto& ch = coeffs.channels[c];
    const int dcm = EntropyEstimatorSet::dc_model(c);
    const int acm = EntropyEstimatorSet::ac_model(c);
    PreparedGrad* dc_pg = want.params ? &pgrads[dcm] : nullptr;
    PreparedGrad* ac_pg = want.params ? &pgrads[acm] : nullptr;
    double* g = want.coeffs ? out.grad_coeffs->channels[c].coeffs.data() : nullptr;
    double prev = 0.0;
    double channel_bits = 0.0;
    for (int b = 0; b < ch.block_count(); ++b) {
      const auto blk = ch.block(b);
      const auto dc = bits_for_value(prepared[dcm], blk[0] - prev, dc_pg);
      channel_bits += dc.bits;
      if (g) {
        g[b * 64] += dc.dbits_dv;
        if (b > 0) g[(b - 1) * 64] -= dc.dbits_dv;
      }
      prev = blk[0];
      for (int k = 1; k < 64; ++k) {
        const auto ac = bits_for_value(prepared[acm], blk[k], ac_pg);
        channel_bits += ac.bits;
        if (g) g[b * 64 + k] += ac.dbits_dv;
      }
    }
    out.channel_bits[c] = channel_bits;
    out.bits += channel_bits;
  }
  if (want.params) {
    out.grad_params.assign(EntropyEstimatorSet::kFlatSize, 0.0);
    for (int i = 0; i < 4; ++i) {
      std::span<double, DensityModel::kParamCount> dst(out.grad_params.data() + i * DensityModel::kParamCount,
                                                       DensityModel::kParamCount);
      pgrads[i].accumulate_into(set.models[i], dst);
    }
  }
  return out;
}

// Deterministic stream of i.i.d. uniform samples on the open interval
// (-1/2, 1/2).
class UniformNoise {
 public:
  explicit UniformNoise(std::uint64_t seed) : rng_(seed) {}
  double next() {
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    return (static_cast<double>(rng_() >> 11) + 0.5) * kScale - 0.5;
  }

 private:
  std::mt19937_64 rng_;
};

inline CoeffPlanes<double> add_uniform_noise(const CoeffPlanes<double>& coeffs, std::uint64_t seed) {
  CoeffPlanes<double> out = coeffs;
  UniformNoise noise(seed);
  for (auto& ch : out.channels)
    for (double& v : ch.coeffs) v += noise.next();
  return out;
}

// Cached code lengths for integer symbols, for evaluating many hard-quantized
// images with one estimator set.
class IntegerBitsTable {
 public:
  static constexpr int kRange = 2048;

  explicit IntegerBitsTable(const EntropyEstimatorSet& set) {
    for (int m = 0; m < 4; ++m) {
      entropy_detail::Prepared p(set.models[m]);
      auto& t = tables_[m];
      t.resize(2 * kRange + 1);
      for (int v = -kRange; v <= kRange; ++v)
        t[v + kRange] = entropy_detail::bits_for_value(p, v, nullptr).bits;
    }
  }

  double bits(int model, int v) const {
    if (v < -kRange || v > kRange) return -std::log2(entropy_detail::kProbabilityFloor);
    return tables_[model][v + kRange];
  }

  double estimate(const CoeffPlanes<int>& q) const {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      const auto& ch = q.channels[c];
      const int dcm = EntropyEstimatorSet::dc_model(c);
      const int acm = EntropyEstimatorSet::ac_model(c);
      int prev = 0;
      for (int b = 0; b < ch.block_count(); ++b) {
        const auto blk = ch.block(b);
        total += bits(dcm, blk[0] - prev);
        prev = blk[0];
        for (int k = 1; k < 64; ++k) total += bits(acm, blk[k]);
      }
    }
    return total;
  }

 private:
  std::array<std::vector<double>, 4> tables_;
};

// Fits one density model to samples by minimizing their mean code length
// (samples are used as-is; callers add noise if they want the relaxation).
inline DensityModel fit_density(DensityModel m, std::span<const double> samples, int steps, double lr,
                                std::size_t batch, std::uint64_t seed) {
  if (samples.empty()) throw Error("fit_density: no samples");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  AdamState state(DensityModel::kParamCount);
  for (int s = 0; s < steps; ++s) {
    entropy_detail::Prepared p(m);
    entropy_detail::PreparedGrad pg;
    for (std::size_t i = 0; i < batch; ++i) entropy_detail::bits_for_value(p, samples[pick(rng)], &pg);
    std::array<double, DensityModel::kParamCount> g{};
    pg.accumulate_into(m, g);
    for (double& x : g) x /= static_cast<double>(batch);
    adam_step(m.params, g, state, lr);
  }
  return m;
}

}  // namespace jpegq

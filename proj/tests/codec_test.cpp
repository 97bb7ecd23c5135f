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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gtest/gtest.h"
#include "jpegq.hpp"
#include "test_util.hpp"

namespace jpegq {
namespace {

using testing::random_image;
using testing::smooth_image;
using testing::zero_planes;

TEST(ColorTest, KnownColors) {
  RgbImage img(1, 3);
  img.at(0, 1, 0) = img.at(0, 1, 1) = img.at(0, 1, 2) = 255;
  img.at(0, 2, 0) = 255;
  const auto ycc = rgb_to_ycbcr(img);
  EXPECT_NEAR(ycc.y.at(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(ycc.cb.at(0, 0), 128.0, 1e-12);
  EXPECT_NEAR(ycc.cr.at(0, 0), 128.0, 1e-12);
  EXPECT_NEAR(ycc.y.at(0, 1), 255.0, 1e-9);
  EXPECT_NEAR(ycc.cb.at(0, 1), 128.0, 1e-9);
  EXPECT_NEAR(ycc.cr.at(0, 1), 128.0, 1e-9);
  // Pure red, evaluated from the affine map directly.
  EXPECT_NEAR(ycc.y.at(0, 2), 0.299 * 255, 1e-9);
  EXPECT_NEAR(ycc.cb.at(0, 2), -0.168736 * 255 + 128, 1e-3);
  EXPECT_NEAR(ycc.cr.at(0, 2), 0.5 * 255 + 128, 1e-9);
}

TEST(ColorTest, InverseOfWhiteAndBlack) {
  YcbcrImage ycc;
  ycc.y = Plane(2, 1);
  ycc.cb = Plane(2, 1, 128.0);
  ycc.cr = Plane(2, 1, 128.0);
  ycc.y.at(0, 0) = 255.0;
  const auto rgb = ycbcr_to_rgb(ycc);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(rgb.at(0, 0, c), 255);
    EXPECT_EQ(rgb.at(1, 0, c), 0);
  }
}

TEST(ColorTest, RoundTripWithinOneLevel) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(0, 255);
  RgbImage img(512, 512);
  for (auto& s : img.samples) s = static_cast<std::uint8_t>(d(rng));
  // Include the cube corners.
  for (int i = 0; i < 8; ++i)
    for (int c = 0; c < 3; ++c) img.at(i, 0, c) = (i >> c) & 1 ? 255 : 0;
  const auto back = ycbcr_to_rgb(rgb_to_ycbcr(img));
  int worst = 0;
  for (std::size_t i = 0; i < img.samples.size(); ++i)
    worst = std::max(worst, std::abs(int(img.samples[i]) - int(back.samples[i])));
  EXPECT_LE(worst, 1);
}

TEST(ColorTest, InverseMatrixIsExact) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += color_detail::kYccToRgb[i][k] * color_detail::kRgbToYcc[k][j];
      EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-14);
    }
}

TEST(SubsampleTest, AveragesWindows) {
  Plane p(4, 2);
  p.at(0, 0) = 100;
  p.at(1, 0) = 100;
  p.at(0, 1) = 200;
  p.at(1, 1) = 200;
  EXPECT_DOUBLE_EQ(downsample_plane(p).at(0, 0), 150.0);

  Plane c(4, 4, 77.0);
  const auto d = downsample_plane(c);
  for (double v : d.data) EXPECT_DOUBLE_EQ(v, 77.0);
}

TEST(SubsampleTest, EdgeWindowUsesAvailableSamples) {
  Plane p(3, 2);
  p.at(2, 0) = 10;
  p.at(2, 1) = 30;
  const auto d = downsample_plane(p);
  ASSERT_EQ(d.width, 2);
  ASSERT_EQ(d.height, 1);
  EXPECT_DOUBLE_EQ(d.at(1, 0), 20.0);
}

TEST(SubsampleTest, UpsampleHalfSampleWeights) {
  Plane c(2, 1);
  c.at(0, 0) = 0;
  c.at(1, 0) = 100;
  const auto u = upsample_plane(c, 4, 1);
  EXPECT_DOUBLE_EQ(u.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(u.at(1, 0), 25.0);
  EXPECT_DOUBLE_EQ(u.at(2, 0), 75.0);
  EXPECT_DOUBLE_EQ(u.at(3, 0), 100.0);
}

TEST(SubsampleTest, ConstantRoundTrip) {
  RgbImage img(17, 13);
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x) {
      img.at(x, y, 0) = 40;
      img.at(x, y, 1) = 90;
      img.at(x, y, 2) = 200;
    }
  const auto full = rgb_to_ycbcr(img);
  const auto sub = downsample_420(full);
  EXPECT_EQ(sub.cb.width, 9);
  EXPECT_EQ(sub.cb.height, 7);
  const auto up = upsample_420(sub);
  for (int c = 1; c < 3; ++c)
    for (std::size_t i = 0; i < up.plane(c).data.size(); ++i)
      EXPECT_NEAR(up.plane(c).data[i], full.plane(c).data[i], 1e-9);
}

TEST(SubsampleTest, AdjointsSatisfyInnerProductIdentity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (auto [w, h] : {std::pair{16, 16}, {17, 9}, {5, 3}}) {
    Plane x(w, h), gy((w + 1) / 2, (h + 1) / 2);
    for (double& v : x.data) v = n(rng);
    for (double& v : gy.data) v = n(rng);
    const auto ax = downsample_plane(x);
    const auto aty = downsample_plane_adjoint(gy, w, h);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < ax.data.size(); ++i) lhs += ax.data[i] * gy.data[i];
    for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
    EXPECT_NEAR(lhs, rhs, 1e-9);

    Plane c((w + 1) / 2, (h + 1) / 2), g(w, h);
    for (double& v : c.data) v = n(rng);
    for (double& v : g.data) v = n(rng);
    const auto uc = upsample_plane(c, w, h);
    const auto utg = upsample_plane_adjoint(g, c.width, c.height);
    lhs = rhs = 0;
    for (std::size_t i = 0; i < uc.data.size(); ++i) lhs += uc.data[i] * g.data[i];
    for (std::size_t i = 0; i < c.data.size(); ++i) rhs += c.data[i] * utg.data[i];
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

// Direct double-sum definition of the 8x8 forward DCT.
std::array<double, 64> reference_fdct(const std::array<double, 64>& s) {
  std::array<double, 64> out{};
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? 1 / std::sqrt(2.0) : 1.0;
      const double cv = v == 0 ? 1 / std::sqrt(2.0) : 1.0;
      double acc = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          acc += s[y * 8 + x] * std::cos((2 * x + 1) * u * std::numbers::pi / 16) *
                 std::cos((2 * y + 1) * v * std::numbers::pi / 16);
      out[v * 8 + u] = 0.25 * cu * cv * acc;
    }
  return out;
}

TEST(DctTest, MatchesDoubleSumDefinition) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-128, 127);
  for (int t = 0; t < 20; ++t) {
    std::array<double, 64> in, out;
    for (double& v : in) v = u(rng);
    fdct_block(in, out);
    const auto ref = reference_fdct(in);
    for (int k = 0; k < 64; ++k) EXPECT_NEAR(out[k], ref[k], 1e-9);
  }
}

TEST(DctTest, ConstantBlocks) {
  RgbImage gray(8, 8, 128);
  auto c = fdct_image(rgb_to_ycbcr(gray));
  for (int ch = 0; ch < 3; ++ch)
    for (double v : c.channels[ch].coeffs) EXPECT_NEAR(v, 0.0, 1e-9);

  Plane p(8, 8, 129.0);
  const auto ch = fdct_plane(p);
  EXPECT_NEAR(ch.coeffs[0], 8.0, 1e-12);
  for (int k = 1; k < 64; ++k) EXPECT_NEAR(ch.coeffs[k], 0.0, 1e-12);
}

TEST(DctTest, RoundTripIsExact) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 255);
  for (auto [w, h] : {std::pair{8, 8}, {19, 11}}) {
    Plane p(w, h);
    for (double& v : p.data) v = u(rng);
    const auto back = idct_plane(fdct_plane(p));
    ASSERT_EQ(back.width, w);
    ASSERT_EQ(back.height, h);
    for (std::size_t i = 0; i < p.data.size(); ++i) EXPECT_LT(std::abs(back.data[i] - p.data[i]), 1e-9);
  }
}

TEST(DctTest, PaddingReplicatesEdges) {
  Plane p(9, 8, 0.0);
  for (int y = 0; y < 8; ++y) p.at(8, y) = 200.0;
  const auto ch = fdct_plane(p);
  ASSERT_EQ(ch.blocks_x, 2);
  // The second block is entirely the replicated last column.
  EXPECT_NEAR(ch.coeffs[64], 8.0 * (200.0 - 128.0), 1e-9);
  for (int k = 1; k < 64; ++k) EXPECT_NEAR(ch.coeffs[64 + k], 0.0, 1e-9);
}

TEST(ZigzagTest, WalksAntiDiagonals) {
  // Independent construction: traverse anti-diagonals alternating direction.
  std::array<int, 64> expect{};
  int i = 0;
  for (int s = 0; s < 15; ++s) {
    if (s % 2 == 0) {
      for (int r = std::min(s, 7); r >= std::max(0, s - 7); --r) expect[i++] = r * 8 + (s - r);
    } else {
      for (int r = std::max(0, s - 7); r <= std::min(s, 7); ++r) expect[i++] = r * 8 + (s - r);
    }
  }
  for (int k = 0; k < 64; ++k) EXPECT_EQ(kZigzag[k], expect[k]) << k;
}

int hand_scale(int entry, int q) {
  const int s = q < 50 ? 5000 / q : 200 - 2 * q;
  const int num = entry * s;
  int v = (num + 50) / 100;  // non-negative: half rounds up
  return std::clamp(v, 1, 255);
}

TEST(QuantTest, ScaleTableExamples) {
  EXPECT_EQ(scale_entry(16.0, 50), 16);
  EXPECT_EQ(scale_entry(16.0, 90), 3);
  EXPECT_EQ(scale_entry(16.0, 10), 80);
  EXPECT_EQ(scale_entry(200.0, 10), 255);
  EXPECT_EQ(scale_entry(1.0, 100), 1);
  EXPECT_THROW(scale_table(default_tables(), 0), Error);
  EXPECT_THROW(scale_table(default_tables(), 101), Error);
}

TEST(QuantTest, ScaleTableMatchesIntegerOracleEverywhere) {
  const auto p = default_tables();
  for (int q = 1; q <= 100; ++q) {
    const auto t = scale_table(p, q);
    for (int k = 0; k < 64; ++k) {
      EXPECT_EQ(t.luma[k], hand_scale(kAnnexKLuma[k], q));
      EXPECT_EQ(t.chroma[k], hand_scale(kAnnexKChroma[k], q));
    }
  }
}

TEST(QuantTest, RoundsHalfAwayFromZero) {
  auto c = fdct_image(rgb_to_ycbcr(RgbImage(8, 8, 128)));
  c.channels[0].coeffs[0] = 8.0;
  c.channels[0].coeffs[1] = -8.0;
  c.channels[0].coeffs[2] = 0.0;
  IntQuantTablePair t;
  t.luma.fill(16);
  t.chroma.fill(16);
  const auto q = quantize_hard(c, t);
  EXPECT_EQ(q.channels[0].coeffs[0], 1);
  EXPECT_EQ(q.channels[0].coeffs[1], -1);
  EXPECT_EQ(q.channels[0].coeffs[2], 0);
  const auto d = dequantize(q, t);
  EXPECT_EQ(d.channels[0].coeffs[0], 16.0);
  EXPECT_EQ(d.channels[0].coeffs[2], 0.0);
}

TEST(QuantTest, QuantizerBinBound) {
  const auto img = random_image(24, 24, 4);
  const auto c = analyze(img, Layout::k420);
  for (int q : {5, 50, 95}) {
    const auto t = scale_table(default_tables(), q);
    const auto d = dequantize(quantize_hard(c, t), t);
    for (int ch = 0; ch < 3; ++ch) {
      const auto& tab = t[table_class(ch)];
      for (std::size_t i = 0; i < c.channels[ch].coeffs.size(); ++i)
        EXPECT_LE(std::abs(d.channels[ch].coeffs[i] - c.channels[ch].coeffs[i]), tab[i % 64] / 2.0 + 1e-9);
    }
  }
}

TEST(HuffmanTest, ZeroLumaBlockCostsSixBits) {
  auto q = zero_planes(8, 8, Layout::k444);
  const auto enc = entropy_encode(q);
  EXPECT_EQ(enc.stats.dc_bits[0], 2u);
  EXPECT_EQ(enc.stats.ac_bits[0], 4u);
}

TEST(HuffmanTest, IdenticalBlocksCodeZeroDifference) {
  auto q = zero_planes(16, 8, Layout::k444);
  q.channels[0].coeffs[0] = 5;
  q.channels[0].coeffs[64] = 5;
  const auto enc = entropy_encode(q);
  // First block: category 3 (code 100, 3 bits) + 3 magnitude bits; second: "00".
  EXPECT_EQ(enc.stats.dc_bits[0], 6u + 2u);
}

TEST(HuffmanTest, CategoryHelpers) {
  EXPECT_EQ(magnitude_category(0), 0);
  EXPECT_EQ(magnitude_category(1), 1);
  EXPECT_EQ(magnitude_category(-1), 1);
  EXPECT_EQ(magnitude_category(2047), 11);
  EXPECT_EQ(magnitude_category(-1024), 11);
  for (int v : {-2047, -300, -1, 1, 2, 3, 255, 1023})
    EXPECT_EQ(extend_magnitude(magnitude_bits(v, magnitude_category(v)), magnitude_category(v)), v);
}

CoeffPlanes<int> random_coeffs(int w, int h, Layout layout, std::uint64_t seed) {
  auto q = zero_planes(w, h, layout);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_int_distribution<int> small(-3, 3), big(-1023, 1023), dc(-1000, 1000);
  for (auto& ch : q.channels)
    for (int b = 0; b < ch.block_count(); ++b) {
      auto blk = ch.block(b);
      blk[0] = dc(rng);
      for (int k = 1; k < 64; ++k) {
        const int r = pick(rng);
        blk[k] = r < 6 ? 0 : (r < 9 ? small(rng) : big(rng));
      }
      if (b % 3 == 0)  // long zero runs exercise ZRL
        for (int k = 1; k < 60; ++k) blk[kZigzag[k]] = 0;
    }
  return q;
}

TEST(HuffmanTest, DecodeIsLossless) {
  for (auto layout : {Layout::k444, Layout::k420})
    for (auto [w, h] : {std::pair{16, 16}, {40, 24}, {33, 17}}) {
      const auto q = random_coeffs(w, h, layout, w * 131 + h);
      const auto enc = entropy_encode(q);
      const auto dec = entropy_decode(enc.data, zero_planes(w, h, layout));
      EXPECT_EQ(dec, q);
    }
}

TEST(HuffmanTest, OutOfRangeCoefficientsAreRejected) {
  auto q = zero_planes(8, 8, Layout::k444);
  q.channels[0].coeffs[5] = 1024;
  EXPECT_THROW(entropy_encode(q), Error);
  q.channels[0].coeffs[5] = 0;
  q.channels[0].coeffs[0] = 2048;
  EXPECT_THROW(entropy_encode(q), Error);
}

TEST(JfifTest, MarkerLayout) {
  const auto img = smooth_image(32, 24, 1);
  const auto m = encode_measure(img, default_tables(), 75, Layout::k420);
  const auto& b = m.bytes;
  ASSERT_GE(b.size(), 4u);
  EXPECT_EQ(b[0], 0xFF);
  EXPECT_EQ(b[1], 0xD8);
  EXPECT_EQ(b[b.size() - 2], 0xFF);
  EXPECT_EQ(b[b.size() - 1], 0xD9);
  int dqt = 0;
  std::size_t sos_end = 0;
  for (std::size_t i = 2; i + 3 < b.size();) {
    ASSERT_EQ(b[i], 0xFF);
    const int marker = b[i + 1];
    const int len = b[i + 2] << 8 | b[i + 3];
    if (marker == 0xDB) {
      ++dqt;
      EXPECT_EQ(len, 67);  // 65-byte payload plus the length field
    }
    i += 2 + len;
    if (marker == 0xDA) {
      sos_end = i;
      break;
    }
  }
  EXPECT_EQ(dqt, 2);
  ASSERT_GT(sos_end, 0u);
  // Every 0xFF inside the entropy-coded segment is stuffed.
  for (std::size_t i = sos_end; i + 2 < b.size(); ++i)
    if (b[i] == 0xFF) {
      EXPECT_EQ(b[i + 1], 0x00);
      ++i;
    }
}

TEST(JfifTest, RoundTripIdentity) {
  for (int i = 0; i < 12; ++i) {
    const auto img = i % 2 ? random_image(16 + i * 3, 16 + i, i) : smooth_image(16 + i, 16 + 2 * i, i);
    const auto layout = i % 3 ? Layout::k420 : Layout::k444;
    const auto t = scale_table(testing::random_tables(i, 1.0, 120.0), 10 + 7 * i);
    const auto q = quantize_hard(analyze(img, layout), t);
    const auto bs = write_jfif(t, q);
    const auto back = read_jfif(bs.bytes);
    EXPECT_EQ(back.tables, t);
    EXPECT_EQ(back.coeffs, q);
  }
}

TEST(JfifTest, TruncatedOrCorruptStreamsThrow) {
  const auto img = smooth_image(24, 24, 9);
  const auto m = encode_measure(img, default_tables(), 50, Layout::k420);
  for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{20}, m.bytes.size() / 2, m.bytes.size() - 3}) {
    std::vector<std::uint8_t> cut(m.bytes.begin(), m.bytes.begin() + n);
    EXPECT_THROW(read_jfif(cut), Error) << n;
  }
  auto prog = m.bytes;
  for (std::size_t i = 0; i + 1 < prog.size(); ++i)
    if (prog[i] == 0xFF && prog[i + 1] == 0xC0) {
      prog[i + 1] = 0xC2;
      break;
    }
  EXPECT_THROW(read_jfif(prog), Error);
  auto arith = m.bytes;
  for (std::size_t i = 0; i + 1 < arith.size(); ++i)
    if (arith[i] == 0xFF && arith[i + 1] == 0xC0) {
      arith[i + 1] = 0xC9;
      break;
    }
  EXPECT_THROW(read_jfif(arith), Error);
}

TEST(CodecTest, FileSizeIdentityAndStats) {
  const auto img = smooth_image(48, 40, 3);
  const auto m = encode_measure(img, default_tables(), 60, Layout::k420);
  EXPECT_DOUBLE_EQ(m.bpp_actual * 48 * 40, 8.0 * m.bytes.size());
  std::uint64_t coded = 0;
  for (int c = 0; c < 3; ++c) coded += m.stats.dc_bits[c] + m.stats.ac_bits[c];
  EXPECT_EQ(m.stats.total_bits, (coded + 7) / 8 * 8);
}

TEST(CodecTest, ReconstructionEqualsBitstreamDecode) {
  const auto img = smooth_image(40, 24, 8);
  for (auto layout : {Layout::k444, Layout::k420}) {
    const auto m = encode_measure(img, default_tables(), 35, layout);
    const auto dec = read_jfif(m.bytes);
    EXPECT_EQ(reconstruct(dec.coeffs, dec.tables), m.reconstruction);
  }
}

TEST(CodecTest, PsnrOfUnitNoise) {
  const auto img = smooth_image(32, 32, 1);
  auto noisy = img;
  std::mt19937_64 rng(1);
  for (auto& s : noisy.samples) {
    const int d = (rng() & 1) ? 1 : -1;
    s = static_cast<std::uint8_t>(s == 0 ? 1 : (s == 255 ? 254 : s + d));
  }
  EXPECT_NEAR(psnr(img, noisy), 10 * std::log10(255.0 * 255.0), 1e-9);
  EXPECT_NEAR(psnr(img, noisy), 48.13, 0.01);
  EXPECT_TRUE(std::isinf(psnr(img, img)));
  EXPECT_EQ(capped_psnr(psnr(img, img)), kPsnrCap);
}

TEST(CodecTest, RejectsTinyImages) {
  EXPECT_THROW(encode_measure(RgbImage(15, 16), default_tables(), 50, Layout::k420), Error);
}

TEST(CodecTest, RateIsMonotoneInQuality) {
  int ok = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const auto img = smooth_image(16, 16, 100 + i);
    const auto lo = encode_measure(img, default_tables(), 10, Layout::k420);
    const auto hi = encode_measure(img, default_tables(), 90, Layout::k420);
    ok += hi.bpp_actual >= lo.bpp_actual;
  }
  EXPECT_GE(ok, 99);
}

}  // namespace
}  // namespace jpegq

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
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

#include "jpegq/common.hpp"

namespace jpegq {

// A Huffman table in DHT form: code counts per length 1..16 and symbols.
struct HuffmanSpec {
  std::array<std::uint8_t, 16> counts{};
  std::vector<std::uint8_t> symbols;
  bool operator==(const HuffmanSpec&) const = default;
};

// ITU-T T.81 Annex K.3 typical tables.
inline const HuffmanSpec& std_dc_luma() {
  static const HuffmanSpec s{{0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
                             {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  return s;
}

inline const HuffmanSpec& std_dc_chroma() {
  static const HuffmanSpec s{{0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
                             {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  return s;
}

inline const HuffmanSpec& std_ac_luma() {
  static const HuffmanSpec s{
      {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d},
      {0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
       0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
       0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
       0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
       0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
       0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
       0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
       0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
       0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
       0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
       0xf9, 0xfa}};
  return s;
}

inline const HuffmanSpec& std_ac_chroma() {
  static const HuffmanSpec s{
      {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77},
      {0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
       0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
       0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
       0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
       0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
       0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
       0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
       0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
       0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
       0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
       0xf9, 0xfa}};
  return s;
}

struct HuffmanEncoder {
  std::array<std::uint16_t, 256> code{};
  std::array<std::uint8_t, 256> length{};

  explicit HuffmanEncoder(const HuffmanSpec& spec) {
    std::uint32_t next = 0;
    std::size_t k = 0;
    for (int len = 1; len <= 16; ++len) {
      for (int i = 0; i < spec.counts[len - 1]; ++i, ++k) {
        code[spec.symbols[k]] = static_cast<std::uint16_t>(next++);
        length[spec.symbols[k]] = static_cast<std::uint8_t>(len);
      }
      next <<= 1;
    }
  }
};

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put(std::uint32_t bits, int count) {
    for (int i = count - 1; i >= 0; --i) {
      acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((bits >> i) & 1u));
      if (++filled_ == 8) emit();
    }
  }

  // Pads the final partial byte with 1-bits.
  void flush() {
    while (filled_ != 0) put(1, 1);
  }

 private:
  void emit() {
    out_.push_back(acc_);
    if (acc_ == 0xFF) out_.push_back(0x00);
    acc_ = 0;
    filled_ = 0;
  }

  std::vector<std::uint8_t>& out_;
  std::uint8_t acc_ = 0;
  int filled_ = 0;
};

// Reads an entropy-coded segment, removing stuffed zero bytes. Reading past
// the end of the segment or into a marker is an error.
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

  int bit() {
    if (left_ == 0) load();
    --left_;
    return (cur_ >> left_) & 1;
  }

  std::uint32_t bits(int count) {
    std::uint32_t v = 0;
    for (int i = 0; i < count; ++i) v = (v << 1) | static_cast<std::uint32_t>(bit());
    return v;
  }

 private:
  void load() {
    if (pos_ >= data_.size()) throw Error("entropy-coded segment is truncated");
    cur_ = data_[pos_++];
    if (cur_ == 0xFF) {
      if (pos_ >= data_.size()) throw Error("entropy-coded segment is truncated");
      if (data_[pos_] != 0x00) throw Error("unexpected marker inside entropy-coded segment");
      ++pos_;
    }
    left_ = 8;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint8_t cur_ = 0;
  int left_ = 0;
};

class HuffmanDecoder {
 public:
  explicit HuffmanDecoder(const HuffmanSpec& spec) : symbols_(spec.symbols) {
    std::int32_t code = 0;
    std::int32_t k = 0;
    for (int len = 1; len <= 16; ++len) {
      const int n = spec.counts[len - 1];
      valptr_[len] = k;
      mincode_[len] = code;
      code += n;
      k += n;
      maxcode_[len] = n > 0 ? code - 1 : -1;
      code <<= 1;
    }
    if (static_cast<std::size_t>(k) != symbols_.size())
      throw Error("Huffman table symbol count mismatch");
  }

  int decode(BitReader& r) const {
    std::int32_t code = 0;
    for (int len = 1; len <= 16; ++len) {
      code = (code << 1) | r.bit();
      if (maxcode_[len] >= 0 && code <= maxcode_[len] && code >= mincode_[len])
        return symbols_[valptr_[len] + code - mincode_[len]];
    }
    throw Error("invalid Huffman code");
  }

 private:
  std::vector<std::uint8_t> symbols_;
  std::array<std::int32_t, 17> mincode_{};
  std::array<std::int32_t, 17> maxcode_{};
  std::array<std::int32_t, 17> valptr_{};
};

// Magnitude category (SSSS) of a coefficient value.
inline int magnitude_category(int v) {
  return static_cast<int>(std::bit_width(static_cast<unsigned>(std::abs(v))));
}

inline std::uint32_t magnitude_bits(int v, int category) {
  return static_cast<std::uint32_t>(v >= 0 ? v : v + (1 << category) - 1) &
         ((1u << category) - 1u);
}

inline int extend_magnitude(std::uint32_t bits, int category) {
  if (category == 0) return 0;
  const int v = static_cast<int>(bits);
  return v < (1 << (category - 1)) ? v - (1 << category) + 1 : v;
}

// One block visited by an interleaved scan. `real` is false for padding
// blocks that lie outside the component's 8-padded grid (4:2:0 luma when
// the width or height is not a multiple of 16).
struct ScanBlock {
  int channel;
  int bx;
  int by;
  bool real;
};

inline int sampling_factor(Layout layout, int channel) {
  return (layout == Layout::k420 && channel == 0) ? 2 : 1;
}

template <typename T>
std::vector<ScanBlock> scan_order(const CoeffPlanes<T>& planes) {
  const int hmax = planes.layout == Layout::k420 ? 2 : 1;
  const int mcu_px = 8 * hmax;
  const int mcux = (planes.image_width + mcu_px - 1) / mcu_px;
  const int mcuy = (planes.image_height + mcu_px - 1) / mcu_px;
  std::vector<ScanBlock> order;
  for (int my = 0; my < mcuy; ++my) {
    for (int mx = 0; mx < mcux; ++mx) {
      for (int c = 0; c < 3; ++c) {
        const int f = sampling_factor(planes.layout, c);
        const auto& ch = planes.channels[c];
        for (int v = 0; v < f; ++v) {
          for (int h = 0; h < f; ++h) {
            const int bx = mx * f + h, by = my * f + v;
            order.push_back({c, bx, by, bx < ch.blocks_x && by < ch.blocks_y});
          }
        }
      }
    }
  }
  return order;
}

struct EntropyStats {
  std::uint64_t total_bits = 0;  // including final byte padding, excluding stuffing
  std::array<std::uint64_t, 3> dc_bits{};
  std::array<std::uint64_t, 3> ac_bits{};
};

struct EncodedScan {
  std::vector<std::uint8_t> data;
  EntropyStats stats;
};

// Baseline sequential Huffman coding with the standard tables.
inline EncodedScan entropy_encode(const CoeffPlanes<int>& q) {
  const std::array<HuffmanEncoder, 2> dc_enc = {HuffmanEncoder(std_dc_luma()), HuffmanEncoder(std_dc_chroma())};
  const std::array<HuffmanEncoder, 2> ac_enc = {HuffmanEncoder(std_ac_luma()), HuffmanEncoder(std_ac_chroma())};
  EncodedScan out;
  BitWriter w(out.data);
  std::array<int, 3> pred{};
  std::array<int, 64> zz{};
  for (const auto& sb : scan_order(q)) {
    const int c = sb.channel;
    const int cls = table_class(c);
    const auto& ch = q.channels[c];
    if (sb.real) {
      const auto blk = ch.block(sb.by * ch.blocks_x + sb.bx);
      for (int i = 0; i < 64; ++i) zz[i] = blk[kZigzag[i]];
    } else {
      zz.fill(0);
      zz[0] = pred[c];
    }
    const int diff = zz[0] - pred[c];
    pred[c] = zz[0];
    const int dcat = magnitude_category(diff);
    if (dcat > 11) throw Error("DC difference out of baseline range: " + std::to_string(diff));
    const auto& de = dc_enc[cls];
    w.put(de.code[dcat], de.length[dcat]);
    w.put(magnitude_bits(diff, dcat), dcat);
    out.stats.dc_bits[c] += de.length[dcat] + dcat;

    const auto& ae = ac_enc[cls];
    int run = 0;
    for (int i = 1; i < 64; ++i) {
      const int v = zz[i];
      if (v == 0) {
        ++run;
        continue;
      }
      while (run > 15) {
        w.put(ae.code[0xF0], ae.length[0xF0]);
        out.stats.ac_bits[c] += ae.length[0xF0];
        run -= 16;
      }
      const int acat = magnitude_category(v);
      if (acat > 10) throw Error("AC coefficient out of baseline range: " + std::to_string(v));
      const int sym = (run << 4) | acat;
      w.put(ae.code[sym], ae.length[sym]);
      w.put(magnitude_bits(v, acat), acat);
      out.stats.ac_bits[c] += ae.length[sym] + acat;
      run = 0;
    }
    if (run > 0) {
      w.put(ae.code[0x00], ae.length[0x00]);
      out.stats.ac_bits[c] += ae.length[0x00];
    }
  }
  std::uint64_t coded = 0;
  for (int c = 0; c < 3; ++c) coded += out.stats.dc_bits[c] + out.stats.ac_bits[c];
  w.flush();
  out.stats.total_bits = (coded + 7) / 8 * 8;
  return out;
}

// Decodes a scan into `shape` (a zero-initialized CoeffPlanes carrying the
// component geometry) using the given per-channel tables.
inline CoeffPlanes<int> entropy_decode(std::span<const std::uint8_t> data, CoeffPlanes<int> shape,
                                       const std::array<HuffmanSpec, 3>& dc_specs,
                                       const std::array<HuffmanSpec, 3>& ac_specs) {
  std::vector<HuffmanDecoder> dc, ac;
  for (int c = 0; c < 3; ++c) {
    dc.emplace_back(dc_specs[c]);
    ac.emplace_back(ac_specs[c]);
  }
  BitReader r(data);
  std::array<int, 3> pred{};
  std::array<int, 64> zz{};
  for (const auto& sb : scan_order(shape)) {
    const int c = sb.channel;
    zz.fill(0);
    const int dcat = dc[c].decode(r);
    if (dcat > 11) throw Error("invalid DC magnitude category");
    pred[c] += extend_magnitude(r.bits(dcat), dcat);
    zz[0] = pred[c];
    for (int i = 1; i < 64;) {
      const int sym = ac[c].decode(r);
      const int run = sym >> 4, cat = sym & 15;
      if (cat == 0) {
        if (run == 15) {
          i += 16;
          continue;
        }
        break;
      }
      i += run;
      if (i > 63) throw Error("AC run exceeds block");
      zz[i++] = extend_magnitude(r.bits(cat), cat);
    }
    if (sb.real) {
      auto& ch = shape.channels[c];
      auto blk = ch.block(sb.by * ch.blocks_x + sb.bx);
      for (int i = 0; i < 64; ++i) blk[kZigzag[i]] = zz[i];
    }
  }
  return shape;
}

inline CoeffPlanes<int> entropy_decode(std::span<const std::uint8_t> data, CoeffPlanes<int> shape) {
  return entropy_decode(data, std::move(shape), {std_dc_luma(), std_dc_chroma(), std_dc_chroma()},
                        {std_ac_luma(), std_ac_chroma(), std_ac_chroma()});
}

}  // namespace jpegq

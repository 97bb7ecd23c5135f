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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jpegq/common.hpp"
#include "jpegq/huffman.hpp"

namespace jpegq {

struct JpegBitstream {
  std::vector<std::uint8_t> bytes;
  EntropyStats stats;
};

struct JfifContents {
  IntQuantTablePair tables;
  CoeffPlanes<int> coeffs;  // carries layout and image dimensions
};

namespace jfif_detail {

inline void put16(std::vector<std::uint8_t>& out, int v) {
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void marker(std::vector<std::uint8_t>& out, std::uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

inline void write_dqt(std::vector<std::uint8_t>& out, int id, const std::array<int, 64>& table) {
  marker(out, 0xDB);
  put16(out, 2 + 65);
  out.push_back(static_cast<std::uint8_t>(id));  // Pq = 0 (8-bit)
  for (int i = 0; i < 64; ++i) {
    const int v = table[kZigzag[i]];
    if (v < 1 || v > 255) throw Error("quantization table entry outside [1,255]");
    out.push_back(static_cast<std::uint8_t>(v));
  }
}

inline void write_dht(std::vector<std::uint8_t>& out, int tc_th, const HuffmanSpec& spec) {
  marker(out, 0xC4);
  put16(out, 2 + 1 + 16 + static_cast<int>(spec.symbols.size()));
  out.push_back(static_cast<std::uint8_t>(tc_th));
  out.insert(out.end(), spec.counts.begin(), spec.counts.end());
  out.insert(out.end(), spec.symbols.begin(), spec.symbols.end());
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> d) : d_(d) {}
  std::uint8_t u8() {
    need(1);
    return d_[pos_++];
  }
  int u16() {
    need(2);
    const int v = (d_[pos_] << 8) | d_[pos_ + 1];
    pos_ += 2;
    return v;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return d_.size(); }
  void need(std::size_t n) const {
    if (pos_ + n > d_.size()) throw Error("JPEG stream is truncated");
  }
  std::span<const std::uint8_t> rest() const { return d_.subspan(pos_); }

 private:
  std::span<const std::uint8_t> d_;
  std::size_t pos_ = 0;
};

struct FrameComponent {
  int id = 0;
  int h = 1;
  int v = 1;
  int tq = 0;
};

}  // namespace jfif_detail

// Serializes tables and quantized coefficients as a baseline JFIF file
// with standard Huffman tables.
inline JpegBitstream write_jfif(const IntQuantTablePair& tables, const CoeffPlanes<int>& q) {
  using namespace jfif_detail;
  if (q.image_width < 1 || q.image_height < 1 || q.image_width > 65535 || q.image_height > 65535)
    throw Error("image dimensions out of range for JFIF");
  JpegBitstream bs;
  auto& out = bs.bytes;
  marker(out, 0xD8);

  marker(out, 0xE0);
  put16(out, 16);
  for (char ch : std::string("JFIF")) out.push_back(static_cast<std::uint8_t>(ch));
  out.push_back(0);
  out.push_back(1);  // version 1.01
  out.push_back(1);
  out.push_back(0);  // aspect-ratio units
  put16(out, 1);
  put16(out, 1);
  out.push_back(0);  // no thumbnail
  out.push_back(0);

  write_dqt(out, 0, tables.luma);
  write_dqt(out, 1, tables.chroma);

  marker(out, 0xC0);
  put16(out, 8 + 3 * 3);
  out.push_back(8);
  put16(out, q.image_height);
  put16(out, q.image_width);
  out.push_back(3);
  for (int c = 0; c < 3; ++c) {
    const int f = sampling_factor(q.layout, c);
    out.push_back(static_cast<std::uint8_t>(c + 1));
    out.push_back(static_cast<std::uint8_t>((f << 4) | f));
    out.push_back(static_cast<std::uint8_t>(table_class(c)));
  }

  write_dht(out, 0x00, std_dc_luma());
  write_dht(out, 0x10, std_ac_luma());
  write_dht(out, 0x01, std_dc_chroma());
  write_dht(out, 0x11, std_ac_chroma());

  marker(out, 0xDA);
  put16(out, 6 + 2 * 3);
  out.push_back(3);
  for (int c = 0; c < 3; ++c) {
    out.push_back(static_cast<std::uint8_t>(c + 1));
    const int t = table_class(c);
    out.push_back(static_cast<std::uint8_t>((t << 4) | t));
  }
  out.push_back(0);
  out.push_back(63);
  out.push_back(0);

  auto scan = entropy_encode(q);
  out.insert(out.end(), scan.data.begin(), scan.data.end());
  bs.stats = scan.stats;
  marker(out, 0xD9);
  return bs;
}

// Parses a baseline sequential, Huffman-coded, three-component JFIF file
// with 4:4:4 or 4:2:0 sampling.
inline JfifContents read_jfif(std::span<const std::uint8_t> bytes) {
  using namespace jfif_detail;
  Cursor cur(bytes);
  if (cur.u8() != 0xFF || cur.u8() != 0xD8) throw Error("missing SOI marker");

  std::array<std::optional<std::array<int, 64>>, 4> qt;
  std::array<std::optional<HuffmanSpec>, 4> dc_tables, ac_tables;
  std::vector<FrameComponent> frame;
  int width = 0, height = 0;
  std::optional<JfifContents> result;

  for (;;) {
    std::uint8_t b = cur.u8();
    if (b != 0xFF) throw Error("expected a marker");
    std::uint8_t m = cur.u8();
    while (m == 0xFF) m = cur.u8();

    if (m == 0xD9) break;
    if (m == 0xD8 || (m >= 0xD0 && m <= 0xD7) || m == 0x01) throw Error("unexpected marker in header");
    if (m == 0xC2 || m == 0xC6 || m == 0xCA || m == 0xCE)
      throw Error("progressive JPEG is not supported");
    if (m == 0xC3 || m == 0xC7 || m == 0xCB || m == 0xCF) throw Error("lossless JPEG is not supported");
    if (m == 0xC9 || m == 0xCD || m == 0xCC) throw Error("arithmetic coding is not supported");
    if (m == 0xC5) throw Error("hierarchical JPEG is not supported");

    const int len = cur.u16();
    if (len < 2) throw Error("invalid segment length");
    cur.need(static_cast<std::size_t>(len - 2));
    const std::size_t seg_end = cur.pos() + len - 2;

    switch (m) {
      case 0xDB: {
        while (cur.pos() < seg_end) {
          const int pq_tq = cur.u8();
          const int pq = pq_tq >> 4, tq = pq_tq & 15;
          if (tq > 3) throw Error("invalid DQT table id");
          if (pq != 0) throw Error("16-bit quantization tables are not supported");
          std::array<int, 64> t{};
          for (int i = 0; i < 64; ++i) t[kZigzag[i]] = cur.u8();
          for (int v : t)
            if (v < 1) throw Error("quantization table entry is zero");
          qt[tq] = t;
        }
        break;
      }
      case 0xC4: {
        while (cur.pos() < seg_end) {
          const int tc_th = cur.u8();
          const int tc = tc_th >> 4, th = tc_th & 15;
          if (tc > 1 || th > 3) throw Error("invalid DHT table class or id");
          HuffmanSpec spec;
          int total = 0;
          for (int i = 0; i < 16; ++i) total += spec.counts[i] = cur.u8();
          if (total > 256) throw Error("DHT declares too many symbols");
          spec.symbols.resize(total);
          for (auto& s : spec.symbols) s = cur.u8();
          (tc == 0 ? dc_tables : ac_tables)[th] = std::move(spec);
        }
        break;
      }
      case 0xC0:
      case 0xC1: {
        if (cur.u8() != 8) throw Error("only 8-bit precision is supported");
        height = cur.u16();
        width = cur.u16();
        const int nf = cur.u8();
        if (nf != 3) throw Error("only three-component images are supported");
        if (width == 0 || height == 0) throw Error("invalid frame dimensions");
        frame.clear();
        for (int i = 0; i < nf; ++i) {
          FrameComponent fc;
          fc.id = cur.u8();
          const int hv = cur.u8();
          fc.h = hv >> 4;
          fc.v = hv & 15;
          fc.tq = cur.u8();
          if (fc.tq > 3) throw Error("invalid quantization table selector");
          frame.push_back(fc);
        }
        break;
      }
      case 0xDD: {
        if (cur.u16() != 0) throw Error("restart intervals are not supported");
        break;
      }
      case 0xDA: {
        if (frame.empty()) throw Error("SOS before SOF");
        if (result) throw Error("multiple scans are not supported");
        const int ns = cur.u8();
        if (ns != 3) throw Error("only single interleaved scans are supported");
        std::array<int, 3> td{}, ta{};
        for (int i = 0; i < ns; ++i) {
          const int id = cur.u8();
          if (id != frame[i].id) throw Error("scan component order does not match frame");
          const int t = cur.u8();
          td[i] = t >> 4;
          ta[i] = t & 15;
          if (td[i] > 3 || ta[i] > 3) throw Error("invalid Huffman table selector");
        }
        const int ss = cur.u8(), se = cur.u8(), ahal = cur.u8();
        if (ss != 0 || se != 63 || ahal != 0) throw Error("scan parameters are not baseline sequential");

        Layout layout;
        if (frame[0].h == 1 && frame[0].v == 1) {
          layout = Layout::k444;
        } else if (frame[0].h == 2 && frame[0].v == 2) {
          layout = Layout::k420;
        } else {
          throw Error("unsupported chroma subsampling");
        }
        for (int c = 1; c < 3; ++c)
          if (frame[c].h != 1 || frame[c].v != 1) throw Error("unsupported chroma subsampling");
        if (frame[1].tq != frame[2].tq) throw Error("Cb and Cr must share a quantization table");

        JfifContents out;
        for (int c = 0; c < 2; ++c) {
          const auto& t = qt[frame[c].tq];
          if (!t) throw Error("scan references an undefined quantization table");
          out.tables[c] = *t;
        }
        std::array<HuffmanSpec, 3> dcs, acs;
        for (int c = 0; c < 3; ++c) {
          if (!dc_tables[td[c]] || !ac_tables[ta[c]])
            throw Error("scan references an undefined Huffman table");
          dcs[c] = *dc_tables[td[c]];
          acs[c] = *ac_tables[ta[c]];
        }
        CoeffPlanes<int> shape;
        shape.layout = layout;
        shape.image_width = width;
        shape.image_height = height;
        const int cw = layout == Layout::k420 ? (width + 1) / 2 : width;
        const int chh = layout == Layout::k420 ? (height + 1) / 2 : height;
        shape.channels[0] = CoeffChannel<int>(width, height);
        shape.channels[1] = CoeffChannel<int>(cw, chh);
        shape.channels[2] = CoeffChannel<int>(cw, chh);

        // Entropy-coded data runs to the next non-stuffing marker.
        const auto rest = cur.rest();
        std::size_t n = 0;
        while (n + 1 < rest.size() && !(rest[n] == 0xFF && rest[n + 1] != 0x00)) ++n;
        if (n + 1 >= rest.size()) throw Error("JPEG stream is truncated");
        out.coeffs = entropy_decode(rest.first(n), std::move(shape), dcs, acs);
        cur.skip(n);
        result = std::move(out);
        continue;
      }
      default:
        break;  // APPn, COM and other informational segments
    }
    if (cur.pos() > seg_end) throw Error("segment overruns its declared length");
    cur.skip(seg_end - cur.pos());
  }
  if (!result) throw Error("no scan found before EOI");
  return *result;
}

}  // namespace jpegq

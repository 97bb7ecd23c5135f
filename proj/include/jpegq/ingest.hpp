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
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "jpegq/common.hpp"
#include "jpegq/taskloss.hpp"

namespace jpegq {

namespace ingest_detail {

inline void skip_space_and_comments(std::istream& is) {
  for (;;) {
    const int ch = is.peek();
    if (ch == '#') {
      std::string dummy;
      std::getline(is, dummy);
    } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      is.get();
    } else {
      return;
    }
  }
}

inline int read_header_int(std::istream& is) {
  skip_space_and_comments(is);
  int v = -1;
  if (!(is >> v) || v < 0) throw Error("invalid PNM header");
  return v;
}

}  // namespace ingest_detail

// Reads binary P6 (RGB) or P5 (grayscale, replicated to three channels)
// with maxval 255.
inline RgbImage read_pnm(std::istream& is) {
  using namespace ingest_detail;
  char m0 = 0, m1 = 0;
  if (!is.get(m0) || !is.get(m1) || m0 != 'P' || (m1 != '6' && m1 != '5')) throw Error("not a binary PPM/PGM file");
  const int w = read_header_int(is);
  const int h = read_header_int(is);
  const int maxval = read_header_int(is);
  if (maxval != 255) throw Error("only 8-bit PNM files (maxval 255) are supported");
  if (w < 1 || h < 1 || w > 1 << 15 || h > 1 << 15) throw Error("invalid PNM dimensions");
  is.get();  // single whitespace after maxval
  const int channels = m1 == '6' ? 3 : 1;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * channels);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw Error("PNM pixel data is truncated");
  RgbImage img(w, h);
  if (channels == 3) {
    img.samples = std::move(raw);
  } else {
    for (std::size_t i = 0; i < raw.size(); ++i)
      for (int c = 0; c < 3; ++c) img.samples[i * 3 + c] = raw[i];
  }
  return img;
}

inline void write_ppm(std::ostream& os, const RgbImage& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.samples.data()), static_cast<std::streamsize>(img.samples.size()));
}

inline RgbImage load_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  return read_pnm(f);
}

inline void save_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  write_ppm(f, img);
}

// Bilinear resize with half-pixel centers and edge clamping. Same-size
// input is returned unchanged.
inline RgbImage resize_bilinear(const RgbImage& in, int w, int h) {
  if (in.width == w && in.height == h) return in;
  RgbImage out(w, h);
  const double sx = static_cast<double>(in.width) / w, sy = static_cast<double>(in.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * in.at(x0, y0, c) + wx * in.at(x1, y0, c);
        const double bot = (1 - wx) * in.at(x0, y1, c) + wx * in.at(x1, y1, c);
        out.at(x, y, c) = to_u8((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

struct CorpusEntry {
  std::string name;
  LabeledImage item;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::vector<std::string> skipped;  // "name: reason"

  std::vector<LabeledImage> items() const {
    std::vector<LabeledImage> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.item);
    return out;
  }
  std::vector<RgbImage> images() const {
    std::vector<RgbImage> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.item.image);
    return out;
  }
};

// Label index file: one "filename label" pair per line, '#' comments.
inline std::map<std::string, int> read_labels(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open label file '" + path + "'");
  std::map<std::string, int> labels;
  std::string line;
  while (std::getline(f, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string name;
    int label = -1;
    if (!(ls >> name >> label) || label < 0) throw Error("bad label line: " + line);
    labels[name] = label;
  }
  return labels;
}

struct IngestOptions {
  int size = 299;
  std::string labels_path;   // optional
  bool require_labels = false;
};

// Loads every *.ppm / *.pgm file of a directory in lexicographic order,
// resized to size x size. Unreadable files are skipped and listed.
inline Corpus ingest(const std::string& dir, const IngestOptions& opt = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("dataset path '" + dir + "' is not a directory");
  if (opt.size < 16) throw Error("target size must be at least 16");
  std::map<std::string, int> labels;
  if (!opt.labels_path.empty()) labels = read_labels(opt.labels_path);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  Corpus corpus;
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    int label = -1;
    if (auto it = labels.find(name); it != labels.end()) {
      label = it->second;
    } else if (opt.require_labels) {
      throw Error("no label for '" + name + "'");
    }
    try {
      auto img = load_pnm(path.string());
      corpus.entries.push_back({name, {resize_bilinear(img, opt.size, opt.size), label}});
    } catch (const Error& e) {
      corpus.skipped.push_back(name + ": " + e.what());
    }
  }
  if (corpus.entries.empty()) throw Error("no usable images in '" + dir + "'");
  return corpus;
}

}  // namespace jpegq

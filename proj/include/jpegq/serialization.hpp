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

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "jpegq/common.hpp"
#include "jpegq/entropy.hpp"
#include "jpegq/taskloss.hpp"

namespace jpegq {

// Shortest decimal that parses back to exactly the same double.
inline std::string format_exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace serialization_detail {

inline double parse_double(const std::string& tok) {
  double v = 0.0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) throw Error("invalid number '" + tok + "'");
  return v;
}

// Whitespace-separated tokens, skipping '#' comment lines.
inline std::vector<std::string> tokens(std::istream& is) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) out.push_back(tok);
  }
  return out;
}

template <typename T>
void write_grid(std::ostream& os, const std::array<T, 64>& t) {
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      if (c) os << ' ';
      if constexpr (std::is_floating_point_v<T>) {
        os << format_exact(t[r * 8 + c]);
      } else {
        os << t[r * 8 + c];
      }
    }
    os << '\n';
  }
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  return f;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  return f;
}

}  // namespace serialization_detail

// Table text format: two 8x8 grids (luma then chroma), row-major, any
// whitespace between values, lines starting with '#' are comments.
template <typename T>
void write_tables(std::ostream& os, const TablePair<T>& t, const std::string& comment = {}) {
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "# luma\n";
  serialization_detail::write_grid(os, t.luma);
  os << "# chroma\n";
  serialization_detail::write_grid(os, t.chroma);
}

inline QuantTableParams read_tables(std::istream& is) {
  const auto toks = serialization_detail::tokens(is);
  if (toks.size() != 128)
    throw Error("table file must contain 128 values, found " + std::to_string(toks.size()));
  QuantTableParams p;
  for (int k = 0; k < 64; ++k) {
    p.luma[k] = serialization_detail::parse_double(toks[k]);
    p.chroma[k] = serialization_detail::parse_double(toks[64 + k]);
  }
  for (int k = 0; k < 64; ++k)
    if (!(p.luma[k] > 0.0) || !(p.chroma[k] > 0.0)) throw Error("table entries must be positive");
  return p;
}

inline QuantTableParams load_tables(const std::string& path) {
  auto f = serialization_detail::open_in(path);
  return read_tables(f);
}

template <typename T>
void save_tables(const std::string& path, const TablePair<T>& t, const std::string& comment = {}) {
  auto f = serialization_detail::open_out(path);
  write_tables(f, t, comment);
}

// Entropy checkpoint, version 1:
//   jpegq-entropy 1
//   luma_dc <43 values>
//   luma_ac <43 values>
//   chroma_dc <43 values>
//   chroma_ac <43 values>
// Parameter order within a model follows DensityModel's offsets
// (H1, H2, H3, H4, b1..b4, a1..a3).
inline constexpr std::array<const char*, 4> kEntropyModelNames = {"luma_dc", "luma_ac", "chroma_dc", "chroma_ac"};

inline void write_entropy_checkpoint(std::ostream& os, const EntropyEstimatorSet& set) {
  os << "jpegq-entropy 1\n";
  for (int m = 0; m < 4; ++m) {
    os << kEntropyModelNames[m];
    for (double v : set.models[m].params) os << ' ' << format_exact(v);
    os << '\n';
  }
}

inline EntropyEstimatorSet read_entropy_checkpoint(std::istream& is) {
  using serialization_detail::parse_double;
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "jpegq-entropy") throw Error("not an entropy checkpoint");
  if (version != "1") throw Error("unsupported entropy checkpoint version " + version);
  EntropyEstimatorSet set;
  for (int m = 0; m < 4; ++m) {
    std::string name;
    if (!(is >> name) || name != kEntropyModelNames[m]) throw Error("entropy checkpoint: expected " + std::string(kEntropyModelNames[m]));
    for (double& v : set.models[m].params) {
      std::string tok;
      if (!(is >> tok)) throw Error("entropy checkpoint is truncated");
      v = parse_double(tok);
    }
  }
  return set;
}

inline void save_entropy_checkpoint(const std::string& path, const EntropyEstimatorSet& set) {
  auto f = serialization_detail::open_out(path);
  write_entropy_checkpoint(f, set);
}

inline EntropyEstimatorSet load_entropy_checkpoint(const std::string& path) {
  auto f = serialization_detail::open_in(path);
  return read_entropy_checkpoint(f);
}

// Classifier checkpoint, version 1:
//   jpegq-classifier 1
//   grid <gx> <gy>
//   classes <L>
//   weights <L * gx * gy values, class-major>
//   bias <L values>
inline void write_classifier_checkpoint(std::ostream& os, const ToyClassifier& c) {
  os << "jpegq-classifier 1\n";
  os << "grid " << c.grid_x << ' ' << c.grid_y << '\n';
  os << "classes " << c.classes << '\n';
  os << "weights";
  for (double v : c.weights) os << ' ' << format_exact(v);
  os << "\nbias";
  for (double v : c.bias) os << ' ' << format_exact(v);
  os << '\n';
}

inline ToyClassifier read_classifier_checkpoint(std::istream& is) {
  using serialization_detail::parse_double;
  std::string magic, version, key;
  if (!(is >> magic >> version) || magic != "jpegq-classifier") throw Error("not a classifier checkpoint");
  if (version != "1") throw Error("unsupported classifier checkpoint version " + version);
  ToyClassifier c;
  if (!(is >> key >> c.grid_x >> c.grid_y) || key != "grid") throw Error("classifier checkpoint: bad grid line");
  if (!(is >> key >> c.classes) || key != "classes") throw Error("classifier checkpoint: bad classes line");
  if (c.grid_x < 1 || c.grid_y < 1 || c.classes < 2) throw Error("classifier checkpoint: invalid dimensions");
  auto read_values = [&](const char* name, std::vector<double>& dst, std::size_t n) {
    if (!(is >> key) || key != name) throw Error(std::string("classifier checkpoint: expected ") + name);
    dst.resize(n);
    for (double& v : dst) {
      std::string tok;
      if (!(is >> tok)) throw Error("classifier checkpoint is truncated");
      v = parse_double(tok);
    }
  };
  read_values("weights", c.weights, static_cast<std::size_t>(c.classes) * c.features());
  read_values("bias", c.bias, c.classes);
  return c;
}

inline void save_classifier_checkpoint(const std::string& path, const ToyClassifier& c) {
  auto f = serialization_detail::open_out(path);
  write_classifier_checkpoint(f, c);
}

inline ToyClassifier load_classifier_checkpoint(const std::string& path) {
  auto f = serialization_detail::open_in(path);
  return read_classifier_checkpoint(f);
}

}  // namespace jpegq

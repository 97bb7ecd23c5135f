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
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "jpegq/codec.hpp"
#include "jpegq/common.hpp"
#include "jpegq/diffproxy.hpp"
#include "jpegq/entropy.hpp"
#include "jpegq/taskloss.hpp"

namespace jpegq {

struct RdRow {
  int q = 0;
  double bpp_actual = 0.0;
  std::optional<double> bpp_estimated;
  double psnr = 0.0;
  std::optional<double> accuracy;
};

// One row per quality factor, sorted by q, averaged over an image set.
struct RdCurve {
  std::vector<RdRow> rows;
};

struct SweepOptions {
  Layout layout = Layout::k420;
  const ToyClassifier* classifier = nullptr;
  const EntropyEstimatorSet* entropy = nullptr;
};

// Estimated bits of hard-quantized coefficients, which are integers in
// table units.
inline double estimated_bpp(const IntegerBitsTable& bits, const CoeffPlanes<int>& q, std::size_t pixels) {
  return bits.estimate(q) / static_cast<double>(pixels);
}

// PSNR is averaged per image (capped at kPsnrCap), not computed from the
// mean MSE. Accuracy uses the 8-bit decoded reconstruction.
inline RdCurve sweep(const QuantTableParams& tables, std::span<const LabeledImage> corpus,
                     std::span<const int> qualities, const SweepOptions& opt = {}) {
  if (corpus.empty()) throw Error("evaluation corpus is empty");
  if (qualities.empty()) throw Error("quality list is empty");
  std::vector<int> qs(qualities.begin(), qualities.end());
  std::sort(qs.begin(), qs.end());
  for (int q : qs) require_quality(q);
  std::optional<IntegerBitsTable> bits;
  if (opt.entropy) bits.emplace(*opt.entropy);

  RdCurve curve;
  for (int q : qs) {
    const auto t = scale_table(tables, q);
    RdRow row;
    row.q = q;
    double bpp = 0.0, est = 0.0, ps = 0.0;
    int correct = 0;
    for (const auto& item : corpus) {
      const auto m = encode_measure(item.image, t, opt.layout);
      bpp += m.bpp_actual;
      ps += capped_psnr(m.psnr);
      if (bits) est += estimated_bpp(*bits, m.qcoeffs, item.image.pixel_count());
      if (opt.classifier) {
        if (item.label < 0) throw Error("accuracy sweep requires labeled images");
        correct += classify(*opt.classifier, m.reconstruction) == item.label;
      }
    }
    const double n = static_cast<double>(corpus.size());
    row.bpp_actual = bpp / n;
    row.psnr = ps / n;
    if (bits) row.bpp_estimated = est / n;
    if (opt.classifier) row.accuracy = correct / n;
    curve.rows.push_back(row);
  }
  return curve;
}

inline RdCurve sweep(const QuantTableParams& tables, std::span<const RgbImage> images,
                     std::span<const int> qualities, const SweepOptions& opt = {}) {
  std::vector<LabeledImage> wrapped;
  wrapped.reserve(images.size());
  for (const auto& im : images) wrapped.push_back({im, -1});
  return sweep(tables, wrapped, qualities, opt);
}

struct ScatterPoint {
  std::size_t image = 0;
  int q = 0;
  double bpp_actual = 0.0;
  double bpp_estimated = 0.0;
};

// Per-(image, q) estimated and actual bits per pixel.
inline std::vector<ScatterPoint> estimate_vs_actual(const QuantTableParams& tables,
                                                    std::span<const RgbImage> images,
                                                    std::span<const int> qualities, Layout layout,
                                                    const EntropyEstimatorSet& entropy) {
  const IntegerBitsTable bits(entropy);
  std::vector<ScatterPoint> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (int q : qualities) {
      const auto m = encode_measure(images[i], scale_table(tables, q), layout);
      out.push_back({i, q, m.bpp_actual, estimated_bpp(bits, m.qcoeffs, images[i].pixel_count())});
    }
  }
  return out;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("pearson: length mismatch");
  if (xs.size() < 2) throw Error("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace evaluation_detail {

struct Point {
  double x;
  double y;
};

// Sorted by x; duplicate x values are averaged.
inline std::vector<Point> sorted_points(std::vector<Point> pts) {
  std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
  std::vector<Point> out;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    double sy = 0.0;
    while (j < pts.size() && pts[j].x == pts[i].x) sy += pts[j++].y;
    out.push_back({pts[i].x, sy / static_cast<double>(j - i)});
    i = j;
  }
  return out;
}

inline double interpolate(const std::vector<Point>& pts, double x) {
  if (x <= pts.front().x) return pts.front().y;
  if (x >= pts.back().x) return pts.back().y;
  const auto it = std::upper_bound(pts.begin(), pts.end(), x, [](double v, const Point& p) { return v < p.x; });
  const Point& hi = *it;
  const Point& lo = *(it - 1);
  const double t = (x - lo.x) / (hi.x - lo.x);
  return lo.y + t * (hi.y - lo.y);
}

// Union of both x sets restricted to the overlap of their ranges.
inline std::vector<double> shared_grid(const std::vector<Point>& a, const std::vector<Point>& b) {
  const double lo = std::max(a.front().x, b.front().x);
  const double hi = std::min(a.back().x, b.back().x);
  std::vector<double> g;
  for (const auto* pts : {&a, &b})
    for (const auto& p : *pts)
      if (p.x >= lo && p.x <= hi) g.push_back(p.x);
  g.push_back(lo);
  g.push_back(hi);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

}  // namespace evaluation_detail

// Curve b relative to curve a. Positive delta_psnr means b is better at
// that rate; negative delta_bpp_percent means b needs fewer bits for that
// quality.
struct CurveComparison {
  std::vector<double> bpp_grid;
  std::vector<double> delta_psnr;
  std::vector<double> psnr_grid;
  std::vector<double> delta_bpp_percent;
  double max_delta_psnr = 0.0;
  double min_delta_psnr = 0.0;
  double mean_delta_psnr = 0.0;
  double max_bpp_saving_percent = 0.0;
  std::vector<double> crossovers_bpp;  // where delta_psnr changes sign
};

inline CurveComparison compare_curves(const RdCurve& a, const RdCurve& b) {
  using namespace evaluation_detail;
  if (a.rows.empty() || b.rows.empty()) throw Error("compare_curves: empty curve");
  std::vector<Point> ra, rb, da, db;
  for (const auto& r : a.rows) {
    ra.push_back({r.bpp_actual, r.psnr});
    da.push_back({r.psnr, r.bpp_actual});
  }
  for (const auto& r : b.rows) {
    rb.push_back({r.bpp_actual, r.psnr});
    db.push_back({r.psnr, r.bpp_actual});
  }
  ra = sorted_points(ra);
  rb = sorted_points(rb);
  da = sorted_points(da);
  db = sorted_points(db);
  if (ra.front().x > rb.back().x || rb.front().x > ra.back().x)
    throw Error("compare_curves: bpp ranges do not overlap");

  CurveComparison out;
  out.bpp_grid = shared_grid(ra, rb);
  for (double x : out.bpp_grid) out.delta_psnr.push_back(interpolate(rb, x) - interpolate(ra, x));
  out.max_delta_psnr = *std::max_element(out.delta_psnr.begin(), out.delta_psnr.end());
  out.min_delta_psnr = *std::min_element(out.delta_psnr.begin(), out.delta_psnr.end());
  double sum = 0.0;
  for (double d : out.delta_psnr) sum += d;
  out.mean_delta_psnr = sum / static_cast<double>(out.delta_psnr.size());
  for (std::size_t i = 0; i + 1 < out.bpp_grid.size(); ++i) {
    const double d0 = out.delta_psnr[i], d1 = out.delta_psnr[i + 1];
    if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
      const double t = d0 / (d0 - d1);
      out.crossovers_bpp.push_back(out.bpp_grid[i] + t * (out.bpp_grid[i + 1] - out.bpp_grid[i]));
    }
  }

  if (!(da.front().x > db.back().x || db.front().x > da.back().x)) {
    out.psnr_grid = shared_grid(da, db);
    for (double y : out.psnr_grid) {
      const double ba = interpolate(da, y), bb = interpolate(db, y);
      out.delta_bpp_percent.push_back(100.0 * (bb - ba) / ba);
    }
    out.max_bpp_saving_percent = -*std::min_element(out.delta_bpp_percent.begin(), out.delta_bpp_percent.end());
  }
  return out;
}

namespace evaluation_detail {

inline std::string fmt6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt6(*v) : std::string(); }

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace evaluation_detail

inline constexpr const char* kCurveCsvHeader = "q,bpp_actual,bpp_estimated,psnr,accuracy";

inline void emit_csv(const RdCurve& curve, std::ostream& os) {
  using evaluation_detail::fmt6;
  using evaluation_detail::fmt_opt;
  os << kCurveCsvHeader << "\n";
  for (const auto& r : curve.rows) {
    os << r.q << "," << fmt6(r.bpp_actual) << "," << fmt_opt(r.bpp_estimated) << ","
       << fmt6(capped_psnr(r.psnr)) << "," << fmt_opt(r.accuracy) << "\n";
  }
}

inline RdCurve parse_curve_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || evaluation_detail::split_csv(line) != evaluation_detail::split_csv(kCurveCsvHeader))
    throw Error("curve CSV has an unexpected header");
  RdCurve curve;
  auto num = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = evaluation_detail::split_csv(line);
    if (f.size() != 5) throw Error("curve CSV row must have 5 fields");
    RdRow r;
    r.q = std::stoi(f[0]);
    r.bpp_actual = std::stod(f[1]);
    r.bpp_estimated = num(f[2]);
    r.psnr = std::stod(f[3]);
    r.accuracy = num(f[4]);
    curve.rows.push_back(r);
  }
  return curve;
}

// Two blocks: quality gain at matched bpp, then rate change at matched PSNR.
inline void emit_csv(const CurveComparison& c, std::ostream& os) {
  using evaluation_detail::fmt6;
  os << "kind,grid,delta\n";
  for (std::size_t i = 0; i < c.bpp_grid.size(); ++i)
    os << "delta_psnr_at_bpp," << fmt6(c.bpp_grid[i]) << "," << fmt6(c.delta_psnr[i]) << "\n";
  for (std::size_t i = 0; i < c.psnr_grid.size(); ++i)
    os << "delta_bpp_percent_at_psnr," << fmt6(c.psnr_grid[i]) << "," << fmt6(c.delta_bpp_percent[i]) << "\n";
}

inline nlohmann::json to_json(const RdCurve& curve) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : curve.rows) {
    nlohmann::json j{{"q", r.q}, {"bpp_actual", r.bpp_actual}, {"psnr", capped_psnr(r.psnr)}};
    j["bpp_estimated"] = r.bpp_estimated ? nlohmann::json(*r.bpp_estimated) : nlohmann::json(nullptr);
    j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}};
}

inline nlohmann::json to_json(const CurveComparison& c) {
  return {{"bpp_grid", c.bpp_grid},
          {"delta_psnr", c.delta_psnr},
          {"psnr_grid", c.psnr_grid},
          {"delta_bpp_percent", c.delta_bpp_percent},
          {"max_delta_psnr", c.max_delta_psnr},
          {"min_delta_psnr", c.min_delta_psnr},
          {"mean_delta_psnr", c.mean_delta_psnr},
          {"max_bpp_saving_percent", c.max_bpp_saving_percent},
          {"crossovers_bpp", c.crossovers_bpp}};
}

}  // namespace jpegq

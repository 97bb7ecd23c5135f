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
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "jpegq/adam.hpp"
#include "jpegq/common.hpp"
#include "jpegq/diffproxy.hpp"
#include "jpegq/entropy.hpp"
#include "jpegq/taskloss.hpp"

namespace jpegq {

// Weights of the rate (bits per pixel), distortion (squared error per
// pixel, summed over RGB) and task (cross entropy) terms.
struct LossWeights {
  double rate = 1.0;
  double distortion = 1.0;
  double task = 0.0;

  void validate() const {
    if (rate < 0.0 || distortion < 0.0 || task < 0.0) throw Error("loss weights must be non-negative");
    if (rate == 0.0 && distortion == 0.0 && task == 0.0) throw Error("at least one loss weight must be positive");
  }
};

enum class TrainMode { kUniversal, kPerImage };

inline std::vector<int> quality_range(int qmin, int qmax) {
  if (qmin < 1 || qmax > 100 || qmin > qmax) throw Error("invalid quality range");
  std::vector<int> out;
  for (int q = qmin; q <= qmax; ++q) out.push_back(q);
  return out;
}

struct TrainConfig {
  int steps = 1000;
  int batch = 4;
  double lr = 1e-4;          // table parameters
  double entropy_lr = 1e-4;  // density-model parameters
  std::vector<int> qualities = quality_range(10, 90);
  Layout layout = Layout::k420;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kUniversal;
  // Update the density models during table optimization. Universal mode
  // defaults to joint training; per-image callers usually freeze them.
  bool train_entropy = true;
  // Steps that fit only the density models, before table updates start.
  int entropy_warmup_steps = 0;

  void validate() const {
    if (steps < 0) throw Error("steps must be non-negative");
    if (batch < 1) throw Error("batch must be at least 1");
    if (qualities.empty()) throw Error("quality set is empty");
    for (int q : qualities) require_quality(q);
    if (!(lr >= 0.0) || !(entropy_lr >= 0.0)) throw Error("learning rates must be non-negative");
  }
};

// An image with everything training needs precomputed.
struct PreparedImage {
  ImageF pixels;
  CoeffPlanes<double> analysis;
  int label = -1;
  double pixel_count = 0.0;
};

inline PreparedImage prepare_image(const RgbImage& x, Layout layout, int label = -1) {
  require_codec_size(x);
  PreparedImage p;
  p.pixels = to_real(x);
  p.analysis = analyze_real(p.pixels, layout);
  p.label = label;
  p.pixel_count = static_cast<double>(x.pixel_count());
  return p;
}

struct LossTerms {
  double total = 0.0;
  double rate = 0.0;        // estimated bits per pixel
  double distortion = 0.0;  // squared error per pixel
  double task = 0.0;
  double estimator = 0.0;   // bits per pixel of the noise-relaxed coefficients
};

struct LossEvaluation {
  LossTerms terms;
  QuantTableParams grad_tables;
  std::vector<double> grad_entropy;  // empty unless requested
};

struct LossContext {
  const EntropyEstimatorSet* entropy = nullptr;
  const ToyClassifier* classifier = nullptr;
  // When set, also fits the density models: gradient of the relaxed
  // (uniform-noise) code length with respect to their parameters.
  std::optional<std::uint64_t> estimator_noise_seed;
};

// One soft-mode forward pass and the gradient of
//   c_r * bits/pixel + c_d * squared-error/pixel + c_c * cross-entropy
// with respect to the tables. The rate term reads the soft-rounded
// coefficients; the density models train on the noise-relaxed ones.
inline LossEvaluation total_loss(const PreparedImage& x, const QuantTableParams& p, int q,
                                 const LossWeights& w, const LossContext& ctx) {
  w.validate();
  if (w.task > 0.0) {
    if (x.label < 0) throw Error("task weight is positive but the image has no label");
    if (!ctx.classifier) throw Error("task weight is positive but no classifier was given");
  }
  const bool need_entropy = w.rate > 0.0 || ctx.estimator_noise_seed.has_value();
  if (need_entropy && !ctx.entropy) throw Error("rate term requires an entropy estimator set");

  const auto fwd = forward(x.analysis, p, q, RoundingMode::kSoft);
  LossEvaluation out;
  const double inv_pixels = 1.0 / x.pixel_count;

  ImageF grad_rec(x.pixels.width, x.pixels.height);
  std::optional<CoeffPlanes<double>> grad_soft;
  if (w.rate > 0.0) {
    auto est = estimate_bits_image(fwd.quantized(), *ctx.entropy, {.coeffs = true, .params = false});
    out.terms.rate = est.bits * inv_pixels;
    grad_soft = std::move(*est.grad_coeffs);
    for (auto& ch : grad_soft->channels)
      for (double& g : ch.coeffs) g *= w.rate * inv_pixels;
  }
  if (w.distortion > 0.0) {
    const auto d = distortion_loss(x.pixels, fwd.reconstruction);
    out.terms.distortion = d.loss * inv_pixels;
    for (int c = 0; c < 3; ++c) {
      auto& g = grad_rec.planes[c].data;
      const auto& s = d.grad.planes[c].data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += w.distortion * inv_pixels * s[i];
    }
  }
  if (w.task > 0.0) {
    const auto t = task_loss(fwd.reconstruction, x.label, *ctx.classifier);
    out.terms.task = t.loss;
    for (int c = 0; c < 3; ++c) {
      auto& g = grad_rec.planes[c].data;
      const auto& s = t.grad.planes[c].data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += w.task * s[i];
    }
  }
  out.terms.total = w.rate * out.terms.rate + w.distortion * out.terms.distortion + w.task * out.terms.task;
  out.grad_tables = backward(fwd.tape, grad_rec, grad_soft ? &*grad_soft : nullptr);

  if (ctx.estimator_noise_seed) {
    const auto relaxed = add_uniform_noise(fwd.normalized(), *ctx.estimator_noise_seed);
    auto est = estimate_bits_image(relaxed, *ctx.entropy, {.coeffs = false, .params = true});
    out.terms.estimator = est.bits * inv_pixels;
    out.grad_entropy = std::move(est.grad_params);
    for (double& g : out.grad_entropy) g *= inv_pixels;
  }
  return out;
}

inline std::vector<double> flatten(const QuantTableParams& p) {
  std::vector<double> v(p.luma.begin(), p.luma.end());
  v.insert(v.end(), p.chroma.begin(), p.chroma.end());
  return v;
}

inline QuantTableParams unflatten_tables(std::span<const double> v) {
  if (v.size() != 128) throw Error("table vector must have 128 entries");
  QuantTableParams p;
  std::copy(v.begin(), v.begin() + 64, p.luma.begin());
  std::copy(v.begin() + 64, v.end(), p.chroma.begin());
  return p;
}

inline void project_tables(QuantTableParams& p) {
  for (auto* t : {&p.luma, &p.chroma})
    for (double& v : *t) v = std::max(v, 1.0);
}

struct TrainResult {
  QuantTableParams tables;
  EntropyEstimatorSet entropy;
  std::vector<LossTerms> trace;  // batch means, one per table step
};

struct TrainInit {
  QuantTableParams tables = default_tables();
  EntropyEstimatorSet entropy = EntropyEstimatorSet::initial();
};

namespace optimizer_detail {

inline bool finite(const LossTerms& t) {
  return std::isfinite(t.total) && std::isfinite(t.rate) && std::isfinite(t.distortion) &&
         std::isfinite(t.task) && std::isfinite(t.estimator);
}

[[noreturn]] inline void abort_non_finite(int step, std::size_t image, int q) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << " (image " << image << ", q " << q << ")";
  throw Error(os.str());
}

}  // namespace optimizer_detail

// One (image, quality) draw of a training batch.
struct BatchItem {
  std::size_t image = 0;
  int q = 50;
  std::uint64_t noise_seed = 0;
};

struct BatchGradient {
  LossTerms mean;
  std::vector<double> tables;   // 128, flat
  std::vector<double> entropy;  // EntropyEstimatorSet layout
};

// Mean loss and gradients over `items`, reduced in item order. Density-model
// gradients are included when `fit_entropy`.
inline BatchGradient batch_gradient(std::span<const PreparedImage> images, std::span<const BatchItem> items,
                                    const QuantTableParams& tables, const EntropyEstimatorSet& entropy,
                                    const LossWeights& w, const ToyClassifier* clf, bool fit_entropy,
                                    int step = 0) {
  BatchGradient out{{}, std::vector<double>(128, 0.0), std::vector<double>(EntropyEstimatorSet::kFlatSize, 0.0)};
  for (const auto& it : items) {
    LossContext ctx{&entropy, clf, std::nullopt};
    if (fit_entropy) ctx.estimator_noise_seed = it.noise_seed;
    const auto ev = total_loss(images[it.image], tables, it.q, w, ctx);
    if (!optimizer_detail::finite(ev.terms)) optimizer_detail::abort_non_finite(step, it.image, it.q);
    const auto gt = flatten(ev.grad_tables);
    for (int i = 0; i < 128; ++i) {
      if (!std::isfinite(gt[i])) optimizer_detail::abort_non_finite(step, it.image, it.q);
      out.tables[i] += gt[i];
    }
    for (std::size_t i = 0; i < ev.grad_entropy.size(); ++i) out.entropy[i] += ev.grad_entropy[i];
    out.mean.total += ev.terms.total;
    out.mean.rate += ev.terms.rate;
    out.mean.distortion += ev.terms.distortion;
    out.mean.task += ev.terms.task;
    out.mean.estimator += ev.terms.estimator;
  }
  const double inv = 1.0 / static_cast<double>(items.size());
  for (double& g : out.tables) g *= inv;
  for (double& g : out.entropy) g *= inv;
  out.mean.total *= inv;
  out.mean.rate *= inv;
  out.mean.distortion *= inv;
  out.mean.task *= inv;
  out.mean.estimator *= inv;
  return out;
}

namespace optimizer_detail {

// Shared loop for universal and per-image training. Each step draws
// `batch` (image, q) pairs, averages their gradients in draw order and
// applies one Adam update.
inline TrainResult run(std::span<const PreparedImage> images, const TrainConfig& cfg, const LossWeights& w,
                       const ToyClassifier* clf, TrainInit init) {
  cfg.validate();
  w.validate();
  if (images.empty()) throw Error("training corpus is empty");
  TrainResult res{init.tables, init.entropy, {}};
  project_tables(res.tables);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick_image(0, images.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_q(0, cfg.qualities.size() - 1);
  AdamState table_state(128), entropy_state(EntropyEstimatorSet::kFlatSize);
  std::vector<double> table_vec = flatten(res.tables);
  std::vector<double> entropy_vec = res.entropy.flat();
  const LossWeights estimator_only{0.0, 1.0, 0.0};

  const int total_steps = cfg.entropy_warmup_steps + cfg.steps;
  std::vector<BatchItem> items(cfg.batch);
  for (int step = 0; step < total_steps; ++step) {
    const bool warmup = step < cfg.entropy_warmup_steps;
    const bool fit_entropy = warmup || cfg.train_entropy;
    for (auto& it : items) {
      it.image = pick_image(rng);
      it.q = cfg.qualities[pick_q(rng)];
      it.noise_seed = rng();
    }
    const auto g = batch_gradient(images, items, res.tables, res.entropy, warmup ? estimator_only : w, clf,
                                  fit_entropy, step);
    if (fit_entropy) {
      adam_step(entropy_vec, g.entropy, entropy_state, cfg.entropy_lr);
      res.entropy.set_flat(entropy_vec);
    }
    if (!warmup) {
      adam_step(table_vec, g.tables, table_state, cfg.lr);
      for (double& v : table_vec) v = std::max(v, 1.0);
      res.tables = unflatten_tables(table_vec);
      res.trace.push_back(g.mean);
    }
  }
  return res;
}

}  // namespace optimizer_detail

// One table pair (and the density models) fitted to a whole corpus over
// the quality set.
inline TrainResult universal_train(std::span<const LabeledImage> corpus, const TrainConfig& cfg,
                                   const LossWeights& w, const ToyClassifier* clf = nullptr,
                                   TrainInit init = {}) {
  if (corpus.empty()) throw Error("training corpus is empty");
  std::vector<PreparedImage> prepared;
  prepared.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (w.task > 0.0 && corpus[i].label < 0)
      throw Error("image " + std::to_string(i) + " has no label but the task weight is positive");
    prepared.push_back(prepare_image(corpus[i].image, cfg.layout, corpus[i].label));
  }
  return optimizer_detail::run(prepared, cfg, w, clf, std::move(init));
}

// Tables fitted to a single image, starting from `init` (typically the
// universal result). Density models stay frozen unless cfg.train_entropy.
inline TrainResult per_image_train(const LabeledImage& x, const TrainConfig& cfg, const LossWeights& w,
                                   const EntropyEstimatorSet& pretrained, const ToyClassifier* clf = nullptr,
                                   std::optional<QuantTableParams> init_tables = std::nullopt) {
  if (w.task > 0.0 && x.label < 0) throw Error("per-image task optimization requires the image's label");
  const std::vector<PreparedImage> prepared = {prepare_image(x.image, cfg.layout, x.label)};
  TrainInit init{init_tables.value_or(default_tables()), pretrained};
  return optimizer_detail::run(prepared, cfg, w, clf, std::move(init));
}

}  // namespace jpegq

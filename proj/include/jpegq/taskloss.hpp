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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "jpegq/adam.hpp"
#include "jpegq/common.hpp"
#include "jpegq/diffproxy.hpp"

namespace jpegq {

struct LabeledImage {
  RgbImage image;
  int label = -1;  // -1 when unlabeled
};

struct XentResult {
  double loss = 0.0;
  std::vector<double> grad;
};

inline XentResult softmax_xent(std::span<const double> logits, int label) {
  const int n = static_cast<int>(logits.size());
  if (n < 2) throw Error("softmax_xent needs at least two classes");
  if (label < 0 || label >= n) throw Error("label " + std::to_string(label) + " out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  XentResult r;
  r.loss = std::log(z) - (logits[label] - mx);
  r.grad.resize(n);
  for (int i = 0; i < n; ++i) r.grad[i] = std::exp(logits[i] - mx) / z - (i == label ? 1.0 : 0.0);
  return r;
}

// Linear softmax classifier on the grid of 8x8 block means of the luma
// plane. Stands in for a pre-trained network; frozen during table search.
struct ToyClassifier {
  int grid_x = 0;
  int grid_y = 0;
  int classes = 0;
  std::vector<double> weights;  // classes x features, row-major
  std::vector<double> bias;

  int features() const { return grid_x * grid_y; }
  bool operator==(const ToyClassifier&) const = default;
};

namespace taskloss_detail {

inline constexpr std::array<double, 3> kLumaWeights = {0.299, 0.587, 0.114};
inline constexpr double kFeatureScale = 1.0 / 64.0;

// Block index of each pixel and the sample count per block.
inline std::vector<int> block_counts(int w, int h) {
  const int gx = blocks_for(w), gy = blocks_for(h);
  std::vector<int> counts(static_cast<std::size_t>(gx) * gy, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ++counts[(y / 8) * gx + x / 8];
  return counts;
}

}  // namespace taskloss_detail

inline std::vector<double> classifier_features(const ImageF& z) {
  using namespace taskloss_detail;
  const int gx = blocks_for(z.width);
  const auto counts = block_counts(z.width, z.height);
  std::vector<double> f(counts.size(), 0.0);
  for (int y = 0; y < z.height; ++y)
    for (int x = 0; x < z.width; ++x) {
      double luma = 0.0;
      for (int c = 0; c < 3; ++c) luma += kLumaWeights[c] * z.at(x, y, c);
      f[(y / 8) * gx + x / 8] += luma;
    }
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] / counts[i] - 128.0) * kFeatureScale;
  return f;
}

inline std::vector<double> classifier_logits(const ToyClassifier& clf, std::span<const double> f) {
  if (static_cast<int>(f.size()) != clf.features()) throw Error("classifier feature size mismatch");
  std::vector<double> logits(clf.classes);
  for (int c = 0; c < clf.classes; ++c) {
    double s = clf.bias[c];
    for (int j = 0; j < clf.features(); ++j) s += clf.weights[c * clf.features() + j] * f[j];
    logits[c] = s;
  }
  return logits;
}

inline int classify(const ToyClassifier& clf, const ImageF& z) {
  const auto logits = classifier_logits(clf, classifier_features(z));
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

inline int classify(const ToyClassifier& clf, const RgbImage& img) { return classify(clf, to_real(img)); }

// Cross entropy of the classifier on image z, with its gradient w.r.t. z.
inline LossAndGradient task_loss(const ImageF& z, int label, const ToyClassifier& clf) {
  using namespace taskloss_detail;
  if (blocks_for(z.width) != clf.grid_x || blocks_for(z.height) != clf.grid_y)
    throw Error("image size does not match the classifier's block grid");
  const auto f = classifier_features(z);
  const auto x = softmax_xent(classifier_logits(clf, f), label);
  std::vector<double> gf(f.size(), 0.0);
  for (int c = 0; c < clf.classes; ++c)
    for (int j = 0; j < clf.features(); ++j) gf[j] += x.grad[c] * clf.weights[c * clf.features() + j];
  const auto counts = block_counts(z.width, z.height);
  LossAndGradient out{x.loss, ImageF(z.width, z.height)};
  for (int y = 0; y < z.height; ++y)
    for (int xx = 0; xx < z.width; ++xx) {
      const int b = (y / 8) * clf.grid_x + xx / 8;
      const double g = gf[b] * kFeatureScale / counts[b];
      for (int c = 0; c < 3; ++c) out.grad.at(xx, y, c) = g * kLumaWeights[c];
    }
  return out;
}

struct ClassifierTrainOptions {
  int classes = 4;
  int iterations = 400;
  double lr = 0.05;
  double min_accuracy = 0.7;
};

struct ClassifierFit {
  ToyClassifier params;
  double train_accuracy = 0.0;
};

inline double classifier_accuracy(const ToyClassifier& clf, std::span<const LabeledImage> data) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const auto& d : data) correct += classify(clf, d.image) == d.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Full-batch Adam on the mean cross entropy, starting from zero weights.
// Deterministic; throws when the fit stays below options.min_accuracy.
inline ClassifierFit train_toy_classifier(std::span<const LabeledImage> corpus,
                                          const ClassifierTrainOptions& opt = {}) {
  if (corpus.empty()) throw Error("classifier corpus is empty");
  ToyClassifier clf;
  clf.grid_x = blocks_for(corpus[0].image.width);
  clf.grid_y = blocks_for(corpus[0].image.height);
  clf.classes = opt.classes;
  const int nf = clf.features();
  clf.weights.assign(static_cast<std::size_t>(clf.classes) * nf, 0.0);
  clf.bias.assign(clf.classes, 0.0);

  std::vector<std::vector<double>> feats;
  for (const auto& d : corpus) {
    if (d.label < 0 || d.label >= clf.classes) throw Error("classifier corpus has an invalid label");
    if (d.image.width != corpus[0].image.width || d.image.height != corpus[0].image.height)
      throw Error("classifier corpus images differ in size");
    feats.push_back(classifier_features(to_real(d.image)));
  }

  const std::size_t np = clf.weights.size() + clf.bias.size();
  std::vector<double> params(np, 0.0), grads(np);
  AdamState state(np);
  for (int it = 0; it < opt.iterations; ++it) {
    std::fill(grads.begin(), grads.end(), 0.0);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const auto x = softmax_xent(classifier_logits(clf, feats[i]), corpus[i].label);
      for (int c = 0; c < clf.classes; ++c) {
        for (int j = 0; j < nf; ++j) grads[c * nf + j] += x.grad[c] * feats[i][j];
        grads[clf.weights.size() + c] += x.grad[c];
      }
    }
    for (double& g : grads) g /= static_cast<double>(feats.size());
    adam_step(params, grads, state, opt.lr);
    std::copy(params.begin(), params.begin() + clf.weights.size(), clf.weights.begin());
    std::copy(params.begin() + clf.weights.size(), params.end(), clf.bias.begin());
  }

  ClassifierFit fit{clf, classifier_accuracy(clf, corpus)};
  if (fit.train_accuracy < opt.min_accuracy)
    throw Error("toy classifier did not converge: train accuracy " + std::to_string(fit.train_accuracy));
  return fit;
}

}  // namespace jpegq

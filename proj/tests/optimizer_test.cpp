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
#include <numeric>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "jpegq.hpp"
#include "test_util.hpp"

namespace jpegq {
namespace {

using testing::check_table_gradient;
using testing::FdProbe;
using testing::signature;

std::vector<LabeledImage> labeled(const std::vector<RgbImage>& images) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back({images[i], static_cast<int>(i % 4)});
  return out;
}

TrainConfig small_config(int steps, std::uint64_t seed = 1) {
  TrainConfig c;
  c.steps = steps;
  c.lr = 0.05;
  c.entropy_lr = 1e-2;
  c.seed = seed;
  return c;
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  std::vector<double> p = {1.0, -2.0, 3.5};
  const std::vector<double> g(3, 0.0);
  AdamState s(3);
  for (int i = 0; i < 10; ++i) adam_step(p, g, s, 0.1);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.5}));
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  std::vector<double> p = {0.0, 0.0, 0.0};
  const std::vector<double> g = {3.0, -1e-3, 250.0};
  AdamState s(3);
  adam_step(p, g, s, 0.01);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], -0.01 * (g[i] > 0 ? 1 : -1), 1e-7);
}

TEST(AdamTest, ConstantGradientStepsApproachLearningRate) {
  std::vector<double> p = {0.0};
  AdamState s(1);
  const std::vector<double> g = {0.7};
  double prev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    prev = p[0];
    adam_step(p, g, s, 1e-3);
  }
  EXPECT_NEAR(prev - p[0], 1e-3, 1e-9);
}

TEST(AdamTest, SizeMismatchThrows) {
  std::vector<double> p(3, 0.0);
  AdamState s(2);
  EXPECT_THROW(adam_step(p, std::vector<double>(3, 1.0), s, 0.1), Error);
}

TEST(TotalLossTest, PerfectReconstructionIsFree) {
  const RgbImage gray(16, 16, 128);
  const auto x = prepare_image(gray, Layout::k420);
  const auto r = total_loss(x, testing::random_tables(1), 30, {0.0, 1.0, 0.0}, {});
  EXPECT_NEAR(r.terms.total, 0.0, 1e-20);
  for (double g : flatten(r.grad_tables)) EXPECT_NEAR(g, 0.0, 1e-20);
}

TEST(TotalLossTest, Preconditions) {
  const auto x = prepare_image(testing::smooth_image(16, 16, 2), Layout::k420);
  const auto set = EntropyEstimatorSet::initial();
  const auto clf = train_toy_classifier(synth::pattern_corpus(8, 16, 3)).params;
  EXPECT_THROW(total_loss(x, default_tables(), 50, {0.0, 0.0, 1.0}, {&set, &clf}), Error);
  EXPECT_THROW(total_loss(x, default_tables(), 50, {1.0, 1.0, 0.0}, {}), Error);
  EXPECT_THROW(total_loss(x, default_tables(), 50, {0.0, 0.0, 0.0}, {&set}), Error);
  EXPECT_THROW(total_loss(x, default_tables(), 50, {-1.0, 1.0, 0.0}, {&set}), Error);
}

TEST(TotalLossTest, GradientMatchesFiniteDifferences) {
  const auto fit_images = synth::natural_corpus(6, 32, 32, 4);
  const std::vector<int> qs = {30, 60, 90};
  const auto set = testing::fit_entropy_set(fit_images, Layout::k420, qs, 5, 300);
  const auto clf = train_toy_classifier(synth::pattern_corpus(16, 16, 6), {.min_accuracy = 0.0}).params;
  const LossWeights w{1.0, 1.0, 1.0};
  for (int trial = 0; trial < 4; ++trial) {
    const auto img = synth::natural_image(16, 16, 40 + trial);
    const auto x = prepare_image(img, Layout::k420, trial % 4);
    const auto p = testing::perturbed_defaults(50 + trial);
    const int q = 35 + 15 * trial;
    const LossContext ctx{&set, &clf, std::nullopt};
    const auto ev = total_loss(x, p, q, w, ctx);
    auto f = [&](const QuantTableParams& t) {
      return FdProbe{total_loss(x, t, q, w, ctx).terms.total,
                     signature(forward(x.analysis, t, q, RoundingMode::kSoft).tape)};
    };
    const auto rep = check_table_gradient(f, p, ev.grad_tables, 1e-3, 1e-3, 1e-6);
    EXPECT_EQ(rep.failures, 0) << "trial " << trial << " worst " << rep.worst_relative;
    EXPECT_GT(rep.checked, 10 * std::max(rep.rejected, 1));
  }
}

TEST(TotalLossTest, EstimatorGradientMatchesFiniteDifferences) {
  const auto x = prepare_image(synth::natural_image(16, 16, 7), Layout::k420);
  const auto set = EntropyEstimatorSet::initial();
  LossContext ctx{&set, nullptr, 99};
  const auto ev = total_loss(x, default_tables(), 50, {1.0, 1.0, 0.0}, ctx);
  const auto flat = set.flat();
  int fails = 0;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    auto fp = flat, fm = flat;
    fp[k] += 1e-5;
    fm[k] -= 1e-5;
    EntropyEstimatorSet sp, sm;
    sp.set_flat(fp);
    sm.set_flat(fm);
    const double vp = total_loss(x, default_tables(), 50, {1.0, 1.0, 0.0}, {&sp, nullptr, 99}).terms.estimator;
    const double vm = total_loss(x, default_tables(), 50, {1.0, 1.0, 0.0}, {&sm, nullptr, 99}).terms.estimator;
    fails += !testing::gradient_close(ev.grad_entropy[k], (vp - vm) / 2e-5, 1e-4, 1e-8);
  }
  EXPECT_EQ(fails, 0);
}

TEST(BatchGradientTest, MeanOfPerImageGradients) {
  const auto images = synth::natural_corpus(4, 24, 24, 8);
  std::vector<PreparedImage> prepared;
  for (const auto& im : images) prepared.push_back(prepare_image(im, Layout::k420));
  const auto set = EntropyEstimatorSet::initial();
  const std::vector<BatchItem> items = {{0, 20, 1}, {1, 45, 2}, {2, 70, 3}, {3, 90, 4}};
  const auto p = testing::perturbed_defaults(9);
  const LossWeights w{1.0, 1.0, 0.0};
  const auto batch = batch_gradient(prepared, items, p, set, w, nullptr, true);
  std::vector<double> tables(128, 0.0), entropy(EntropyEstimatorSet::kFlatSize, 0.0);
  double total = 0.0;
  for (const auto& it : items) {
    const auto one = batch_gradient(prepared, std::span(&it, 1), p, set, w, nullptr, true);
    for (int i = 0; i < 128; ++i) tables[i] += one.tables[i];
    for (std::size_t i = 0; i < entropy.size(); ++i) entropy[i] += one.entropy[i];
    total += one.mean.total;
  }
  for (int i = 0; i < 128; ++i) EXPECT_DOUBLE_EQ(batch.tables[i], tables[i] / 4);
  for (std::size_t i = 0; i < entropy.size(); ++i) EXPECT_DOUBLE_EQ(batch.entropy[i], entropy[i] / 4);
  EXPECT_DOUBLE_EQ(batch.mean.total, total / 4);
}

TEST(UniversalTrainTest, ZeroStepsReturnsInitialization) {
  const auto corpus = labeled(synth::natural_corpus(3, 16, 16, 10));
  const auto r = universal_train(corpus, small_config(0), {});
  EXPECT_EQ(r.tables, default_tables());
  EXPECT_EQ(r.entropy, EntropyEstimatorSet::initial());
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.tables.luma[0], 16.0);
}

TEST(UniversalTrainTest, ProjectionKeepsEntriesAtLeastOne) {
  const auto corpus = labeled(synth::natural_corpus(4, 16, 16, 11));
  TrainInit init;
  for (auto* t : {&init.tables.luma, &init.tables.chroma})
    for (double& v : *t) v = 1.5;
  for (int steps = 1; steps <= 6; ++steps) {
    auto cfg = small_config(steps);
    cfg.lr = 2.0;
    const auto r = universal_train(corpus, cfg, {0.0, 1.0, 0.0}, nullptr, init);
    const auto flat = flatten(r.tables);
    EXPECT_GE(*std::min_element(flat.begin(), flat.end()), 1.0);
    EXPECT_EQ(*std::min_element(flat.begin(), flat.end()), 1.0) << steps;
  }
}

TEST(UniversalTrainTest, Deterministic) {
  const auto corpus = labeled(synth::natural_corpus(8, 24, 24, 12));
  auto cfg = small_config(30, 77);
  cfg.entropy_warmup_steps = 5;
  const auto a = universal_train(corpus, cfg, {});
  const auto b = universal_train(corpus, cfg, {});
  EXPECT_EQ(a.tables, b.tables);
  EXPECT_EQ(a.entropy, b.entropy);
  cfg.seed = 78;
  EXPECT_NE(universal_train(corpus, cfg, {}).tables, a.tables);
}

TEST(UniversalTrainTest, WarmupOnlyTouchesEntropy) {
  const auto corpus = labeled(synth::natural_corpus(4, 16, 16, 13));
  auto cfg = small_config(0);
  cfg.entropy_warmup_steps = 10;
  const auto r = universal_train(corpus, cfg, {});
  EXPECT_EQ(r.tables, default_tables());
  EXPECT_NE(r.entropy, EntropyEstimatorSet::initial());
}

TEST(UniversalTrainTest, MissingLabelWithTaskWeight) {
  auto corpus = labeled(synth::natural_corpus(3, 16, 16, 14));
  corpus[1].label = -1;
  const auto clf = train_toy_classifier(synth::pattern_corpus(8, 16, 3)).params;
  EXPECT_THROW(universal_train(corpus, small_config(1), {0.0, 0.0, 1.0}, &clf), Error);
}

TEST(UniversalTrainTest, InvalidConfig) {
  const auto corpus = labeled(synth::natural_corpus(2, 16, 16, 15));
  auto cfg = small_config(1);
  cfg.batch = 0;
  EXPECT_THROW(universal_train(corpus, cfg, {}), Error);
  cfg = small_config(1);
  cfg.qualities = {0, 50};
  EXPECT_THROW(universal_train(corpus, cfg, {}), Error);
  EXPECT_THROW(universal_train(std::vector<LabeledImage>{}, small_config(1), {}), Error);
}

// Moving average of the total loss over `window` steps.
std::vector<double> smoothed(const std::vector<LossTerms>& trace, std::size_t window) {
  std::vector<double> out;
  double s = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    s += trace[i].total;
    if (i >= window) s -= trace[i - window].total;
    if (i + 1 >= window) out.push_back(s / window);
  }
  return out;
}

TEST(UniversalTrainTest, SmoothedLossDoesNotRise) {
  const auto corpus = labeled(synth::natural_corpus(50, 32, 32, 16));
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.seed = 17;
  const auto r = universal_train(corpus, cfg, {1.0, 1.0, 0.0});
  const auto s = smoothed(r.trace, 1000);
  EXPECT_LE(s.back(), 1.02 * *std::min_element(s.begin(), s.end()));
}

TEST(PerImageTrainTest, DescendsOnFixedImage) {
  const LabeledImage x{synth::natural_image(32, 32, 18), -1};
  auto cfg = small_config(200);
  cfg.qualities = {50};
  cfg.lr = 0.1;
  const auto r = per_image_train(x, cfg, {1.0, 1.0, 0.0}, EntropyEstimatorSet::initial());
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += r.trace[i].total;
    return s / (to - from);
  };
  EXPECT_LT(mean(180, 200), 0.9 * mean(0, 20));
}

TEST(PerImageTrainTest, EntropyFrozenByDefault) {
  const LabeledImage x{synth::natural_image(16, 16, 19), -1};
  auto cfg = small_config(5);
  cfg.train_entropy = false;
  const auto set = EntropyEstimatorSet::initial();
  const auto r = per_image_train(x, cfg, {1.0, 1.0, 0.0}, set, nullptr, default_tables());
  EXPECT_EQ(r.entropy, set);
  EXPECT_NE(r.tables, default_tables());
}

TEST(PerImageTrainTest, TaskWeightNeedsLabel) {
  const LabeledImage x{synth::natural_image(16, 16, 20), -1};
  const auto clf = train_toy_classifier(synth::pattern_corpus(8, 16, 3)).params;
  EXPECT_THROW(per_image_train(x, small_config(1), {0.0, 0.0, 1.0}, EntropyEstimatorSet::initial(), &clf), Error);
}

TEST(PerImageTrainTest, Deterministic) {
  const LabeledImage x{synth::natural_image(24, 24, 21), -1};
  const auto set = EntropyEstimatorSet::initial();
  const auto a = per_image_train(x, small_config(20, 5), {1.0, 1.0, 0.0}, set);
  const auto b = per_image_train(x, small_config(20, 5), {1.0, 1.0, 0.0}, set);
  EXPECT_EQ(a.tables, b.tables);
}

TEST(OptimizerTest, NonFiniteLossAborts) {
  auto corpus = labeled(synth::natural_corpus(2, 16, 16, 22));
  TrainInit init;
  init.entropy.models[0].params[DensityModel::kB4] = std::numeric_limits<double>::quiet_NaN();
  try {
    universal_train(corpus, small_config(2), {1.0, 1.0, 0.0}, nullptr, init);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at step 0"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace jpegq

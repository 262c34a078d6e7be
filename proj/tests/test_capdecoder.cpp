/*
 * Copyright (C) 2026 The Widgetcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "widgetcap/capdecoder.hpp"
#include "widgetcap/nn/gradcheck.hpp"
#include "widgetcap/nn/ops.hpp"
#include "widgetcap/synthetic.hpp"

namespace widgetcap {
namespace {

using nn::Tensor;

struct Toy {
  DatasetSplit split;
  Vocabulary vocab;
  std::vector<ScreenBatch> batches;

  explicit Toy(std::size_t screens, std::uint64_t seed = 3) {
    const auto generated = generate_overfit_fixture(screens, seed);
    split = assemble_synthetic(generated);
    std::vector<std::string> refs;
    for (const auto& ex : split.examples)
      refs.insert(refs.end(), ex.references.begin(), ex.references.end());
    refs.push_back("alpha beta gamma delta epsilon zeta eta theta");
    vocab = Vocabulary::build_from_captions(refs, 64);
    Rng rng(1);
    for (const auto& group : group_by_screen(split))
      batches.push_back(make_screen_batch(split, group, vocab, 10, rng));
  }
};

ModelConfig tiny(ModelKind kind, std::size_t vocab) {
  ModelConfig c;
  c.kind = kind;
  c.vocab_size = vocab;
  c.word_dim = 12;
  c.hidden = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 2;
  c.heads = 2;
  c.ffn = 32;
  c.local_width = 16;
  c.dropout = 0.0;
  return c;
}

std::vector<double> slice_row(const Tensor<double>& t, std::size_t offset, std::size_t n) {
  return {t.values().begin() + offset, t.values().begin() + offset + n};
}

void set_all(Tensor<double> t, double v) {
  for (auto& x : t.mutable_values()) x = v;
}

TEST(Decoder, LogitsShapeAndCausality) {
  Toy toy(2);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 1);
  Rng rng(2);
  std::vector<double> zv(2 * 16);
  for (auto& x : zv) x = uniform_real(rng, -1, 1);
  auto z = Tensor<double>::from({2, 16}, zv);
  const std::vector<std::vector<TokenId>> inputs = {{2, 5, 6, 7, 8}, {2, 9, 4}};
  nn::ForwardContext ctx;
  auto logits = model.decoder_logits(z, inputs, ctx);
  const std::size_t V = toy.vocab.size();
  EXPECT_EQ(logits.shape(), (nn::Shape{2, 5, V}));
  for (std::size_t t = 1; t < 5; ++t) {
    auto changed = inputs;
    changed[0][t] = 10;
    auto other = model.decoder_logits(z, changed, ctx);
    EXPECT_EQ(slice_row(other, 0, t * V), slice_row(logits, 0, t * V)) << t;
    EXPECT_NE(slice_row(other, t * V, V), slice_row(logits, t * V, V)) << t;
  }
  const std::vector<std::vector<TokenId>> bad = {{2, TokenId(V)}, {2}};
  EXPECT_THROW(model.decoder_logits(z, bad, ctx), std::exception);
  const std::vector<std::vector<TokenId>> too_long = {std::vector<TokenId>(11, 4), {2}};
  EXPECT_THROW(model.decoder_logits(z, too_long, ctx), std::invalid_argument);
}

TEST(Decoder, ZeroingZChangesEveryPosition) {
  Toy toy(2);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 1);
  Rng rng(3);
  std::vector<double> zv(16);
  for (auto& x : zv) x = uniform_real(rng, -1, 1);
  const std::vector<std::vector<TokenId>> inputs = {{2, 5, 6, 7}};
  nn::ForwardContext ctx;
  auto with = model.decoder_logits(Tensor<double>::from({1, 16}, zv), inputs, ctx);
  auto without = model.decoder_logits(Tensor<double>::zeros({1, 16}), inputs, ctx);
  const std::size_t V = toy.vocab.size();
  for (std::size_t t = 0; t < 4; ++t)
    EXPECT_NE(slice_row(with, t * V, V), slice_row(without, t * V, V)) << t;
}

TEST(Loss, UniformLogitsGiveLogV) {
  Toy toy(2);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 1);
  set_all(model.store().get("decoder.output.weight"), 0.0);
  set_all(model.store().get("decoder.output.bias"), 0.0);
  nn::ForwardContext ctx;
  const double loss = model.loss(std::span(toy.batches).first(1), ctx, true, toy.vocab).item();
  EXPECT_NEAR(loss, std::log(double(toy.vocab.size())), 1e-12);
}

// Copy of a screen batch keeping only the listed targets.
ScreenBatch subset(const ScreenBatch& b, std::vector<std::size_t> keep) {
  ScreenBatch out;
  out.screen = b.screen;
  for (auto k : keep) {
    out.targets.push_back(b.targets[k]);
    out.images.push_back(b.images[k]);
    out.captions.push_back(b.captions[k]);
    out.phrases.push_back(b.phrases[k]);
  }
  return out;
}

TEST(Loss, PerElementMeanThenMeanOverElementsAndScreens) {
  Toy toy(6);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 4);
  nn::ForwardContext ctx;
  // Running statistics make image encodings independent of the batch.
  Trainer<double> trainer(model, TrainConfig{});
  trainer.train_step(toy.batches, toy.vocab);
  ASSERT_TRUE(model.image_norm_ready());

  const ScreenBatch* two = nullptr;
  for (const auto& b : toy.batches)
    if (b.targets.size() >= 2 && b.captions[0] != b.captions[1]) two = &b;
  ASSERT_NE(two, nullptr);
  auto loss_of = [&](std::vector<ScreenBatch> screens) {
    return model.loss(screens, ctx, false, toy.vocab).item();
  };
  const double a = loss_of({subset(*two, {0})});
  const double b = loss_of({subset(*two, {1})});
  EXPECT_NEAR(loss_of({subset(*two, {0, 1})}), (a + b) / 2, 1e-12);
  // Duplicating the screen's elements k times leaves the loss unchanged.
  EXPECT_NEAR(loss_of({subset(*two, {0, 1, 0, 1, 0, 1})}), (a + b) / 2, 1e-12);
  // Screens weigh equally regardless of their element count.
  const double c = loss_of({toy.batches[0]});
  EXPECT_NEAR(loss_of({subset(*two, {0, 1}), toy.batches[0]}), ((a + b) / 2 + c) / 2, 1e-12);

  ScreenBatch empty;
  empty.screen = two->screen;
  EXPECT_THROW(loss_of({empty}), std::invalid_argument);
}

// Batch statistics over two crops are degenerate at the 1x1 end of the CNN
// (variance far below epsilon), so the image path is checked with running
// statistics and the batch-statistics pass covers everything else. A conv
// weight moves every ReLU of its layer, so kinks fall inside even tiny steps.
TEST(Loss, FullModelGradientCheck) {
  Toy toy(8);
  const ScreenBatch* two = nullptr;
  for (const auto& b : toy.batches)
    if (b.targets.size() == 2) two = &b;
  ASSERT_NE(two, nullptr);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 5);
  nn::ForwardContext ctx;
  model.encode(toy.batches, ctx, true, toy.vocab);  // fills the running statistics
  ASSERT_TRUE(model.image_norm_ready());

  for (bool norm_train : {false, true}) {
    std::vector<nn::GradCheckInput> inputs;
    for (const auto& e : model.store().entries())
      if (e.trainable && (!norm_train || e.name.rfind("image.", 0) != 0))
        inputs.push_back({e.name, e.tensor});
    nn::GradCheckOptions options;
    options.max_coordinates = 3;
    options.step = 1e-6;
    options.kink_tolerant = true;
    auto report = nn::grad_check(
        [&] { return model.loss(std::span(two, 1), ctx, norm_train, toy.vocab); },
        inputs, options);
    EXPECT_TRUE(report.passed) << report.worst_input << "[" << report.worst_index
                               << "] analytic " << report.worst_analytic << " numeric "
                               << report.worst_numeric;
    EXPECT_LT(report.max_relative_error, 1e-3);
  }
}

TEST(Training, GradientReachesEveryParameterGroup) {
  Toy toy(5);
  CaptionModel<float> model(tiny(ModelKind::kPlc, toy.vocab.size()), 6);
  model.store().zero_grad();
  nn::ForwardContext ctx;
  model.loss(toy.batches, ctx, true, toy.vocab).backward();
  std::set<std::string> zero;
  for (const auto& e : model.store().entries()) {
    if (!e.trainable) continue;
    const auto g = e.tensor.grad();
    if (std::none_of(g.begin(), g.end(), [](float x) { return x != 0.0f; })) zero.insert(e.name);
  }
  EXPECT_TRUE(zero.empty()) << *zero.begin() << " and " << zero.size() - 1 << " more";
}

std::vector<double> run(std::size_t steps, std::uint64_t seed) {
  Toy toy(5);
  CaptionModel<float> model(tiny(ModelKind::kPlc, toy.vocab.size()), seed);
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_screens = 5;
  cfg.learning_rate = 3e-3;
  cfg.warmup_steps = 10;
  cfg.seed = seed;
  return train_model(model, toy.split, toy.vocab, cfg).losses;
}

TEST(Training, DeterministicAndLossDecreases) {
  const auto a = run(200, 9);
  EXPECT_EQ(a, run(200, 9));
  ASSERT_EQ(a.size(), 200u);
  EXPECT_LT(a.back(), a.front());
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += a[i];
    tail += a[a.size() - 1 - i];
  }
  EXPECT_LT(tail, 0.5 * head);
}

TEST(Training, NonFiniteLossHalts) {
  Toy toy(2);
  CaptionModel<float> model(tiny(ModelKind::kPlc, toy.vocab.size()), 1);
  auto w = model.store().get("decoder.output.bias");
  w.mutable_values()[4] = std::numeric_limits<float>::quiet_NaN();
  Trainer<float> trainer(model, TrainConfig{});
  EXPECT_THROW(trainer.train_step(toy.batches, toy.vocab), nn::NumericalError);
}

TEST(GreedyDecode, EndTokenFirstGivesEmptyCaption) {
  Toy toy(2);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 1);
  model.store().get("decoder.output.bias").mutable_values()[Vocabulary::kEos] = 100.0;
  auto out = model.greedy_decode(Tensor<double>::zeros({3, 16}));
  ASSERT_EQ(out.size(), 3u);
  for (const auto& c : out) EXPECT_TRUE(c.tokens.empty());
}

TEST(GreedyDecode, NeverEmitsUnknownOrSpecials) {
  Toy toy(2);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 1);
  auto bias = model.store().get("decoder.output.bias").mutable_values();
  bias[Vocabulary::kUnk] = 5.0;
  bias[Vocabulary::kEos] = -5.0;
  Rng rng(7);
  std::vector<double> zv(8 * 16);
  for (auto& x : zv) x = uniform_real(rng, -2, 2);
  for (const auto& c : model.greedy_decode(Tensor<double>::from({8, 16}, zv))) {
    EXPECT_LE(c.tokens.size(), 9u);
    EXPECT_EQ(c.tokens.size(), c.probabilities.size());
    for (auto t : c.tokens) EXPECT_FALSE(Vocabulary::is_special(t)) << t;
  }
}

TEST(GreedyDecode, RowsIndependentAndDeterministic) {
  Toy toy(2);
  CaptionModel<double> model(tiny(ModelKind::kPlc, toy.vocab.size()), 2);
  Rng rng(8);
  std::vector<double> zv(4 * 16);
  for (auto& x : zv) x = uniform_real(rng, -2, 2);
  auto z = Tensor<double>::from({4, 16}, zv);
  const auto all = model.greedy_decode(z);
  EXPECT_EQ(model.greedy_decode(z)[2].tokens, all[2].tokens);
  for (std::size_t i = 0; i < 4; ++i) {
    auto alone = model.greedy_decode(nn::slice(z, 0, i, 1));
    EXPECT_EQ(alone[0].tokens, all[i].tokens);
    EXPECT_EQ(alone[0].probabilities, all[i].probabilities);
  }
}

TEST(DecodeScreens, OneCaptionPerTargetInOrder) {
  Toy toy(4);
  CaptionModel<float> model(tiny(ModelKind::kPlc, toy.vocab.size()), 2);
  auto decoded = model.decode_screens(toy.batches, toy.vocab);
  ASSERT_EQ(decoded.size(), toy.batches.size());
  for (std::size_t s = 0; s < decoded.size(); ++s)
    EXPECT_EQ(decoded[s].size(), toy.batches[s].targets.size());
}

TEST(DecodeScreens, OverfitOneScreenDecodesItsCaption) {
  Toy toy(1);
  CaptionModel<float> model(tiny(ModelKind::kPlc, toy.vocab.size()), 3);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.warmup_steps = 10;
  Trainer<float> trainer(model, cfg);
  double loss = 1e9;
  for (int step = 0; step < 400 && loss > 1e-3; ++step)
    loss = trainer.train_step(toy.batches, toy.vocab);
  EXPECT_LT(loss, 1e-2);
  const auto decoded = model.decode_screens(toy.batches, toy.vocab);
  for (std::size_t t = 0; t < toy.batches[0].targets.size(); ++t)
    EXPECT_EQ(decoded[0][t].tokens, toy.batches[0].captions[t]);
  EXPECT_DOUBLE_EQ(model.token_accuracy(toy.batches, toy.vocab), 1.0);
}

TEST(Classification, ZeroHeadPicksFirstPhraseAndOverfits) {
  Toy toy(1);
  std::vector<std::string> refs;
  for (const auto& ex : toy.split.examples) refs.push_back(ex.references[0]);
  auto phrases = PhraseVocabulary::build(refs, 10);
  auto cfg = tiny(ModelKind::kPlcClassification, toy.vocab.size());
  cfg.phrase_count = phrases.size();
  CaptionModel<float> model(cfg, 1);
  for (auto name : {"phrase_head.weight", "phrase_head.bias"})
    for (auto& x : model.store().get(name).mutable_values()) x = 0.0f;
  Rng rng(1);
  std::vector<ScreenBatch> batches;
  for (const auto& g : group_by_screen(toy.split))
    batches.push_back(make_screen_batch(toy.split, g, toy.vocab, 10, rng, &phrases));
  for (const auto& row : model.classify_screens(batches, toy.vocab))
    for (auto id : row) EXPECT_EQ(id, 0u);

  Trainer<float> trainer(model, TrainConfig{});
  for (int i = 0; i < 150; ++i) trainer.train_step(batches, toy.vocab);
  const auto got = model.classify_screens(batches, toy.vocab);
  for (std::size_t t = 0; t < batches[0].targets.size(); ++t)
    EXPECT_EQ(got[0][t], batches[0].phrases[t].value());
}

TEST(Classification, OutOfVocabularyPhraseGivesNoGradient) {
  Toy toy(1);
  auto phrases = PhraseVocabulary::build(std::vector<std::string>{"nothing like this"}, 4);
  auto cfg = tiny(ModelKind::kPlcClassification, toy.vocab.size());
  cfg.phrase_count = phrases.size();
  CaptionModel<float> model(cfg, 1);
  Rng rng(1);
  auto batch = make_screen_batch(toy.split, group_by_screen(toy.split)[0], toy.vocab, 10, rng,
                                 &phrases);
  for (const auto& p : batch.phrases) EXPECT_FALSE(p.has_value());
  model.store().zero_grad();
  nn::ForwardContext ctx;
  model.loss(std::span(&batch, 1), ctx, true, toy.vocab).backward();
  for (const auto& e : model.store().entries())
    for (float g : e.tensor.grad()) ASSERT_EQ(g, 0.0f) << e.name;
}

TEST(ModelConfig, ManifestRoundTrip) {
  auto cfg = tiny(ModelKind::kPixelLocal, 50);
  auto back = ModelConfig::from_manifest(cfg.to_manifest());
  EXPECT_EQ(back.to_manifest(), cfg.to_manifest());
  auto m = cfg.to_manifest();
  m.erase("hidden");
  EXPECT_THROW(ModelConfig::from_manifest(m), std::invalid_argument);
}

}  // namespace
}  // namespace widgetcap

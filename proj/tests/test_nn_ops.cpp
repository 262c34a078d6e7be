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

#include <filesystem>

#include "widgetcap/nn/checkpoint.hpp"
#include "widgetcap/nn/gradcheck.hpp"
#include "widgetcap/nn/layers.hpp"
#include "widgetcap/nn/ops.hpp"
#include "widgetcap/nn/optim.hpp"

using namespace widgetcap;
using namespace widgetcap::nn;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = uniform_real(rng, lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed random weights so every output coordinate matters.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (auto& x : w) x = uniform_real(rng, -1.0, 1.0);
  return sum(mul(y, Tensor<double>::from(y.shape(), std::move(w))));
}

void expect_grad_ok(const std::function<Tensor<double>()>& f, std::vector<GradCheckInput> in) {
  auto report = grad_check(f, std::move(in));
  EXPECT_TRUE(report.passed) << report.worst_input << "[" << report.worst_index
                             << "] analytic " << report.worst_analytic << " numeric "
                             << report.worst_numeric << " rel " << report.max_relative_error;
}

}  // namespace

TEST(Matmul, IdentityAndShape) {
  auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(r.values().begin(), r.values().end()),
            (std::vector<double>{1, 2, 3, 4}));
  Rng rng(1);
  EXPECT_EQ(matmul(random_tensor({2, 3}, rng), random_tensor({3, 4}, rng)).shape(),
            (Shape{2, 4}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  Rng rng(1);
  try {
    matmul(random_tensor({2, 3}, rng), random_tensor({2, 4}, rng));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2x3)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(2x4)"), std::string::npos);
  }
}

TEST(Matmul, SumGradientIsBTransposeBroadcast) {
  auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = Tensor<double>::from({3, 2}, {1, -1, 2, 0.5, -3, 4}, true);
  sum(matmul(a, b)).backward();
  // d/dA_ij sum(AB) = sum_k B_jk
  const double row_sums[3] = {0.0, 2.5, 1.0};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(a.grad()[i * 3 + j], row_sums[j]);
}

TEST(GradCheck, AllMatmulTransposeVariants) {
  Rng rng(2);
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      auto a = random_tensor(ta ? Shape{2, 4, 3} : Shape{2, 3, 4}, rng);
      auto b = random_tensor(tb ? Shape{2, 5, 4} : Shape{2, 4, 5}, rng);
      expect_grad_ok([&] { return project(matmul(a, b, ta, tb)); }, {{"a", a}, {"b", b}});
    }
}

TEST(GradCheck, ElementwiseAndBroadcast) {
  Rng rng(3);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({3, 1}, rng);
  auto c = random_tensor({4}, rng);
  expect_grad_ok(
      [&] { return project(sigmoid(add(mul(a, b), c))); }, {{"a", a}, {"b", b}, {"c", c}});
  expect_grad_ok([&] { return project(square(sub(a, c))); }, {{"a", a}, {"c", c}});
  expect_grad_ok([&] { return mean(relu(scale(a, 2.0))); }, {{"a", a}});
}

TEST(GradCheck, ShapeOps) {
  Rng rng(4);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 2, 4}, rng);
  const std::size_t perm[3] = {2, 0, 1};
  const std::size_t rows[4] = {1, 0, 1, 1};
  expect_grad_ok([&] { return project(permute(a, std::span(perm))); }, {{"a", a}});
  expect_grad_ok([&] { return project(transpose(a)); }, {{"a", a}});
  expect_grad_ok([&] { return project(concat<double>({a, b}, 1)); }, {{"a", a}, {"b", b}});
  expect_grad_ok([&] { return project(slice(a, 2, 1, 2)); }, {{"a", a}});
  expect_grad_ok([&] { return project(index_select(a, std::span(rows))); }, {{"a", a}});
  expect_grad_ok([&] { return project(pad_last_axis(a, 7)); }, {{"a", a}});
  expect_grad_ok([&] { return project(reshape(a, {6, 4})); }, {{"a", a}});
}

TEST(GradCheck, EmbeddingAndSegmentMax) {
  Rng rng(5);
  auto table = random_tensor({6, 4}, rng);
  auto empty = random_tensor({4}, rng);
  const std::int32_t ids[5] = {0, 3, 3, 5, 1};
  const std::size_t offsets[4] = {0, 2, 2, 5};
  expect_grad_ok(
      [&] { return project(segment_max(embedding(table, std::span(ids)), std::span(offsets), empty)); },
      {{"table", table}, {"empty", empty}});
}

TEST(SegmentMax, CoordinateWiseMaxAndEmpty) {
  auto x = Tensor<double>::from({2, 2}, {1, 5, 3, 2});
  auto e = Tensor<double>::from({2}, {-7, -8});
  const std::size_t offsets[3] = {0, 2, 2};
  auto r = segment_max(x, std::span(offsets), e);
  EXPECT_EQ(std::vector<double>(r.values().begin(), r.values().end()),
            (std::vector<double>{3, 5, -7, -8}));
}

TEST(GradCheck, SoftmaxLayerNorm) {
  Rng rng(6);
  auto x = random_tensor({3, 4, 4}, rng);
  auto gain = random_tensor({4}, rng);
  auto bias = random_tensor({4}, rng);
  const std::size_t lengths[3] = {4, 2, 0};
  expect_grad_ok([&] { return project(masked_softmax(x, true, std::span(lengths))); }, {{"x", x}});
  expect_grad_ok([&] { return project(softmax(x)); }, {{"x", x}});
  expect_grad_ok([&] { return project(layer_norm(x, gain, bias)); },
                 {{"x", x}, {"gain", gain}, {"bias", bias}});
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(7);
  auto x = random_tensor({5, 9}, rng, -20, 20);
  auto y = softmax(x);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int j = 0; j < 9; ++j) s += y.values()[r * 9 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Conv, ShapeArithmetic) {
  auto x = Tensor<float>::zeros({1, 64, 64, 1});
  auto k = Tensor<float>::zeros({5, 5, 1, 4});
  EXPECT_EQ(conv2d(x, k, 2).shape(), (Shape{1, 32, 32, 4}));
  auto k2 = Tensor<float>::zeros({3, 3, 4, 1});
  EXPECT_EQ(conv_transpose2d(Tensor<float>::zeros({1, 5, 5, 1}), k2, 2).shape(),
            (Shape{1, 10, 10, 4}));
  EXPECT_EQ(conv2d(Tensor<float>::zeros({1, 7, 7, 1}), k, 2).shape(), (Shape{1, 4, 4, 4}));
  EXPECT_THROW(conv2d(x, k, 0), std::invalid_argument);
}

TEST(Conv, OneByOneIdentity) {
  Rng rng(8);
  auto x = random_tensor({2, 5, 5, 3}, rng);
  std::vector<double> eye(9, 0.0);
  for (int c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  auto y = conv2d(x, Tensor<double>::from({1, 1, 3, 3}, eye), 1);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(GradCheck, ConvolutionsOnEightByEight) {
  Rng rng(9);
  auto x = random_tensor({2, 8, 8, 2}, rng);
  auto k3 = random_tensor({3, 3, 2, 3}, rng);
  auto k5 = random_tensor({5, 5, 2, 3}, rng);
  auto kt = random_tensor({3, 3, 3, 2}, rng);
  expect_grad_ok([&] { return project(conv2d(x, k3, 1)); }, {{"x", x}, {"k", k3}});
  expect_grad_ok([&] { return project(conv2d(x, k5, 2)); }, {{"x", x}, {"k", k5}});
  expect_grad_ok([&] { return project(conv_transpose2d(x, kt, 2)); }, {{"x", x}, {"k", kt}});
}

TEST(GradCheck, BatchNormTrainMode) {
  Rng rng(10);
  auto x = random_tensor({4, 3, 3, 2}, rng);
  auto gamma = random_tensor({2}, rng);
  auto beta = random_tensor({2}, rng);
  BatchNormState<double> state(2);
  expect_grad_ok(
      [&] { return project(batch_norm(x, gamma, beta, state, BatchNormMode::kTrain, false)); },
      {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  EXPECT_FALSE(state.initialized());
}

TEST(BatchNorm, ConstantBatchGivesShiftOnly) {
  auto x = Tensor<double>::full({3, 2}, 5.0);
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  BatchNormState<double> state(2);
  auto y = batch_norm(x, gamma, beta, state, BatchNormMode::kTrain);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, TrainStatisticsAndInferAgreement) {
  Rng rng(11);
  auto x = random_tensor({16, 3}, rng, -3, 5);
  auto gamma = Tensor<double>::full({3}, 1.0);
  auto beta = Tensor<double>::zeros({3});
  BatchNormState<double> state(3);
  EXPECT_THROW(batch_norm(x, gamma, beta, state, BatchNormMode::kInfer), std::logic_error);
  auto y = batch_norm(x, gamma, beta, state, BatchNormMode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (int i = 0; i < 16; ++i) m += y.values()[i * 3 + c];
    m /= 16;
    for (int i = 0; i < 16; ++i) v += std::pow(y.values()[i * 3 + c] - m, 2);
    v /= 16;
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-4);  // epsilon shifts the variance by ~1e-5 / var
  }
  // First update adopts the batch statistics, so infer mode reproduces train mode.
  auto z = batch_norm(x, gamma, beta, state, BatchNormMode::kInfer);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(z.values()[i], y.values()[i], 1e-9);
  EXPECT_THROW(batch_norm(Tensor<double>::zeros({1, 3}), gamma, beta, state,
                          BatchNormMode::kTrain),
               std::invalid_argument);
}

TEST(CrossEntropy, UniformAndGradient) {
  const std::int32_t targets[2] = {1, 4};
  const double weights[2] = {1.0, 1.0};
  auto uniform = Tensor<double>::zeros({2, 5});
  EXPECT_NEAR(softmax_cross_entropy(uniform, std::span(targets), std::span<const double>(weights)).item(),
              2 * std::log(5.0), 1e-12);
  Rng rng(12);
  auto logits = random_tensor({2, 5}, rng, -2, 2);
  expect_grad_ok(
      [&] { return softmax_cross_entropy(logits, std::span(targets), std::span<const double>(weights)); },
      {{"logits", logits}});
  const std::int32_t bad[2] = {1, 5};
  EXPECT_THROW(softmax_cross_entropy(logits, std::span(bad), std::span<const double>(weights)),
               std::out_of_range);
  auto sharp = Tensor<double>::from({1, 3}, {-50, 50, -50});
  const std::int32_t one[1] = {1};
  const double w1[1] = {1.0};
  EXPECT_LT(softmax_cross_entropy(sharp, std::span(one), std::span<const double>(w1)).item(), 1e-12);
}

TEST(GradCheck, SquareSumIsExact) {
  Rng rng(13);
  auto x = random_tensor({10}, rng);
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  auto report = grad_check([&] { return sum(square(x)); }, {{"x", x}}, opts);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GradCheck, CorruptedGradientIsReported) {
  Rng rng(14);
  auto x = random_tensor({6}, rng);
  auto report = grad_check([&] { return sum(square(x)); }, {{"x", x}}, {},
                           [](std::vector<std::vector<double>>& g) { g[0][2] *= 1.5; });
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_relative_error, 1e-3);
}

// x sits 1e-5 right of the ReLU kink, inside the step: central differences
// average the two slopes, the one-sided difference on the right does not.
TEST(GradCheck, KinkInsideStep) {
  auto x = Tensor<double>::from({2}, {1e-5, 0.5}, true);
  auto f = [&] { return add(sum(square(relu(x))), sum(relu(x))); };
  GradCheckOptions opts;
  opts.step = 1e-4;
  EXPECT_FALSE(grad_check(f, {{"x", x}}, opts).passed);
  opts.kink_tolerant = true;
  auto report = grad_check(f, {{"x", x}}, opts);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
  auto corrupted = grad_check(f, {{"x", x}}, opts,
                              [](std::vector<std::vector<double>>& g) { g[0][1] *= 1.5; });
  EXPECT_FALSE(corrupted.passed);
}

TEST(GradCheck, Layers) {
  Rng rng(15);
  ParameterStore<double> store;
  MultiHeadAttention<double> mha(store, "mha", 8, 2, rng);
  EncoderLayer<double> enc(store, "enc", 8, 2, 16, rng);
  DecoderLayer<double> dec(store, "dec", 8, 2, 16, rng);
  auto x = random_tensor({2, 3, 8}, rng);
  auto z = random_tensor({2, 1, 8}, rng);
  const std::size_t lengths[2] = {3, 2};
  ForwardContext ctx;
  std::vector<GradCheckInput> inputs{{"x", x}, {"z", z}};
  for (const auto& e : store.entries()) inputs.push_back({e.name, e.tensor});
  expect_grad_ok(
      [&] {
        auto h = enc(mha(x, false, std::span(lengths), ctx), std::span(lengths), ctx);
        return project(dec(h, z, ctx));
      },
      inputs);
}

TEST(GradCheck, ConvBnLayers) {
  Rng rng(16);
  ParameterStore<double> store;
  ConvBn<double> down(store, "down", 3, 2, 3, 2, rng);
  ConvBn<double> up(store, "up", 3, 3, 2, 2, rng, true);
  auto x = random_tensor({3, 4, 4, 2}, rng);
  std::vector<GradCheckInput> inputs{{"x", x}};
  for (const auto& e : store.entries())
    if (e.trainable) inputs.push_back({e.name, e.tensor});
  expect_grad_ok(
      [&] {
        auto h = down(x, BatchNormMode::kTrain, false, true);
        return project(up(h, BatchNormMode::kTrain, false, true));
      },
      inputs);
}

TEST(Tape, UnusedTensorsGetZeroGradient) {
  auto a = Tensor<double>::from({2}, {1, 2}, true);
  auto b = Tensor<double>::from({2}, {3, 4}, true);
  b.zero_grad();
  sum(square(a)).backward();
  for (double g : b.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = Tensor<double>::from({3}, {0.5, -1.0, 2.0}, true);
  p.zero_grad();
  Adam<double> adam({p});
  for (int i = 0; i < 5; ++i) adam.step(0.1);
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()),
            (std::vector<double>{0.5, -1.0, 2.0}));
}

double minimize_square(std::vector<double>* trajectory = nullptr) {
  auto x = Tensor<double>::from({1}, {1.0}, true);
  Adam<double> adam({x});
  for (int step = 0; step < 500; ++step) {
    x.zero_grad();
    sum(square(x)).backward();
    adam.step(0.05);
    if (trajectory) trajectory->push_back(x.values()[0]);
  }
  return x.values()[0];
}

TEST(Adam, MinimizesSquare) { EXPECT_LT(std::abs(minimize_square()), 1e-3); }

TEST(Adam, Deterministic) {
  std::vector<double> a, b;
  minimize_square(&a);
  minimize_square(&b);
  EXPECT_EQ(a, b);
}

TEST(LrSchedule, WarmupThenDecay) {
  EXPECT_DOUBLE_EQ(lr_schedule(100, 1e-3, 100, 0.5, 1000), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(50, 1e-3, 100, 0.5, 1000), 5e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(1100, 1e-3, 100, 0.5, 1000), 5e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(2100, 1e-3, 100, 0.5, 1000), 2.5e-4);
  EXPECT_THROW(lr_schedule(1, 1e-3, 0, 0.5, 1000), std::invalid_argument);
}

TEST(ClipGradNorm, RescalesToMaximum) {
  auto p = Tensor<double>::from({2}, {0, 0}, true);
  p.mutable_grad()[0] = 3;
  p.mutable_grad()[1] = 4;
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({p}, 1.0), 5.0);
  EXPECT_NEAR(p.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(p.grad()[1], 0.8, 1e-12);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  Rng rng(3);
  ParameterStore<float> a;
  Linear<float> la(a, "layer", 3, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "widgetcap_ckpt_test.bin";
  save_checkpoint(path, a, {{"kind", "test"}, {"hidden", "2"}});

  ParameterStore<float> b;
  Rng other(4);
  Linear<float> lb(b, "layer", 3, 2, other);
  auto ckpt = read_checkpoint(path);
  EXPECT_EQ(ckpt.manifest.at("kind"), "test");
  load_into(ckpt, b);
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto va = a.entries()[i].tensor.values(), vb = b.entries()[i].tensor.values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  }

  ParameterStore<float> c;
  Linear<float> lc(c, "layer", 4, 2, other);
  EXPECT_THROW(load_into(ckpt, c), CheckpointMismatch);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".manifest");
}

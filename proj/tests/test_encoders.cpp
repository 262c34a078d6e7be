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
#include <fstream>

#include "widgetcap/encoders.hpp"
#include "widgetcap/image.hpp"
#include "widgetcap/nn/gradcheck.hpp"
#include "widgetcap/nn/ops.hpp"
#include "widgetcap/synthetic.hpp"

namespace widgetcap {
namespace {

using nn::Tensor;

Vocabulary small_vocab() {
  return Vocabulary::from_tokens({"go", "back", "search", "contact", "music", "menu"});
}

ElementFeatures element(std::vector<std::string> text, WidgetType type = WidgetType::kButton,
                        std::size_t preorder = 1) {
  ElementFeatures f;
  f.text_tokens = std::move(text);
  f.type = type;
  f.clickable = true;
  f.bounds = {10, 20, 30, 40};
  f.position = {preorder, preorder, 2};
  return f;
}

std::vector<double> row(const Tensor<double>& t, std::size_t r) {
  const std::size_t w = t.dim(t.rank() - 1);
  return {t.values().begin() + r * w, t.values().begin() + (r + 1) * w};
}

Tensor<double> random_tensor(nn::Shape shape, Rng& rng) {
  std::vector<double> v(nn::numel(shape));
  for (auto& x : v) x = uniform_real(rng, -1, 1);
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

struct EmbeddingFixture {
  nn::ParameterStore<double> store;
  Rng rng{5};
  Vocabulary vocab = small_vocab();
  EmbeddingConfig config;
  ElementEmbedding<double> embed;

  EmbeddingFixture() {
    config.vocab_size = vocab.size();
    config.word_dim = 12;
    config.part_dim = 8;
    config.hidden = 16;
    embed = ElementEmbedding<double>(store, config, rng);
  }

  Tensor<double> operator()(const std::vector<ElementFeatures>& elements) const {
    std::vector<const ElementFeatures*> ptrs;
    for (const auto& e : elements) ptrs.push_back(&e);
    return embed(element_ids(ptrs, vocab, config));
  }
};

TEST(ElementEmbedding, TextIsMaxOverWordVectors) {
  EmbeddingFixture fx;
  const auto base = row(fx({element({})}), 0);
  const std::size_t d = fx.config.part_dim, h = fx.config.hidden;
  const auto w = fx.embed.output.weight.values();
  for (const auto& text : std::vector<std::vector<std::string>>{
           {"search"}, {"search", "contact"}, {"go", "back", "menu"}}) {
    // Expected: e(empty) + (max_k v_k - e_empty) W_E restricted to the text rows.
    std::vector<std::int32_t> ids;
    for (const auto& t : text) ids.push_back(fx.vocab.id(t));
    const auto vecs = fx.embed.token_vectors(ids);
    std::vector<double> pooled(d, -1e300);
    for (std::size_t k = 0; k < ids.size(); ++k)
      for (std::size_t j = 0; j < d; ++j) pooled[j] = std::max(pooled[j], vecs.values()[k * d + j]);
    auto got = row(fx({element(text)}), 0);
    for (std::size_t o = 0; o < h; ++o) {
      double expected = base[o];
      for (std::size_t j = 0; j < d; ++j)
        expected += (pooled[j] - fx.embed.empty_text.values()[j]) * w[j * h + o];
      EXPECT_NEAR(got[o], expected, 1e-12);
    }
  }
}

TEST(ElementEmbedding, DuplicateWordLeavesEmbeddingUnchanged) {
  EmbeddingFixture fx;
  auto a = fx({element({"search", "music"})});
  auto b = fx({element({"search", "music", "search", "music"})});
  EXPECT_EQ(row(a, 0), row(b, 0));
}

TEST(ElementEmbedding, TraversalIndicesClampToCap) {
  EmbeddingFixture fx;
  auto a = fx({element({"go"}, WidgetType::kButton, 511)});
  auto b = fx({element({"go"}, WidgetType::kButton, 5000)});
  EXPECT_EQ(row(a, 0), row(b, 0));
}

TEST(ElementEmbedding, WordTableSharedWithTokenPathway) {
  EmbeddingFixture fx;
  const auto id = fx.vocab.id("menu");
  const std::int32_t ids[] = {id};
  const auto before_tok = fx.embed.token_vectors(ids);
  const auto before_el = row(fx({element({"menu"})}), 0);
  auto table = fx.store.get("embed.words");
  table.mutable_values()[std::size_t(id) * fx.config.word_dim] += 1.0;
  EXPECT_NE(row(fx.embed.token_vectors(ids), 0), row(before_tok, 0));
  EXPECT_NE(row(fx({element({"menu"})}), 0), before_el);
}

struct ContextFixture {
  nn::ParameterStore<double> store;
  Rng rng{8};
  StructuralEncoder<double> encoder;
  ContextFixture() {
    TransformerConfig cfg;
    cfg.hidden = 8;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.ffn = 16;
    encoder = StructuralEncoder<double>(store, cfg, 6, rng);
  }
};

TEST(StructuralEncoder, PermutationEquivariantBitExact) {
  ContextFixture fx;
  Rng rng(1);
  auto x = random_tensor({1, 5, 8}, rng);
  const std::size_t len[] = {5};
  nn::ForwardContext ctx;
  auto h = fx.encoder(x, len, ctx);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<double> px;
  for (auto p : perm) {
    auto r = row(nn::reshape(x, {5, 8}), p);
    px.insert(px.end(), r.begin(), r.end());
  }
  auto hp = fx.encoder(Tensor<double>::from({1, 5, 8}, px), len, ctx);
  const auto flat = nn::reshape(h, {5, 8}), flatp = nn::reshape(hp, {5, 8});
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(row(flatp, i), row(flat, perm[i]));
}

TEST(StructuralEncoder, ContextFlowsAndCapEnforced) {
  ContextFixture fx;
  Rng rng(2);
  auto x = random_tensor({1, 4, 8}, rng);
  const std::size_t len[] = {4};
  nn::ForwardContext ctx;
  auto h = nn::reshape(fx.encoder(x, len, ctx), {4, 8});
  auto changed = x.detach();
  changed.mutable_values()[3 * 8 + 1] += 0.5;  // element 3 only
  auto h2 = nn::reshape(fx.encoder(changed, len, ctx), {4, 8});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NE(row(h, i), row(h2, i));

  auto single = nn::reshape(fx.encoder(random_tensor({1, 1, 8}, rng), std::vector<std::size_t>{1},
                                       ctx), {1, 8});
  EXPECT_EQ(single.size(), 8u);
  const std::size_t over[] = {7};
  EXPECT_THROW(fx.encoder(random_tensor({1, 7, 8}, rng), over, ctx), std::length_error);
}

TEST(StructuralEncoder, PaddingDoesNotLeak) {
  ContextFixture fx;
  Rng rng(3);
  auto x = random_tensor({1, 4, 8}, rng);
  nn::ForwardContext ctx;
  auto short_h = nn::reshape(fx.encoder(nn::slice(x, 1, 0, 3), std::vector<std::size_t>{3}, ctx),
                             {3, 8});
  auto padded = nn::reshape(fx.encoder(x, std::vector<std::size_t>{3}, ctx), {4, 8});
  for (std::size_t i = 0; i < 3; ++i) {
    auto a = row(short_h, i), b = row(padded, i);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
  }
}

TEST(LocalEncoder, LocalWidthAndConstantOnZero) {
  nn::ParameterStore<double> store;
  Rng rng(4);
  LocalEncoder<double> local(store, 16, 32, rng);
  auto e = random_tensor({3, 16}, rng);
  auto out = local(e);
  EXPECT_EQ(out.shape(), (nn::Shape{3, 16}));
  auto changed = e.detach();
  changed.mutable_values()[2 * 16 + 5] += 1.0;
  auto out2 = local(changed);
  EXPECT_EQ(row(out, 0), row(out2, 0));
  EXPECT_EQ(row(out, 1), row(out2, 1));
  EXPECT_NE(row(out, 2), row(out2, 2));
  auto zeros = local(Tensor<double>::zeros({2, 16}));
  EXPECT_EQ(row(zeros, 0), row(zeros, 1));
}

TEST(CropAndScale, Examples) {
  RgbImage white(200, 100, 255);
  auto g = crop_and_scale(white, {10, 10, 90, 60});
  EXPECT_EQ(g.width, 64);
  for (float v : g.pixels) EXPECT_FLOAT_EQ(v, 1.0f);

  RgbImage noise(128, 128);
  Rng rng(6);
  for (auto& b : noise.data) b = std::uint8_t(uniform_index(rng, 256));
  auto same = crop_and_scale(noise, {32, 32, 96, 96});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const auto* p = noise.pixel(x + 32, y + 32);
      EXPECT_NEAR(same.at(x, y), (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0, 1e-6);
    }

  auto wide = crop_and_scale(noise, {0, 0, 128, 32});
  EXPECT_EQ(wide.width, 64);
  EXPECT_EQ(wide.height, 64);
  EXPECT_THROW(crop_and_scale(noise, {50, 50, 50, 80}), ImageError);
  EXPECT_THROW(crop_and_scale(noise, {200, 200, 300, 300}), ImageError);
}

TEST(ImageEncoder, OutputWidthForAnyBatch) {
  nn::ParameterStore<float> store;
  Rng rng(7);
  ImageEncoder<float> enc(store, rng);
  EXPECT_EQ(enc.blocks.size(), 7u);
  std::size_t convs = 0;
  for (const auto& e : store.entries())
    if (e.name.find("kernel") != std::string::npos) ++convs;
  EXPECT_EQ(convs, 21u);
  EXPECT_THROW(enc(Tensor<float>::zeros({1, 64, 64, 1}), NormMode::infer()), std::exception);
  EXPECT_THROW(enc(Tensor<float>::zeros({1, 64, 64, 1}), NormMode::train()), std::exception);
  for (std::size_t n : {2u, 5u}) {
    auto out = enc(Tensor<float>::full({n, 64, 64, 1}, 0.5f), NormMode::train());
    EXPECT_EQ(out.shape(), (nn::Shape{n, 256}));
  }
  for (std::size_t n : {1u, 3u})
    EXPECT_EQ(enc(Tensor<float>::full({n, 64, 64, 1}, 0.5f), NormMode::infer()).shape(),
              (nn::Shape{n, 256}));
  EXPECT_THROW(enc(Tensor<float>::zeros({2, 32, 32, 1}), NormMode::batch_stats()),
               nn::ShapeError);
}

TEST(Fusion, WidthConstantAndGradientsReachBothPaths) {
  nn::ParameterStore<double> store;
  Rng rng(9);
  Fusion<double> fuse(store, 6, 10, 8, rng);
  auto h = random_tensor({3, 6}, rng), g = random_tensor({3, 10}, rng);
  EXPECT_EQ(fuse(h, g).shape(), (nn::Shape{3, 8}));
  auto zero = fuse(Tensor<double>::zeros({2, 6}), Tensor<double>::zeros({2, 10}));
  EXPECT_EQ(row(zero, 0), row(zero, 1));

  std::vector<nn::GradCheckInput> inputs{{"h", h}, {"g", g}};
  for (const auto& e : store.entries()) inputs.push_back({e.name, e.tensor});
  auto report = nn::grad_check([&] { return nn::sum(nn::square(fuse(h, g))); }, inputs);
  EXPECT_TRUE(report.passed) << report.worst_input << " " << report.max_relative_error;
  store.zero_grad();
  h.zero_grad();
  g.zero_grad();
  nn::sum(nn::square(fuse(h, g))).backward();
  auto nonzero = [](std::span<const double> v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
  };
  EXPECT_TRUE(nonzero(h.grad()));
  EXPECT_TRUE(nonzero(g.grad()));
}

std::vector<GrayImage> glyph_crops(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GrayImage> out;
  for (std::size_t i = 0; i < count; ++i) {
    RgbImage img(64, 64, 255);
    draw_glyph(img, static_cast<Glyph>(i % 4), 0, 0, 64, rng);
    out.push_back(crop_and_scale(img, {0, 0, 64, 64}));
  }
  return out;
}

TEST(Pretraining, ReducesReconstructionErrorAndSeparatesGlyphs) {
  const auto crops = glyph_crops(16, 3);
  std::vector<const GrayImage*> ptrs;
  for (const auto& c : crops) ptrs.push_back(&c);
  for (double noise : {0.1, 0.0}) {
    ImageAutoencoder<float> ae(11);
    const auto before = std::vector<float>(ae.store.get("image.block1.conv1.kernel").values().begin(),
                                           ae.store.get("image.block1.conv1.kernel").values().end());
    PretrainConfig cfg;
    cfg.steps = 40;
    cfg.batch_size = 8;
    cfg.noise_stddev = noise;
    cfg.seed = 2;
    auto report = pretrain_autoencoder(ae, ptrs, cfg);
    EXPECT_EQ(report.losses.size(), 40u);
    EXPECT_LT(report.final_mse, report.initial_mse) << "noise " << noise;
    const auto after = ae.store.get("image.block1.conv1.kernel").values();
    EXPECT_FALSE(std::equal(after.begin(), after.end(), before.begin()));

    if (noise == 0.0) continue;
    Rng rng(4);
    RgbImage search(64, 64, 255), back(64, 64, 255);
    draw_glyph(search, Glyph::kSearch, 0, 0, 64, rng);
    draw_glyph(back, Glyph::kBack, 0, 0, 64, rng);
    const auto a = crop_and_scale(search, {0, 0, 64, 64}), b = crop_and_scale(back, {0, 0, 64, 64});
    const GrayImage* pair[] = {&a, &b};
    auto enc = ae.encoder(image_batch<float>(pair), NormMode::infer());
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < 256; ++j) {
      const double x = enc.values()[j], y = enc.values()[256 + j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    EXPECT_LT(dot / std::sqrt(na * nb), 0.99);
  }
}

TEST(CopyParameters, CopiesPrefixAndChecksShapes) {
  nn::ParameterStore<float> a, b;
  Rng r1(1), r2(2);
  nn::Linear<float> la(a, "image.x", 3, 2, r1), lb(b, "image.x", 3, 2, r2);
  nn::Linear<float> other_a(a, "dec.y", 2, 2, r1), other_b(b, "dec.y", 2, 2, r2);
  EXPECT_EQ(copy_parameters(a, b, "image."), 2u);
  EXPECT_TRUE(std::equal(la.weight.values().begin(), la.weight.values().end(),
                         lb.weight.values().begin()));
  EXPECT_FALSE(std::equal(other_a.weight.values().begin(), other_a.weight.values().end(),
                          other_b.weight.values().begin()));
  nn::ParameterStore<float> c;
  nn::Linear<float> lc(c, "image.x", 4, 2, r2);
  EXPECT_THROW(copy_parameters(a, c, "image."), nn::ShapeError);
}

TEST(WordVectors, LoadsKnownTokens) {
  const auto path = std::filesystem::temp_directory_path() / "widgetcap_vectors_test.txt";
  {
    std::ofstream out(path);
    out << "search 1 2 3\nunrelated 4 5 6\nmenu -1 -2 -3\n";
  }
  auto vocab = small_vocab();
  auto table = Tensor<float>::zeros({vocab.size(), 3});
  EXPECT_EQ(load_word_vectors(path, vocab, table), 2u);
  EXPECT_EQ(table.at({std::size_t(vocab.id("search")), 2}), 3.0f);
  EXPECT_EQ(table.at({std::size_t(vocab.id("menu")), 0}), -1.0f);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace widgetcap

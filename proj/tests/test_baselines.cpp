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
#include <numeric>

#include "widgetcap/baselines.hpp"
#include "widgetcap/synthetic.hpp"

using namespace widgetcap;

namespace {

GrayImage random_image(Rng& rng) {
  GrayImage g(kElementImageSize, kElementImageSize);
  for (auto& p : g.pixels) p = static_cast<float>(uniform_unit(rng));
  return g;
}

GrayImage glyph_image(Glyph glyph, const GlyphStyle& style, std::uint64_t seed) {
  RgbImage canvas(96, 96, style.background);
  Rng rng(seed);
  draw_glyph(canvas, glyph, 16, 16, 64, style, rng);
  return crop_and_scale(canvas, Bounds{16, 16, 80, 80});
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(TemplateMatch, IdenticalQueryReturnsItsCaption) {
  Rng rng(1);
  TemplateIndex index;
  std::vector<GrayImage> images;
  for (int i = 0; i < 6; ++i) {
    images.push_back(random_image(rng));
    index.add(images.back(), "caption " + std::to_string(i));
  }
  for (int i = 0; i < 6; ++i) {
    const auto m = index.match(images[i]);
    EXPECT_EQ(m.index, std::size_t(i));
    EXPECT_EQ(*m.caption, "caption " + std::to_string(i));
    EXPECT_NEAR(m.similarity, 1.0, 1e-12);
  }
}

TEST(TemplateMatch, TieGoesToEarlierTemplate) {
  GrayImage a(kElementImageSize, kElementImageSize, 0.0f), b = a, q = a;
  a.pixels[0] = 1.0f;
  b.pixels[1] = 1.0f;
  q.pixels[0] = q.pixels[1] = 1.0f;
  TemplateIndex index;
  index.add(a, "first");
  index.add(b, "second");
  EXPECT_EQ(*index.match(q).caption, "first");

  TemplateIndex reversed;
  reversed.add(b, "second");
  reversed.add(a, "first");
  EXPECT_EQ(*reversed.match(q).caption, "second");
}

TEST(TemplateMatch, FiveGlyphsMatchBruteForce) {
  GlyphStyle plain;
  GlyphStyle inverted;
  inverted.inverted = true;
  inverted.background = 30;
  inverted.ink = 240;
  const std::vector<std::pair<Glyph, GlyphStyle>> glyphs{
      {Glyph::kSearch, plain},
      {Glyph::kDownload, plain},
      {Glyph::kShare, plain},
      {Glyph::kBack, plain},
      {Glyph::kSearch, inverted}};
  TemplateIndex index;
  for (std::size_t i = 0; i < glyphs.size(); ++i)
    index.add(glyph_image(glyphs[i].first, glyphs[i].second, 100 + i), "glyph " + std::to_string(i));

  std::size_t self_hits = 0;
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
      const auto q = glyph_image(glyphs[i].first, glyphs[i].second, seed);
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t t = 0; t < index.size(); ++t) {
        const double s = cosine(index.vector(t), q.pixels);
        if (s > best_sim) best_sim = s, best = t;
      }
      const auto m = index.match(q);
      EXPECT_EQ(m.index, best);
      EXPECT_NEAR(m.similarity, best_sim, 1e-9);
      self_hits += m.index == i;
    }
  }
  EXPECT_GE(self_hits, 12u);
}

TEST(TemplateMatch, PositiveScalingOfQueryIsInvariant) {
  Rng rng(2);
  TemplateIndex index;
  for (int i = 0; i < 20; ++i) index.add(random_image(rng), std::to_string(i));
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = random_image(rng);
    const auto base = index.match(q);
    for (float c : {0.25f, 0.5f, 3.0f}) {
      auto scaled = q;
      for (auto& p : scaled.pixels) p *= c;
      EXPECT_EQ(index.match(scaled).index, base.index);
    }
  }
}

TEST(TemplateMatch, ZeroNormVectorsExcluded) {
  Rng rng(3);
  GrayImage blank(kElementImageSize, kElementImageSize, 0.0f);
  TemplateIndex index;
  index.add(blank, "blank");
  EXPECT_THROW(index.match(random_image(rng)), std::invalid_argument);
  index.add(random_image(rng), "real");
  EXPECT_EQ(*index.match(random_image(rng)).caption, "real");
  EXPECT_THROW(index.match(blank), std::invalid_argument);
  EXPECT_THROW(TemplateIndex{}.match(random_image(rng)), std::invalid_argument);
  EXPECT_THROW(index.add(GrayImage(8, 8), "small"), std::invalid_argument);
}

TEST(TemplateMatch, BuildUsesFirstReference) {
  Rng rng(4);
  DatasetSplit split;
  for (int i = 0; i < 3; ++i) {
    WidgetExample ex;
    ex.image = random_image(rng);
    ex.references = {"ref a" + std::to_string(i), "ref b"};
    split.examples.push_back(ex);
  }
  const auto index = TemplateIndex::build(split);
  ASSERT_EQ(index.size(), 3u);
  EXPECT_EQ(index.caption(2), "ref a2");
  EXPECT_EQ(*index.match(split.examples[1].image).caption, "ref a1");
}

TEST(PhraseVocabulary, FrequencyOrderTiesAndCap) {
  const std::vector<std::string> captions{"Go Back", "go back", "search", "  open menu ",
                                          "open menu", "search", "add", "zoom", "", "go   back"};
  const auto vocab = PhraseVocabulary::build(captions, 4);
  ASSERT_EQ(vocab.size(), 4u);
  EXPECT_EQ(vocab.phrase(0), "go back");
  EXPECT_EQ(vocab.phrase(1), "open menu");
  EXPECT_EQ(vocab.phrase(2), "search");
  EXPECT_EQ(vocab.phrase(3), "add");
  EXPECT_EQ(vocab.id("GO back"), 0u);
  EXPECT_FALSE(vocab.id("zoom").has_value());
  EXPECT_FALSE(vocab.id("").has_value());
}

TEST(PhraseVocabulary, SaveLoadRoundTrip) {
  const std::vector<std::string> captions{"a b", "a b", "c", "d e f"};
  const auto vocab = PhraseVocabulary::build(captions, 10);
  const auto path = std::filesystem::temp_directory_path() / "widgetcap_phrases_test.txt";
  vocab.save(path);
  const auto loaded = PhraseVocabulary::load(path);
  EXPECT_EQ(loaded.phrases(), vocab.phrases());
  EXPECT_EQ(loaded.id("d e f"), vocab.id("d e f"));
  {
    std::ofstream out(path);
    out << "x\ny\nx\n";
  }
  EXPECT_THROW(PhraseVocabulary::load(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(ClassifyPhrase, ArgmaxWithLowestIdOnTies) {
  Rng rng(5);
  nn::ParameterStore<double> store;
  nn::Linear<double> head(store, "head", 2, 3, rng);
  auto w = head.weight.mutable_values();
  const double weights[6] = {1, 0, 1, 0, 1, 1};  // (in=2) x (out=3)
  std::copy(std::begin(weights), std::end(weights), w.begin());
  std::fill(head.bias.mutable_values().begin(), head.bias.mutable_values().end(), 0.0);
  auto z = nn::Tensor<double>::from({3, 2}, {2, 1, 1, 3, 1, 1});
  // logits: (2, 1, 3), (1, 3, 4), (1, 1, 2)
  EXPECT_EQ(classify_phrase(z, head), (std::vector<std::size_t>{2, 2, 2}));
  std::fill(w.begin(), w.end(), 0.0);
  head.bias.mutable_values()[1] = 0.5;
  head.bias.mutable_values()[2] = 0.5;
  EXPECT_EQ(classify_phrase(z, head), (std::vector<std::size_t>{1, 1, 1}));
}

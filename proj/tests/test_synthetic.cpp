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

#include <filesystem>
#include <map>
#include <set>

#include "widgetcap/pipeline.hpp"
#include "widgetcap/synthetic.hpp"

using namespace widgetcap;

namespace {

SyntheticConfig small_config(std::uint64_t seed = 11) {
  SyntheticConfig cfg;
  cfg.screens = 30;
  cfg.apps = 6;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Synthetic, SameSeedSameCorpus) {
  const auto a = generate_synthetic(small_config());
  const auto b = generate_synthetic(small_config());
  ASSERT_EQ(a.size(), 30u);
  ASSERT_EQ(b.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(serialize_view_hierarchy(a[i].tree), serialize_view_hierarchy(b[i].tree));
    EXPECT_EQ(a[i].screenshot.data, b[i].screenshot.data);
    EXPECT_EQ(a[i].records, b[i].records);
  }
  const auto c = generate_synthetic(small_config(12));
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i].screenshot.data == c[i].screenshot.data;
  EXPECT_LT(same, a.size());
}

TEST(Synthetic, RecordsPointAtCaptionableIcons) {
  const auto screens = generate_synthetic(small_config());
  for (const auto& s : screens) {
    const auto nodes = preorder_nodes(s.tree);
    std::set<std::size_t> captionable;
    for (const auto& e : collect_captionable_elements(s.tree))
      captionable.insert(e.position.preorder);
    ASSERT_FALSE(s.records.empty());
    for (const auto& r : s.records) {
      EXPECT_EQ(r.screen_id, s.tree.screen_id);
      EXPECT_EQ(r.app_id, s.tree.app_id);
      ASSERT_LT(r.locator, nodes.size());
      EXPECT_TRUE(captionable.count(r.locator)) << s.tree.screen_id << " " << r.locator;
      EXPECT_EQ(nodes[r.locator]->class_name, "android.widget.ImageButton");
      EXPECT_GE(r.captions.size(), 2u);
      const auto tokens = tokenize(r.captions.front());
      ASSERT_EQ(tokens.size(), 2u);
      if (tokens[0] == "go" || tokens[0] == "previous") continue;
      // The object is named only by the label that follows the icon.
      ASSERT_LT(r.locator + 1, nodes.size());
      const auto* label = nodes[r.locator + 1];
      ASSERT_TRUE(label->text.has_value());
      EXPECT_EQ(tokenize(*label->text).back(), tokens[1]);
    }
  }
}

TEST(Synthetic, BackArrowCaptionFollowsPosition) {
  auto cfg = small_config();
  cfg.screens = 80;
  cfg.arrow_probability = 1.0;
  std::size_t top = 0, bottom = 0;
  for (const auto& s : generate_synthetic(cfg)) {
    const auto nodes = preorder_nodes(s.tree);
    const auto& r = s.records.back();
    const auto& b = nodes[r.locator]->bounds;
    const bool upper = (b.top + b.bottom) / 2 < int(0.7 * s.tree.screen_height);
    EXPECT_EQ(r.captions.front(), upper ? "go back" : "previous page");
    (upper ? top : bottom) += 1;
  }
  EXPECT_GT(top, 0u);
  EXPECT_GT(bottom, 0u);
}

TEST(Synthetic, AppsAssignedRoundRobin) {
  const auto screens = generate_synthetic(small_config());
  std::map<std::string, std::size_t> per_app;
  for (const auto& s : screens) ++per_app[s.tree.app_id];
  EXPECT_EQ(per_app.size(), 6u);
  for (const auto& [app, n] : per_app) EXPECT_EQ(n, 5u) << app;
}

TEST(Synthetic, ObjectFrequenciesAreZipfLike) {
  SyntheticConfig cfg;
  cfg.screens = 600;
  cfg.apps = 10;
  std::map<std::string, std::size_t> objects;
  for (const auto& s : generate_synthetic(cfg))
    for (const auto& r : s.records) {
      const auto t = tokenize(r.captions.front());
      if (t[0] == "search") ++objects[t[1]];
    }
  EXPECT_GT(objects["contact"], 3 * objects["hotel"]);
  EXPECT_GT(objects["hotel"], 0u);
}

TEST(Synthetic, OverfitFixtureIsSmallAndUnambiguous) {
  const auto screens = generate_overfit_fixture(20, 3);
  ASSERT_EQ(screens.size(), 20u);
  for (const auto& s : screens) {
    EXPECT_LE(collect_captionable_elements(s.tree).size(), 4u);
    for (const auto& r : s.records)
      for (const auto& c : r.captions) EXPECT_EQ(c, r.captions.front());
  }
}

TEST(Synthetic, AssembleKeepsEveryRecord) {
  const auto screens = generate_synthetic(small_config());
  std::size_t records = 0;
  for (const auto& s : screens) records += s.records.size();
  const auto split = assemble_synthetic(screens);
  EXPECT_EQ(split.examples.size(), records);
  EXPECT_EQ(split.screens.size(), screens.size());
  for (const auto& ex : split.examples) {
    EXPECT_EQ(ex.image.width, kElementImageSize);
    EXPECT_EQ(ex.image.pixels.size(), std::size_t(kElementImageSize * kElementImageSize));
  }
}

TEST(Synthetic, WrittenCorpusLoadsBack) {
  auto cfg = small_config();
  cfg.screens = 8;
  const auto screens = generate_synthetic(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "widgetcap_synthetic_corpus";
  std::filesystem::remove_all(dir);
  write_corpus(dir, screens);
  const auto records = read_caption_file(dir / "captions.tsv");
  CorpusReport report;
  const auto loaded =
      load_corpus(dir, records, WidgetRegistry::standard(), AssemblyOptions{}, report);
  const auto direct = assemble_synthetic(screens);
  EXPECT_TRUE(report.errors.empty());
  EXPECT_EQ(report.missing_screenshots, 0u);
  ASSERT_EQ(loaded.examples.size(), direct.examples.size());
  for (std::size_t i = 0; i < loaded.examples.size(); ++i) {
    EXPECT_EQ(loaded.examples[i].screen_id, direct.examples[i].screen_id);
    EXPECT_EQ(loaded.examples[i].locator, direct.examples[i].locator);
    EXPECT_EQ(loaded.examples[i].references, direct.examples[i].references);
    EXPECT_EQ(loaded.examples[i].image.pixels, direct.examples[i].image.pixels);
  }
  std::filesystem::remove_all(dir);
}

TEST(Synthetic, RejectsOtherScreenSizes) {
  auto cfg = small_config();
  cfg.width = 400;
  EXPECT_THROW(generate_synthetic(cfg), std::invalid_argument);
}

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

#include "widgetcap/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace widgetcap {

namespace {

struct Verb {
  Glyph glyph;
  const char* word;
  const char* alternative;
  std::array<const char*, 8> objects;
};

constexpr Verb kVerbs[] = {
    {Glyph::kSearch, "search", "find",
     {"contact", "music", "location", "app", "map", "image", "recipe", "hotel"}},
    {Glyph::kDownload, "download", "get",
     {"app", "song", "file", "video", "image", "theme", "game", "wallpaper"}},
    {Glyph::kShare, "share", "send",
     {"article", "image", "video", "recipe", "location", "app", "facebook", "twitter"}},
};

constexpr const char* kFillers[] = {"my", "all", "recent", "your", "new"};
constexpr const char* kDistractors[] = {"welcome", "home", "today", "explore", "library",
                                        "popular", "for you", "latest", "discover", "account"};

void fill_rect(RgbImage& img, int x0, int y0, int x1, int y1, std::uint8_t gray) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      auto* p = img.pixel(x, y);
      p[0] = p[1] = p[2] = gray;
    }
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

/// Shapes in unit coordinates of the glyph box, rasterized by distance.
struct Canvas {
  RgbImage& img;
  double x, y, size, stroke;
  std::uint8_t ink;

  void plot_if(auto&& inside) {
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const int n = int(std::ceil(size));
    for (int py = y0; py < y0 + n; ++py)
      for (int px = x0; px < x0 + n; ++px) {
        if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
        const double u = (px + 0.5 - x) / size, v = (py + 0.5 - y) / size;
        if (inside(u, v)) {
          auto* p = img.pixel(px, py);
          p[0] = p[1] = p[2] = ink;
        }
      }
  }
  void line(double ax, double ay, double bx, double by) {
    const double half = stroke / size / 2.0;
    plot_if([&](double u, double v) { return segment_distance(u, v, ax, ay, bx, by) <= half; });
  }
  void ring(double cx, double cy, double r) {
    const double half = stroke / size / 2.0;
    plot_if([&](double u, double v) {
      return std::abs(std::hypot(u - cx, v - cy) - r) <= half;
    });
  }
  void disc(double cx, double cy, double r) {
    plot_if([&](double u, double v) { return std::hypot(u - cx, v - cy) <= r; });
  }
};

std::size_t zipf_pick(std::size_t n, double exponent, Rng& rng) {
  std::vector<double> weights(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weights[i] = 1.0 / std::pow(double(i + 1), exponent);
  double r = uniform_unit(rng) * total;
  for (std::size_t i = 0; i < n; ++i) {
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  return n - 1;
}

UINode make_node(const char* cls, Bounds b, bool clickable) {
  UINode n;
  n.class_name = cls;
  n.bounds = b;
  n.clickable = clickable;
  return n;
}

void draw_text_bar(RgbImage& img, const Bounds& b, const std::string& text) {
  const int width = std::min(b.width() - 8, int(text.size()) * 9);
  fill_rect(img, b.left + 4, b.top + b.height() / 2 - 6, b.left + 4 + width,
            b.top + b.height() / 2 + 6, 90);
}

struct RowPlan {
  std::size_t verb;
  std::size_t object;
  bool filler;
};

struct ScreenPlan {
  std::vector<RowPlan> rows;
  int rows_y;
  bool arrow;
  int arrow_y;
  std::vector<std::size_t> distractors;
  int title;
};

constexpr int kIconSize = 48;
constexpr int kRowHeight = kIconSize + 16;

std::vector<std::string> references(const SyntheticConfig& cfg, const std::string& canonical,
                                    const std::string& variant) {
  if (cfg.identical_references) return {canonical, canonical, canonical};
  return {canonical, canonical, variant};
}

SyntheticScreen build_screen(const ScreenPlan& plan, const SyntheticConfig& cfg,
                             std::size_t index, const GlyphStyle& style, Rng& rng) {
  char id[32];
  std::snprintf(id, sizeof(id), "s%05zu", index);
  char app[48];
  std::snprintf(app, sizeof(app), "com.synthetic.app%03zu",
                index % std::max<std::size_t>(cfg.apps, 1));

  SyntheticScreen out;
  out.screenshot = RgbImage(cfg.width, cfg.height, 255);
  UITree& tree = out.tree;
  tree.screen_width = cfg.width;
  tree.screen_height = cfg.height;
  tree.screen_id = id;
  tree.app_id = app;
  tree.root = make_node("android.widget.FrameLayout", {0, 0, cfg.width, cfg.height}, false);

  // Preorder: root 0, title 1, then row, icon, label per row, distractors,
  // and the arrow last.
  const Bounds title_bounds{16, 12, cfg.width - 80, 56};
  auto title = make_node("android.widget.TextView", title_bounds, false);
  title.text = kDistractors[plan.title];
  draw_text_bar(out.screenshot, title_bounds, *title.text);
  tree.root.children.push_back(title);
  std::size_t preorder = 2;

  for (std::size_t r = 0; r < plan.rows.size(); ++r) {
    const auto& rp = plan.rows[r];
    const Verb& verb = kVerbs[rp.verb];
    const std::string object = verb.objects[rp.object];
    const int y = plan.rows_y + int(r) * kRowHeight;
    const Bounds row_bounds{0, y, cfg.width, y + kRowHeight};
    auto row = make_node("android.widget.LinearLayout", row_bounds, false);
    fill_rect(out.screenshot, row_bounds.left, row_bounds.top, row_bounds.right,
              row_bounds.bottom - 2, 244);
    const Bounds icon_bounds{16, y + 8, 16 + kIconSize, y + 8 + kIconSize};
    draw_glyph(out.screenshot, verb.glyph, icon_bounds.left, icon_bounds.top, kIconSize, style,
               rng);
    row.children.push_back(make_node("android.widget.ImageButton", icon_bounds, true));
    const Bounds label_bounds{80, y + 8, cfg.width - 80, y + 8 + kIconSize};
    auto label = make_node("android.widget.TextView", label_bounds, false);
    label.text = rp.filler ? std::string(kFillers[rp.object % std::size(kFillers)]) + " " + object
                           : object;
    draw_text_bar(out.screenshot, label_bounds, *label.text);
    row.children.push_back(label);
    tree.root.children.push_back(row);
    out.records.push_back(
        {app, id, preorder + 1,
         references(cfg, std::string(verb.word) + " " + object,
                    std::string(verb.alternative) + " " + object)});
    preorder += 3;
  }

  // Distractor text blocks along the bottom.
  for (std::size_t k = 0; k < plan.distractors.size(); ++k) {
    const int top = cfg.height - 60 - int(k) * 56;
    const Bounds b{16, top, cfg.width / 2, top + 40};
    auto n = make_node("android.widget.TextView", b, false);
    n.text = kDistractors[plan.distractors[k]];
    draw_text_bar(out.screenshot, b, *n.text);
    tree.root.children.push_back(n);
    ++preorder;
  }

  if (plan.arrow) {
    const Bounds b{cfg.width - 64, plan.arrow_y, cfg.width - 16, plan.arrow_y + kIconSize};
    draw_glyph(out.screenshot, Glyph::kBack, b.left, b.top, kIconSize, style, rng);
    tree.root.children.push_back(make_node("android.widget.ImageButton", b, true));
    const bool top = (b.top + b.bottom) / 2 < int(0.7 * cfg.height);
    out.records.push_back({app, id, preorder,
                           top ? references(cfg, "go back", "back")
                               : references(cfg, "previous page", "previous")});
  }
  return out;
}

ScreenPlan random_plan(const SyntheticConfig& cfg, Rng& rng) {
  ScreenPlan plan;
  plan.title = int(uniform_index(rng, std::size(kDistractors)));
  const std::size_t rows = 1 + uniform_index(rng, std::max<std::size_t>(cfg.max_rows, 1));
  for (std::size_t r = 0; r < rows; ++r) {
    RowPlan rp;
    rp.verb = uniform_index(rng, std::size(kVerbs));
    rp.object =
        zipf_pick(std::clamp<std::size_t>(cfg.objects_per_verb, 1, 8), cfg.zipf_exponent, rng);
    rp.filler = uniform_unit(rng) < 0.5;
    plan.rows.push_back(rp);
  }
  plan.rows_y = 72 + int(uniform_index(rng, 248));
  plan.arrow = uniform_unit(rng) < cfg.arrow_probability;
  plan.arrow_y = int(uniform_index(rng, std::size_t(cfg.height - kIconSize)));
  const std::size_t n = uniform_index(rng, cfg.max_distractors + 1);
  for (std::size_t k = 0; k < n; ++k)
    plan.distractors.push_back(uniform_index(rng, std::size(kDistractors)));
  return plan;
}

}  // namespace

GlyphStyle random_glyph_style(Rng& rng) {
  GlyphStyle st;
  st.inverted = uniform_unit(rng) < 0.3;
  st.background = static_cast<std::uint8_t>(st.inverted ? uniform_index(rng, 100)
                                                        : 150 + uniform_index(rng, 106));
  st.ink = static_cast<std::uint8_t>(st.inverted ? 170 + uniform_index(rng, 86)
                                                 : uniform_index(rng, 90));
  const double p = uniform_unit(rng);
  st.plate = p < 0.4 ? GlyphStyle::Plate::kNone
                     : (p < 0.7 ? GlyphStyle::Plate::kDisc : GlyphStyle::Plate::kSquare);
  st.plate_radius = uniform_real(rng, 0.3, 0.5);
  st.plate_x = uniform_real(rng, st.plate_radius, 1.0 - st.plate_radius);
  st.plate_y = uniform_real(rng, st.plate_radius, 1.0 - st.plate_radius);
  const int shift = 60 + int(uniform_index(rng, 60));
  st.plate_tone = static_cast<std::uint8_t>(int(st.background) +
                                            (st.background > 127 ? -shift : shift));
  st.scale = uniform_real(rng, 0.5, 0.95);
  st.offset_x = uniform_real(rng, -1.0, 1.0);
  st.offset_y = uniform_real(rng, -1.0, 1.0);
  st.stroke = uniform_real(rng, 2.5, 5.0);
  return st;
}

void draw_glyph(RgbImage& image, Glyph glyph, int x, int y, int size, Rng& rng) {
  draw_glyph(image, glyph, x, y, size, random_glyph_style(rng), rng);
}

void draw_glyph(RgbImage& image, Glyph glyph, int x, int y, int size, const GlyphStyle& style,
                Rng& rng) {
  fill_rect(image, x, y, x + size, y + size, style.background);
  if (style.plate != GlyphStyle::Plate::kNone) {
    Canvas plate{image, double(x), double(y), double(size), 0.0, style.plate_tone};
    const double px = style.plate_x, py = style.plate_y, r = style.plate_radius;
    if (style.plate == GlyphStyle::Plate::kDisc)
      plate.disc(px, py, r);
    else
      plate.plot_if([&](double u, double v) { return std::abs(u - px) <= r && std::abs(v - py) <= r; });
  }
  // Small per-icon jitter on top of the style.
  const double scale = std::clamp(style.scale + uniform_real(rng, -0.03, 0.03), 0.3, 1.0);
  const double inner = size * scale;
  const double slack = (size - inner) / 2.0;
  const double ox = x + slack + slack * style.offset_x + uniform_real(rng, -2.0, 2.0);
  const double oy = y + slack + slack * style.offset_y + uniform_real(rng, -2.0, 2.0);
  const int ink = std::clamp(int(style.ink) + int(uniform_index(rng, 21)) - 10, 0, 255);
  Canvas c{image, ox, oy, inner, style.stroke, static_cast<std::uint8_t>(ink)};
  switch (glyph) {
    case Glyph::kSearch:
      c.ring(0.42, 0.42, 0.25);
      c.line(0.6, 0.6, 0.86, 0.86);
      break;
    case Glyph::kDownload:
      c.line(0.5, 0.12, 0.5, 0.66);
      c.line(0.28, 0.44, 0.5, 0.66);
      c.line(0.72, 0.44, 0.5, 0.66);
      c.line(0.18, 0.84, 0.82, 0.84);
      break;
    case Glyph::kShare:
      c.line(0.72, 0.2, 0.28, 0.5);
      c.line(0.28, 0.5, 0.72, 0.8);
      c.disc(0.72, 0.2, 0.11);
      c.disc(0.28, 0.5, 0.11);
      c.disc(0.72, 0.8, 0.11);
      break;
    case Glyph::kBack:
      c.line(0.18, 0.5, 0.84, 0.5);
      c.line(0.44, 0.22, 0.18, 0.5);
      c.line(0.44, 0.78, 0.18, 0.5);
      break;
  }
}

std::vector<SyntheticScreen> generate_synthetic(const SyntheticConfig& config) {
  if (config.height != 640 || config.width != 360)
    throw std::invalid_argument("synthetic layouts are drawn for 360x640 screens");
  Rng rng(config.seed);
  // One icon style per app.
  const std::size_t apps = std::max<std::size_t>(config.apps, 1);
  std::vector<GlyphStyle> styles;
  for (std::size_t a = 0; a < apps; ++a) styles.push_back(random_glyph_style(rng));
  std::vector<SyntheticScreen> screens;
  for (std::size_t i = 0; i < config.screens; ++i) {
    const auto plan = random_plan(config, rng);
    screens.push_back(build_screen(plan, config, i, styles[i % apps], rng));
  }
  return screens;
}

std::vector<SyntheticScreen> generate_overfit_fixture(std::size_t count, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.screens = count;
  cfg.apps = std::max<std::size_t>(1, count / 4);
  cfg.seed = seed;
  cfg.max_distractors = 0;
  cfg.max_rows = 1;
  cfg.identical_references = true;
  return generate_synthetic(cfg);
}

DatasetSplit assemble_synthetic(std::span<const SyntheticScreen> screens) {
  DatasetSplit split;
  const auto registry = WidgetRegistry::standard();
  AssemblyOptions options;
  AssemblyReport report;
  for (const auto& s : screens)
    append_screen(split, ScreenInput{s.tree, &s.screenshot}, s.records, registry, options, report);
  if (report.skipped_records != 0)
    throw std::logic_error("synthetic corpus produced " + std::to_string(report.skipped_records) +
                           " unusable caption records");
  return split;
}

void write_corpus(const std::filesystem::path& dir, std::span<const SyntheticScreen> screens) {
  std::filesystem::create_directories(dir);
  std::vector<CaptionRecord> records;
  std::ofstream index(dir / "screens.tsv");
  if (!index) throw std::runtime_error("cannot write " + (dir / "screens.tsv").string());
  index << "screen_id\tapp_id\twidth\theight\n";
  for (const auto& s : screens) {
    const auto& t = s.tree;
    std::ofstream json(dir / (t.screen_id + ".json"));
    if (!json) throw std::runtime_error("cannot write hierarchy for " + t.screen_id);
    json << serialize_view_hierarchy(t);
    save_png(dir / (t.screen_id + ".png"), s.screenshot);
    index << t.screen_id << '\t' << t.app_id << '\t' << t.screen_width << '\t' << t.screen_height
          << '\n';
    records.insert(records.end(), s.records.begin(), s.records.end());
  }
  write_caption_file(dir / "captions.tsv", records);
}

}  // namespace widgetcap

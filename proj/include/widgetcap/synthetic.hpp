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

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "widgetcap/capdata.hpp"

namespace widgetcap {

/// Generated list screens: rows of an icon whose verb is drawn by its glyph
/// and whose object is named only by the text label next to it, plus an
/// optional back arrow captioned by where it sits on the screen.
struct SyntheticConfig {
  std::size_t screens = 500;
  std::size_t apps = 100;
  std::uint64_t seed = 7;
  int width = 360;
  int height = 640;
  /// Icon rows (icon plus label) per screen, uniform in [1, max_rows].
  std::size_t max_rows = 3;
  double arrow_probability = 0.5;
  /// Distractor text elements per screen, uniform in [0, max_distractors].
  std::size_t max_distractors = 2;
  /// Zipf exponent of the object distribution per verb.
  double zipf_exponent = 1.0;
  /// Objects per verb (at most 8).
  std::size_t objects_per_verb = 8;
  /// All references of an element identical (the overfit fixture).
  bool identical_references = false;
};

struct SyntheticScreen {
  UITree tree;
  RgbImage screenshot;
  std::vector<CaptionRecord> records;
};

enum class Glyph { kSearch, kDownload, kShare, kBack };

/// How an app draws its icons. Offsets are fractions of the free margin.
struct GlyphStyle {
  enum class Plate { kNone, kDisc, kSquare };
  bool inverted = false;
  std::uint8_t background = 255;
  std::uint8_t ink = 0;
  Plate plate = Plate::kNone;
  double plate_radius = 0.4;  ///< in units of the icon size
  double plate_x = 0.5, plate_y = 0.5;
  std::uint8_t plate_tone = 200;
  double scale = 0.8;
  double offset_x = 0.0, offset_y = 0.0;  ///< in [-1, 1]
  double stroke = 3.0;
};

GlyphStyle random_glyph_style(Rng& rng);

/// Draws a glyph into the square [x, x + size) x [y, y + size) with small
/// per-icon jitter (position, scale, ink) from rng.
void draw_glyph(RgbImage& image, Glyph glyph, int x, int y, int size, const GlyphStyle& style,
                Rng& rng);
/// Same with a random style.
void draw_glyph(RgbImage& image, Glyph glyph, int x, int y, int size, Rng& rng);

std::vector<SyntheticScreen> generate_synthetic(const SyntheticConfig& config);

/// 20 screens of at most 4 elements with identical references.
std::vector<SyntheticScreen> generate_overfit_fixture(std::size_t screens, std::uint64_t seed);

/// Every target of every screen, in screen order.
DatasetSplit assemble_synthetic(std::span<const SyntheticScreen> screens);

/// Writes <id>.json, <id>.png, captions.tsv and screens.tsv into dir.
void write_corpus(const std::filesystem::path& dir, std::span<const SyntheticScreen> screens);

}  // namespace widgetcap

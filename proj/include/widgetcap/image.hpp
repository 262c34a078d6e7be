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

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "widgetcap/uitree.hpp"

namespace widgetcap {

/// 8-bit RGB, row-major, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

/// Single-channel float image, values in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr int kElementImageSize = 64;

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PNG or JPEG screenshot.
RgbImage load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const RgbImage& image);

/// Maps a rectangle in view-hierarchy coordinates onto screenshot pixels.
Bounds scale_bounds_to_image(const Bounds& bounds, int screen_width, int screen_height,
                             int image_width, int image_height);

/// Crops bounds (screenshot pixels, clamped to the image), converts to
/// luminance 0.299R + 0.587G + 0.114B, and bilinearly resizes to size x size
/// without preserving aspect ratio. Output values are in [0, 1].
/// Throws ImageError when the clamped crop has zero area.
GrayImage crop_and_scale(const RgbImage& screenshot, const Bounds& bounds,
                         int size = kElementImageSize);

/// Bilinear resize with half-pixel centers; an equal-size resize is the identity.
GrayImage resize_bilinear(const GrayImage& source, int width, int height);

}  // namespace widgetcap

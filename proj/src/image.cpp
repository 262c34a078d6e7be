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

#include "widgetcap/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace widgetcap {

RgbImage load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageError("cannot decode image " + path.string());
  RgbImage out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      auto* p = out.pixel(x, y);
      p[0] = row[x][2];
      p[1] = row[x][1];
      p[2] = row[x][0];
    }
  }
  return out;
}

void save_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const auto* p = image.pixel(x, y);
      row[x] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  if (!cv::imwrite(path.string(), bgr))
    throw ImageError("cannot write image " + path.string());
}

Bounds scale_bounds_to_image(const Bounds& bounds, int screen_width, int screen_height,
                             int image_width, int image_height) {
  if (screen_width <= 0 || screen_height <= 0)
    throw std::invalid_argument("scale_bounds_to_image: screen extent must be positive");
  auto sx = [&](int v) {
    return static_cast<int>(std::lround(static_cast<double>(v) * image_width / screen_width));
  };
  auto sy = [&](int v) {
    return static_cast<int>(
        std::lround(static_cast<double>(v) * image_height / screen_height));
  };
  return {sx(bounds.left), sy(bounds.top), sx(bounds.right), sy(bounds.bottom)};
}

GrayImage resize_bilinear(const GrayImage& source, int width, int height) {
  GrayImage out(width, height);
  const double sx = static_cast<double>(source.width) / width;
  const double sy = static_cast<double>(source.height) / height;
  for (int v = 0; v < height; ++v) {
    const double fy = std::clamp((v + 0.5) * sy - 0.5, 0.0, source.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, source.height - 1);
    const double wy = fy - y0;
    for (int u = 0; u < width; ++u) {
      const double fx = std::clamp((u + 0.5) * sx - 0.5, 0.0, source.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, source.width - 1);
      const double wx = fx - x0;
      const double top = source.at(x0, y0) * (1 - wx) + source.at(x1, y0) * wx;
      const double bottom = source.at(x0, y1) * (1 - wx) + source.at(x1, y1) * wx;
      out.at(u, v) = static_cast<float>(top * (1 - wy) + bottom * wy);
    }
  }
  return out;
}

GrayImage crop_and_scale(const RgbImage& screenshot, const Bounds& bounds, int size) {
  const int left = std::clamp(bounds.left, 0, screenshot.width);
  const int right = std::clamp(bounds.right, 0, screenshot.width);
  const int top = std::clamp(bounds.top, 0, screenshot.height);
  const int bottom = std::clamp(bounds.bottom, 0, screenshot.height);
  if (right <= left || bottom <= top) throw ImageError("crop_and_scale: zero-area crop");

  GrayImage crop(right - left, bottom - top);
  for (int y = top; y < bottom; ++y) {
    for (int x = left; x < right; ++x) {
      const auto* p = screenshot.pixel(x, y);
      // Integer weights keep pure white at exactly 1.0.
      const int lum = 299 * p[0] + 587 * p[1] + 114 * p[2];
      crop.at(x - left, y - top) = static_cast<float>(lum / 255000.0);
    }
  }
  GrayImage out = resize_bilinear(crop, size, size);
  for (auto& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace widgetcap

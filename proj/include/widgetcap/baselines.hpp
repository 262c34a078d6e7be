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

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "widgetcap/capdata.hpp"
#include "widgetcap/nn/layers.hpp"

namespace widgetcap {

struct TemplateMatch {
  std::size_t index = 0;
  double similarity = 0.0;
  const std::string* caption = nullptr;
};

/// Raw-pixel nearest-neighbour caption transfer over 64x64 grayscale crops.
class TemplateIndex {
 public:
  static constexpr std::size_t kVectorSize = std::size_t(kElementImageSize) * kElementImageSize;

  void add(const GrayImage& image, std::string caption);
  /// Adds every example with its first reference as the template caption.
  static TemplateIndex build(const DatasetSplit& split);

  std::size_t size() const { return captions_.size(); }
  const std::string& caption(std::size_t i) const { return captions_.at(i); }
  std::span<const float> vector(std::size_t i) const;

  /// Highest cosine similarity; ties go to the lowest insertion index.
  /// Zero-norm templates never match. Throws std::invalid_argument when the
  /// query has zero norm or no template is usable.
  TemplateMatch match(const GrayImage& query) const;

 private:
  std::vector<float> pixels_;
  std::vector<double> norms_;
  std::vector<std::string> captions_;
};

/// Most frequent full caption strings (tokenized and re-joined), descending
/// frequency with lexicographic ties; dense ids from 0.
class PhraseVocabulary {
 public:
  static PhraseVocabulary build(std::span<const std::string> captions, std::size_t size);
  static PhraseVocabulary build(const DatasetSplit& split, std::size_t size);

  std::size_t size() const { return phrases_.size(); }
  const std::string& phrase(std::size_t id) const { return phrases_.at(id); }
  std::optional<std::size_t> id(const std::string& caption) const;
  const std::vector<std::string>& phrases() const { return phrases_; }

  void save(const std::filesystem::path& path) const;
  static PhraseVocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> phrases_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Argmax over phrase logits z W + b for each row of z; lowest id wins ties.
template <typename T>
std::vector<std::size_t> classify_phrase(const nn::Tensor<T>& z, const nn::Linear<T>& head);

}  // namespace widgetcap

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

#include "widgetcap/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace widgetcap {

void TemplateIndex::add(const GrayImage& image, std::string caption) {
  if (image.pixels.size() != kVectorSize)
    throw std::invalid_argument("template images must be 64x64");
  double norm = 0.0;
  for (float p : image.pixels) norm += double(p) * double(p);
  pixels_.insert(pixels_.end(), image.pixels.begin(), image.pixels.end());
  norms_.push_back(std::sqrt(norm));
  captions_.push_back(std::move(caption));
}

TemplateIndex TemplateIndex::build(const DatasetSplit& split) {
  TemplateIndex index;
  for (const auto& ex : split.examples)
    index.add(ex.image, ex.references.empty() ? std::string() : ex.references.front());
  return index;
}

std::span<const float> TemplateIndex::vector(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("template index out of range");
  return std::span<const float>(pixels_).subspan(i * kVectorSize, kVectorSize);
}

TemplateMatch TemplateIndex::match(const GrayImage& query) const {
  if (query.pixels.size() != kVectorSize) throw std::invalid_argument("query must be 64x64");
  double qnorm = 0.0;
  for (float p : query.pixels) qnorm += double(p) * double(p);
  qnorm = std::sqrt(qnorm);
  if (qnorm == 0.0) throw std::invalid_argument("template_match: query has zero norm");
  std::optional<TemplateMatch> best;
  for (std::size_t i = 0; i < size(); ++i) {
    if (norms_[i] == 0.0) continue;
    const float* t = pixels_.data() + i * kVectorSize;
    double dot = 0.0;
    for (std::size_t k = 0; k < kVectorSize; ++k) dot += double(t[k]) * double(query.pixels[k]);
    const double sim = dot / (norms_[i] * qnorm);
    if (!best || sim > best->similarity) best = TemplateMatch{i, sim, &captions_[i]};
  }
  if (!best) throw std::invalid_argument("template_match: no usable (nonzero) template");
  return *best;
}

PhraseVocabulary PhraseVocabulary::build(std::span<const std::string> captions,
                                         std::size_t size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    const auto tokens = tokenize(c);
    if (!tokens.empty()) ++counts[join_tokens(tokens)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  PhraseVocabulary vocab;
  for (std::size_t i = 0; i < ranked.size() && i < size; ++i) {
    vocab.ids_[ranked[i].first] = vocab.phrases_.size();
    vocab.phrases_.push_back(ranked[i].first);
  }
  return vocab;
}

PhraseVocabulary PhraseVocabulary::build(const DatasetSplit& split, std::size_t size) {
  std::vector<std::string> all;
  for (const auto& ex : split.examples) all.insert(all.end(), ex.references.begin(), ex.references.end());
  return build(all, size);
}

std::optional<std::size_t> PhraseVocabulary::id(const std::string& caption) const {
  const auto it = ids_.find(join_tokens(tokenize(caption)));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

void PhraseVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& p : phrases_) out << p << '\n';
}

PhraseVocabulary PhraseVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  PhraseVocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (vocab.ids_.count(line)) throw std::runtime_error(path.string() + ": duplicate phrase " + line);
    vocab.ids_[line] = vocab.phrases_.size();
    vocab.phrases_.push_back(line);
  }
  return vocab;
}

template <typename T>
std::vector<std::size_t> classify_phrase(const nn::Tensor<T>& z, const nn::Linear<T>& head) {
  nn::NoGradGuard guard;
  const auto logits = head(z);
  const std::size_t p = logits.dim(1);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    const auto row = logits.values().subspan(r * p, p);
    out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

template std::vector<std::size_t> classify_phrase(const nn::Tensor<float>&, const nn::Linear<float>&);
template std::vector<std::size_t> classify_phrase(const nn::Tensor<double>&, const nn::Linear<double>&);

}  // namespace widgetcap

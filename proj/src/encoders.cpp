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

#include "widgetcap/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "widgetcap/nn/optim.hpp"

namespace widgetcap {

using nn::Init;
using nn::Shape;
using nn::Tensor;

namespace {

std::int32_t capped(std::size_t value, std::size_t cap) {
  return static_cast<std::int32_t>(std::min(value, cap - 1));
}

}  // namespace

ElementIds element_ids(std::span<const ElementFeatures* const> elements, const Vocabulary& vocab,
                       const EmbeddingConfig& config) {
  ElementIds ids;
  ids.offsets.push_back(0);
  for (const auto* e : elements) {
    for (const auto& w : e->text_tokens) ids.words.push_back(vocab.id(w));
    ids.offsets.push_back(ids.words.size());
    ids.types.push_back(static_cast<std::int32_t>(e->type));
    ids.clickable.push_back(e->clickable ? 1 : 0);
    for (int k = 0; k < 4; ++k) ids.bounds[k].push_back(std::clamp(e->bounds[k], 0, 99));
    ids.preorder.push_back(capped(e->position.preorder, config.preorder_cap));
    ids.postorder.push_back(capped(e->position.postorder, config.preorder_cap));
    ids.depth.push_back(capped(e->position.depth, config.depth_cap));
  }
  return ids;
}

// ---------------------------------------------------------------------------

template <typename T>
ElementEmbedding<T>::ElementEmbedding(nn::ParameterStore<T>& store, const EmbeddingConfig& cfg,
                                      Rng& rng)
    : config(cfg) {
  if (cfg.vocab_size < Vocabulary::kSpecialCount)
    throw std::invalid_argument("embedding needs a vocabulary of at least the special tokens");
  const std::size_t d = cfg.part_dim;
  words = store.create("embed.words", {cfg.vocab_size, cfg.word_dim}, Init::kUniform005, rng);
  word_projection = nn::Linear<T>(store, "embed.word_projection", cfg.word_dim, d, rng, false);
  if (!cfg.structural) return;
  empty_text = store.create("embed.empty_text", {d}, Init::kUniform005, rng);
  types = store.create("embed.types", {kWidgetTypeCount, d}, Init::kUniform005, rng);
  clickable = store.create("embed.clickable", {2, d}, Init::kUniform005, rng);
  static const char* kBoundNames[4] = {"left", "top", "right", "bottom"};
  for (int k = 0; k < 4; ++k)
    bounds[k] = store.create(std::string("embed.bounds_") + kBoundNames[k], {100, d},
                             Init::kUniform005, rng);
  preorder = store.create("embed.preorder", {cfg.preorder_cap, d}, Init::kUniform005, rng);
  postorder = store.create("embed.postorder", {cfg.preorder_cap, d}, Init::kUniform005, rng);
  depth = store.create("embed.depth", {cfg.depth_cap, d}, Init::kUniform005, rng);
  output = nn::Linear<T>(store, "embed.output", 4 * d, cfg.hidden, rng);
}

template <typename T>
Tensor<T> ElementEmbedding<T>::token_vectors(std::span<const std::int32_t> ids) const {
  return word_projection(nn::embedding(words, ids));
}

template <typename T>
Tensor<T> ElementEmbedding<T>::operator()(const ElementIds& ids) const {
  auto text = nn::segment_max(token_vectors(ids.words), ids.offsets, empty_text);
  auto type = nn::embedding(types, ids.types);
  auto click = nn::embedding(clickable, ids.clickable);
  auto box = nn::embedding(bounds[0], ids.bounds[0]);
  for (int k = 1; k < 4; ++k) box = nn::add(box, nn::embedding(bounds[k], ids.bounds[k]));
  box = nn::add(box, nn::embedding(preorder, ids.preorder));
  box = nn::add(box, nn::embedding(postorder, ids.postorder));
  box = nn::add(box, nn::embedding(depth, ids.depth));
  return output(nn::concat<T>({text, type, click, box}, 1));
}

// ---------------------------------------------------------------------------

template <typename T>
StructuralEncoder<T>::StructuralEncoder(nn::ParameterStore<T>& store,
                                        const TransformerConfig& config,
                                        std::size_t max_elements_, Rng& rng)
    : max_elements(max_elements_) {
  for (std::size_t l = 0; l < config.layers; ++l)
    layers.emplace_back(store, "context.layer" + std::to_string(l), config.hidden, config.heads,
                        config.ffn, rng);
  final_norm = nn::LayerNorm<T>(store, "context.final_norm", config.hidden, rng);
}

template <typename T>
Tensor<T> StructuralEncoder<T>::operator()(const Tensor<T>& x,
                                           std::span<const std::size_t> lengths,
                                           const nn::ForwardContext& ctx) const {
  for (auto n : lengths) {
    if (n == 0) throw std::invalid_argument("screen context needs at least one element");
    if (n > max_elements)
      throw std::length_error("screen has " + std::to_string(n) + " elements, over the cap of " +
                              std::to_string(max_elements) +
                              "; truncate the context (captioned targets first) before encoding");
  }
  Tensor<T> h = x;
  for (const auto& layer : layers) h = layer(h, lengths, ctx);
  return final_norm(h);
}

// ---------------------------------------------------------------------------

template <typename T>
LocalEncoder<T>::LocalEncoder(nn::ParameterStore<T>& store, std::size_t hidden,
                              std::size_t width, Rng& rng) {
  layer1 = nn::Linear<T>(store, "local.layer1", hidden, width, rng);
  layer2 = nn::Linear<T>(store, "local.layer2", width, width, rng);
  projection = nn::Linear<T>(store, "local.projection", width, hidden, rng);
}

template <typename T>
Tensor<T> LocalEncoder<T>::operator()(const Tensor<T>& e) const {
  return projection(nn::relu(layer2(nn::relu(layer1(e)))));
}

// ---------------------------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(nn::ParameterStore<T>& store, const std::string& name,
                                std::size_t in, std::size_t out, std::size_t outer_kernel,
                                std::size_t stride, Rng& rng)
    : out_channels(out) {
  first = nn::ConvBn<T>(store, name + ".conv1", outer_kernel, in, out, 1, rng);
  second = nn::ConvBn<T>(store, name + ".conv2", 3, out, out, 1, rng);
  third = nn::ConvBn<T>(store, name + ".conv3", outer_kernel, out, out, stride, rng);
}

template <typename T>
Tensor<T> ResidualBlock<T>::operator()(const Tensor<T>& x, NormMode norm) const {
  auto h = first(x, norm.mode, norm.update_running, true);
  h = second(h, norm.mode, norm.update_running, true);
  h = nn::add(h, nn::pad_last_axis(x, out_channels));
  return third(h, norm.mode, norm.update_running, true);
}

template <typename T>
ImageEncoder<T>::ImageEncoder(nn::ParameterStore<T>& store, Rng& rng) {
  std::size_t in = 1;
  for (std::size_t b = 0; b < 7; ++b) {
    const std::size_t out = std::size_t{4} << b;
    blocks.emplace_back(store, "image.block" + std::to_string(b + 1), in, out, b == 0 ? 5 : 3,
                        b < 6 ? 2 : 1, rng);
    in = out;
  }
}

template <typename T>
Tensor<T> ImageEncoder<T>::operator()(const Tensor<T>& images, NormMode norm) const {
  const Shape expected{kElementImageSize, kElementImageSize, 1};
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != expected)
    throw nn::ShapeError("image encoder expects (N, 64, 64, 1), got " +
                         nn::shape_string(images.shape()));
  Tensor<T> h = images;
  for (const auto& block : blocks) h = block(h, norm);
  return nn::reshape(h, {images.dim(0), kImageEncodingWidth});
}

template <typename T>
Tensor<T> image_batch(std::span<const GrayImage* const> images) {
  const std::size_t pixels = std::size_t(kElementImageSize) * kElementImageSize;
  std::vector<T> values;
  values.reserve(images.size() * pixels);
  for (const auto* img : images) {
    if (img->width != kElementImageSize || img->height != kElementImageSize)
      throw nn::ShapeError("element image must be 64x64, got " + std::to_string(img->width) +
                           "x" + std::to_string(img->height));
    for (float p : img->pixels) values.push_back(static_cast<T>(p));
  }
  return Tensor<T>::from({images.size(), std::size_t(kElementImageSize),
                          std::size_t(kElementImageSize), 1},
                         std::move(values));
}

// ---------------------------------------------------------------------------

namespace {

/// Up-sampling variant: the transposed convolution comes first and its
/// output is added to the input of the third sub-layer.
template <typename T>
struct UpBlockParts {
  static Tensor<T> run(const ResidualBlock<T>& block, const Tensor<T>& x, NormMode norm) {
    auto up = block.first(x, norm.mode, norm.update_running, true);
    auto h = block.second(up, norm.mode, norm.update_running, true);
    return block.third(nn::add(h, up), norm.mode, norm.update_running, true);
  }
};

}  // namespace

template <typename T>
ImageReconstructor<T>::ImageReconstructor(nn::ParameterStore<T>& store, Rng& rng) {
  const std::size_t channels[6] = {64, 32, 16, 8, 4, 4};
  for (std::size_t b = 0; b < 5; ++b) {
    ResidualBlock<T> block;
    block.out_channels = channels[b + 1];
    const std::string name = "reconstruct.block" + std::to_string(b + 1);
    block.first = nn::ConvBn<T>(store, name + ".upconv", 3, channels[b], channels[b + 1], 2, rng,
                                true);
    block.second = nn::ConvBn<T>(store, name + ".conv2", 3, channels[b + 1], channels[b + 1], 1,
                                 rng);
    block.third = nn::ConvBn<T>(store, name + ".conv3", 3, channels[b + 1], channels[b + 1], 1,
                                rng);
    blocks.push_back(std::move(block));
  }
  output_kernel = store.create("reconstruct.output.kernel", {3, 3, 4, 1}, Init::kGlorotUniform, rng);
  output_bias = store.create("reconstruct.output.bias", {1}, Init::kZeros, rng);
}

template <typename T>
Tensor<T> ImageReconstructor<T>::operator()(const Tensor<T>& encoding, NormMode norm) const {
  auto h = nn::reshape(encoding, {encoding.dim(0), 2, 2, 64});
  for (const auto& block : blocks) h = UpBlockParts<T>::run(block, h, norm);
  return nn::sigmoid(nn::add(nn::conv2d(h, output_kernel, 1), output_bias));
}

template <typename T>
ImageAutoencoder<T>::ImageAutoencoder(std::uint64_t seed) {
  Rng rng(seed);
  encoder = ImageEncoder<T>(store, rng);
  reconstructor = ImageReconstructor<T>(store, rng);
}

template <typename T>
Tensor<T> ImageAutoencoder<T>::reconstruct(const Tensor<T>& images, NormMode norm) const {
  return reconstructor(encoder(images, norm), norm);
}

template <typename T>
double ImageAutoencoder<T>::reconstruction_mse(std::span<const GrayImage* const> images) const {
  nn::NoGradGuard guard;
  constexpr std::size_t kChunk = 16;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    auto chunk = images.subspan(start, std::min(kChunk, images.size() - start));
    if (chunk.size() < 2) chunk = images.subspan(images.size() - 2, 2);
    auto clean = image_batch<T>(chunk);
    auto out = reconstruct(clean, NormMode::batch_stats());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = double(out.values()[i]) - double(clean.values()[i]);
      total += d * d;
    }
    count += out.size();
  }
  return count ? total / double(count) : 0.0;
}

template <typename T>
PretrainReport pretrain_autoencoder(ImageAutoencoder<T>& model,
                                    std::span<const GrayImage* const> images,
                                    const PretrainConfig& config) {
  if (images.empty()) throw std::invalid_argument("pretraining needs at least one image");
  std::vector<const GrayImage*> pool(images.begin(), images.end());
  if (pool.size() == 1) pool.push_back(pool.front());  // batch norm needs two samples
  PretrainReport report;
  report.initial_mse = model.reconstruction_mse(pool);

  Rng rng(config.seed);
  nn::Adam<T> adam(model.store.parameters());
  const std::size_t batch = std::clamp<std::size_t>(config.batch_size, 2, pool.size());
  std::vector<std::size_t> order(pool.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<const GrayImage*> picked;
    while (picked.size() < batch) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(std::span(order), rng);
        cursor = 0;
      }
      picked.push_back(pool[order[cursor++]]);
    }
    auto clean = image_batch<T>(picked);
    auto noisy_values = std::vector<T>(clean.values().begin(), clean.values().end());
    if (config.noise_stddev > 0.0)
      for (auto& v : noisy_values)
        v = static_cast<T>(std::clamp(double(v) + config.noise_stddev * standard_normal(rng), 0.0, 1.0));
    auto noisy = Tensor<T>::from(clean.shape(), std::move(noisy_values));

    model.store.zero_grad();
    auto loss = nn::mse_loss(model.reconstruct(noisy, NormMode::train()), clean);
    if (!std::isfinite(double(loss.item())))
      throw nn::NumericalError("autoencoder loss became non-finite at step " +
                               std::to_string(step));
    loss.backward();
    adam.step(config.learning_rate);
    report.losses.push_back(double(loss.item()));
  }
  report.final_mse = model.reconstruction_mse(pool);
  return report;
}

// ---------------------------------------------------------------------------

template <typename T>
Fusion<T>::Fusion(nn::ParameterStore<T>& store, std::size_t structural, std::size_t image,
                  std::size_t width, Rng& rng) {
  hidden = nn::Linear<T>(store, "fusion.hidden", structural + image, width, rng);
  output = nn::Linear<T>(store, "fusion.output", width, width, rng);
}

template <typename T>
Tensor<T> Fusion<T>::operator()(const Tensor<T>& h, const Tensor<T>& g) const {
  return output(nn::relu(hidden(nn::concat<T>({h, g}, 1))));
}

template <typename T>
std::size_t copy_parameters(const nn::ParameterStore<T>& from, nn::ParameterStore<T>& to,
                            const std::string& prefix) {
  std::size_t copied = 0;
  for (const auto& e : from.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    auto dst = to.get(e.name);
    if (dst.shape() != e.tensor.shape())
      throw nn::ShapeError("cannot copy " + e.name + ": " + nn::shape_string(e.tensor.shape()) +
                           " vs " + nn::shape_string(dst.shape()));
    std::copy(e.tensor.values().begin(), e.tensor.values().end(), dst.mutable_values().begin());
    ++copied;
  }
  return copied;
}

template <typename T>
std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab,
                              Tensor<T>& table) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read word vectors " + path.string());
  const std::size_t dim = table.dim(1);
  auto values = table.mutable_values();
  std::size_t filled = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token) || !vocab.contains(token)) continue;
    const auto id = static_cast<std::size_t>(vocab.id(token));
    if (Vocabulary::is_special(static_cast<TokenId>(id))) continue;
    std::vector<T> row;
    double v;
    while (fields >> v) row.push_back(static_cast<T>(v));
    if (row.size() != dim)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " values, got " +
                               std::to_string(row.size()));
    std::copy(row.begin(), row.end(), values.begin() + static_cast<std::ptrdiff_t>(id * dim));
    ++filled;
  }
  return filled;
}

#define WIDGETCAP_INSTANTIATE_ENCODERS(T)                                                  \
  template struct ElementEmbedding<T>;                                                     \
  template struct StructuralEncoder<T>;                                                    \
  template struct LocalEncoder<T>;                                                         \
  template struct ResidualBlock<T>;                                                        \
  template struct ImageEncoder<T>;                                                         \
  template Tensor<T> image_batch<T>(std::span<const GrayImage* const>);                    \
  template struct ImageReconstructor<T>;                                                   \
  template struct ImageAutoencoder<T>;                                                     \
  template PretrainReport pretrain_autoencoder(ImageAutoencoder<T>&,                       \
                                               std::span<const GrayImage* const>,          \
                                               const PretrainConfig&);                     \
  template struct Fusion<T>;                                                               \
  template std::size_t copy_parameters(const nn::ParameterStore<T>&, nn::ParameterStore<T>&, \
                                       const std::string&);                                \
  template std::size_t load_word_vectors(const std::filesystem::path&, const Vocabulary&,   \
                                         Tensor<T>&);

WIDGETCAP_INSTANTIATE_ENCODERS(float)
WIDGETCAP_INSTANTIATE_ENCODERS(double)

#undef WIDGETCAP_INSTANTIATE_ENCODERS

}  // namespace widgetcap

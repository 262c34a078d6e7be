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

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "widgetcap/capdata.hpp"
#include "widgetcap/nn/layers.hpp"

namespace widgetcap {

struct EmbeddingConfig {
  std::size_t vocab_size = 0;
  std::size_t word_dim = 300;
  std::size_t part_dim = 128;  ///< width of each of e_X, e_T, e_C, e_B
  std::size_t hidden = 128;
  std::size_t preorder_cap = 512;
  std::size_t depth_cap = 32;
  /// false: only the word table and projection (decoder-only use).
  bool structural = true;
};

/// Integer views of a batch of elements, ready for table lookups.
struct ElementIds {
  std::vector<std::int32_t> words;      ///< all text tokens, concatenated
  std::vector<std::size_t> offsets;     ///< size n + 1 into words
  std::vector<std::int32_t> types;
  std::vector<std::int32_t> clickable;
  std::array<std::vector<std::int32_t>, 4> bounds;
  std::vector<std::int32_t> preorder, postorder, depth;

  std::size_t size() const { return types.size(); }
};

/// Traversal indices beyond a cap clamp to the last table entry.
ElementIds element_ids(std::span<const ElementFeatures* const> elements, const Vocabulary& vocab,
                       const EmbeddingConfig& config);

/// e_i = [e_X; e_T; e_C; e_B] W_E. The word table and its 300 -> part_dim
/// projection are shared with the caption decoder's token embedding.
template <typename T>
struct ElementEmbedding {
  EmbeddingConfig config;
  nn::Tensor<T> words;          ///< (V, word_dim)
  nn::Linear<T> word_projection;
  nn::Tensor<T> empty_text;     ///< e_empty, (part_dim)
  nn::Tensor<T> types, clickable;
  std::array<nn::Tensor<T>, 4> bounds;
  nn::Tensor<T> preorder, postorder, depth;
  nn::Linear<T> output;         ///< W_E, (4 part_dim, hidden)

  ElementEmbedding() = default;
  ElementEmbedding(nn::ParameterStore<T>& store, const EmbeddingConfig& config, Rng& rng);

  /// Projected word vectors for token ids: (n, part_dim).
  nn::Tensor<T> token_vectors(std::span<const std::int32_t> ids) const;
  /// (n, hidden)
  nn::Tensor<T> operator()(const ElementIds& ids) const;
};

struct TransformerConfig {
  std::size_t hidden = 128;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t ffn = 512;
  double dropout = 0.1;
};

/// Transformer over each screen's element set. No sequence positions: order
/// carries no information, so outputs permute with the inputs.
template <typename T>
struct StructuralEncoder {
  std::vector<nn::EncoderLayer<T>> layers;
  nn::LayerNorm<T> final_norm;
  std::size_t max_elements = 128;

  StructuralEncoder() = default;
  StructuralEncoder(nn::ParameterStore<T>& store, const TransformerConfig& config,
                    std::size_t max_elements, Rng& rng);

  /// x (S, N, D) padded; lengths[s] real elements in screen s. Throws
  /// std::length_error when a screen exceeds max_elements.
  nn::Tensor<T> operator()(const nn::Tensor<T>& x, std::span<const std::size_t> lengths,
                           const nn::ForwardContext& ctx) const;
};

/// phi(e) W_e with a two-layer ReLU perceptron; no cross-element flow.
template <typename T>
struct LocalEncoder {
  nn::Linear<T> layer1, layer2, projection;

  LocalEncoder() = default;
  LocalEncoder(nn::ParameterStore<T>& store, std::size_t hidden, std::size_t width, Rng& rng);
  nn::Tensor<T> operator()(const nn::Tensor<T>& e) const;
};

/// How batch normalization behaves in a forward pass.
struct NormMode {
  nn::BatchNormMode mode = nn::BatchNormMode::kInfer;
  bool update_running = false;

  static NormMode train() { return {nn::BatchNormMode::kTrain, true}; }
  static NormMode batch_stats() { return {nn::BatchNormMode::kTrain, false}; }
  static NormMode infer() { return {nn::BatchNormMode::kInfer, false}; }
};

/// Three conv-BN-ReLU sub-layers; the block input (zero-extended on channels)
/// is added to the input of the third sub-layer, which carries the stride.
template <typename T>
struct ResidualBlock {
  nn::ConvBn<T> first, second, third;
  std::size_t out_channels = 0;

  ResidualBlock() = default;
  ResidualBlock(nn::ParameterStore<T>& store, const std::string& name, std::size_t in,
                std::size_t out, std::size_t outer_kernel, std::size_t stride, Rng& rng);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x, NormMode norm) const;
};

inline constexpr std::size_t kImageEncodingWidth = 256;

/// Seven residual blocks, channels 4..256; blocks 1-6 halve the resolution,
/// block 7 keeps it, so a 64x64x1 input ends at 1x1x256.
template <typename T>
struct ImageEncoder {
  std::vector<ResidualBlock<T>> blocks;

  ImageEncoder() = default;
  ImageEncoder(nn::ParameterStore<T>& store, Rng& rng);
  /// images (N, 64, 64, 1) -> (N, 256)
  nn::Tensor<T> operator()(const nn::Tensor<T>& images, NormMode norm) const;
};

/// Stacks 64x64 crops into an (N, 64, 64, 1) tensor.
template <typename T>
nn::Tensor<T> image_batch(std::span<const GrayImage* const> images);

/// Five residual up-sampling blocks (transposed convolution first) from
/// 2x2x64 to 64x64x4, then a 3x3 convolution to one sigmoid channel.
template <typename T>
struct ImageReconstructor {
  std::vector<ResidualBlock<T>> blocks;
  nn::Tensor<T> output_kernel, output_bias;

  ImageReconstructor() = default;
  ImageReconstructor(nn::ParameterStore<T>& store, Rng& rng);
  nn::Tensor<T> operator()(const nn::Tensor<T>& encoding, NormMode norm) const;
};

struct PretrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double noise_stddev = 0.1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Denoising autoencoder used to pretrain the image encoder. The encoder
/// parameters live under "image." and the reconstructor under "reconstruct.".
template <typename T>
struct ImageAutoencoder {
  nn::ParameterStore<T> store;
  ImageEncoder<T> encoder;
  ImageReconstructor<T> reconstructor;

  explicit ImageAutoencoder(std::uint64_t seed);
  ImageAutoencoder(const ImageAutoencoder&) = delete;
  ImageAutoencoder& operator=(const ImageAutoencoder&) = delete;

  nn::Tensor<T> reconstruct(const nn::Tensor<T>& images, NormMode norm) const;
  /// Mean squared error against clean images, batch statistics, no updates.
  double reconstruction_mse(std::span<const GrayImage* const> images) const;
};

struct PretrainReport {
  std::vector<double> losses;  ///< training loss per step
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

/// Corrupts each sampled batch with clamped Gaussian noise and minimizes the
/// reconstruction error against the clean crops.
template <typename T>
PretrainReport pretrain_autoencoder(ImageAutoencoder<T>& model,
                                    std::span<const GrayImage* const> images,
                                    const PretrainConfig& config);

/// z = ReLU([h; g] W1 + b1) W_z + b_z
template <typename T>
struct Fusion {
  nn::Linear<T> hidden, output;

  Fusion() = default;
  Fusion(nn::ParameterStore<T>& store, std::size_t structural, std::size_t image,
         std::size_t width, Rng& rng);
  nn::Tensor<T> operator()(const nn::Tensor<T>& h, const nn::Tensor<T>& g) const;
};

/// Copies every entry whose name starts with prefix from one store into the
/// entry of the same name in another. Returns the number of arrays copied;
/// throws on a shape mismatch.
template <typename T>
std::size_t copy_parameters(const nn::ParameterStore<T>& from, nn::ParameterStore<T>& to,
                            const std::string& prefix);

/// Reads a text embedding file ("token v1 ... v300" per line) into the rows of
/// table for tokens in vocab. Returns the number of rows filled.
template <typename T>
std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab,
                              nn::Tensor<T>& table);

}  // namespace widgetcap

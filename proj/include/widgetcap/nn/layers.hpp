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

#include <string>
#include <vector>

#include "widgetcap/nn/ops.hpp"
#include "widgetcap/random.hpp"

namespace widgetcap::nn {

enum class Init { kZeros, kOnes, kGlorotUniform, kUniform005, kNormal002 };

/// Named, ordered collection of a model's arrays. Trainable entries are
/// parameters; the rest are buffers such as batch-norm running statistics.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
  };

  /// Throws std::invalid_argument on a duplicate name.
  Tensor<T> create(const std::string& name, Shape shape, Init init, Rng& rng);
  void add_buffer(const std::string& name, Tensor<T> tensor);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor<T>> parameters() const;
  /// Throws std::out_of_range for an unknown name.
  Tensor<T> get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<Entry> entries_;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  ///< (in, out)
  Tensor<T> bias;    ///< (out)

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng, bool with_bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t width, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

/// Whether dropout is active and where its randomness comes from.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, const ForwardContext& ctx);

template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, out;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t width,
                     std::size_t heads, Rng& rng);

  /// x (B, T, D) attending to itself. key_lengths (size B, optional) hides
  /// padded positions; causal hides later positions.
  Tensor<T> operator()(const Tensor<T>& x, bool causal, std::span<const std::size_t> key_lengths,
                       const ForwardContext& ctx) const;
};

template <typename T>
struct FeedForward {
  Linear<T> inner, outer;

  FeedForward() = default;
  FeedForward(ParameterStore<T>& store, const std::string& name, std::size_t width,
              std::size_t hidden, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, const ForwardContext& ctx) const;
};

/// Pre-norm Transformer encoder layer over a padded batch (B, T, D).
template <typename T>
struct EncoderLayer {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attention;
  FeedForward<T> ffn;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore<T>& store, const std::string& name, std::size_t width,
               std::size_t heads, std::size_t ffn_width, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, std::span<const std::size_t> lengths,
                       const ForwardContext& ctx) const;
};

/// Decoder layer conditioned on a per-row vector z (B, 1, D) that is added to
/// the causal self-attention output before the feed-forward sub-layer.
template <typename T>
struct DecoderLayer {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attention;
  FeedForward<T> ffn;

  DecoderLayer() = default;
  DecoderLayer(ParameterStore<T>& store, const std::string& name, std::size_t width,
               std::size_t heads, std::size_t ffn_width, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& z, const ForwardContext& ctx) const;
};

/// Convolution (no bias) followed by batch norm and optionally ReLU.
template <typename T>
struct ConvBn {
  Tensor<T> kernel;  ///< (k, k, Cin, Cout), or (k, k, Cout, Cin) when transposed
  Tensor<T> gamma, beta;
  mutable BatchNormState<T> state;
  std::size_t stride = 1;
  bool transposed = false;

  ConvBn() = default;
  ConvBn(ParameterStore<T>& store, const std::string& name, std::size_t kernel_size,
         std::size_t in, std::size_t out, std::size_t stride, Rng& rng, bool transposed = false);

  /// mode kTrain with update_running=false normalizes by batch statistics
  /// without touching the running averages.
  Tensor<T> operator()(const Tensor<T>& x, BatchNormMode mode, bool update_running,
                       bool activate) const;
};

/// Sinusoidal position table (positions, width).
template <typename T>
Tensor<T> sinusoid_positions(std::size_t positions, std::size_t width);

}  // namespace widgetcap::nn

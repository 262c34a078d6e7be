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
#include <optional>
#include <span>
#include <vector>

#include "widgetcap/nn/tensor.hpp"
#include "widgetcap/random.hpp"

// Differentiable operations. Every function records its backward pass when an
// input requires a gradient; shapes are checked and mismatches raise
// ShapeError naming both operands.

namespace widgetcap::nn {

// --- elementwise -----------------------------------------------------------

/// a + b where b broadcasts against a (right-aligned; each b extent equals the
/// matching a extent or is 1). The result has a's shape.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

// --- linear algebra --------------------------------------------------------

/// kOrderIndependent makes the 64-bit forward sum over the inner index
/// correctly rounded, so permuting that index leaves the result bit-identical.
/// 32-bit tensors ignore it.
enum class Summation { kFast, kOrderIndependent };

/// 2-D (m x k)(k x n) or batched 3-D (B x m x k)(B x k x n). Transpose flags
/// apply to the last two axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false, Summation summation = Summation::kFast);

/// x (..., in) times weight (in, out) plus optional bias (out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// --- shape -----------------------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// General axis permutation: result axis i is input axis perm[i].
template <typename T> Tensor<T> permute(const Tensor<T>& a, std::span<const std::size_t> perm);
/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
/// Elements [start, start + length) along axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);
/// Rows of a (viewed as (n, rest)) picked by index; repeated indices allowed.
template <typename T>
Tensor<T> index_select(const Tensor<T>& a, std::span<const std::size_t> rows);
/// Zero-extends the last axis to `channels` entries.
template <typename T> Tensor<T> pad_last_axis(const Tensor<T>& a, std::size_t channels);

// --- lookups and pooling ---------------------------------------------------

/// Embedding lookup: table (V, D), ids -> (ids.size(), D). Throws on ids >= V.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);

/// Coordinate-wise max over each segment of rows of x (N, D);
/// segment s covers rows [offsets[s], offsets[s+1]). Empty segments take the
/// `empty` vector (D). Result (S, D).
template <typename T>
Tensor<T> segment_max(const Tensor<T>& x, std::span<const std::size_t> offsets,
                      const Tensor<T>& empty);

// --- normalization and attention helpers -----------------------------------

/// Softmax over the last axis of x (G, Tq, Tk). When causal, query t sees keys
/// <= t. key_lengths, when given (size G), hides keys >= key_lengths[g].
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, bool causal,
                         std::span<const std::size_t> key_lengths = {});

/// Plain softmax over the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T epsilon = T(1e-6));

/// Inverted dropout; identity when rate == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng);

// --- convolution -----------------------------------------------------------

/// "Same" padding: output extent ceil(in / stride), total padding
/// max(0, (out - 1) * stride + k - in) split with the smaller half first.
struct SamePadding {
  std::size_t out = 0;
  std::size_t before = 0;
};
SamePadding same_padding(std::size_t in, std::size_t kernel, std::size_t stride);

/// x (N, H, W, Cin), kernel (kh, kw, Cin, Cout) -> (N, ceil(H/s), ceil(W/s), Cout).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride);

/// Adjoint of conv2d: x (N, H, W, Cin), kernel (kh, kw, Cout, Cin)
/// -> (N, H*s, W*s, Cout).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride);

/// Running statistics of one batch-norm layer (per channel, last axis).
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  /// Number of train-mode updates so far; inference requires > 0.
  Tensor<T> updates;
  double momentum = 0.99;
  double epsilon = 1e-5;

  explicit BatchNormState(std::size_t channels = 0);
  bool initialized() const { return updates.defined() && updates.values()[0] > T(0); }
};

enum class BatchNormMode { kTrain, kInfer };

/// Normalizes over every axis except the last. Train mode uses batch
/// statistics (biased variance) and, when update_running, folds them into
/// state with the configured momentum. Infer mode uses the running statistics
/// and throws std::logic_error before any train-mode update.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, BatchNormMode mode, bool update_running = true);

// --- losses ----------------------------------------------------------------

/// Sum over rows of weights[r] * CE(softmax(logits[r]), targets[r]) for
/// logits (N, V). No averaging; rows with weight 0 are skipped (padding).
/// Throws std::out_of_range for a target >= V.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                                std::span<const T> weights);

/// Mean squared error between same-shaped tensors.
template <typename T> Tensor<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target);

}  // namespace widgetcap::nn

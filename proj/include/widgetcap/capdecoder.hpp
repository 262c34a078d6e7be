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

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "widgetcap/baselines.hpp"
#include "widgetcap/capdata.hpp"
#include "widgetcap/encoders.hpp"
#include "widgetcap/nn/checkpoint.hpp"
#include "widgetcap/nn/optim.hpp"

namespace widgetcap {

enum class ModelKind { kTemplate, kPixelOnly, kPixelLocal, kPlc, kPlcClassification };

std::string_view to_string(ModelKind kind);
/// template | pixel | pixel_local | plc | plc_classification
std::optional<ModelKind> parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::kPlc;
  std::size_t vocab_size = 0;
  std::size_t phrase_count = 0;  ///< plc_classification only
  std::size_t word_dim = 300;
  std::size_t hidden = 128;
  std::size_t encoder_layers = 6;
  std::size_t decoder_layers = 6;
  std::size_t heads = 8;
  std::size_t ffn = 512;
  double dropout = 0.1;
  std::size_t local_width = 128;
  std::size_t max_decode_length = 10;  ///< M, including the end token
  std::size_t max_elements = 128;
  std::size_t preorder_cap = 512;
  std::size_t depth_cap = 32;

  nn::Manifest to_manifest() const;
  /// Throws std::invalid_argument on a missing or malformed key.
  static ModelConfig from_manifest(const nn::Manifest& manifest);
};

/// One screen of a batch: the context, the caption-missing targets (indices
/// into screen->elements) with their crops, and one sampled reference each.
struct ScreenBatch {
  const ScreenContext* screen = nullptr;
  std::vector<std::size_t> targets;
  std::vector<const GrayImage*> images;
  std::vector<std::vector<TokenId>> captions;  ///< without start/end tokens
  std::vector<std::optional<std::size_t>> phrases;  ///< classification targets
};

/// Example indices grouped by screen, screens in first-appearance order.
std::vector<std::vector<std::size_t>> group_by_screen(const DatasetSplit& split);

/// Samples one reference per example (uniformly, via rng) and encodes it.
/// Captions longer than max_decode_length - 1 tokens are truncated.
ScreenBatch make_screen_batch(const DatasetSplit& split, std::span<const std::size_t> examples,
                              const Vocabulary& vocab, std::size_t max_decode_length, Rng& rng,
                              const PhraseVocabulary* phrases = nullptr);

struct DecodedCaption {
  std::vector<TokenId> tokens;         ///< end token and unknown tokens removed
  std::vector<double> probabilities;   ///< of each kept token when it was chosen
};

template <typename T>
class CaptionModel {
 public:
  CaptionModel(const ModelConfig& config, std::uint64_t seed);
  CaptionModel(const CaptionModel&) = delete;
  CaptionModel& operator=(const CaptionModel&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }
  const ElementEmbedding<T>& embedding() const { return embedding_; }
  const nn::Linear<T>& phrase_head() const { return phrase_head_; }
  bool image_norm_ready() const;

  /// Element encodings z (K, hidden) for all targets of all screens, in order.
  /// norm_train selects batch-norm training mode for the image encoder.
  nn::Tensor<T> encode(std::span<const ScreenBatch> screens, const nn::ForwardContext& ctx,
                       bool norm_train, const Vocabulary& vocab) const;

  /// Structural encodings h (K, hidden) only; zeros for Pixel Only.
  nn::Tensor<T> encode_structure(std::span<const ScreenBatch> screens,
                                 const nn::ForwardContext& ctx, const Vocabulary& vocab) const;

  /// Teacher-forced logits (K, L, V) for start-prefixed inputs (K, L).
  nn::Tensor<T> decoder_logits(const nn::Tensor<T>& z,
                               std::span<const std::vector<TokenId>> inputs,
                               const nn::ForwardContext& ctx) const;

  /// Mean over screens of the per-screen loss: the mean over targets of each
  /// target's mean token cross entropy. Throws std::invalid_argument when a
  /// screen has no targets.
  nn::Tensor<T> loss(std::span<const ScreenBatch> screens, const nn::ForwardContext& ctx,
                     bool norm_train, const Vocabulary& vocab) const;

  /// Greedy decoding for every row of z; rows are independent.
  std::vector<DecodedCaption> greedy_decode(const nn::Tensor<T>& z) const;

  /// Encodes each screen once and decodes one caption per target.
  std::vector<std::vector<DecodedCaption>> decode_screens(std::span<const ScreenBatch> screens,
                                                          const Vocabulary& vocab) const;

  /// plc_classification: phrase id per target.
  std::vector<std::vector<std::size_t>> classify_screens(std::span<const ScreenBatch> screens,
                                                         const Vocabulary& vocab) const;

  /// Teacher-forced per-token accuracy over all targets (no dropout).
  double token_accuracy(std::span<const ScreenBatch> screens, const Vocabulary& vocab) const;

 private:
  nn::Tensor<T> image_encodings(std::span<const ScreenBatch> screens, bool norm_train) const;
  nn::Tensor<T> sequence_loss(const nn::Tensor<T>& z, std::span<const ScreenBatch> screens,
                              const nn::ForwardContext& ctx) const;
  nn::Tensor<T> phrase_loss(const nn::Tensor<T>& z, std::span<const ScreenBatch> screens) const;

  ModelConfig config_;
  nn::ParameterStore<T> store_;
  ElementEmbedding<T> embedding_;
  StructuralEncoder<T> context_;
  LocalEncoder<T> local_;
  ImageEncoder<T> image_;
  Fusion<T> fusion_;
  std::vector<nn::DecoderLayer<T>> decoder_;
  nn::LayerNorm<T> decoder_norm_;
  nn::Linear<T> output_;
  nn::Linear<T> phrase_head_;
  nn::Tensor<T> positions_;
};

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_screens = 64;
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 100;
  double decay_rate = 0.5;
  std::size_t decay_steps = 1000;
  double clip_norm = 1.0;  ///< 0 disables clipping
  std::uint64_t seed = 0;
};

/// Adam updates of a CaptionModel on the screen-level loss.
template <typename T>
class Trainer {
 public:
  Trainer(CaptionModel<T>& model, const TrainConfig& config);

  /// One update on the batch; returns the loss before the update. Throws
  /// nn::NumericalError (with the step and offending quantity) when the loss
  /// or a gradient is not finite.
  double train_step(std::span<const ScreenBatch> batch, const Vocabulary& vocab);
  std::uint64_t steps() const { return adam_.steps(); }
  Rng& rng() { return rng_; }

 private:
  CaptionModel<T>& model_;
  TrainConfig config_;
  nn::Adam<T> adam_;
  Rng rng_;
};

struct TrainReport {
  std::vector<double> losses;
  std::size_t steps = 0;
  bool stopped_early = false;
};

/// Epoch-shuffled screen batches, a fresh reference sample per visit.
/// `on_step(step, loss)` may return true to stop early.
template <typename T>
TrainReport train_model(CaptionModel<T>& model, const DatasetSplit& split,
                        const Vocabulary& vocab, const TrainConfig& config,
                        const PhraseVocabulary* phrases = nullptr,
                        const std::function<bool(std::size_t, double)>& on_step = {});

}  // namespace widgetcap

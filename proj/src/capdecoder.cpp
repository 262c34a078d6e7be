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

#include "widgetcap/capdecoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace widgetcap {

using nn::Tensor;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTemplate: return "template";
    case ModelKind::kPixelOnly: return "pixel";
    case ModelKind::kPixelLocal: return "pixel_local";
    case ModelKind::kPlc: return "plc";
    case ModelKind::kPlcClassification: return "plc_classification";
  }
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::kTemplate, ModelKind::kPixelOnly, ModelKind::kPixelLocal,
                 ModelKind::kPlc, ModelKind::kPlcClassification})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

namespace {

bool uses_context(ModelKind k) {
  return k == ModelKind::kPlc || k == ModelKind::kPlcClassification;
}
bool uses_structure(ModelKind k) { return uses_context(k) || k == ModelKind::kPixelLocal; }

std::size_t manifest_size(const nn::Manifest& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw std::invalid_argument("model manifest lacks '" + key + "'");
  std::size_t v = 0;
  const auto* end = it->second.data() + it->second.size();
  const auto r = std::from_chars(it->second.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end)
    throw std::invalid_argument("model manifest: '" + key + "' is not a count: " + it->second);
  return v;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

nn::Manifest ModelConfig::to_manifest() const {
  return {
      {"model", std::string(to_string(kind))},
      {"vocab_size", std::to_string(vocab_size)},
      {"phrase_count", std::to_string(phrase_count)},
      {"word_dim", std::to_string(word_dim)},
      {"hidden", std::to_string(hidden)},
      {"encoder_layers", std::to_string(encoder_layers)},
      {"decoder_layers", std::to_string(decoder_layers)},
      {"heads", std::to_string(heads)},
      {"ffn", std::to_string(ffn)},
      {"dropout", format_double(dropout)},
      {"local_width", std::to_string(local_width)},
      {"max_decode_length", std::to_string(max_decode_length)},
      {"max_elements", std::to_string(max_elements)},
      {"preorder_cap", std::to_string(preorder_cap)},
      {"depth_cap", std::to_string(depth_cap)},
  };
}

ModelConfig ModelConfig::from_manifest(const nn::Manifest& m) {
  ModelConfig c;
  const auto it = m.find("model");
  if (it == m.end()) throw std::invalid_argument("model manifest lacks 'model'");
  const auto kind = parse_model_kind(it->second);
  if (!kind) throw std::invalid_argument("unknown model configuration '" + it->second + "'");
  c.kind = *kind;
  c.vocab_size = manifest_size(m, "vocab_size");
  c.phrase_count = manifest_size(m, "phrase_count");
  c.word_dim = manifest_size(m, "word_dim");
  c.hidden = manifest_size(m, "hidden");
  c.encoder_layers = manifest_size(m, "encoder_layers");
  c.decoder_layers = manifest_size(m, "decoder_layers");
  c.heads = manifest_size(m, "heads");
  c.ffn = manifest_size(m, "ffn");
  c.local_width = manifest_size(m, "local_width");
  c.max_decode_length = manifest_size(m, "max_decode_length");
  c.max_elements = manifest_size(m, "max_elements");
  c.preorder_cap = manifest_size(m, "preorder_cap");
  c.depth_cap = manifest_size(m, "depth_cap");
  const auto d = m.find("dropout");
  if (d == m.end()) throw std::invalid_argument("model manifest lacks 'dropout'");
  c.dropout = std::stod(d->second);
  return c;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> group_by_screen(const DatasetSplit& split) {
  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < split.examples.size(); ++i) {
    const auto s = split.examples[i].screen_index;
    auto [it, fresh] = slot.try_emplace(s, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

ScreenBatch make_screen_batch(const DatasetSplit& split, std::span<const std::size_t> examples,
                              const Vocabulary& vocab, std::size_t max_decode_length, Rng& rng,
                              const PhraseVocabulary* phrases) {
  if (examples.empty()) throw std::invalid_argument("screen batch needs at least one example");
  if (max_decode_length < 2) throw std::invalid_argument("max decode length must be >= 2");
  ScreenBatch batch;
  const auto screen_index = split.examples.at(examples.front()).screen_index;
  batch.screen = &split.screens.at(screen_index);
  for (auto i : examples) {
    const auto& ex = split.examples.at(i);
    if (ex.screen_index != screen_index)
      throw std::invalid_argument("screen batch mixes examples of different screens");
    const std::string& ref = sample_reference(ex, rng);
    auto tokens = tokenize(ref);
    if (tokens.size() > max_decode_length - 1) tokens.resize(max_decode_length - 1);
    batch.targets.push_back(ex.context_index);
    batch.images.push_back(&ex.image);
    batch.captions.push_back(vocab.encode(tokens));
    batch.phrases.push_back(phrases ? phrases->id(ref) : std::nullopt);
  }
  return batch;
}

// ---------------------------------------------------------------------------

template <typename T>
CaptionModel<T>::CaptionModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.kind == ModelKind::kTemplate)
    throw std::invalid_argument("template matching has no neural model");
  if (config.hidden % config.heads != 0)
    throw std::invalid_argument("hidden size must be divisible by the head count");
  if (config.kind == ModelKind::kPlcClassification && config.phrase_count == 0)
    throw std::invalid_argument("plc_classification needs a nonempty phrase vocabulary");
  Rng rng(seed);
  EmbeddingConfig ecfg;
  ecfg.vocab_size = config.vocab_size;
  ecfg.word_dim = config.word_dim;
  ecfg.part_dim = config.hidden;
  ecfg.hidden = config.hidden;
  ecfg.preorder_cap = config.preorder_cap;
  ecfg.depth_cap = config.depth_cap;
  ecfg.structural = uses_structure(config.kind);
  embedding_ = ElementEmbedding<T>(store_, ecfg, rng);
  if (uses_context(config.kind)) {
    TransformerConfig tcfg{config.hidden, config.encoder_layers, config.heads, config.ffn,
                           config.dropout};
    context_ = StructuralEncoder<T>(store_, tcfg, config.max_elements, rng);
  }
  if (config.kind == ModelKind::kPixelLocal)
    local_ = LocalEncoder<T>(store_, config.hidden, config.local_width, rng);
  image_ = ImageEncoder<T>(store_, rng);
  fusion_ = Fusion<T>(store_, config.hidden, kImageEncodingWidth, config.hidden, rng);
  if (config.kind == ModelKind::kPlcClassification) {
    phrase_head_ = nn::Linear<T>(store_, "phrase_head", config.hidden, config.phrase_count, rng);
  } else {
    for (std::size_t l = 0; l < config.decoder_layers; ++l)
      decoder_.emplace_back(store_, "decoder.layer" + std::to_string(l), config.hidden,
                            config.heads, config.ffn, rng);
    decoder_norm_ = nn::LayerNorm<T>(store_, "decoder.final_norm", config.hidden, rng);
    output_ = nn::Linear<T>(store_, "decoder.output", config.hidden, config.vocab_size, rng);
  }
  positions_ = nn::sinusoid_positions<T>(config.max_decode_length, config.hidden);
}

template <typename T>
bool CaptionModel<T>::image_norm_ready() const {
  return image_.blocks.front().first.state.initialized();
}

template <typename T>
Tensor<T> CaptionModel<T>::encode_structure(std::span<const ScreenBatch> screens,
                                            const nn::ForwardContext& ctx,
                                            const Vocabulary& vocab) const {
  std::size_t targets = 0;
  for (const auto& s : screens) targets += s.targets.size();
  const std::size_t d = config_.hidden;
  if (config_.kind == ModelKind::kPixelOnly) return Tensor<T>::zeros({targets, d});

  if (config_.kind == ModelKind::kPixelLocal) {
    std::vector<const ElementFeatures*> elements;
    for (const auto& s : screens)
      for (auto t : s.targets) elements.push_back(&s.screen->elements.at(t));
    return local_(embedding_(element_ids(elements, vocab, embedding_.config)));
  }

  // Context: the whole element set of each screen, padded to a common length.
  std::vector<const ElementFeatures*> elements;
  std::vector<std::size_t> lengths;
  std::size_t longest = 0;
  for (const auto& s : screens) {
    for (const auto& e : s.screen->elements) elements.push_back(&e);
    lengths.push_back(s.screen->elements.size());
    longest = std::max(longest, lengths.back());
  }
  for (auto n : lengths)
    if (n > config_.max_elements)
      throw std::length_error("screen has " + std::to_string(n) + " elements, over the cap of " +
                              std::to_string(config_.max_elements) +
                              "; truncate the context (captioned targets first) before encoding");
  auto e = embedding_(element_ids(elements, vocab, embedding_.config));
  const std::size_t pad_row = elements.size();
  auto with_pad = nn::concat<T>({e, Tensor<T>::zeros({1, d})}, 0);
  std::vector<std::size_t> rows;
  std::size_t base = 0;
  for (auto n : lengths) {
    for (std::size_t i = 0; i < longest; ++i) rows.push_back(i < n ? base + i : pad_row);
    base += n;
  }
  auto padded = nn::reshape(nn::index_select(with_pad, rows), {screens.size(), longest, d});
  auto h = nn::reshape(context_(padded, lengths, ctx), {screens.size() * longest, d});
  std::vector<std::size_t> picks;
  for (std::size_t s = 0; s < screens.size(); ++s)
    for (auto t : screens[s].targets) {
      if (t >= lengths[s]) throw std::out_of_range("target index outside the screen context");
      picks.push_back(s * longest + t);
    }
  return nn::index_select(h, picks);
}

template <typename T>
Tensor<T> CaptionModel<T>::image_encodings(std::span<const ScreenBatch> screens,
                                           bool norm_train) const {
  std::vector<const GrayImage*> images;
  for (const auto& s : screens) images.insert(images.end(), s.images.begin(), s.images.end());
  const std::size_t k = images.size();
  NormMode norm = NormMode::infer();
  if (norm_train && k >= 2) {
    norm = NormMode::train();
  } else if (!image_norm_ready()) {
    // No running statistics yet: normalize by the batch itself (a single
    // image is paired with a copy so the statistics are defined).
    norm = NormMode::batch_stats();
    if (k == 1) images.push_back(images.front());
  }
  auto g = image_(image_batch<T>(images), norm);
  return images.size() == k ? g : nn::slice(g, 0, 0, k);
}

template <typename T>
Tensor<T> CaptionModel<T>::encode(std::span<const ScreenBatch> screens,
                                  const nn::ForwardContext& ctx, bool norm_train,
                                  const Vocabulary& vocab) const {
  for (const auto& s : screens) {
    if (s.targets.empty()) throw std::invalid_argument("screen " + s.screen->screen_id +
                                                       " has no caption-missing targets");
    if (s.images.size() != s.targets.size())
      throw std::invalid_argument("screen batch has mismatched targets and images");
  }
  auto h = encode_structure(screens, ctx, vocab);
  auto g = image_encodings(screens, norm_train);
  return fusion_(h, g);
}

template <typename T>
Tensor<T> CaptionModel<T>::decoder_logits(const Tensor<T>& z,
                                          std::span<const std::vector<TokenId>> inputs,
                                          const nn::ForwardContext& ctx) const {
  if (decoder_.empty()) throw std::logic_error("this model configuration has no caption decoder");
  const std::size_t k = inputs.size();
  if (z.rank() != 2 || z.dim(0) != k)
    throw nn::ShapeError("decoder: z " + nn::shape_string(z.shape()) + " for " +
                         std::to_string(k) + " sequences");
  std::size_t length = 0;
  for (const auto& row : inputs) length = std::max(length, row.size());
  if (length == 0 || length > config_.max_decode_length)
    throw std::invalid_argument("decoder input length " + std::to_string(length) +
                                " outside [1, " + std::to_string(config_.max_decode_length) + "]");
  std::vector<TokenId> ids(k * length, Vocabulary::kPad);
  for (std::size_t r = 0; r < k; ++r)
    std::copy(inputs[r].begin(), inputs[r].end(), ids.begin() + std::ptrdiff_t(r * length));

  const std::size_t d = config_.hidden;
  auto x = nn::reshape(embedding_.token_vectors(ids), {k, length, d});
  x = nn::scale(x, static_cast<T>(std::sqrt(double(d))));
  x = nn::apply_dropout(nn::add(x, nn::slice(positions_, 0, 0, length)), ctx);
  auto zr = nn::reshape(z, {k, 1, d});
  for (const auto& layer : decoder_) x = layer(x, zr, ctx);
  return output_(decoder_norm_(x));
}

template <typename T>
Tensor<T> CaptionModel<T>::sequence_loss(const Tensor<T>& z, std::span<const ScreenBatch> screens,
                                         const nn::ForwardContext& ctx) const {
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::vector<TokenId>> targets;
  std::vector<T> element_weight;
  const double screen_weight = 1.0 / double(screens.size());
  for (const auto& s : screens) {
    for (const auto& caption : s.captions) {
      std::vector<TokenId> in{Vocabulary::kBos};
      in.insert(in.end(), caption.begin(), caption.end());
      std::vector<TokenId> out(caption.begin(), caption.end());
      out.push_back(Vocabulary::kEos);
      if (out.size() > config_.max_decode_length)
        throw std::invalid_argument("caption longer than the maximum decode length");
      element_weight.push_back(
          static_cast<T>(screen_weight / double(s.captions.size()) / double(out.size())));
      inputs.push_back(std::move(in));
      targets.push_back(std::move(out));
    }
  }
  auto logits = decoder_logits(z, inputs, ctx);
  const std::size_t length = logits.dim(1);
  std::vector<TokenId> flat_targets(inputs.size() * length, Vocabulary::kPad);
  std::vector<T> weights(flat_targets.size(), T(0));
  for (std::size_t r = 0; r < targets.size(); ++r)
    for (std::size_t j = 0; j < targets[r].size(); ++j) {
      flat_targets[r * length + j] = targets[r][j];
      weights[r * length + j] = element_weight[r];
    }
  auto flat = nn::reshape(logits, {inputs.size() * length, config_.vocab_size});
  return nn::softmax_cross_entropy(flat, std::span<const TokenId>(flat_targets),
                                   std::span<const T>(weights));
}

template <typename T>
Tensor<T> CaptionModel<T>::phrase_loss(const Tensor<T>& z,
                                       std::span<const ScreenBatch> screens) const {
  std::size_t active = 0;
  for (const auto& s : screens)
    if (std::any_of(s.phrases.begin(), s.phrases.end(), [](const auto& p) { return p.has_value(); }))
      ++active;
  std::vector<TokenId> ids;
  std::vector<T> weights;
  for (const auto& s : screens) {
    const auto known = std::count_if(s.phrases.begin(), s.phrases.end(),
                                     [](const auto& p) { return p.has_value(); });
    for (const auto& p : s.phrases) {
      ids.push_back(p ? static_cast<TokenId>(*p) : 0);
      weights.push_back(p ? static_cast<T>(1.0 / double(known) / double(active)) : T(0));
    }
  }
  return nn::softmax_cross_entropy(phrase_head_(z), std::span<const TokenId>(ids),
                                   std::span<const T>(weights));
}

template <typename T>
Tensor<T> CaptionModel<T>::loss(std::span<const ScreenBatch> screens,
                                const nn::ForwardContext& ctx, bool norm_train,
                                const Vocabulary& vocab) const {
  if (screens.empty()) throw std::invalid_argument("loss needs at least one screen");
  for (const auto& s : screens) {
    if (s.targets.empty())
      throw std::invalid_argument("screen " + s.screen->screen_id +
                                  " has no caption-missing targets and contributes no loss");
    if (s.captions.size() != s.targets.size() || s.phrases.size() != s.targets.size())
      throw std::invalid_argument("screen batch has mismatched targets and captions");
  }
  auto z = encode(screens, ctx, norm_train, vocab);
  if (config_.kind == ModelKind::kPlcClassification) return phrase_loss(z, screens);
  return sequence_loss(z, screens, ctx);
}

template <typename T>
std::vector<DecodedCaption> CaptionModel<T>::greedy_decode(const Tensor<T>& z) const {
  nn::NoGradGuard guard;
  const std::size_t k = z.dim(0);
  const std::size_t v = config_.vocab_size;
  std::vector<DecodedCaption> out(k);
  std::vector<std::vector<TokenId>> prefix(k, {Vocabulary::kBos});
  std::vector<std::size_t> active(k);
  for (std::size_t i = 0; i < k; ++i) active[i] = i;
  nn::ForwardContext ctx;
  for (std::size_t step = 0; step < config_.max_decode_length && !active.empty(); ++step) {
    std::vector<std::vector<TokenId>> rows;
    for (auto i : active) rows.push_back(prefix[i]);
    auto logits = decoder_logits(nn::index_select(z, active), rows, ctx);
    const std::size_t length = logits.dim(1);
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto row = logits.values().subspan((a * length + length - 1) * v, v);
      const auto best = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
      double z_sum = 0.0;
      for (T x : row) z_sum += std::exp(double(x) - double(row[best]));
      const auto i = active[a];
      const auto token = static_cast<TokenId>(best);
      if (token == Vocabulary::kEos) continue;
      prefix[i].push_back(token);
      if (!Vocabulary::is_special(token)) {
        out[i].tokens.push_back(token);
        out[i].probabilities.push_back(1.0 / z_sum);
      }
      still.push_back(i);
    }
    active = std::move(still);
  }
  return out;
}

template <typename T>
std::vector<std::vector<DecodedCaption>> CaptionModel<T>::decode_screens(
    std::span<const ScreenBatch> screens, const Vocabulary& vocab) const {
  nn::NoGradGuard guard;
  std::vector<std::vector<DecodedCaption>> out;
  for (const auto& s : screens) {
    auto z = encode(std::span(&s, 1), {}, false, vocab);
    out.push_back(greedy_decode(z));
  }
  return out;
}

template <typename T>
std::vector<std::vector<std::size_t>> CaptionModel<T>::classify_screens(
    std::span<const ScreenBatch> screens, const Vocabulary& vocab) const {
  if (config_.kind != ModelKind::kPlcClassification)
    throw std::logic_error("classify_screens needs the plc_classification configuration");
  nn::NoGradGuard guard;
  std::vector<std::vector<std::size_t>> out;
  for (const auto& s : screens)
    out.push_back(classify_phrase(encode(std::span(&s, 1), {}, false, vocab), phrase_head_));
  return out;
}

template <typename T>
double CaptionModel<T>::token_accuracy(std::span<const ScreenBatch> screens,
                                       const Vocabulary& vocab) const {
  nn::NoGradGuard guard;
  std::size_t correct = 0, total = 0;
  for (const auto& s : screens) {
    auto z = encode(std::span(&s, 1), {}, false, vocab);
    std::vector<std::vector<TokenId>> inputs;
    for (const auto& c : s.captions) {
      std::vector<TokenId> in{Vocabulary::kBos};
      in.insert(in.end(), c.begin(), c.end());
      inputs.push_back(std::move(in));
    }
    auto logits = decoder_logits(z, inputs, {});
    const std::size_t length = logits.dim(1), v = config_.vocab_size;
    for (std::size_t r = 0; r < s.captions.size(); ++r) {
      for (std::size_t j = 0; j <= s.captions[r].size(); ++j) {
        const TokenId expected = j < s.captions[r].size() ? s.captions[r][j] : Vocabulary::kEos;
        const auto row = logits.values().subspan((r * length + j) * v, v);
        const auto best = TokenId(std::max_element(row.begin(), row.end()) - row.begin());
        correct += best == expected;
        ++total;
      }
    }
  }
  return total ? double(correct) / double(total) : 0.0;
}

// ---------------------------------------------------------------------------

template <typename T>
Trainer<T>::Trainer(CaptionModel<T>& model, const TrainConfig& config)
    : model_(model), config_(config), adam_(model.store().parameters()), rng_(config.seed) {}

template <typename T>
double Trainer<T>::train_step(std::span<const ScreenBatch> batch, const Vocabulary& vocab) {
  const auto step = adam_.steps() + 1;
  nn::ForwardContext ctx{true, model_.config().dropout, &rng_};
  model_.store().zero_grad();
  auto loss = model_.loss(batch, ctx, true, vocab);
  const double value = double(loss.item());
  if (!std::isfinite(value))
    throw nn::NumericalError("training loss is " + std::to_string(value) + " at step " +
                             std::to_string(step));
  loss.backward();
  const auto params = model_.store().parameters();
  for (const auto& e : model_.store().entries()) {
    if (!e.trainable) continue;
    for (T g : e.tensor.grad())
      if (!std::isfinite(g))
        throw nn::NumericalError("non-finite gradient in " + e.name + " at step " +
                                 std::to_string(step) + " (loss " + std::to_string(value) + ")");
  }
  if (config_.clip_norm > 0.0) nn::clip_grad_norm(params, config_.clip_norm);
  adam_.step(nn::lr_schedule(step, config_.learning_rate, config_.warmup_steps,
                             config_.decay_rate, config_.decay_steps));
  return value;
}

template <typename T>
TrainReport train_model(CaptionModel<T>& model, const DatasetSplit& split,
                        const Vocabulary& vocab, const TrainConfig& config,
                        const PhraseVocabulary* phrases,
                        const std::function<bool(std::size_t, double)>& on_step) {
  const auto groups = group_by_screen(split);
  if (groups.empty()) throw std::invalid_argument("training split has no examples");
  Trainer<T> trainer(model, config);
  Rng sampler(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(groups.size());
  std::size_t cursor = order.size();
  const std::size_t batch_size = std::max<std::size_t>(1, std::min(config.batch_screens, groups.size()));
  TrainReport report;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<ScreenBatch> batch;
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(std::span(order), sampler);
        cursor = 0;
      }
      batch.push_back(make_screen_batch(split, groups[order[cursor++]], vocab,
                                        model.config().max_decode_length, sampler, phrases));
    }
    const double loss = trainer.train_step(batch, vocab);
    report.losses.push_back(loss);
    report.steps = step;
    if (on_step && on_step(step, loss)) {
      report.stopped_early = true;
      break;
    }
  }
  return report;
}

template class CaptionModel<float>;
template class CaptionModel<double>;
template class Trainer<float>;
template class Trainer<double>;
template TrainReport train_model(CaptionModel<float>&, const DatasetSplit&, const Vocabulary&,
                                 const TrainConfig&, const PhraseVocabulary*,
                                 const std::function<bool(std::size_t, double)>&);
template TrainReport train_model(CaptionModel<double>&, const DatasetSplit&, const Vocabulary&,
                                 const TrainConfig&, const PhraseVocabulary*,
                                 const std::function<bool(std::size_t, double)>&);

}  // namespace widgetcap

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

#include "widgetcap/nn/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace widgetcap::nn {

namespace {

std::pair<double, double> fans(const Shape& shape) {
  if (shape.size() == 2) return {double(shape[0]), double(shape[1])};
  if (shape.size() == 4) {
    const double receptive = double(shape[0] * shape[1]);
    return {receptive * double(shape[2]), receptive * double(shape[3])};
  }
  const double n = double(numel(shape));
  return {n, n};
}

}  // namespace

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init, Rng& rng) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  std::vector<T> values(numel(shape));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::kGlorotUniform: {
      const auto [in, out] = fans(shape);
      const double limit = std::sqrt(6.0 / (in + out));
      for (auto& v : values) v = static_cast<T>(uniform_real(rng, -limit, limit));
      break;
    }
    case Init::kUniform005:
      for (auto& v : values) v = static_cast<T>(uniform_real(rng, -0.05, 0.05));
      break;
    case Init::kNormal002:
      for (auto& v : values) v = static_cast<T>(0.02 * standard_normal(rng));
      break;
  }
  auto tensor = Tensor<T>::from(std::move(shape), std::move(values), true);
  entries_.push_back({name, tensor, true});
  return tensor;
}

template <typename T>
void ParameterStore<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate buffer name: " + name);
  entries_.push_back({name, std::move(tensor), false});
}

template <typename T>
std::vector<Tensor<T>> ParameterStore<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

template <typename T>
Tensor<T> ParameterStore<T>::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_)
    if (e.trainable) e.tensor.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.size();
  return n;
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                  std::size_t out, Rng& rng, bool with_bias) {
  weight = store.create(name + ".weight", {in, out}, Init::kGlorotUniform, rng);
  if (with_bias) bias = store.create(name + ".bias", {out}, Init::kZeros, rng);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t width,
                        Rng& rng) {
  gain = store.create(name + ".gain", {width}, Init::kOnes, rng);
  bias = store.create(name + ".bias", {width}, Init::kZeros, rng);
}

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return x;
  if (ctx.rng == nullptr) throw std::logic_error("dropout in training mode needs an rng");
  return dropout(x, ctx.dropout, *ctx.rng);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store, const std::string& name,
                                          std::size_t width, std::size_t heads_, Rng& rng)
    : heads(heads_) {
  if (heads == 0 || width % heads != 0)
    throw std::invalid_argument("attention width " + std::to_string(width) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  q = Linear<T>(store, name + ".query", width, width, rng);
  k = Linear<T>(store, name + ".key", width, width, rng);
  v = Linear<T>(store, name + ".value", width, width, rng);
  out = Linear<T>(store, name + ".output", width, width, rng);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& x, bool causal,
                                            std::span<const std::size_t> key_lengths,
                                            const ForwardContext& ctx) const {
  if (x.rank() != 3) throw ShapeError("attention expects (B, T, D), got " + shape_string(x.shape()));
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  const std::size_t dh = d / heads;
  static constexpr std::array<std::size_t, 4> kSplit{0, 2, 1, 3};

  auto split = [&](const Tensor<T>& y) {
    return reshape(permute(reshape(y, {b, t, heads, dh}), std::span(kSplit)), {b * heads, t, dh});
  };
  auto qh = split(q(x));
  auto kh = split(k(x));
  auto vh = split(v(x));

  std::vector<std::size_t> lengths;
  if (!key_lengths.empty()) {
    if (key_lengths.size() != b) throw ShapeError("attention: key_lengths size != batch");
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t h = 0; h < heads; ++h) lengths.push_back(key_lengths[i]);
  }
  auto scores = scale(matmul(qh, kh, false, true), T(1) / std::sqrt(static_cast<T>(dh)));
  auto weights = apply_dropout(masked_softmax(scores, causal, lengths), ctx);
  auto context = matmul(weights, vh, false, false, Summation::kOrderIndependent);
  auto merged =
      reshape(permute(reshape(context, {b, heads, t, dh}), std::span(kSplit)), {b, t, d});
  return out(merged);
}

template <typename T>
FeedForward<T>::FeedForward(ParameterStore<T>& store, const std::string& name,
                            std::size_t width, std::size_t hidden, Rng& rng) {
  inner = Linear<T>(store, name + ".inner", width, hidden, rng);
  outer = Linear<T>(store, name + ".outer", hidden, width, rng);
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x, const ForwardContext& ctx) const {
  return outer(apply_dropout(relu(inner(x)), ctx));
}

template <typename T>
EncoderLayer<T>::EncoderLayer(ParameterStore<T>& store, const std::string& name,
                              std::size_t width, std::size_t heads, std::size_t ffn_width,
                              Rng& rng) {
  norm1 = LayerNorm<T>(store, name + ".norm1", width, rng);
  attention = MultiHeadAttention<T>(store, name + ".attention", width, heads, rng);
  norm2 = LayerNorm<T>(store, name + ".norm2", width, rng);
  ffn = FeedForward<T>(store, name + ".ffn", width, ffn_width, rng);
}

template <typename T>
Tensor<T> EncoderLayer<T>::operator()(const Tensor<T>& x, std::span<const std::size_t> lengths,
                                      const ForwardContext& ctx) const {
  auto a = add(x, apply_dropout(attention(norm1(x), false, lengths, ctx), ctx));
  return add(a, apply_dropout(ffn(norm2(a), ctx), ctx));
}

template <typename T>
DecoderLayer<T>::DecoderLayer(ParameterStore<T>& store, const std::string& name,
                              std::size_t width, std::size_t heads, std::size_t ffn_width,
                              Rng& rng) {
  norm1 = LayerNorm<T>(store, name + ".norm1", width, rng);
  attention = MultiHeadAttention<T>(store, name + ".attention", width, heads, rng);
  norm2 = LayerNorm<T>(store, name + ".norm2", width, rng);
  ffn = FeedForward<T>(store, name + ".ffn", width, ffn_width, rng);
}

template <typename T>
Tensor<T> DecoderLayer<T>::operator()(const Tensor<T>& x, const Tensor<T>& z,
                                      const ForwardContext& ctx) const {
  auto a = add(x, apply_dropout(attention(norm1(x), true, {}, ctx), ctx));
  auto conditioned = add(a, z);
  return add(conditioned, apply_dropout(ffn(norm2(conditioned), ctx), ctx));
}

template <typename T>
ConvBn<T>::ConvBn(ParameterStore<T>& store, const std::string& name, std::size_t kernel_size,
                  std::size_t in, std::size_t out, std::size_t stride_, Rng& rng,
                  bool transposed_)
    : state(out), stride(stride_), transposed(transposed_) {
  const Shape shape = transposed ? Shape{kernel_size, kernel_size, out, in}
                                 : Shape{kernel_size, kernel_size, in, out};
  kernel = store.create(name + ".kernel", shape, Init::kGlorotUniform, rng);
  gamma = store.create(name + ".gamma", {out}, Init::kOnes, rng);
  beta = store.create(name + ".beta", {out}, Init::kZeros, rng);
  store.add_buffer(name + ".running_mean", state.running_mean);
  store.add_buffer(name + ".running_var", state.running_var);
  store.add_buffer(name + ".updates", state.updates);
}

template <typename T>
Tensor<T> ConvBn<T>::operator()(const Tensor<T>& x, BatchNormMode mode, bool update_running,
                                bool activate) const {
  auto y = transposed ? conv_transpose2d(x, kernel, stride) : conv2d(x, kernel, stride);
  y = batch_norm(y, gamma, beta, state, mode, update_running);
  return activate ? relu(y) : y;
}

template <typename T>
Tensor<T> sinusoid_positions(std::size_t positions, std::size_t width) {
  std::vector<T> values(positions * width);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -double(2 * (i / 2)) / double(width));
      const double angle = double(p) * rate;
      values[p * width + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return Tensor<T>::from({positions, width}, std::move(values));
}

#define WIDGETCAP_INSTANTIATE_LAYERS(T)                                          \
  template class ParameterStore<T>;                                              \
  template struct Linear<T>;                                                     \
  template struct LayerNorm<T>;                                                  \
  template Tensor<T> apply_dropout(const Tensor<T>&, const ForwardContext&);     \
  template struct MultiHeadAttention<T>;                                         \
  template struct FeedForward<T>;                                                \
  template struct EncoderLayer<T>;                                               \
  template struct DecoderLayer<T>;                                               \
  template struct ConvBn<T>;                                                     \
  template Tensor<T> sinusoid_positions<T>(std::size_t, std::size_t);

WIDGETCAP_INSTANTIATE_LAYERS(float)
WIDGETCAP_INSTANTIATE_LAYERS(double)

#undef WIDGETCAP_INSTANTIATE_LAYERS

}  // namespace widgetcap::nn

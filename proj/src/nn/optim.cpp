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

#include "widgetcap/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace widgetcap::nn {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> parameters, AdamConfig config)
    : parameters_(std::move(parameters)), config_(config) {
  for (const auto& p : parameters_) {
    m_.emplace_back(p.size(), T(0));
    v_.emplace_back(p.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(double learning_rate) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, double(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, double(steps_));
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t k = 0; k < parameters_.size(); ++k) {
    auto& p = parameters_[k];
    auto values = p.mutable_values();
    if (values.size() != m_[k].size())
      throw ShapeError("adam: parameter " + std::to_string(k) + " changed shape to " +
                       shape_string(p.shape()));
    const auto grad = p.grad();
    if (!grad.empty() && grad.size() != values.size())
      throw ShapeError("adam: gradient size does not match parameter " + shape_string(p.shape()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : double(grad[i]);
      const double m = b1 * double(m_[k][i]) + (1.0 - b1) * g;
      const double v = b2 * double(v_[k][i]) + (1.0 - b2) * g * g;
      m_[k][i] = static_cast<T>(m);
      v_[k][i] = static_cast<T>(v);
      const double update = learning_rate * (m / c1) / (std::sqrt(v / c2) + config_.epsilon);
      values[i] = static_cast<T>(double(values[i]) - update);
    }
  }
}

double lr_schedule(std::uint64_t step, double base_lr, std::uint64_t warmup_steps,
                   double decay_rate, std::uint64_t decay_steps) {
  if (warmup_steps == 0) throw std::invalid_argument("lr_schedule: warmup_steps must be >= 1");
  if (decay_steps == 0) throw std::invalid_argument("lr_schedule: decay_steps must be >= 1");
  if (step <= warmup_steps) return base_lr * double(step) / double(warmup_steps);
  return base_lr * std::pow(decay_rate, double(step - warmup_steps) / double(decay_steps));
}

template <typename T>
double clip_grad_norm(const std::vector<Tensor<T>>& parameters, double max_norm) {
  double total = 0.0;
  for (const auto& p : parameters)
    for (T g : p.grad()) total += double(g) * double(g);
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto p : parameters)
      if (p.has_grad())
        for (auto& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

template <typename T>
bool all_finite(const std::vector<Tensor<T>>& parameters) {
  for (const auto& p : parameters) {
    for (T v : p.values())
      if (!std::isfinite(v)) return false;
    for (T g : p.grad())
      if (!std::isfinite(g)) return false;
  }
  return true;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(const std::vector<Tensor<float>>&, double);
template double clip_grad_norm(const std::vector<Tensor<double>>&, double);
template bool all_finite(const std::vector<Tensor<float>>&);
template bool all_finite(const std::vector<Tensor<double>>&);

}  // namespace widgetcap::nn

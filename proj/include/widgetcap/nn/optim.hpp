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
#include <vector>

#include "widgetcap/nn/tensor.hpp"

namespace widgetcap::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

/// Adam with bias correction. Moment buffers are created to match each
/// parameter; a parameter without an accumulated gradient is stepped with a
/// zero gradient.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> parameters, AdamConfig config = {});

  void step(double learning_rate);
  std::uint64_t steps() const { return steps_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<T>> parameters_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t steps_ = 0;
};

/// Linear warmup to base_lr at step == warmup_steps, then
/// base_lr * decay_rate^((step - warmup_steps) / decay_steps).
/// Throws std::invalid_argument when warmup_steps or decay_steps is 0.
double lr_schedule(std::uint64_t step, double base_lr, std::uint64_t warmup_steps,
                   double decay_rate, std::uint64_t decay_steps);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Tensor<T>>& parameters, double max_norm);

/// True when every value and gradient is finite.
template <typename T>
bool all_finite(const std::vector<Tensor<T>>& parameters);

}  // namespace widgetcap::nn

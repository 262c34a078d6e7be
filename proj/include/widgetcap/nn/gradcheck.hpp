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
#include <functional>
#include <string>
#include <vector>

#include "widgetcap/nn/tensor.hpp"

namespace widgetcap::nn {

struct GradCheckInput {
  std::string name;
  Tensor<double> tensor;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  /// Differences below this are treated as agreement (both sides ~0).
  double absolute_floor = 1e-7;
  /// Coordinates sampled per input; 0 checks every coordinate.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Also forms forward and backward differences and scores whichever of the
  /// three is closest to the analytic value. For piecewise-smooth functions
  /// (dense ReLUs) a kink inside the step spoils at most one side.
  bool kink_tolerant = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_input;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

/// Compares the tape gradient of a scalar function against central
/// differences. The function must be deterministic and must not mutate state
/// between calls. Throws NumericalError on a non-finite value.
/// `analytic_override`, when set, replaces the tape gradient (negative tests).
GradCheckReport grad_check(
    const std::function<Tensor<double>()>& function, std::vector<GradCheckInput> inputs,
    const GradCheckOptions& options = {},
    const std::function<void(std::vector<std::vector<double>>&)>& analytic_override = {});

}  // namespace widgetcap::nn

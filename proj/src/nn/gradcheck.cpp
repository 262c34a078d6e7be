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

#include "widgetcap/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "widgetcap/random.hpp"

namespace widgetcap::nn {

namespace {

double evaluate(const std::function<Tensor<double>()>& function) {
  NoGradGuard guard;
  const double v = function().item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(
    const std::function<Tensor<double>()>& function, std::vector<GradCheckInput> inputs,
    const GradCheckOptions& options,
    const std::function<void(std::vector<std::vector<double>>&)>& analytic_override) {
  for (auto& in : inputs) {
    in.tensor.set_requires_grad(true);
    in.tensor.zero_grad();
  }
  auto loss = function();
  if (!std::isfinite(loss.item())) throw NumericalError("grad_check: loss is not finite");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& in : inputs) {
    const auto g = in.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    for (double v : analytic.back())
      if (!std::isfinite(v))
        throw NumericalError("grad_check: analytic gradient of " + in.name + " is not finite");
  }
  if (analytic_override) analytic_override(analytic);

  const double center = options.kink_tolerant ? evaluate(function) : 0.0;
  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& tensor = inputs[k].tensor;
    std::vector<std::size_t> coords(tensor.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
      shuffle(std::span(coords), rng);
      coords.resize(options.max_coordinates);
      std::sort(coords.begin(), coords.end());
    }
    auto values = tensor.mutable_values();
    for (auto i : coords) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = evaluate(function);
      values[i] = original - options.step;
      const double minus = evaluate(function);
      values[i] = original;

      const double a = analytic[k][i];
      double numeric = (plus - minus) / (2.0 * options.step);
      if (options.kink_tolerant) {
        for (double side : {(plus - center) / options.step, (center - minus) / options.step})
          if (std::abs(a - side) < std::abs(a - numeric)) numeric = side;
      }
      const double diff = std::abs(a - numeric);
      ++report.coordinates;
      if (diff < options.absolute_floor) continue;
      const double rel = diff / std::max(std::abs(a), std::abs(numeric));
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_input = inputs[k].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace widgetcap::nn

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

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "widgetcap/nn/layers.hpp"

namespace widgetcap::nn {

using Manifest = std::map<std::string, std::string>;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  Manifest manifest;
  std::vector<NamedArray> arrays;
};

/// Raised when a checkpoint does not fit a model; what() lists every
/// differing entry.
class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `path` (named little-endian float32 arrays) and `path` + ".manifest"
/// (key=value lines, sorted by key).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store,
                     const Manifest& manifest);

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies arrays into the store by name. Every store entry must be present
/// with the same shape and nothing extra may appear.
template <typename T>
void load_into(const Checkpoint& checkpoint, ParameterStore<T>& store);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace widgetcap::nn

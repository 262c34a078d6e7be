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

#include "widgetcap/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace widgetcap::nn {

namespace {

constexpr char kMagic[8] = {'W', 'C', 'A', 'P', 'C', 'K', 'P', '1'};

template <typename U>
void put(std::ostream& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw std::runtime_error(path.string() + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return path.string() + ".manifest";
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : manifest) out << k << '=' << v << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Manifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ": malformed manifest line '" + line + "'");
    manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return manifest;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store,
                     const Manifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put<std::uint64_t>(out, d);
    for (T v : e.tensor.values()) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
  write_manifest(manifest_path(path), manifest);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  Checkpoint ckpt;
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name.resize(get<std::uint32_t>(in, path));
    if (!in.read(a.name.data(), static_cast<std::streamsize>(a.name.size())))
      throw std::runtime_error(path.string() + ": truncated checkpoint");
    const auto rank = get<std::uint32_t>(in, path);
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(get<std::uint64_t>(in, path));
    a.values.resize(numel(a.shape));
    for (auto& v : a.values) v = get<float>(in, path);
    ckpt.arrays.push_back(std::move(a));
  }
  if (std::filesystem::exists(manifest_path(path))) ckpt.manifest = read_manifest(manifest_path(path));
  return ckpt;
}

template <typename T>
void load_into(const Checkpoint& checkpoint, ParameterStore<T>& store) {
  std::ostringstream diff;
  std::set<std::string> seen;
  for (const auto& a : checkpoint.arrays) {
    seen.insert(a.name);
    if (!store.contains(a.name)) {
      diff << "  unexpected array " << a.name << ' ' << shape_string(a.shape) << '\n';
      continue;
    }
    const auto t = store.get(a.name);
    if (t.shape() != a.shape)
      diff << "  " << a.name << ": checkpoint " << shape_string(a.shape) << " vs model "
           << shape_string(t.shape()) << '\n';
  }
  for (const auto& e : store.entries())
    if (!seen.count(e.name)) diff << "  missing array " << e.name << '\n';
  if (!diff.str().empty())
    throw CheckpointMismatch("checkpoint does not match the model:\n" + diff.str());
  for (const auto& a : checkpoint.arrays) {
    auto t = store.get(a.name);
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a.values[i]);
  }
}

template void save_checkpoint(const std::filesystem::path&, const ParameterStore<float>&,
                              const Manifest&);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<double>&,
                              const Manifest&);
template void load_into(const Checkpoint&, ParameterStore<float>&);
template void load_into(const Checkpoint&, ParameterStore<double>&);

}  // namespace widgetcap::nn

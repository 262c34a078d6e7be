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

#include "widgetcap/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace widgetcap {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size())
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Shortest form that reads back exactly.
  for (int digits = 1; digits <= 17; ++digits) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", digits, v);
    if (std::stod(shorter) == v) return shorter;
  }
  return buf;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  if (value.empty()) return {};
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  pretrain.seed = value;
}

void RunConfig::apply(const std::map<std::string, std::string>& settings,
                      const std::filesystem::path& base) {
  for (const auto& [key, value] : settings) {
    const auto size = [&] { return parse_size(key, value); };
    const auto real = [&] { return parse_real(key, value); };
    if (key == "corpus") corpus = resolve(base, value);
    else if (key == "captions") captions = resolve(base, value);
    else if (key == "splits") splits = resolve(base, value);
    else if (key == "embeddings") embeddings = resolve(base, value);
    else if (key == "verbs") verbs = resolve(base, value);
    else if (key == "nouns") nouns = resolve(base, value);
    else if (key == "registry") registry = resolve(base, value);
    else if (key == "model") {
      const auto kind = parse_model_kind(value);
      if (!kind) throw ConfigError("model: unknown configuration '" + value + "'");
      model.kind = *kind;
    } else if (key == "vocab_size") vocab_size = size();
    else if (key == "phrase_count") phrase_count = size();
    else if (key == "word_dim") model.word_dim = size();
    else if (key == "hidden") model.hidden = size();
    else if (key == "encoder_layers") model.encoder_layers = size();
    else if (key == "decoder_layers") model.decoder_layers = size();
    else if (key == "heads") model.heads = size();
    else if (key == "ffn") model.ffn = size();
    else if (key == "dropout") model.dropout = real();
    else if (key == "local_width") model.local_width = size();
    else if (key == "max_decode_length") model.max_decode_length = size();
    else if (key == "max_elements") model.max_elements = size();
    else if (key == "preorder_cap") model.preorder_cap = size();
    else if (key == "depth_cap") model.depth_cap = size();
    else if (key == "max_text_tokens") max_text_tokens = size();
    else if (key == "steps") train.steps = size();
    else if (key == "batch_screens") train.batch_screens = size();
    else if (key == "learning_rate") train.learning_rate = real();
    else if (key == "warmup_steps") train.warmup_steps = size();
    else if (key == "decay_rate") train.decay_rate = real();
    else if (key == "decay_steps") train.decay_steps = size();
    else if (key == "clip_norm") train.clip_norm = real();
    else if (key == "pretrain_steps") pretrain.steps = size();
    else if (key == "pretrain_batch") pretrain.batch_size = size();
    else if (key == "pretrain_noise") pretrain.noise_stddev = real();
    else if (key == "pretrain_learning_rate") pretrain.learning_rate = real();
    else if (key == "split_train") ratios[0] = real();
    else if (key == "split_validation") ratios[1] = real();
    else if (key == "split_test") ratios[2] = real();
    else if (key == "seed") set_seed(size());
    else throw ConfigError("unknown configuration key '" + key + "'");
  }
  if (model.hidden == 0 || model.heads == 0 || model.hidden % model.heads != 0)
    throw ConfigError("hidden must be a positive multiple of heads");
  if (model.max_decode_length < 2) throw ConfigError("max_decode_length must be at least 2");
  if (vocab_size < Vocabulary::kSpecialCount + 1)
    throw ConfigError("vocab_size must exceed the number of special tokens");
  if (train.warmup_steps == 0 || train.decay_steps == 0)
    throw ConfigError("warmup_steps and decay_steps must be positive");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  return {
      {"corpus", corpus.string()},
      {"captions", captions.string()},
      {"splits", splits.string()},
      {"embeddings", embeddings.string()},
      {"verbs", verbs.string()},
      {"nouns", nouns.string()},
      {"registry", registry.string()},
      {"model", std::string(to_string(model.kind))},
      {"vocab_size", std::to_string(vocab_size)},
      {"phrase_count", std::to_string(phrase_count)},
      {"word_dim", std::to_string(model.word_dim)},
      {"hidden", std::to_string(model.hidden)},
      {"encoder_layers", std::to_string(model.encoder_layers)},
      {"decoder_layers", std::to_string(model.decoder_layers)},
      {"heads", std::to_string(model.heads)},
      {"ffn", std::to_string(model.ffn)},
      {"dropout", format_real(model.dropout)},
      {"local_width", std::to_string(model.local_width)},
      {"max_decode_length", std::to_string(model.max_decode_length)},
      {"max_elements", std::to_string(model.max_elements)},
      {"preorder_cap", std::to_string(model.preorder_cap)},
      {"depth_cap", std::to_string(model.depth_cap)},
      {"max_text_tokens", std::to_string(max_text_tokens)},
      {"steps", std::to_string(train.steps)},
      {"batch_screens", std::to_string(train.batch_screens)},
      {"learning_rate", format_real(train.learning_rate)},
      {"warmup_steps", std::to_string(train.warmup_steps)},
      {"decay_rate", format_real(train.decay_rate)},
      {"decay_steps", std::to_string(train.decay_steps)},
      {"clip_norm", format_real(train.clip_norm)},
      {"pretrain_steps", std::to_string(pretrain.steps)},
      {"pretrain_batch", std::to_string(pretrain.batch_size)},
      {"pretrain_noise", format_real(pretrain.noise_stddev)},
      {"pretrain_learning_rate", format_real(pretrain.learning_rate)},
      {"split_train", format_real(ratios[0])},
      {"split_validation", format_real(ratios[1])},
      {"split_test", format_real(ratios[2])},
      {"seed", std::to_string(seed)},
  };
}

std::map<std::string, std::string> parse_config_text(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    if (!out.emplace(key, value).second)
      throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  RunConfig cfg;
  try {
    cfg.apply(parse_config_text(in), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

std::optional<std::filesystem::path> find_screenshot(const std::filesystem::path& dir,
                                                     const std::string& id) {
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    auto p = dir / (id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

DatasetSplit load_corpus(const std::filesystem::path& dir, std::span<const CaptionRecord> records,
                         const WidgetRegistry& registry, const AssemblyOptions& options,
                         CorpusReport& report) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<CaptionRecord>> by_screen;
  for (const auto& r : records) {
    auto [it, fresh] = by_screen.try_emplace(r.screen_id);
    if (fresh) order.push_back(r.screen_id);
    it->second.push_back(r);
  }

  DatasetSplit split;
  for (const auto& id : order) {
    const auto& recs = by_screen.at(id);
    ScreenMeta meta;
    meta.screen_id = id;
    for (const auto& r : recs)
      if (!r.app_id.empty()) {
        meta.app_id = r.app_id;
        break;
      }
    UITree tree;
    try {
      tree = load_view_hierarchy(dir / (id + ".json"), meta);
    } catch (const std::exception& e) {
      report.errors.push_back(e.what());
      continue;
    }
    const auto shot_path = find_screenshot(dir, id);
    if (!shot_path) {
      ++report.missing_screenshots;
      report.warnings.push_back(id + ": screenshot missing, screen skipped");
      continue;
    }
    RgbImage shot;
    try {
      shot = load_image(*shot_path);
    } catch (const std::exception& e) {
      report.errors.push_back(shot_path->string() + ": " + e.what());
      continue;
    }
    const auto stats = hierarchy_stats(tree);
    report.hierarchy_sizes.push_back(stats.size);
    report.hierarchy_depths.push_back(stats.depth);
    const auto captionable = collect_captionable_elements(tree);
    if (!captionable.empty()) {
      const auto covered = std::count_if(captionable.begin(), captionable.end(),
                                         [](const auto& c) { return !is_caption_missing(*c.node); });
      report.caption_coverage.push_back(double(covered) / double(captionable.size()));
    }
    AssemblyReport assembly;
    append_screen(split, ScreenInput{std::move(tree), &shot}, recs, registry, options, assembly);
    report.skipped_records += assembly.skipped_records;
    for (auto& w : assembly.warnings) report.warnings.push_back(std::move(w));
    ++report.screens;
  }
  return split;
}

std::vector<CaptionRecord> split_records(const DatasetSplit& split) {
  std::vector<CaptionRecord> out;
  out.reserve(split.examples.size());
  for (const auto& e : split.examples)
    out.push_back({e.app_id, e.screen_id, e.locator, e.references});
  return out;
}

double median(std::vector<std::size_t> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? double(values[n / 2]) : (double(values[n / 2 - 1]) + double(values[n / 2])) / 2.0;
}

DataDir DataDir::open(const std::filesystem::path& dir) {
  DataDir d;
  d.dir = dir;
  d.manifest = nn::read_manifest(dir / "data.manifest");
  return d;
}

std::filesystem::path DataDir::split_file(SplitName name) const {
  return dir / (std::string(to_string(name)) + ".tsv");
}

std::filesystem::path DataDir::corpus() const {
  const auto it = manifest.find("corpus");
  if (it == manifest.end()) throw std::runtime_error(dir.string() + ": data.manifest lacks corpus");
  return it->second;
}

Vocabulary DataDir::vocabulary() const { return Vocabulary::load(dir / "vocab.txt"); }
PhraseVocabulary DataDir::phrases() const { return PhraseVocabulary::load(dir / "phrases.txt"); }

std::vector<CaptionRecord> DataDir::records(SplitName name) const {
  return read_caption_file(split_file(name));
}

DatasetSplit DataDir::load(SplitName name, const WidgetRegistry& registry,
                           CorpusReport& report) const {
  AssemblyOptions options;
  if (auto it = manifest.find("max_text_tokens"); it != manifest.end())
    options.max_text_tokens = parse_size("max_text_tokens", it->second);
  if (auto it = manifest.find("max_elements"); it != manifest.end())
    options.max_elements = parse_size("max_elements", it->second);
  const auto recs = records(name);
  auto split = load_corpus(corpus(), recs, registry, options, report);
  split.name = name;
  return split;
}

CaptionCounts DataDir::caption_counts() const {
  std::vector<std::vector<std::string>> sets;
  for (auto name : {SplitName::kTraining, SplitName::kValidation, SplitName::kTest})
    for (auto& r : records(name)) sets.push_back(std::move(r.captions));
  return count_captions(sets);
}

// ---------------------------------------------------------------------------
// Models

namespace {

constexpr const char* kCheckpointName = "model.ckpt";

std::filesystem::path manifest_path(const std::filesystem::path& dir) {
  return dir / (std::string(kCheckpointName) + ".manifest");
}

}  // namespace

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle,
                 const nn::Manifest& extra) {
  std::filesystem::create_directories(dir);
  nn::Manifest manifest = bundle.config.to_manifest();
  for (const auto& [k, v] : extra) manifest[k] = v;
  if (bundle.config.kind == ModelKind::kTemplate)
    nn::write_manifest(manifest_path(dir), manifest);
  else
    nn::save_checkpoint(dir / kCheckpointName, bundle.net->store(), manifest);
  bundle.vocab.save(dir / "vocab.txt");
  bundle.phrases.save(dir / "phrases.txt");
}

std::vector<std::string> manifest_diff(const nn::Manifest& expected, const nn::Manifest& found) {
  std::vector<std::string> out;
  for (const auto& [k, v] : expected) {
    const auto it = found.find(k);
    if (it == found.end())
      out.push_back(k + ": expected " + v + ", missing");
    else if (it->second != v)
      out.push_back(k + ": expected " + v + ", found " + it->second);
  }
  return out;
}

ModelBundle load_bundle(const std::filesystem::path& dir, const DatasetSplit* training,
                        const std::optional<ModelConfig>& expected) {
  const auto manifest = nn::read_manifest(manifest_path(dir));
  ModelBundle bundle;
  bundle.config = ModelConfig::from_manifest(manifest);
  if (expected) {
    auto want = expected->to_manifest();
    // Sizes follow the stored vocabularies; a template has no network shape.
    want.erase("vocab_size");
    want.erase("phrase_count");
    if (expected->kind == ModelKind::kTemplate || bundle.config.kind == ModelKind::kTemplate)
      want = {{"model", want.at("model")}};
    const auto diff = manifest_diff(want, manifest);
    if (!diff.empty()) {
      std::string msg = "model in " + dir.string() + " does not match the configuration:";
      for (const auto& d : diff) msg += "\n  " + d;
      throw nn::CheckpointMismatch(msg);
    }
  }
  bundle.vocab = Vocabulary::load(dir / "vocab.txt");
  bundle.phrases = PhraseVocabulary::load(dir / "phrases.txt");
  if (bundle.config.kind == ModelKind::kTemplate) {
    if (training == nullptr)
      throw std::invalid_argument("template model needs the training split to rebuild its index");
    bundle.templates = TemplateIndex::build(*training);
    return bundle;
  }
  bundle.net = std::make_unique<CaptionModel<float>>(bundle.config, 0);
  nn::load_into(nn::read_checkpoint(dir / kCheckpointName), bundle.net->store());
  return bundle;
}

std::vector<Prediction> predict_examples(const ModelBundle& bundle, const DatasetSplit& split,
                                         std::span<const std::size_t> examples) {
  std::vector<Prediction> out(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = split.examples.at(examples[i]);
    out[i].screen_id = ex.screen_id;
    out[i].locator = ex.locator;
  }
  if (bundle.config.kind == ModelKind::kTemplate) {
    if (!bundle.templates) throw std::logic_error("template bundle without an index");
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& image = split.examples[examples[i]].image;
      const bool blank = std::all_of(image.pixels.begin(), image.pixels.end(),
                                     [](float v) { return v == 0.0f; });
      if (blank) continue;  // nothing to compare against
      out[i].caption = join_tokens(tokenize(*bundle.templates->match(image).caption));
    }
    return out;
  }

  // Group by screen, keeping the first-appearance order of screens.
  std::vector<std::vector<std::size_t>> groups;  // positions into examples
  std::unordered_map<std::size_t, std::size_t> group_of;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto s = split.examples[examples[i]].screen_index;
    auto [it, fresh] = group_of.try_emplace(s, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  Rng unused(0);
  const auto& vocab = bundle.vocab;
  for (const auto& g : groups) {
    std::vector<std::size_t> idx;
    for (auto pos : g) idx.push_back(examples[pos]);
    const auto batch =
        make_screen_batch(split, idx, vocab, bundle.config.max_decode_length, unused);
    if (bundle.config.kind == ModelKind::kPlcClassification) {
      const auto ids = bundle.net->classify_screens(std::span(&batch, 1), vocab).front();
      for (std::size_t k = 0; k < g.size(); ++k) out[g[k]].caption = bundle.phrases.phrase(ids[k]);
    } else {
      const auto decoded = bundle.net->decode_screens(std::span(&batch, 1), vocab).front();
      for (std::size_t k = 0; k < g.size(); ++k) {
        const auto words = vocab.decode(decoded[k].tokens);
        out[g[k]].caption = join_tokens(words);
        out[g[k]].probabilities = decoded[k].probabilities;
      }
    }
  }
  return out;
}

void write_predictions(std::ostream& out, std::span<const Prediction> predictions) {
  out << "screen_id\tlocator\tcaption\tprobabilities\n";
  char buf[32];
  for (const auto& p : predictions) {
    out << p.screen_id << '\t' << p.locator << '\t' << p.caption << '\t';
    for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.6f", p.probabilities[i]);
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
}

Evaluation evaluate_predictions(const DatasetSplit& split, std::span<const std::size_t> examples,
                                std::span<const Prediction> predictions) {
  if (examples.empty()) throw std::invalid_argument("nothing to evaluate: the subset is empty");
  if (examples.size() != predictions.size())
    throw std::invalid_argument("one prediction per example required");
  std::vector<EvalInstance> instances;
  Evaluation out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = split.examples.at(examples[i]);
    instances.push_back(make_instance(predictions[i].caption, ex.references));
    out.labels.push_back({ex.screen_id, ex.locator, predictions[i].caption});
  }
  out.metrics = evaluate_instances(instances);
  return out;
}

Evaluation evaluate_model(const ModelBundle& bundle, const DatasetSplit& split,
                          std::span<const std::size_t> examples) {
  if (examples.empty()) throw std::invalid_argument("nothing to evaluate: the subset is empty");
  const auto predictions = predict_examples(bundle, split, examples);
  return evaluate_predictions(split, examples, predictions);
}

DatasetSplit single_screen_split(const UITree& tree, const RgbImage& screenshot,
                                 const WidgetRegistry& registry, std::size_t max_text_tokens,
                                 std::size_t max_elements) {
  std::vector<CaptionRecord> records;
  for (const auto& c : collect_captionable_elements(tree))
    if (is_caption_missing(*c.node))
      records.push_back({tree.app_id, tree.screen_id, c.position.preorder, {"", ""}});
  DatasetSplit split;
  if (records.empty()) return split;
  AssemblyOptions options;
  options.max_text_tokens = max_text_tokens;
  options.max_elements = max_elements;
  AssemblyReport report;
  append_screen(split, ScreenInput{tree, &screenshot}, records, registry, options, report);
  return split;
}

}  // namespace widgetcap

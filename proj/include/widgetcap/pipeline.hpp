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
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "widgetcap/baselines.hpp"
#include "widgetcap/capdecoder.hpp"
#include "widgetcap/capmetrics.hpp"

namespace widgetcap {

/// Bad configuration file or value; the message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs besides its own flags.
struct RunConfig {
  // Paths. Relative paths resolve against the config file's directory.
  std::filesystem::path corpus;      ///< <screen_id>.json and .png/.jpg files
  std::filesystem::path captions;    ///< caption file (.tsv or .csv)
  std::filesystem::path splits;      ///< optional fixed split assignment
  std::filesystem::path embeddings;  ///< optional word vectors
  std::filesystem::path verbs;
  std::filesystem::path nouns;
  std::filesystem::path registry;    ///< optional widget class table

  ModelConfig model;
  TrainConfig train;
  PretrainConfig pretrain;
  std::size_t vocab_size = 10000;
  std::size_t phrase_count = 10000;
  SplitRatios ratios{0.85, 0.075, 0.075};
  std::size_t max_text_tokens = 10;
  std::uint64_t seed = 0;

  /// Applies "key = value" settings; unknown keys and bad values throw.
  void apply(const std::map<std::string, std::string>& settings,
             const std::filesystem::path& base = {});
  std::map<std::string, std::string> to_map() const;
  /// Propagates seed into the training and pretraining configs.
  void set_seed(std::uint64_t value);
};

/// Flat "key = value" lines; '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_config_text(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Corpus

struct CorpusReport {
  std::size_t screens = 0;
  std::size_t missing_screenshots = 0;
  std::size_t skipped_records = 0;
  std::vector<std::string> errors;    ///< unreadable or malformed files
  std::vector<std::string> warnings;
  std::vector<std::size_t> hierarchy_sizes;
  std::vector<std::size_t> hierarchy_depths;
  /// Per screen: captionable elements that carry their own caption / all.
  std::vector<double> caption_coverage;
};

/// Screens in order of first appearance in records. A screen whose
/// screenshot is missing is skipped with a warning.
DatasetSplit load_corpus(const std::filesystem::path& dir, std::span<const CaptionRecord> records,
                         const WidgetRegistry& registry, const AssemblyOptions& options,
                         CorpusReport& report);

/// Records for the examples of a split (all references, in example order).
std::vector<CaptionRecord> split_records(const DatasetSplit& split);

double median(std::vector<std::size_t> values);

/// Preprocessed data directory: <split>.tsv caption records, vocab.txt,
/// phrases.txt, stats.tsv and data.manifest (corpus path and settings).
struct DataDir {
  std::filesystem::path dir;
  nn::Manifest manifest;

  static DataDir open(const std::filesystem::path& dir);
  std::filesystem::path split_file(SplitName name) const;
  std::filesystem::path corpus() const;
  Vocabulary vocabulary() const;
  PhraseVocabulary phrases() const;
  std::vector<CaptionRecord> records(SplitName name) const;
  DatasetSplit load(SplitName name, const WidgetRegistry& registry, CorpusReport& report) const;
  /// Caption counts over the references of all three splits.
  CaptionCounts caption_counts() const;
};

// ---------------------------------------------------------------------------
// Models

/// A trained model with its vocabularies, or the template index.
struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;
  PhraseVocabulary phrases;
  std::unique_ptr<CaptionModel<float>> net;
  std::optional<TemplateIndex> templates;
};

/// Model directory layout: model.ckpt (+ .manifest), vocab.txt, phrases.txt.
void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle,
                 const nn::Manifest& extra = {});

/// Loads a model directory. A template bundle rebuilds its index from
/// `training`, which must then be non-null. When `expected` is given, any
/// configuration difference from the saved manifest throws
/// nn::CheckpointMismatch listing each differing key.
ModelBundle load_bundle(const std::filesystem::path& dir, const DatasetSplit* training,
                        const std::optional<ModelConfig>& expected = std::nullopt);

/// Lists "key: expected X, found Y" for differing manifest keys.
std::vector<std::string> manifest_diff(const nn::Manifest& expected, const nn::Manifest& found);

struct Prediction {
  std::string screen_id;
  std::size_t locator = 0;
  std::string caption;
  std::vector<double> probabilities;  ///< per decoded token; empty for template/classification
};

/// Captions for the given examples, in the given order.
std::vector<Prediction> predict_examples(const ModelBundle& bundle, const DatasetSplit& split,
                                         std::span<const std::size_t> examples);

/// screen_id, locator, caption, probabilities (space-separated) with a header.
void write_predictions(std::ostream& out, std::span<const Prediction> predictions);

struct Evaluation {
  MetricsReport metrics;
  std::vector<InstanceLabel> labels;
};

/// Scores predictions against each example's full reference set.
Evaluation evaluate_predictions(const DatasetSplit& split, std::span<const std::size_t> examples,
                                std::span<const Prediction> predictions);
/// Throws std::invalid_argument on an empty example list.
Evaluation evaluate_model(const ModelBundle& bundle, const DatasetSplit& split,
                          std::span<const std::size_t> examples);

/// Caption-missing captionable elements of one screen, as a split whose
/// examples carry placeholder references.
DatasetSplit single_screen_split(const UITree& tree, const RgbImage& screenshot,
                                 const WidgetRegistry& registry, std::size_t max_text_tokens,
                                 std::size_t max_elements);

}  // namespace widgetcap

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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "widgetcap/image.hpp"
#include "widgetcap/random.hpp"
#include "widgetcap/uitree.hpp"

namespace widgetcap {

// ---------------------------------------------------------------------------
// Tokens and vocabulary

/// Lowercases, splits on whitespace, strips leading/trailing ASCII punctuation
/// from each token, and drops tokens that end up empty.
std::vector<std::string> tokenize(std::string_view caption);

std::string join_tokens(std::span<const std::string> tokens);

using TokenId = std::int32_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kSpecialCount = 4;

  Vocabulary();

  /// The (size - 4) most frequent tokens, descending frequency, ties broken
  /// lexicographically. Throws on an empty corpus or size < 4.
  static Vocabulary build(std::span<const std::vector<std::string>> tokenized_captions,
                          std::size_t size);
  static Vocabulary build_from_captions(std::span<const std::string> captions,
                                        std::size_t size);
  /// Non-special tokens in id order (ids start at kSpecialCount).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  static bool is_special(TokenId id) { return id >= 0 && id < TokenId(kSpecialCount); }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  /// Fraction of token occurrences in the corpus that map to a non-unk id.
  double coverage(std::span<const std::vector<std::string>> tokenized_captions) const;

  /// One token per line, in id order, specials included.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// ---------------------------------------------------------------------------
// Examples

/// Per-element structural inputs shared by the encoders.
struct ElementFeatures {
  std::vector<std::string> text_tokens;  ///< empty for caption-missing elements
  WidgetType type = WidgetType::kView;
  bool clickable = false;
  std::array<int, 4> bounds{};  ///< normalized to [0, 99]
  TraversalPosition position;
  bool zero_area = false;
};

/// All context elements on one screen.
struct ScreenContext {
  std::string app_id;
  std::string screen_id;
  std::vector<ElementFeatures> elements;
};

struct WidgetExample {
  std::string app_id;
  std::string screen_id;
  std::size_t element_ref = 0;  ///< index into the screen's captionable elements
  std::size_t locator = 0;      ///< preorder index in the view hierarchy
  std::vector<std::string> references;
  ElementFeatures features;
  GrayImage image;
  std::size_t screen_index = 0;   ///< into DatasetSplit::screens
  std::size_t context_index = 0;  ///< into ScreenContext::elements
};

enum class SplitName { kTraining, kValidation, kTest };
std::string_view to_string(SplitName name);
std::optional<SplitName> parse_split_name(std::string_view name);

struct DatasetSplit {
  SplitName name = SplitName::kTraining;
  std::vector<ScreenContext> screens;
  std::vector<WidgetExample> examples;
};

/// Uniform pick among the example's references.
const std::string& sample_reference(const WidgetExample& example, Rng& rng);

// ---------------------------------------------------------------------------
// Caption records and files

/// One captioned element as it appears in caption/split files.
struct CaptionRecord {
  std::string app_id;  ///< may be empty in raw caption files
  std::string screen_id;
  std::size_t locator = 0;  ///< preorder index of the element
  std::vector<std::string> captions;
  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

/// Tab-separated with a header line: [app_id\t]screen_id\tlocator\tcaptions,
/// captions joined with '|'. Files ending in .csv are read comma-separated with
/// double-quote escaping. Throws std::runtime_error naming the bad line.
std::vector<CaptionRecord> read_caption_file(const std::filesystem::path& path);
void write_caption_file(const std::filesystem::path& path,
                        std::span<const CaptionRecord> records);

/// Screen id -> split, read from either a tab-separated "screen_id\tsplit"
/// file or a directory holding {train,dev|validation,test}_screens.txt.
std::unordered_map<std::string, SplitName> read_split_assignment(
    const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Splitting

/// Target fraction per split (training, validation, test).
using SplitRatios = std::array<double, 3>;

/// Shuffles apps by seed and assigns them greedily to the split with the
/// largest remaining widget deficit. Throws when there are fewer apps than
/// splits with positive ratio, or when ratios do not sum to 1.
std::map<std::string, SplitName> assign_apps(
    const std::map<std::string, std::size_t>& widgets_per_app, const SplitRatios& ratios,
    std::uint64_t seed);

/// App-wise split of a flat example list. Screens are carried along so every
/// example keeps its context.
std::array<DatasetSplit, 3> split_dataset(const DatasetSplit& all, const SplitRatios& ratios,
                                          std::uint64_t seed);

/// Same as split_dataset but with a fixed app -> split assignment.
std::array<DatasetSplit, 3> split_by_assignment(
    const DatasetSplit& all, const std::map<std::string, SplitName>& app_split);

// ---------------------------------------------------------------------------
// Analyses

/// Lowercased word list, one entry per line; multiword entries allowed.
std::vector<std::vector<std::string>> load_word_list(const std::filesystem::path& path);

/// Tokenized-and-rejoined caption -> number of occurrences.
using CaptionCounts = std::unordered_map<std::string, std::size_t>;
CaptionCounts count_captions(std::span<const std::vector<std::string>> caption_sets);

/// True when tokens contain some verb and some noun (multiword nouns must match
/// contiguously).
bool has_predicate_object(std::span<const std::string> tokens,
                          std::span<const std::vector<std::string>> verbs,
                          std::span<const std::vector<std::string>> nouns);

/// Examples with at least one reference that contains a listed verb and a
/// listed noun and occurs at least twice in corpus_counts.
std::vector<std::size_t> predicate_object_subset(
    const DatasetSplit& split, std::span<const std::vector<std::string>> verbs,
    std::span<const std::vector<std::string>> nouns, const CaptionCounts& corpus_counts);

struct LengthDistribution {
  std::map<std::size_t, std::size_t> histogram;  ///< key 10 aggregates lengths >= 10
  std::optional<double> mean;
};
LengthDistribution caption_length_distribution(std::span<const std::string> captions);
LengthDistribution caption_length_distribution(const DatasetSplit& split);

// ---------------------------------------------------------------------------
// Assembly from view hierarchies

struct ScreenInput {
  UITree tree;
  const RgbImage* screenshot = nullptr;  ///< nullptr: examples get blank images
};

struct AssemblyOptions {
  std::size_t max_text_tokens = 10;
  std::size_t max_elements = 128;
};

struct AssemblyReport {
  std::size_t examples = 0;
  std::size_t skipped_records = 0;  ///< locator not a captionable element, < 2 refs
  std::vector<std::string> warnings;
};

/// Builds the context set and the captioned examples for one screen and
/// appends them to split. Context = visible leaves in preorder; when over
/// max_elements, captioned targets are kept and the earliest others fill the
/// remaining slots.
void append_screen(DatasetSplit& split, const ScreenInput& screen,
                   std::span<const CaptionRecord> records, const WidgetRegistry& registry,
                   const AssemblyOptions& options, AssemblyReport& report);

/// Widget text for an element: text then content description, tokenized.
std::vector<std::string> widget_text_tokens(const UINode& node, std::size_t max_tokens);

}  // namespace widgetcap

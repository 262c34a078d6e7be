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

#include "widgetcap/capdata.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace widgetcap {

namespace {

constexpr std::array<std::string_view, Vocabulary::kSpecialCount> kSpecialTokens = {
    "<pad>", "<unk>", "<s>", "</s>"};

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c) != 0; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool contains_sequence(std::span<const std::string> tokens,
                       const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= tokens.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), tokens.begin() + i)) return true;
  return false;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view caption) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < caption.size()) {
    while (i < caption.size() && std::isspace(static_cast<unsigned char>(caption[i]))) ++i;
    std::size_t j = i;
    while (j < caption.size() && !std::isspace(static_cast<unsigned char>(caption[j]))) ++j;
    std::size_t b = i, e = j;
    while (b < e && is_ascii_punct(static_cast<unsigned char>(caption[b]))) ++b;
    while (e > b && is_ascii_punct(static_cast<unsigned char>(caption[e - 1]))) --e;
    if (e > b) out.push_back(lower(std::string(caption.substr(b, e - b))));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (auto s : kSpecialTokens) {
    ids_.emplace(std::string(s), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(s);
  }
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> tokenized_captions,
                             std::size_t size) {
  if (size < kSpecialCount)
    throw std::invalid_argument("vocabulary size must leave room for 4 special tokens");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& caption : tokenized_captions)
    for (const auto& t : caption) ++counts[t];
  if (counts.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (const auto& [token, count] : ranked) {
    if (tokens.size() + kSpecialCount >= size) break;
    tokens.push_back(token);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::build_from_captions(std::span<const std::string> captions,
                                           std::size_t size) {
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(captions.size());
  for (const auto& c : captions) tokenized.push_back(tokenize(c));
  return build(tokenized, size);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& t : tokens) {
    if (v.ids_.count(t)) throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    v.ids_.emplace(t, static_cast<TokenId>(v.tokens_.size()));
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return kUnk;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) != 0;
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

double Vocabulary::coverage(std::span<const std::vector<std::string>> tokenized_captions) const {
  std::size_t total = 0, covered = 0;
  for (const auto& caption : tokenized_captions) {
    for (const auto& t : caption) {
      ++total;
      if (id(t) != kUnk) ++covered;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kSpecialCount)
    throw std::runtime_error("vocabulary file too short: " + path.string());
  for (std::size_t i = 0; i < kSpecialCount; ++i)
    if (lines[i] != kSpecialTokens[i])
      throw std::runtime_error("vocabulary file lacks special tokens: " + path.string());
  return from_tokens(std::vector<std::string>(lines.begin() + kSpecialCount, lines.end()));
}

// ---------------------------------------------------------------------------

std::string_view to_string(SplitName name) {
  switch (name) {
    case SplitName::kTraining: return "training";
    case SplitName::kValidation: return "validation";
    case SplitName::kTest: return "test";
  }
  return "unknown";
}

std::optional<SplitName> parse_split_name(std::string_view name) {
  if (name == "training" || name == "train") return SplitName::kTraining;
  if (name == "validation" || name == "dev" || name == "valid") return SplitName::kValidation;
  if (name == "test") return SplitName::kTest;
  return std::nullopt;
}

const std::string& sample_reference(const WidgetExample& example, Rng& rng) {
  if (example.references.empty())
    throw std::invalid_argument("sample_reference: example has no references");
  return example.references[uniform_index(rng, example.references.size())];
}

// ---------------------------------------------------------------------------

std::vector<CaptionRecord> read_caption_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open caption file " + path.string());
  const bool csv = path.extension() == ".csv";
  auto fields_of = [&](const std::string& line) {
    return csv ? split_csv(line) : split(line, '\t');
  };

  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = fields_of(line);
  for (auto& h : header) h = lower(h);
  auto column = [&](std::initializer_list<std::string_view> names) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      for (auto n : names)
        if (header[i] == n) return i;
    return std::nullopt;
  };
  const auto app_col = column({"app_id", "appid", "app"});
  const auto screen_col = column({"screen_id", "screenid", "screen"});
  const auto loc_col = column({"locator", "nodeid", "node_id", "element"});
  const auto cap_col = column({"captions", "caption"});
  if (!screen_col || !loc_col || !cap_col)
    throw std::runtime_error(path.string() +
                             ": header must name screen_id, locator and captions columns");

  std::vector<CaptionRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = fields_of(line);
    auto need = std::max({*screen_col, *loc_col, *cap_col, app_col.value_or(0)});
    if (fields.size() <= need)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": too few fields");
    CaptionRecord r;
    if (app_col) r.app_id = fields[*app_col];
    r.screen_id = fields[*screen_col];
    try {
      std::size_t used = 0;
      r.locator = std::stoul(fields[*loc_col], &used);
      if (used != fields[*loc_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": locator must be a preorder index, got '" +
                               fields[*loc_col] + "'");
    }
    for (auto& c : split(fields[*cap_col], '|'))
      if (!tokenize(c).empty()) r.captions.push_back(c);
    out.push_back(std::move(r));
  }
  return out;
}

void write_caption_file(const std::filesystem::path& path,
                        std::span<const CaptionRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write caption file " + path.string());
  out << "app_id\tscreen_id\tlocator\tcaptions\n";
  for (const auto& r : records) {
    out << r.app_id << '\t' << r.screen_id << '\t' << r.locator << '\t';
    for (std::size_t i = 0; i < r.captions.size(); ++i) out << (i ? "|" : "") << r.captions[i];
    out << '\n';
  }
}

std::unordered_map<std::string, SplitName> read_split_assignment(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, SplitName> out;
  auto read_list = [&](const std::filesystem::path& file, SplitName name) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) out[line] = name;
    }
  };
  if (std::filesystem::is_directory(path)) {
    const std::pair<const char*, SplitName> files[] = {
        {"train_screens.txt", SplitName::kTraining},
        {"dev_screens.txt", SplitName::kValidation},
        {"validation_screens.txt", SplitName::kValidation},
        {"test_screens.txt", SplitName::kTest}};
    for (const auto& [name, split_name] : files)
      if (std::filesystem::exists(path / name)) read_list(path / name, split_name);
    return out;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split assignment " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split(line, '\t');
    if (fields.size() < 2) continue;
    if (auto s = parse_split_name(fields[1])) out[fields[0]] = *s;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::map<std::string, SplitName> assign_apps(
    const std::map<std::string, std::size_t>& widgets_per_app, const SplitRatios& ratios,
    std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-6 || *std::min_element(ratios.begin(), ratios.end()) < 0)
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  std::vector<std::size_t> active;
  for (std::size_t s = 0; s < 3; ++s)
    if (ratios[s] > 0) active.push_back(s);
  if (widgets_per_app.size() < active.size())
    throw std::invalid_argument("fewer apps (" + std::to_string(widgets_per_app.size()) +
                                ") than splits (" + std::to_string(active.size()) + ")");

  std::vector<std::string> apps;
  std::size_t total = 0;
  for (const auto& [app, n] : widgets_per_app) {
    apps.push_back(app);
    total += n;
  }
  Rng rng(seed);
  shuffle(std::span<std::string>(apps), rng);

  std::array<double, 3> assigned{};
  std::map<std::string, SplitName> out;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    std::size_t pick = active.front();
    if (i < active.size()) {
      pick = active[i];  // every active split receives at least one app
    } else {
      double best = -std::numeric_limits<double>::infinity();
      for (auto s : active) {
        const double deficit = ratios[s] * static_cast<double>(total) - assigned[s];
        if (deficit > best) {
          best = deficit;
          pick = s;
        }
      }
    }
    assigned[pick] += static_cast<double>(widgets_per_app.at(apps[i]));
    out[apps[i]] = static_cast<SplitName>(pick);
  }
  return out;
}

std::array<DatasetSplit, 3> split_by_assignment(
    const DatasetSplit& all, const std::map<std::string, SplitName>& app_split) {
  std::array<DatasetSplit, 3> out;
  for (std::size_t s = 0; s < 3; ++s) out[s].name = static_cast<SplitName>(s);
  std::vector<std::size_t> new_index(all.screens.size());
  for (std::size_t i = 0; i < all.screens.size(); ++i) {
    const auto& screen = all.screens[i];
    auto it = app_split.find(screen.app_id);
    if (it == app_split.end())
      throw std::invalid_argument("app " + screen.app_id + " has no split assignment");
    auto& target = out[static_cast<std::size_t>(it->second)];
    new_index[i] = target.screens.size();
    target.screens.push_back(screen);
  }
  for (const auto& ex : all.examples) {
    auto& target = out[static_cast<std::size_t>(app_split.at(ex.app_id))];
    WidgetExample copy = ex;
    copy.screen_index = new_index[ex.screen_index];
    target.examples.push_back(std::move(copy));
  }
  return out;
}

std::array<DatasetSplit, 3> split_dataset(const DatasetSplit& all, const SplitRatios& ratios,
                                          std::uint64_t seed) {
  std::map<std::string, std::size_t> widgets;
  for (const auto& s : all.screens) widgets.emplace(s.app_id, 0);
  for (const auto& ex : all.examples) ++widgets[ex.app_id];
  return split_by_assignment(all, assign_apps(widgets, ratios, seed));
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word list " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    auto tokens = tokenize(line);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

CaptionCounts count_captions(std::span<const std::vector<std::string>> caption_sets) {
  CaptionCounts counts;
  for (const auto& set : caption_sets)
    for (const auto& c : set) ++counts[join_tokens(tokenize(c))];
  return counts;
}

bool has_predicate_object(std::span<const std::string> tokens,
                          std::span<const std::vector<std::string>> verbs,
                          std::span<const std::vector<std::string>> nouns) {
  const bool verb = std::any_of(verbs.begin(), verbs.end(),
                                [&](const auto& v) { return contains_sequence(tokens, v); });
  if (!verb) return false;
  return std::any_of(nouns.begin(), nouns.end(),
                     [&](const auto& n) { return contains_sequence(tokens, n); });
}

std::vector<std::size_t> predicate_object_subset(
    const DatasetSplit& split, std::span<const std::vector<std::string>> verbs,
    std::span<const std::vector<std::string>> nouns, const CaptionCounts& corpus_counts) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.examples.size(); ++i) {
    for (const auto& ref : split.examples[i].references) {
      const auto tokens = tokenize(ref);
      if (!has_predicate_object(tokens, verbs, nouns)) continue;
      auto it = corpus_counts.find(join_tokens(tokens));
      if (it != corpus_counts.end() && it->second >= 2) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

LengthDistribution caption_length_distribution(std::span<const std::string> captions) {
  LengthDistribution out;
  std::size_t total = 0;
  for (const auto& c : captions) {
    const auto n = tokenize(c).size();
    ++out.histogram[std::min<std::size_t>(n, 10)];
    total += n;
  }
  if (!captions.empty())
    out.mean = static_cast<double>(total) / static_cast<double>(captions.size());
  return out;
}

LengthDistribution caption_length_distribution(const DatasetSplit& split) {
  std::vector<std::string> all;
  for (const auto& ex : split.examples)
    all.insert(all.end(), ex.references.begin(), ex.references.end());
  return caption_length_distribution(all);
}

// ---------------------------------------------------------------------------

std::vector<std::string> widget_text_tokens(const UINode& node, std::size_t max_tokens) {
  std::vector<std::string> tokens;
  if (node.text) tokens = tokenize(*node.text);
  if (node.content_description && (!node.text || *node.content_description != *node.text)) {
    auto more = tokenize(*node.content_description);
    tokens.insert(tokens.end(), more.begin(), more.end());
  }
  if (tokens.size() > max_tokens) tokens.resize(max_tokens);
  return tokens;
}

void append_screen(DatasetSplit& split, const ScreenInput& screen,
                   std::span<const CaptionRecord> records, const WidgetRegistry& registry,
                   const AssemblyOptions& options, AssemblyReport& report) {
  const UITree& tree = screen.tree;
  const auto nodes = preorder_nodes(tree);
  const auto positions = compute_traversal_positions(tree);

  std::vector<std::size_t> captionable;  // preorder indices
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i]->is_leaf() && nodes[i]->visible && nodes[i]->clickable) captionable.push_back(i);

  std::vector<const CaptionRecord*> targets;
  std::set<std::size_t> target_nodes;
  for (const auto& r : records) {
    const bool ok = std::binary_search(captionable.begin(), captionable.end(), r.locator);
    if (!ok) {
      ++report.skipped_records;
      report.warnings.push_back(tree.screen_id + ": locator " + std::to_string(r.locator) +
                                " is not a captionable element");
      continue;
    }
    if (r.captions.size() < 2) {
      ++report.skipped_records;
      continue;
    }
    if (!target_nodes.insert(r.locator).second) continue;
    targets.push_back(&r);
  }

  // Context: visible leaves; targets always kept.
  std::vector<std::size_t> context;
  std::size_t others_budget =
      options.max_elements > target_nodes.size() ? options.max_elements - target_nodes.size() : 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i]->is_leaf() || !nodes[i]->visible) continue;
    if (target_nodes.count(i)) {
      context.push_back(i);
    } else if (others_budget > 0) {
      context.push_back(i);
      --others_budget;
    }
  }
  if (context.empty()) return;

  ScreenContext ctx;
  ctx.app_id = tree.app_id;
  ctx.screen_id = tree.screen_id;
  std::unordered_map<std::size_t, std::size_t> context_slot;
  for (std::size_t i : context) {
    const UINode& n = *nodes[i];
    ElementFeatures f;
    if (!target_nodes.count(i)) f.text_tokens = widget_text_tokens(n, options.max_text_tokens);
    f.type = resolve_widget_type(n, registry);
    f.clickable = n.clickable;
    f.bounds = normalize_bounds(n.bounds, tree.screen_width, tree.screen_height);
    f.position = positions[i];
    f.zero_area = n.bounds.zero_area();
    context_slot[i] = ctx.elements.size();
    ctx.elements.push_back(std::move(f));
  }

  const std::size_t screen_index = split.screens.size();
  for (const CaptionRecord* r : targets) {
    const UINode& n = *nodes[r->locator];
    WidgetExample ex;
    ex.app_id = tree.app_id;
    ex.screen_id = tree.screen_id;
    ex.element_ref = static_cast<std::size_t>(
        std::lower_bound(captionable.begin(), captionable.end(), r->locator) -
        captionable.begin());
    ex.locator = r->locator;
    ex.references = r->captions;
    ex.context_index = context_slot.at(r->locator);
    ex.features = ctx.elements[ex.context_index];
    ex.screen_index = screen_index;
    if (screen.screenshot != nullptr && !n.bounds.zero_area()) {
      const Bounds b = scale_bounds_to_image(n.bounds, tree.screen_width, tree.screen_height,
                                             screen.screenshot->width,
                                             screen.screenshot->height);
      try {
        ex.image = crop_and_scale(*screen.screenshot, b);
      } catch (const ImageError&) {
        ex.image = GrayImage(kElementImageSize, kElementImageSize, 0.0f);
      }
    } else {
      ex.image = GrayImage(kElementImageSize, kElementImageSize, 0.0f);
    }
    split.examples.push_back(std::move(ex));
    ++report.examples;
  }
  split.screens.push_back(std::move(ctx));
}

}  // namespace widgetcap

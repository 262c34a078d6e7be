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
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace widgetcap {

/// Pixel rectangle in screen coordinates.
struct Bounds {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;

  int width() const { return right - left; }
  int height() const { return bottom - top; }
  bool zero_area() const { return width() <= 0 || height() <= 0; }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct UINode {
  std::string class_name;
  /// Superclasses of class_name, nearest first.
  std::vector<std::string> ancestor_classes;
  std::optional<std::string> text;
  std::optional<std::string> content_description;
  bool clickable = false;
  bool visible = true;
  Bounds bounds;
  std::vector<UINode> children;

  bool is_leaf() const { return children.empty(); }
  friend bool operator==(const UINode&, const UINode&) = default;
};

struct ScreenMeta {
  int width = 0;  ///< 0 means "take from the root node's bounds"
  int height = 0;
  std::string screen_id;
  std::string app_id;  ///< empty means "derive from the document"
};

struct UITree {
  UINode root;
  int screen_width = 0;
  int screen_height = 0;
  std::string screen_id;
  std::string app_id;

  friend bool operator==(const UITree&, const UITree&) = default;
};

/// Malformed document. path() names the offending node, e.g.
/// "root/children[2]/children[0]".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Well-formed document whose nodes violate the tree contract (missing bounds).
class StructuralError : public ParseError {
 public:
  using ParseError::ParseError;
};

// ---------------------------------------------------------------------------
// Widget types

enum class WidgetType : int {
  kTextView = 0,
  kImageView,
  kButton,
  kImageButton,
  kView,
  kCheckBox,
  kSwitch,
  kCompoundButton,
  kToggleButton,
  kFloatingActionButton,
};
inline constexpr std::size_t kWidgetTypeCount = 10;

std::string_view to_string(WidgetType type);
std::optional<WidgetType> parse_widget_type(std::string_view name);

/// Standard widget classes and the category each belongs to.
class WidgetRegistry {
 public:
  /// Throws std::invalid_argument when class_name is already mapped to a
  /// different type, so lookups never depend on insertion order.
  void add(const std::string& class_name, WidgetType type);
  std::optional<WidgetType> find(const std::string& class_name) const;
  std::size_t size() const { return classes_.size(); }
  bool empty() const { return classes_.empty(); }

  /// Built-in table (same content as data/widget_registry.tsv).
  static WidgetRegistry standard();
  /// "class_name<TAB>widget_type" per line; '#' starts a comment line.
  static WidgetRegistry parse(std::istream& in);
  static WidgetRegistry load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, WidgetType> classes_;
};

/// Own class if registered, else the nearest registered ancestor, else View.
WidgetType resolve_widget_type(const UINode& node, const WidgetRegistry& registry);

/// True when neither content_description nor text carries non-blank content.
bool is_caption_missing(const UINode& node);

// ---------------------------------------------------------------------------
// Traversal

struct TraversalPosition {
  std::size_t preorder = 0;
  std::size_t postorder = 0;
  std::size_t depth = 0;
  friend bool operator==(const TraversalPosition&, const TraversalPosition&) = default;
};

/// Nodes in preorder (children in document order).
std::vector<const UINode*> preorder_nodes(const UITree& tree);

/// Positions indexed by preorder index, i.e. result[k] belongs to
/// preorder_nodes(tree)[k]. Root depth is 0.
std::vector<TraversalPosition> compute_traversal_positions(const UITree& tree);

struct CaptionableElement {
  const UINode* node = nullptr;
  TraversalPosition position;
};

/// Visible, clickable leaves in preorder.
std::vector<CaptionableElement> collect_captionable_elements(const UITree& tree);

struct HierarchyStats {
  std::size_t size = 0;
  std::size_t depth = 0;  ///< max node depth + 1
};
HierarchyStats hierarchy_stats(const UITree& tree);

/// floor(coord / extent * 100) clamped to [0, 99]; order left, top, right, bottom.
std::array<int, 4> normalize_bounds(const Bounds& bounds, int screen_width,
                                    int screen_height);

// ---------------------------------------------------------------------------
// Documents

/// Parses a view-hierarchy JSON document. Accepts either a bare node object or
/// the crawler layout {"activity_name": ..., "activity": {"root": {...}}}.
/// Node keys: class, ancestors, text, content-desc (string, null, or list),
/// clickable, visible-to-user | visible | visibility, bounds [l,t,r,b], children.
UITree parse_view_hierarchy(std::string_view document, const ScreenMeta& meta);
UITree load_view_hierarchy(const std::filesystem::path& path, const ScreenMeta& meta);

/// Inverse of parse_view_hierarchy: reparsing the result yields an equal tree.
std::string serialize_view_hierarchy(const UITree& tree);

}  // namespace widgetcap

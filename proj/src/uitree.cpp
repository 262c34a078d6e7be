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

#include "widgetcap/uitree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace widgetcap {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, kWidgetTypeCount> kTypeNames = {
    "TextView", "ImageView", "Button",        "ImageButton",  "View",
    "CheckBox", "Switch",    "CompoundButton", "ToggleButton", "FloatingActionButton",
};

struct StandardClass {
  const char* name;
  WidgetType type;
};

constexpr StandardClass kStandardClasses[] = {
    {"android.widget.TextView", WidgetType::kTextView},
    {"android.widget.ImageView", WidgetType::kImageView},
    {"android.widget.Button", WidgetType::kButton},
    {"android.widget.ImageButton", WidgetType::kImageButton},
    {"android.view.View", WidgetType::kView},
    {"android.widget.CheckBox", WidgetType::kCheckBox},
    {"android.widget.Switch", WidgetType::kSwitch},
    {"android.widget.CompoundButton", WidgetType::kCompoundButton},
    {"android.widget.ToggleButton", WidgetType::kToggleButton},
    {"android.support.design.widget.FloatingActionButton",
     WidgetType::kFloatingActionButton},
    {"com.google.android.material.floatingactionbutton.FloatingActionButton",
     WidgetType::kFloatingActionButton},
    {"android.support.v7.widget.SwitchCompat", WidgetType::kSwitch},
    {"androidx.appcompat.widget.SwitchCompat", WidgetType::kSwitch},
    {"android.support.v7.widget.AppCompatImageButton", WidgetType::kImageButton},
    {"androidx.appcompat.widget.AppCompatImageButton", WidgetType::kImageButton},
};

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::optional<std::string> read_optional_string(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_array()) {
    // The crawler stores content-desc as a list, usually [null] or ["label"].
    std::string joined;
    for (const auto& item : value) {
      if (!item.is_string()) continue;
      if (!joined.empty()) joined += ' ';
      joined += item.get<std::string>();
    }
    if (joined.empty()) return std::nullopt;
    return joined;
  }
  return std::nullopt;
}

bool read_visible(const json& node) {
  if (auto it = node.find("visible-to-user"); it != node.end() && it->is_boolean())
    return it->get<bool>();
  if (auto it = node.find("visible"); it != node.end() && it->is_boolean())
    return it->get<bool>();
  if (auto it = node.find("visibility"); it != node.end() && it->is_string())
    return it->get<std::string>() == "visible";
  return true;
}

UINode parse_node(const json& node, const std::string& path) {
  if (!node.is_object()) throw ParseError(path, "node is not an object");
  UINode out;
  auto cls = node.find("class");
  if (cls == node.end() || !cls->is_string())
    throw ParseError(path, "missing string field 'class'");
  out.class_name = cls->get<std::string>();

  if (auto it = node.find("ancestors"); it != node.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(path, "'ancestors' must be a list");
    for (const auto& a : *it)
      if (a.is_string()) out.ancestor_classes.push_back(a.get<std::string>());
  }
  if (auto it = node.find("text"); it != node.end()) out.text = read_optional_string(*it);
  if (auto it = node.find("content-desc"); it != node.end())
    out.content_description = read_optional_string(*it);
  if (auto it = node.find("clickable"); it != node.end()) {
    if (!it->is_boolean()) throw ParseError(path, "'clickable' must be boolean");
    out.clickable = it->get<bool>();
  }
  out.visible = read_visible(node);

  auto bounds = node.find("bounds");
  if (bounds == node.end() || bounds->is_null())
    throw StructuralError(path, "missing 'bounds'");
  if (!bounds->is_array() || bounds->size() != 4)
    throw ParseError(path, "'bounds' must be a list of 4 numbers");
  std::array<int, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& v = (*bounds)[i];
    if (!v.is_number()) throw ParseError(path, "'bounds' must be a list of 4 numbers");
    b[i] = static_cast<int>(std::lround(v.get<double>()));
  }
  out.bounds = {b[0], b[1], b[2], b[3]};

  if (auto it = node.find("children"); it != node.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(path, "'children' must be a list");
    std::size_t k = 0;
    for (const auto& child : *it) {
      const std::string child_path = path + "/children[" + std::to_string(k++) + "]";
      if (child.is_null()) continue;  // crawler emits null placeholders
      out.children.push_back(parse_node(child, child_path));
    }
  }
  return out;
}

void clamp_bounds(UINode& node, int width, int height) {
  auto& b = node.bounds;
  b.left = std::clamp(b.left, 0, width);
  b.right = std::clamp(b.right, 0, width);
  b.top = std::clamp(b.top, 0, height);
  b.bottom = std::clamp(b.bottom, 0, height);
  b.right = std::max(b.right, b.left);
  b.bottom = std::max(b.bottom, b.top);
  for (auto& c : node.children) clamp_bounds(c, width, height);
}

json node_to_json(const UINode& node) {
  json out;
  out["class"] = node.class_name;
  out["ancestors"] = node.ancestor_classes;
  out["text"] = node.text ? json(*node.text) : json(nullptr);
  out["content-desc"] =
      node.content_description ? json(*node.content_description) : json(nullptr);
  out["clickable"] = node.clickable;
  out["visible-to-user"] = node.visible;
  out["bounds"] = {node.bounds.left, node.bounds.top, node.bounds.right,
                   node.bounds.bottom};
  json children = json::array();
  for (const auto& c : node.children) children.push_back(node_to_json(c));
  out["children"] = std::move(children);
  return out;
}

}  // namespace

std::string_view to_string(WidgetType type) {
  return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<WidgetType> parse_widget_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i)
    if (kTypeNames[i] == name) return static_cast<WidgetType>(i);
  return std::nullopt;
}

void WidgetRegistry::add(const std::string& class_name, WidgetType type) {
  auto [it, inserted] = classes_.emplace(class_name, type);
  if (!inserted && it->second != type)
    throw std::invalid_argument("conflicting widget type for class " + class_name);
}

std::optional<WidgetType> WidgetRegistry::find(const std::string& class_name) const {
  if (auto it = classes_.find(class_name); it != classes_.end()) return it->second;
  return std::nullopt;
}

WidgetRegistry WidgetRegistry::standard() {
  WidgetRegistry registry;
  for (const auto& c : kStandardClasses) registry.add(c.name, c.type);
  return registry;
}

WidgetRegistry WidgetRegistry::parse(std::istream& in) {
  WidgetRegistry registry;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::invalid_argument("registry line " + std::to_string(line_no) +
                                  ": expected class_name<TAB>widget_type");
    const auto type = parse_widget_type(line.substr(tab + 1));
    if (!type)
      throw std::invalid_argument("registry line " + std::to_string(line_no) +
                                  ": unknown widget type '" + line.substr(tab + 1) + "'");
    registry.add(line.substr(0, tab), *type);
  }
  return registry;
}

WidgetRegistry WidgetRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open registry file " + path.string());
  return parse(in);
}

WidgetType resolve_widget_type(const UINode& node, const WidgetRegistry& registry) {
  if (auto t = registry.find(node.class_name)) return *t;
  for (const auto& ancestor : node.ancestor_classes)
    if (auto t = registry.find(ancestor)) return *t;
  return WidgetType::kView;
}

bool is_caption_missing(const UINode& node) {
  const bool has_desc = node.content_description && !is_blank(*node.content_description);
  const bool has_text = node.text && !is_blank(*node.text);
  return !has_desc && !has_text;
}

std::vector<const UINode*> preorder_nodes(const UITree& tree) {
  std::vector<const UINode*> out;
  std::vector<const UINode*> stack{&tree.root};
  while (!stack.empty()) {
    const UINode* n = stack.back();
    stack.pop_back();
    out.push_back(n);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it)
      stack.push_back(&*it);
  }
  return out;
}

std::vector<TraversalPosition> compute_traversal_positions(const UITree& tree) {
  std::vector<TraversalPosition> out;
  struct Frame {
    const UINode* node;
    std::size_t preorder;
    std::size_t next_child;
  };
  std::size_t next_post = 0;
  out.push_back({0, 0, 0});
  std::vector<Frame> stack{{&tree.root, 0, 0}};
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_child < top.node->children.size()) {
      const UINode* child = &top.node->children[top.next_child++];
      const std::size_t pre = out.size();
      out.push_back({pre, 0, stack.size()});
      stack.push_back({child, pre, 0});
    } else {
      out[top.preorder].postorder = next_post++;
      stack.pop_back();
    }
  }
  return out;
}

std::vector<CaptionableElement> collect_captionable_elements(const UITree& tree) {
  const auto nodes = preorder_nodes(tree);
  const auto positions = compute_traversal_positions(tree);
  std::vector<CaptionableElement> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const UINode* n = nodes[i];
    if (n->is_leaf() && n->visible && n->clickable) out.push_back({n, positions[i]});
  }
  return out;
}

HierarchyStats hierarchy_stats(const UITree& tree) {
  const auto positions = compute_traversal_positions(tree);
  std::size_t max_depth = 0;
  for (const auto& p : positions) max_depth = std::max(max_depth, p.depth);
  return {positions.size(), max_depth + 1};
}

std::array<int, 4> normalize_bounds(const Bounds& bounds, int screen_width,
                                    int screen_height) {
  if (screen_width <= 0 || screen_height <= 0)
    throw std::invalid_argument("normalize_bounds: screen extent must be positive");
  auto scale = [](int coord, int extent) {
    const int clamped = std::clamp(coord, 0, extent);
    const auto v = static_cast<long long>(clamped) * 100 / extent;
    return static_cast<int>(std::clamp<long long>(v, 0, 99));
  };
  return {scale(bounds.left, screen_width), scale(bounds.top, screen_height),
          scale(bounds.right, screen_width), scale(bounds.bottom, screen_height)};
}

UITree parse_view_hierarchy(std::string_view document, const ScreenMeta& meta) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError("<document>", e.what());
  }
  if (!doc.is_object()) throw ParseError("<document>", "top level is not an object");

  UITree tree;
  tree.screen_id = meta.screen_id;
  tree.app_id = meta.app_id;
  int width = meta.width;
  int height = meta.height;

  if (auto s = doc.find("screen"); s != doc.end() && s->is_object()) {
    if (width <= 0) width = s->value("width", 0);
    if (height <= 0) height = s->value("height", 0);
    if (tree.screen_id.empty()) tree.screen_id = s->value("id", std::string{});
    if (tree.app_id.empty()) tree.app_id = s->value("app", std::string{});
  }
  if (tree.app_id.empty()) {
    if (auto a = doc.find("activity_name"); a != doc.end() && a->is_string()) {
      const auto name = a->get<std::string>();
      tree.app_id = name.substr(0, name.find('/'));
    }
  }

  const json* root = &doc;
  if (auto act = doc.find("activity"); act != doc.end()) {
    if (!act->is_object() || !act->contains("root"))
      throw ParseError("activity", "missing 'root' node");
    root = &(*act)["root"];
  } else if (auto r = doc.find("root"); r != doc.end()) {
    root = &*r;
  }
  if (root->is_null()) throw ParseError("root", "root node absent");
  tree.root = parse_node(*root, "root");

  if (width <= 0) width = tree.root.bounds.right;
  if (height <= 0) height = tree.root.bounds.bottom;
  if (width <= 0 || height <= 0)
    throw StructuralError("root", "cannot determine positive screen dimensions");
  tree.screen_width = width;
  tree.screen_height = height;
  clamp_bounds(tree.root, width, height);
  return tree;
}

UITree load_view_hierarchy(const std::filesystem::path& path, const ScreenMeta& meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  ScreenMeta m = meta;
  if (m.screen_id.empty()) m.screen_id = path.stem().string();
  return parse_view_hierarchy(buffer.str(), m);
}

std::string serialize_view_hierarchy(const UITree& tree) {
  json doc;
  doc["screen"] = {{"width", tree.screen_width},
                   {"height", tree.screen_height},
                   {"id", tree.screen_id},
                   {"app", tree.app_id}};
  doc["activity_name"] = tree.app_id + "/";
  doc["activity"]["root"] = node_to_json(tree.root);
  return doc.dump(1);
}

}  // namespace widgetcap

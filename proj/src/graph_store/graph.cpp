#include "kgaudit/graph_store.hpp"

#include "kgaudit/errors.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

namespace kgaudit {

std::optional<KindId> KnowledgeGraph::find_kind(std::string_view kind) const {
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] == kind) return static_cast<KindId>(i);
  }
  return std::nullopt;
}

KindId KnowledgeGraph::kind_id(std::string_view kind) const {
  if (auto k = find_kind(kind)) return *k;
  throw ArgumentError("unknown entity kind '" + std::string(kind) + "'");
}

std::vector<EntityId> KnowledgeGraph::entities_of_kind(KindId kind) const {
  std::vector<EntityId> out;
  for (std::size_t e = 0; e < entity_kind.size(); ++e) {
    if (entity_kind[e] == kind) out.push_back(static_cast<EntityId>(e));
  }
  return out;
}

std::optional<std::size_t> KnowledgeGraph::find_attribute(std::string_view name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t KnowledgeGraph::attribute_index(std::string_view name) const {
  if (auto a = find_attribute(name)) return *a;
  throw ArgumentError("unknown attribute '" + std::string(name) + "'");
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  auto it = std::find(entity_names.begin(), entity_names.end(), name);
  if (it == entity_names.end()) return std::nullopt;
  return static_cast<EntityId>(it - entity_names.begin());
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  auto it = std::find(relation_names.begin(), relation_names.end(), name);
  if (it == relation_names.end()) return std::nullopt;
  return static_cast<RelationId>(it - relation_names.begin());
}

void KnowledgeGraph::validate() const {
  const std::size_t n = entity_count();
  if (entity_kind.size() != n) throw ArgumentError("graph: entity_kind size mismatch");
  if (relation_values.size() != relation_count()) throw ArgumentError("graph: relation_values size mismatch");
  for (KindId k : entity_kind) {
    if (k >= kinds.size()) throw ArgumentError("graph: entity kind out of range");
  }
  std::unordered_set<Triple, TripleHash> seen;
  seen.reserve(facts.size());
  for (const Triple& t : facts) {
    if (t.head >= n || t.tail >= n || t.relation >= relation_count()) {
      throw ArgumentError("graph: fact references an id out of range");
    }
    if (!seen.insert(t).second) throw ArgumentError("graph: duplicate fact");
  }
  if (attribute_values.size() != attributes.size()) throw ArgumentError("graph: attribute table size mismatch");
  for (std::size_t a = 0; a < attributes.size(); ++a) {
    const auto& col = attribute_values[a];
    if (col.size() != n) throw ArgumentError("graph: attribute '" + attributes[a].name + "' has wrong length");
    const auto count = static_cast<std::int32_t>(attributes[a].values.size());
    for (std::size_t e = 0; e < n; ++e) {
      if (col[e] == kMissingValue) continue;
      if (col[e] < 0 || col[e] >= count) {
        throw ArgumentError("graph: attribute '" + attributes[a].name + "' value out of its category set");
      }
      if (entity_kind[e] != attributes[a].kind) {
        throw ArgumentError("graph: attribute '" + attributes[a].name + "' set on an entity of another kind");
      }
    }
  }
  if (predefined_split) {
    for (const auto* part : {&predefined_split->train, &predefined_split->test}) {
      for (std::size_t i : *part) {
        if (i >= facts.size()) throw ArgumentError("graph: predefined split index out of range");
      }
    }
  }
}

std::vector<int> AttributeMatrix::labels(std::size_t group) const {
  if (group >= groups.size()) throw ArgumentError("AttributeMatrix::labels: group out of range");
  const Group& g = groups[group];
  std::vector<int> out(rows.size(), -1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < g.column_count; ++c) {
      if (data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(g.first_column + c)) != 0.0) {
        out[r] = static_cast<int>(c);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json graph_to_json(const KnowledgeGraph& g) {
  using nlohmann::json;
  json doc;
  doc["format"] = "kgaudit-graph";
  doc["version"] = 1;
  doc["kinds"] = g.kinds;
  doc["entity_names"] = g.entity_names;
  doc["entity_kinds"] = g.entity_kind;
  json rels = json::array();
  for (std::size_t r = 0; r < g.relation_count(); ++r) {
    json rel{{"name", g.relation_names[r]}};
    rel["value"] = g.relation_values[r] ? json(*g.relation_values[r]) : json(nullptr);
    rels.push_back(std::move(rel));
  }
  doc["relations"] = std::move(rels);
  json facts = json::array();
  for (const Triple& t : g.facts) facts.push_back({t.head, t.relation, t.tail});
  doc["facts"] = std::move(facts);
  json attrs = json::array();
  for (std::size_t a = 0; a < g.attributes.size(); ++a) {
    attrs.push_back({{"name", g.attributes[a].name},
                     {"kind", g.kinds[g.attributes[a].kind]},
                     {"values", g.attributes[a].values},
                     {"assignments", g.attribute_values[a]}});
  }
  doc["attributes"] = std::move(attrs);
  if (g.predefined_split) {
    doc["predefined_split"] = {{"train", g.predefined_split->train}, {"test", g.predefined_split->test}};
  } else {
    doc["predefined_split"] = nullptr;
  }
  return doc;
}

KnowledgeGraph graph_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string{}) != "kgaudit-graph") {
    throw ArgumentError("not a kgaudit graph document");
  }
  KnowledgeGraph g;
  try {
    g.kinds = doc.at("kinds").get<std::vector<std::string>>();
    g.entity_names = doc.at("entity_names").get<std::vector<std::string>>();
    g.entity_kind = doc.at("entity_kinds").get<std::vector<KindId>>();
    for (const auto& rel : doc.at("relations")) {
      g.relation_names.push_back(rel.at("name").get<std::string>());
      const auto& v = rel.at("value");
      g.relation_values.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    g.facts.reserve(doc.at("facts").size());
    for (const auto& f : doc.at("facts")) {
      g.facts.push_back({f.at(0).get<EntityId>(), f.at(1).get<RelationId>(), f.at(2).get<EntityId>()});
    }
    for (const auto& a : doc.at("attributes")) {
      AttributeSchema s;
      s.name = a.at("name").get<std::string>();
      s.kind = g.kind_id(a.at("kind").get<std::string>());
      s.values = a.at("values").get<std::vector<std::string>>();
      g.attributes.push_back(std::move(s));
      g.attribute_values.push_back(a.at("assignments").get<std::vector<std::int32_t>>());
    }
    if (doc.contains("predefined_split") && !doc["predefined_split"].is_null()) {
      PredefinedSplit p;
      p.train = doc["predefined_split"].at("train").get<std::vector<std::size_t>>();
      p.test = doc["predefined_split"].at("test").get<std::vector<std::size_t>>();
      g.predefined_split = std::move(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed graph document: ") + e.what());
  }
  g.validate();
  return g;
}

void save_graph(const std::filesystem::path& path, const KnowledgeGraph& graph) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  out << graph_to_json(graph).dump() << '\n';
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
  return graph_from_json(doc);
}

}  // namespace kgaudit

#pragma once

// Canonical knowledge-graph representation, dataset ingestion, splits,
// attribute matrices and balanced subsampling.

#include "kgaudit/numkit.hpp"

#include "json.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgaudit {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using KindId = std::uint16_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(t.head) << 32) ^ t.tail;
    h ^= static_cast<std::uint64_t>(t.relation) * 0x9E3779B97F4A7C15ULL;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ULL;
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

// A categorical attribute declared for one entity kind. `values` fixes the
// column order used by attribute matrices.
struct AttributeSchema {
  std::string name;
  KindId kind = 0;
  std::vector<std::string> values;
};

inline constexpr std::int32_t kMissingValue = -1;

struct PredefinedSplit {
  std::vector<std::size_t> train;  // indices into facts
  std::vector<std::size_t> test;
};

struct KnowledgeGraph {
  std::vector<std::string> kinds;
  std::vector<std::string> entity_names;
  std::vector<KindId> entity_kind;
  std::vector<std::string> relation_names;
  // Numeric value carried by a relation (the star rating), if any.
  std::vector<std::optional<double>> relation_values;
  std::vector<Triple> facts;
  std::vector<AttributeSchema> attributes;
  // attribute_values[a][entity] = index into attributes[a].values or kMissingValue.
  std::vector<std::vector<std::int32_t>> attribute_values;
  std::optional<PredefinedSplit> predefined_split;
  // Ingestion diagnostics (duplicates dropped, unknown users, ...). Not serialized.
  std::vector<std::string> warnings;

  std::size_t entity_count() const noexcept { return entity_names.size(); }
  std::size_t relation_count() const noexcept { return relation_names.size(); }

  KindId kind_id(std::string_view kind) const;
  std::optional<KindId> find_kind(std::string_view kind) const;
  std::vector<EntityId> entities_of_kind(KindId kind) const;
  std::size_t attribute_index(std::string_view name) const;
  std::optional<std::size_t> find_attribute(std::string_view name) const;
  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  // Throws ArgumentError naming the first violated invariant.
  void validate() const;
};

// One-hot encoding of categorical attributes for one entity kind.
struct AttributeMatrix {
  struct Column {
    std::string attribute;
    std::string value;
  };
  struct Group {
    std::string attribute;
    std::size_t first_column = 0;
    std::size_t column_count = 0;
  };

  std::vector<EntityId> rows;
  std::vector<Column> columns;
  std::vector<Group> groups;
  Matrix data;  // entries in {0, 1}

  // Per-row value index within `group` (the hot column offset).
  std::vector<int> labels(std::size_t group) const;
};

struct Split {
  std::vector<Triple> train;
  std::vector<Triple> test;
  std::uint64_t seed = 0;
  bool predefined = false;
};

// ---------------------------------------------------------------------------
// Ingestion

// MovieLens 1M layout: users.dat (UserID::Gender::Age::Occupation::Zip) and
// ratings.dat (UserID::MovieID::Rating::Timestamp).
KnowledgeGraph ingest_movielens(const std::filesystem::path& directory);

// KG20C layout: tab-separated head/relation/tail. Reads train.txt, valid.txt
// and test.txt when present (and then honors them as a predefined split),
// otherwise a single triples file.
KnowledgeGraph ingest_kg20c(const std::filesystem::path& directory);

// ---------------------------------------------------------------------------
// Splits and sampling

Split split_triples(const KnowledgeGraph& graph, double test_ratio, std::uint64_t seed);

AttributeMatrix build_attribute_matrix(const KnowledgeGraph& graph,
                                       std::span<const std::string> attribute_names,
                                       std::string_view entity_kind);

// Indices into `labels`, every class reduced to the minority count, shuffled.
std::vector<std::size_t> balanced_subsample(std::span<const int> labels, std::uint64_t seed);

// Keeps a seeded random `fraction` of the entities of `kind` (at least one),
// drops facts touching the others and renumbers entities densely in their
// original order. A predefined split is remapped onto the surviving facts.
KnowledgeGraph subsample_kind(const KnowledgeGraph& graph, std::string_view kind, double fraction,
                              std::uint64_t seed);

struct GroupMeans {
  Matrix means;       // U: one row per non-empty attribute combination
  Matrix indicators;  // A: that combination's one-hot concatenation
  std::vector<std::size_t> member_counts;
};

// Groups rows of `attributes` by identical attribute combination; rows ordered
// lexicographically by combination. `entity_embeddings` is indexed by EntityId.
GroupMeans group_mean_embeddings(const Matrix& entity_embeddings, const AttributeMatrix& attributes);

// ---------------------------------------------------------------------------
// Canonical JSON dump

nlohmann::json graph_to_json(const KnowledgeGraph& graph);
KnowledgeGraph graph_from_json(const nlohmann::json& doc);
void save_graph(const std::filesystem::path& path, const KnowledgeGraph& graph);
KnowledgeGraph load_graph(const std::filesystem::path& path);

}  // namespace kgaudit

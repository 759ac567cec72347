#include "kgaudit/graph_store.hpp"

#include "kgaudit/errors.hpp"
#include "kgaudit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace kgaudit {

Split split_triples(const KnowledgeGraph& graph, double test_ratio, std::uint64_t seed) {
  if (!(test_ratio > 0.0 && test_ratio < 1.0)) {
    throw ArgumentError("split_triples: test ratio must lie in (0, 1)");
  }
  Split split;
  split.seed = seed;
  if (graph.predefined_split) {
    split.predefined = true;
    for (std::size_t i : graph.predefined_split->train) split.train.push_back(graph.facts.at(i));
    for (std::size_t i : graph.predefined_split->test) split.test.push_back(graph.facts.at(i));
    return split;
  }

  const std::size_t n = graph.facts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_test = static_cast<std::size_t>(std::llround(test_ratio * static_cast<double>(n)));

  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;
  split.train.reserve(n - n_test);
  split.test.reserve(n_test);
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? split.test : split.train).push_back(graph.facts[i]);
  return split;
}

AttributeMatrix build_attribute_matrix(const KnowledgeGraph& graph,
                                       std::span<const std::string> attribute_names,
                                       std::string_view entity_kind) {
  const auto kind = graph.find_kind(entity_kind);
  if (!kind) throw ArgumentError("build_attribute_matrix: unknown entity kind '" + std::string(entity_kind) + "'");
  if (attribute_names.empty()) throw ArgumentError("build_attribute_matrix: no attributes requested");

  AttributeMatrix m;
  std::vector<std::size_t> attr_ids;
  for (const auto& name : attribute_names) {
    const auto a = graph.find_attribute(name);
    if (!a) throw ArgumentError("build_attribute_matrix: unknown attribute '" + name + "'");
    if (graph.attributes[*a].kind != *kind) {
      throw ArgumentError("build_attribute_matrix: attribute '" + name + "' is not declared for kind '" +
                          std::string(entity_kind) + "'");
    }
    if (std::find(attr_ids.begin(), attr_ids.end(), *a) != attr_ids.end()) {
      throw ArgumentError("build_attribute_matrix: attribute '" + name + "' requested twice");
    }
    attr_ids.push_back(*a);
    const auto& schema = graph.attributes[*a];
    m.groups.push_back({schema.name, m.columns.size(), schema.values.size()});
    for (const auto& v : schema.values) m.columns.push_back({schema.name, v});
  }

  for (EntityId e : graph.entities_of_kind(*kind)) {
    const bool complete = std::all_of(attr_ids.begin(), attr_ids.end(), [&](std::size_t a) {
      return graph.attribute_values[a][e] != kMissingValue;
    });
    if (complete) m.rows.push_back(e);
  }

  m.data = Matrix::Zero(static_cast<Eigen::Index>(m.rows.size()), static_cast<Eigen::Index>(m.columns.size()));
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    for (std::size_t gi = 0; gi < attr_ids.size(); ++gi) {
      const auto value = graph.attribute_values[attr_ids[gi]][m.rows[r]];
      m.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m.groups[gi].first_column + value)) = 1.0;
    }
  }
  return m;
}

std::vector<std::size_t> balanced_subsample(std::span<const int> labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw ArgumentError("balanced_subsample: need at least two distinct labels");

  std::size_t minority = labels.size();
  for (const auto& [label, members] : by_class) minority = std::min(minority, members.size());

  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(minority * by_class.size());
  for (auto& [label, members] : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(minority));
  }
  rng.shuffle(std::span<std::size_t>(out));
  return out;
}

GroupMeans group_mean_embeddings(const Matrix& entity_embeddings, const AttributeMatrix& attributes) {
  std::map<std::vector<int>, std::pair<Vector, std::size_t>> groups;
  std::vector<std::vector<int>> labels;
  for (std::size_t g = 0; g < attributes.groups.size(); ++g) labels.push_back(attributes.labels(g));

  const Eigen::Index d = entity_embeddings.cols();
  std::vector<int> key(attributes.groups.size());
  for (std::size_t r = 0; r < attributes.rows.size(); ++r) {
    const EntityId e = attributes.rows[r];
    if (e >= static_cast<std::size_t>(entity_embeddings.rows())) {
      throw ArgumentError("group_mean_embeddings: entity " + std::to_string(e) + " has no embedding");
    }
    for (std::size_t g = 0; g < key.size(); ++g) key[g] = labels[g][r];
    auto [it, inserted] = groups.try_emplace(key, Vector::Zero(d), std::size_t{0});
    it->second.first += entity_embeddings.row(e).transpose();
    ++it->second.second;
  }

  GroupMeans out;
  const auto n = static_cast<Eigen::Index>(groups.size());
  out.means = Matrix::Zero(n, d);
  out.indicators = Matrix::Zero(n, static_cast<Eigen::Index>(attributes.columns.size()));
  Eigen::Index row = 0;
  for (const auto& [combo, acc] : groups) {
    out.means.row(row) = (acc.first / static_cast<double>(acc.second)).transpose();
    for (std::size_t g = 0; g < combo.size(); ++g) {
      out.indicators(row, static_cast<Eigen::Index>(attributes.groups[g].first_column + combo[g])) = 1.0;
    }
    out.member_counts.push_back(acc.second);
    ++row;
  }
  return out;
}

KnowledgeGraph subsample_kind(const KnowledgeGraph& graph, std::string_view kind, double fraction,
                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("subsample: fraction outside (0, 1]");
  const KindId k = graph.kind_id(kind);
  std::vector<EntityId> members = graph.entities_of_kind(k);
  if (members.empty()) throw ArgumentError("subsample: kind '" + std::string(kind) + "' has no entities");
  Rng rng(seed);
  rng.shuffle(std::span<EntityId>(members));
  const auto keep_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
  std::vector<bool> keep(graph.entity_count(), true);
  for (std::size_t i = keep_count; i < members.size(); ++i) keep[members[i]] = false;

  constexpr EntityId kDropped = ~EntityId{0};
  std::vector<EntityId> remap(graph.entity_count(), kDropped);
  KnowledgeGraph out;
  out.kinds = graph.kinds;
  out.relation_names = graph.relation_names;
  out.relation_values = graph.relation_values;
  out.attributes = graph.attributes;
  out.attribute_values.resize(graph.attributes.size());
  for (EntityId e = 0; e < graph.entity_count(); ++e) {
    if (!keep[e]) continue;
    remap[e] = static_cast<EntityId>(out.entity_names.size());
    out.entity_names.push_back(graph.entity_names[e]);
    out.entity_kind.push_back(graph.entity_kind[e]);
    for (std::size_t a = 0; a < graph.attributes.size(); ++a) {
      out.attribute_values[a].push_back(graph.attribute_values[a][e]);
    }
  }
  std::vector<std::size_t> fact_remap(graph.facts.size(), graph.facts.size());
  for (std::size_t i = 0; i < graph.facts.size(); ++i) {
    const Triple& t = graph.facts[i];
    if (remap[t.head] == kDropped || remap[t.tail] == kDropped) continue;
    fact_remap[i] = out.facts.size();
    out.facts.push_back({remap[t.head], t.relation, remap[t.tail]});
  }
  if (graph.predefined_split) {
    PredefinedSplit ps;
    for (std::size_t i : graph.predefined_split->train) {
      if (fact_remap[i] != graph.facts.size()) ps.train.push_back(fact_remap[i]);
    }
    for (std::size_t i : graph.predefined_split->test) {
      if (fact_remap[i] != graph.facts.size()) ps.test.push_back(fact_remap[i]);
    }
    out.predefined_split = std::move(ps);
  }
  return out;
}

}  // namespace kgaudit

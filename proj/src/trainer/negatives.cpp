#include "kgaudit/trainer.hpp"

namespace kgaudit {

NegativeSampler::NegativeSampler(const KnowledgeGraph& graph, std::span<const Triple> known_facts)
    : graph_(graph), by_kind_(graph.kinds.size()), known_(known_facts.begin(), known_facts.end()) {
  for (EntityId e = 0; e < graph.entity_count(); ++e) by_kind_[graph.entity_kind[e]].push_back(e);
}

void NegativeSampler::sample(const Triple& fact, std::size_t k_entities, std::size_t k_relations, Rng& rng,
                             std::vector<Triple>& out) const {
  out.clear();
  for (std::size_t i = 0; i < k_entities; ++i) {
    const bool replace_head = rng.coin();
    const EntityId original = replace_head ? fact.head : fact.tail;
    const auto& pool = by_kind_[graph_.entity_kind[original]];
    Triple c = fact;
    for (int attempt = 0;; ++attempt) {
      const EntityId pick = pool[rng.uniform_index(pool.size())];
      (replace_head ? c.head : c.tail) = pick;
      if (!known_.contains(c)) break;
      if (attempt == kMaxRedraws) {
        ++collisions_kept_;
        break;
      }
    }
    out.push_back(c);
  }

  const std::size_t relations = graph_.relation_count();
  if (relations < 2) return;
  for (std::size_t i = 0; i < k_relations; ++i) {
    Triple c = fact;
    for (int attempt = 0;; ++attempt) {
      auto r = static_cast<RelationId>(rng.uniform_index(relations - 1));
      if (r >= fact.relation) ++r;
      c.relation = r;
      if (!known_.contains(c)) break;
      if (attempt == kMaxRedraws) {
        ++collisions_kept_;
        break;
      }
    }
    out.push_back(c);
  }
}

std::vector<Triple> sample_negatives(const Triple& fact, const KnowledgeGraph& graph, std::size_t k_entities,
                                     std::size_t k_relations, Rng& rng) {
  NegativeSampler sampler(graph, graph.facts);
  std::vector<Triple> out;
  sampler.sample(fact, k_entities, k_relations, rng, out);
  return out;
}

}  // namespace kgaudit

#include "kgaudit/eval.hpp"

#include "kgaudit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace kgaudit {

RatingScale RatingScale::from_graph(const KnowledgeGraph& graph) {
  RatingScale s;
  for (RelationId r = 0; r < graph.relation_count(); ++r) {
    if (graph.relation_values[r]) {
      s.relations.push_back(r);
      s.values.push_back(*graph.relation_values[r]);
    }
  }
  if (s.relations.empty()) throw ArgumentError("graph has no numeric (rating) relations");
  return s;
}

double expected_value(std::span<const double> scores, std::span<const double> values) {
  if (scores.size() != values.size() || scores.empty()) throw ArgumentError("expected_value: size mismatch");
  const double top = *std::max_element(scores.begin(), scores.end());
  double z = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double w = std::exp(scores[i] - top);
    z += w;
    acc += w * values[i];
  }
  return acc / z;
}

double predict_rating(const EmbeddingModel& model, EntityId user, EntityId item, const RatingScale& scale) {
  std::vector<double> s(scale.relations.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = score(model, {user, scale.relations[i], item});
  return expected_value(s, scale.values);
}

double rmse(const EmbeddingModel& model, std::span<const Triple> test, const RatingScale& scale) {
  if (test.empty()) throw ArgumentError("rmse: empty test set");
  std::unordered_map<RelationId, double> value_of;
  for (std::size_t i = 0; i < scale.relations.size(); ++i) value_of[scale.relations[i]] = scale.values[i];
  double sq = 0.0;
  for (const Triple& t : test) {
    auto it = value_of.find(t.relation);
    if (it == value_of.end()) throw ArgumentError("rmse: test triple relation carries no rating value");
    const double err = predict_rating(model, t.head, t.tail, scale) - it->second;
    sq += err * err;
  }
  return std::sqrt(sq / static_cast<double>(test.size()));
}

std::size_t rank_tail(const EmbeddingModel& model, const Triple& triple, std::span<const EntityId> candidates) {
  if (std::find(candidates.begin(), candidates.end(), triple.tail) == candidates.end()) {
    throw ArgumentError("rank_tail: true tail is not among the candidates");
  }
  const double truth = score(model, triple);
  std::size_t higher = 0;
  Triple probe = triple;
  for (EntityId c : candidates) {
    probe.tail = c;
    if (score(model, probe) > truth) ++higher;
  }
  return higher + 1;
}

EvalReport rating_metrics(const EmbeddingModel& model, const KnowledgeGraph& graph, std::span<const Triple> test) {
  EvalReport r;
  r.task = EvalReport::Task::rating;
  r.rmse = rmse(model, test, RatingScale::from_graph(graph));
  r.triples = test.size();
  return r;
}

EvalReport link_metrics(const EmbeddingModel& model, const KnowledgeGraph& graph, std::span<const Triple> test,
                        const CandidatePolicy& policy) {
  if (test.empty()) throw ArgumentError("link_metrics: empty test set");

  // Tail kinds admissible per relation, from the whole graph plus the test set.
  std::vector<std::set<KindId>> tail_kinds(graph.relation_count());
  for (const Triple& t : graph.facts) tail_kinds[t.relation].insert(graph.entity_kind[t.tail]);
  for (const Triple& t : test) tail_kinds.at(t.relation).insert(graph.entity_kind.at(t.tail));

  std::map<std::set<KindId>, std::vector<EntityId>> pools;
  for (const auto& kinds : tail_kinds) {
    if (pools.contains(kinds)) continue;
    std::vector<EntityId> ids;
    for (EntityId e = 0; e < graph.entity_count(); ++e) {
      if (kinds.contains(graph.entity_kind[e])) ids.push_back(e);
    }
    pools.emplace(kinds, std::move(ids));
  }

  std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> known_tails;
  if (policy.filtered) {
    for (const Triple& t : graph.facts) known_tails[{t.head, t.relation}].push_back(t.tail);
  }

  EvalReport r;
  r.task = EvalReport::Task::ranking;
  r.triples = test.size();
  const Eigen::Index d = model.entities.cols();
  Vector query(d);
  for (const Triple& t : test) {
    const auto& pool = pools.at(tail_kinds[t.relation]);
    query = (model.entities.row(t.head).array() * model.relations.row(t.relation).array()).transpose();
    const double truth = model.entities.row(t.tail).dot(query);
    std::size_t higher = 0;
    bool present = false;
    for (EntityId c : pool) {
      if (c == t.tail) {
        present = true;
        continue;
      }
      if (model.entities.row(c).dot(query) > truth) ++higher;
    }
    if (!present) throw ArgumentError("link_metrics: true tail outside its candidate pool");
    if (policy.filtered) {
      auto it = known_tails.find({t.head, t.relation});
      if (it != known_tails.end()) {
        for (EntityId other : it->second) {
          if (other != t.tail && model.entities.row(other).dot(query) > truth) --higher;
        }
      }
    }
    const auto rank = static_cast<double>(higher + 1);
    r.mr += rank;
    r.mrr += 1.0 / rank;
    if (rank <= 1.0) r.hits_at_1 += 1.0;
    if (rank <= 10.0) r.hits_at_10 += 1.0;
  }
  const auto n = static_cast<double>(test.size());
  r.mr /= n;
  r.mrr /= n;
  r.hits_at_1 /= n;
  r.hits_at_10 /= n;
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  if (r.task == EvalReport::Task::rating) {
    return {{"task", "rating"}, {"rmse", r.rmse}, {"triples", r.triples}};
  }
  return {{"task", "ranking"},  {"hits_at_1", r.hits_at_1}, {"hits_at_10", r.hits_at_10},
          {"mrr", r.mrr},       {"mr", r.mr},               {"triples", r.triples}};
}

std::string csv_header(const EvalReport& r) {
  return r.task == EvalReport::Task::rating ? "task,rmse,triples" : "task,hits_at_1,hits_at_10,mrr,mr,triples";
}

std::string csv_row(const EvalReport& r) {
  std::ostringstream out;
  out.precision(10);
  if (r.task == EvalReport::Task::rating) {
    out << "rating," << r.rmse << ',' << r.triples;
  } else {
    out << "ranking," << r.hits_at_1 << ',' << r.hits_at_10 << ',' << r.mrr << ',' << r.mr << ',' << r.triples;
  }
  return out.str();
}

}  // namespace kgaudit

#pragma once

#include "kgaudit/graph_store.hpp"
#include "kgaudit/trainer.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace kgaudit {

// Relations that carry a numeric value (ratings), in relation-id order.
struct RatingScale {
  std::vector<RelationId> relations;
  std::vector<double> values;

  static RatingScale from_graph(const KnowledgeGraph& graph);
};

// Expected value of `values` under softmax(scores), max-shifted.
double expected_value(std::span<const double> scores, std::span<const double> values);

double predict_rating(const EmbeddingModel& model, EntityId user, EntityId item, const RatingScale& scale);

// Root mean squared error of predicted vs true ratings over `test`.
double rmse(const EmbeddingModel& model, std::span<const Triple> test, const RatingScale& scale);

// 1 + number of candidates scoring strictly higher than the true tail.
std::size_t rank_tail(const EmbeddingModel& model, const Triple& triple, std::span<const EntityId> candidates);

struct CandidatePolicy {
  // Filtered ranking drops other known true tails of (head, relation).
  bool filtered = false;
};

struct EvalReport {
  enum class Task { rating, ranking };
  Task task = Task::rating;
  double rmse = 0.0;
  double hits_at_1 = 0.0;
  double hits_at_10 = 0.0;
  double mrr = 0.0;
  double mr = 0.0;
  std::size_t triples = 0;
};

EvalReport rating_metrics(const EmbeddingModel& model, const KnowledgeGraph& graph, std::span<const Triple> test);

// Candidates for a triple are all entities of the kinds seen as tails of its
// relation in the graph.
EvalReport link_metrics(const EmbeddingModel& model, const KnowledgeGraph& graph, std::span<const Triple> test,
                        const CandidatePolicy& policy = {});

nlohmann::json to_json(const EvalReport& report);
std::string csv_header(const EvalReport& report);
std::string csv_row(const EvalReport& report);

}  // namespace kgaudit

#pragma once

// Post-hoc removal of attribute directions from entity embeddings.

#include "kgaudit/graph_store.hpp"
#include "kgaudit/numkit.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace kgaudit {

// Task quality of a full entity-embedding matrix (e.g. test RMSE).
using TaskMetric = std::function<double(const Matrix& entity_embeddings)>;

struct DebiasTrace {
  enum class Method { lp, lp_multi };
  Method method = Method::lp;
  // Index 0 holds the values before any removal; entry i the values after
  // iteration i.
  std::vector<double> probe_accuracy;
  std::vector<double> task_metric;  // empty when no metric was supplied
  std::vector<Vector> directions;   // unit hyperplane normals (lp only)
  int iterations = 0;
  bool stopped_early = false;
};

struct DebiasResult {
  Matrix embeddings;
  DebiasTrace trace;
};

struct LpOptions {
  int iterations = 10;
  std::uint64_t seed = 0;
  LogisticConfig logistic;
  double probe_train_fraction = 0.8;
  TaskMetric task_metric;
  // Overrides the trace's probe accuracy (default: held-out logistic accuracy
  // on the labeled rows). Receives the full entity-embedding matrix.
  std::function<double(const Matrix& entity_embeddings)> probe;
};

// Remove u's component along a unit direction, in place, for the given rows.
void project_out(Matrix& embeddings, std::span<const EntityId> rows, const Vector& unit_direction);

// Iteratively fit a binary logistic hyperplane on the labeled entities and
// project every target entity onto it. Stops early if the fitted weights
// vanish.
DebiasResult remove_lp(const Matrix& embeddings, std::span<const EntityId> labeled, std::span<const int> labels,
                       std::span<const EntityId> targets, const LpOptions& options);

// Shift each class's members by (mean of class centroids - class centroid).
DebiasResult remove_lp_multi(const Matrix& embeddings, std::span<const EntityId> labeled,
                             std::span<const int> labels, const LpOptions& options);

nlohmann::json to_json(const DebiasTrace& trace);
std::string trace_csv(const DebiasTrace& trace);

}  // namespace kgaudit

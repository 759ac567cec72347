#include "kgaudit/debias.hpp"

#include "kgaudit/detect.hpp"
#include "kgaudit/errors.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace kgaudit {

namespace {

Matrix gather(const Matrix& m, std::span<const EntityId> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw ArgumentError("entity id outside embedding matrix");
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

void check_labels(std::span<const EntityId> labeled, std::span<const int> labels) {
  if (labeled.size() != labels.size()) throw ArgumentError("debias: labeled entities and labels differ in length");
  if (labeled.empty()) throw ArgumentError("debias: no labeled entities");
}

void record(DebiasTrace& trace, const Matrix& emb, std::span<const EntityId> labeled, std::span<const int> labels,
            const LpOptions& options) {
  trace.probe_accuracy.push_back(options.probe ? options.probe(emb)
                                                : lc_accuracy(gather(emb, labeled), labels, options.probe_train_fraction,
                                                              options.seed, options.logistic));
  if (options.task_metric) trace.task_metric.push_back(options.task_metric(emb));
}

}  // namespace

void project_out(Matrix& embeddings, std::span<const EntityId> rows, const Vector& unit_direction) {
  for (EntityId e : rows) {
    auto row = embeddings.row(e);
    row -= row.dot(unit_direction) * unit_direction.transpose();
  }
}

DebiasResult remove_lp(const Matrix& embeddings, std::span<const EntityId> labeled, std::span<const int> labels,
                       std::span<const EntityId> targets, const LpOptions& options) {
  check_labels(labeled, labels);
  if (std::set<int>(labels.begin(), labels.end()).size() != 2) {
    throw ArgumentError("remove_lp: labels must take exactly two values");
  }
  if (options.iterations < 0) throw ArgumentError("remove_lp: negative iteration count");
  for (EntityId e : targets) {
    if (e >= static_cast<std::size_t>(embeddings.rows())) throw ArgumentError("remove_lp: target outside matrix");
  }

  DebiasResult out{embeddings, {}};
  out.trace.method = DebiasTrace::Method::lp;
  record(out.trace, out.embeddings, labeled, labels, options);
  for (int it = 0; it < options.iterations; ++it) {
    const LinearClassifier clf = fit_logistic(gather(out.embeddings, labeled), labels, options.logistic);
    const Vector w = clf.weights.row(0).transpose();
    const double norm = w.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      out.trace.stopped_early = true;
      break;
    }
    const Vector b = w / norm;
    project_out(out.embeddings, targets, b);
    out.trace.directions.push_back(b);
    ++out.trace.iterations;
    record(out.trace, out.embeddings, labeled, labels, options);
  }
  return out;
}

DebiasResult remove_lp_multi(const Matrix& embeddings, std::span<const EntityId> labeled,
                             std::span<const int> labels, const LpOptions& options) {
  check_labels(labeled, labels);
  const Eigen::Index d = embeddings.cols();
  std::map<int, std::pair<Vector, std::size_t>> centroids;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    auto [it, fresh] = centroids.try_emplace(labels[i], Vector::Zero(d), 0);
    it->second.first += embeddings.row(labeled[i]).transpose();
    ++it->second.second;
  }
  if (centroids.size() < 2) throw ArgumentError("remove_lp_multi: need at least two classes");
  Vector overall = Vector::Zero(d);
  for (auto& [label, c] : centroids) {
    c.first /= static_cast<double>(c.second);
    overall += c.first;
  }
  overall /= static_cast<double>(centroids.size());

  DebiasResult out{embeddings, {}};
  out.trace.method = DebiasTrace::Method::lp_multi;
  record(out.trace, out.embeddings, labeled, labels, options);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const Vector shift = overall - centroids.at(labels[i]).first;
    out.embeddings.row(labeled[i]) += shift.transpose();
  }
  out.trace.iterations = 1;
  record(out.trace, out.embeddings, labeled, labels, options);
  return out;
}

nlohmann::json to_json(const DebiasTrace& t) {
  nlohmann::json dirs = nlohmann::json::array();
  for (const Vector& v : t.directions) dirs.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  return {{"method", t.method == DebiasTrace::Method::lp ? "lp" : "lp-multi"},
          {"iterations", t.iterations},
          {"stopped_early", t.stopped_early},
          {"probe_accuracy", t.probe_accuracy},
          {"task_metric", t.task_metric},
          {"directions", dirs}};
}

std::string trace_csv(const DebiasTrace& t) {
  std::ostringstream out;
  out.precision(10);
  out << "iteration,probe_accuracy,task_metric\n";
  for (std::size_t i = 0; i < t.probe_accuracy.size(); ++i) {
    out << i << ',' << t.probe_accuracy[i] << ',';
    if (i < t.task_metric.size()) out << t.task_metric[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace kgaudit

#include "doctest.h"
#include "helpers.hpp"

#include "kgaudit/debias.hpp"
#include "kgaudit/errors.hpp"

#include <algorithm>
#include <map>

using namespace kgaudit;

namespace {

// Rows 0..59 are users (two classes offset along a hidden direction),
// rows 60..79 are items that must never change.
struct Fixture {
  Matrix emb;
  std::vector<EntityId> users;
  std::vector<int> labels;

  Fixture() {
    Rng rng(12);
    emb = test::random_matrix(rng, 80, 6);
    for (EntityId u = 0; u < 60; ++u) {
      users.push_back(u);
      const int label = static_cast<int>(u % 2);
      labels.push_back(label);
      emb(u, 1) += label == 1 ? 3.0 : -3.0;
      emb(u, 4) += label == 1 ? 1.0 : -1.0;
    }
  }
};

}  // namespace

TEST_CASE("remove_lp projects out each fitted direction") {
  const Fixture f;
  LpOptions opts;
  opts.iterations = 4;
  opts.seed = 3;
  int metric_calls = 0;
  opts.task_metric = [&](const Matrix&) { return static_cast<double>(++metric_calls); };
  const DebiasResult r = remove_lp(f.emb, f.users, f.labels, f.users, opts);

  CHECK(r.trace.method == DebiasTrace::Method::lp);
  CHECK(r.trace.iterations == 4);
  CHECK(r.trace.probe_accuracy.size() == 5);
  CHECK(r.trace.task_metric.size() == 5);
  CHECK(r.trace.probe_accuracy.front() > 0.9);
  CHECK(r.trace.probe_accuracy.back() < r.trace.probe_accuracy.front());

  // The final embeddings are orthogonal to every removed direction: each
  // later projection only subtracts multiples of later directions, which the
  // replay below accounts for step by step.
  Matrix replay = f.emb;
  for (const Vector& b : r.trace.directions) {
    CHECK(b.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const Matrix before = replay;
    project_out(replay, f.users, b);
    for (EntityId u : f.users) {
      CHECK(std::abs(replay.row(u).dot(b)) < 1e-10);
      CHECK(replay.row(u).norm() <= before.row(u).norm() + 1e-12);
    }
  }
  CHECK((replay - r.embeddings).norm() < 1e-12);

  // Non-target rows are bit-identical; the input is untouched.
  CHECK(r.embeddings.bottomRows(20) == f.emb.bottomRows(20));
}

TEST_CASE("a fixed projection is idempotent") {
  Fixture f;
  Vector b = Vector::Ones(6).normalized();
  Matrix once = f.emb;
  project_out(once, f.users, b);
  Matrix twice = once;
  project_out(twice, f.users, b);
  CHECK((once - twice).norm() < 1e-12);
}

TEST_CASE("remove_lp preconditions") {
  const Fixture f;
  LpOptions opts;
  std::vector<int> three = f.labels;
  three[0] = 2;
  CHECK_THROWS_AS(remove_lp(f.emb, f.users, three, f.users, opts), ArgumentError);
  CHECK_THROWS_AS(remove_lp(f.emb, f.users, std::vector<int>(60, 1), f.users, opts), ArgumentError);
  CHECK_THROWS_AS(remove_lp(f.emb, std::span(f.users).first(3), f.labels, f.users, opts), ArgumentError);
  const std::vector<EntityId> outside{500};
  CHECK_THROWS_AS(remove_lp(f.emb, f.users, f.labels, outside, opts), ArgumentError);
}

TEST_CASE("remove_lp_multi equalizes class centroids") {
  Fixture f;
  std::vector<int> labels;
  for (EntityId u : f.users) labels.push_back(static_cast<int>(u % 3));
  const DebiasResult r = remove_lp_multi(f.emb, f.users, labels, LpOptions{});
  CHECK(r.trace.method == DebiasTrace::Method::lp_multi);
  CHECK(r.trace.iterations == 1);
  CHECK(r.trace.probe_accuracy.size() == 2);

  std::map<int, Vector> before, after;
  std::map<int, int> count;
  for (std::size_t i = 0; i < f.users.size(); ++i) {
    auto& b = before.try_emplace(labels[i], Vector::Zero(6)).first->second;
    auto& a = after.try_emplace(labels[i], Vector::Zero(6)).first->second;
    b += f.emb.row(f.users[i]).transpose();
    a += r.embeddings.row(f.users[i]).transpose();
    ++count[labels[i]];
  }
  Vector grand = Vector::Zero(6);
  for (auto& [k, v] : before) grand += v / count[k];
  grand /= 3.0;
  for (auto& [k, v] : after) CHECK((v / count[k] - grand).norm() < 1e-9);

  // Within-class geometry is preserved exactly: members move by one shared offset.
  for (std::size_t i = 0; i < f.users.size(); ++i) {
    for (std::size_t j = i + 1; j < f.users.size(); ++j) {
      if (labels[i] != labels[j]) continue;
      const double d0 = (f.emb.row(f.users[i]) - f.emb.row(f.users[j])).norm();
      const double d1 = (r.embeddings.row(f.users[i]) - r.embeddings.row(f.users[j])).norm();
      CHECK(d1 == doctest::Approx(d0).epsilon(1e-12));
    }
  }
  CHECK(r.embeddings.bottomRows(20) == f.emb.bottomRows(20));
}

TEST_CASE("remove_lp_multi fixed point and hand-computed shift") {
  // Singleton classes at +v and -v both move to the origin.
  Matrix emb(2, 3);
  emb << 1, 2, 3, -1, -2, -3;
  const std::vector<EntityId> rows{0, 1};
  LpOptions opts;
  opts.probe = [](const Matrix&) { return 0.0; };
  const DebiasResult r = remove_lp_multi(emb, rows, std::vector<int>{0, 1}, opts);
  CHECK(r.embeddings.norm() < 1e-15);

  // Classes already sharing a centroid stay put.
  Matrix shared(4, 2);
  shared << 1, 0, -1, 0, 0, 1, 0, -1;
  const std::vector<EntityId> all{0, 1, 2, 3};
  const DebiasResult same = remove_lp_multi(shared, all, std::vector<int>{0, 0, 1, 1}, opts);
  CHECK(same.embeddings == shared);

  CHECK_THROWS_AS(remove_lp_multi(shared, all, std::vector<int>{1, 1, 1, 1}, opts), ArgumentError);
}

TEST_CASE("trace serialization") {
  DebiasTrace t;
  t.probe_accuracy = {0.7, 0.6};
  t.task_metric = {0.9, 0.95};
  t.iterations = 1;
  CHECK(trace_csv(t) == "iteration,probe_accuracy,task_metric\n0,0.7,0.9\n1,0.6,0.95\n");
  CHECK(to_json(t)["method"] == "lp");
}

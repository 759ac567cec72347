#include "doctest.h"
#include "helpers.hpp"

#include "kgaudit/errors.hpp"
#include "kgaudit/eval.hpp"

#include <algorithm>
#include <cmath>

using namespace kgaudit;

namespace {

const std::vector<double> kStars{1, 2, 3, 4, 5};

// Users 0..2, items 3..5, five rating relations with values 1..5.
KnowledgeGraph rating_graph() {
  KnowledgeGraph g;
  g.kinds = {"user", "movie"};
  for (int i = 0; i < 6; ++i) {
    g.entity_names.push_back("e" + std::to_string(i));
    g.entity_kind.push_back(i < 3 ? 0 : 1);
  }
  for (int r = 1; r <= 5; ++r) {
    g.relation_names.push_back("rating-" + std::to_string(r));
    g.relation_values.emplace_back(r);
  }
  return g;
}

}  // namespace

TEST_CASE("expected rating under softmax") {
  CHECK(expected_value(std::vector<double>(5, 0.7), kStars) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(std::abs(expected_value(std::vector<double>{0, 0, 0, 0, 100}, kStars) - 5.0) < 1e-10);
  // Weights 1, 1, 1, 1, 4 over a total of 8.
  const double oracle = (1.0 + 2.0 + 3.0 + 4.0 + 5.0 * 4.0) / 8.0;
  CHECK(std::abs(expected_value(std::vector<double>{0, 0, 0, 0, std::log(4.0)}, kStars) - oracle) < 1e-12);
  CHECK(oracle == 3.75);

  SUBCASE("shift invariance") {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> s(5), shifted(5);
      const double c = rng.uniform(-500, 500);
      for (int k = 0; k < 5; ++k) {
        s[k] = rng.normal() * 3;
        shifted[k] = s[k] + c;
      }
      const double v = expected_value(s, kStars);
      CHECK(v >= 1.0);
      CHECK(v <= 5.0);
      CHECK(expected_value(shifted, kStars) == doctest::Approx(v).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(expected_value(std::vector<double>{1, 2}, kStars), ArgumentError);
}

TEST_CASE("predict_rating and rmse use the model's relation scores") {
  const KnowledgeGraph g = rating_graph();
  Rng rng(2);
  const EmbeddingModel m{test::random_matrix(rng, 6, 4), test::random_matrix(rng, 5, 4)};
  const RatingScale scale = RatingScale::from_graph(g);
  CHECK(scale.values == kStars);

  const std::vector<Triple> t1{{0, 4, 3}, {1, 0, 4}, {2, 2, 5}};
  const std::vector<Triple> t2{{0, 1, 5}, {1, 3, 3}};
  auto oracle = [&](std::span<const Triple> ts) {
    double sq = 0.0;
    for (const Triple& t : ts) {
      std::vector<double> s;
      for (RelationId r = 0; r < 5; ++r) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += m.entities(t.head, k) * m.relations(r, k) * m.entities(t.tail, k);
        s.push_back(v);
      }
      const double p = expected_value(s, kStars);
      CHECK(predict_rating(m, t.head, t.tail, scale) == doctest::Approx(p).epsilon(1e-12));
      sq += (p - (t.relation + 1.0)) * (p - (t.relation + 1.0));
    }
    return std::sqrt(sq / static_cast<double>(ts.size()));
  };
  const double r1 = rmse(m, t1, scale), r2 = rmse(m, t2, scale);
  CHECK(r1 == doctest::Approx(oracle(t1)).epsilon(1e-12));
  std::vector<Triple> both = t1;
  both.insert(both.end(), t2.begin(), t2.end());
  // Mean-of-squares composition.
  CHECK(rmse(m, both, scale) == doctest::Approx(std::sqrt((3 * r1 * r1 + 2 * r2 * r2) / 5)).epsilon(1e-12));
  CHECK(rmse(m, both, scale) >= std::min(r1, r2));
  CHECK(rmse(m, both, scale) <= std::max(r1, r2));
  CHECK_THROWS_AS(rmse(m, std::vector<Triple>{}, scale), ArgumentError);

  SUBCASE("saturated scores reproduce ratings exactly") {
    // One-hot relation codes: rating-r scores 100 only for its own pattern.
    EmbeddingModel exact{Matrix::Zero(6, 5), Matrix::Identity(5, 5) * 100.0};
    exact.entities.topRows(3).setOnes();
    const std::vector<Triple> ts{{0, 2, 3}, {1, 4, 4}};
    exact.entities(3, 2) = 1;
    exact.entities(4, 4) = 1;
    CHECK(rmse(exact, ts, scale) < 1e-10);
  }
}

TEST_CASE("rank_tail counts strictly higher candidates") {
  EmbeddingModel m{Matrix::Zero(12, 1), Matrix::Ones(1, 1)};
  m.entities(0, 0) = 1.0;  // head
  for (int i = 1; i < 11; ++i) m.entities(i, 0) = i;  // tails score 1..10
  std::vector<EntityId> candidates;
  for (EntityId i = 1; i < 11; ++i) candidates.push_back(i);
  CHECK(rank_tail(m, {0, 0, 10}, candidates) == 1);
  CHECK(rank_tail(m, {0, 0, 1}, candidates) == 10);
  m.entities(11, 0) = 10.0;  // tie with the best: optimistic
  candidates.push_back(11);
  CHECK(rank_tail(m, {0, 0, 10}, candidates) == 1);
  CHECK_THROWS_AS(rank_tail(m, {0, 0, 0}, candidates), ArgumentError);

  SUBCASE("matches a full-sort oracle and is invariant to positive rescaling") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      EmbeddingModel toy{test::random_matrix(rng, 5, 3), test::random_matrix(rng, 1, 3)};
      const std::vector<EntityId> pool{0, 1, 2, 3, 4};
      const EntityId truth = static_cast<EntityId>(rng.uniform_index(5));
      std::vector<std::pair<double, EntityId>> scored;
      for (EntityId c : pool) scored.emplace_back(score(toy, {0, 0, c}), c);
      std::sort(scored.begin(), scored.end(), std::greater<>());
      const auto pos = std::find_if(scored.begin(), scored.end(), [&](auto& p) { return p.second == truth; });
      const std::size_t oracle = static_cast<std::size_t>(pos - scored.begin()) + 1;
      CHECK(rank_tail(toy, {0, 0, truth}, pool) == oracle);
      toy.relations *= 7.5;
      CHECK(rank_tail(toy, {0, 0, truth}, pool) == oracle);
    }
  }
}

TEST_CASE("link metrics on a perfect ranker and under filtering") {
  // Heads 0..2 (kind 0); tails 3..6 (kind 1); one relation.
  KnowledgeGraph g;
  g.kinds = {"paper", "domain"};
  for (int i = 0; i < 7; ++i) {
    g.entity_names.push_back("e" + std::to_string(i));
    g.entity_kind.push_back(i < 3 ? 0 : 1);
  }
  g.relation_names = {"in"};
  g.relation_values = {std::nullopt};
  EmbeddingModel m{Matrix::Zero(7, 4), Matrix::Ones(1, 4)};
  for (int t = 0; t < 4; ++t) m.entities(3 + t, t) = 1.0;
  m.entities(0, 0) = 1.0;  // head 0 prefers tail 3
  m.entities(1, 1) = 1.0;  // head 1 prefers tail 4
  m.entities(2, 2) = 1.0;  // head 2 prefers tail 5
  const std::vector<Triple> test{{0, 0, 3}, {1, 0, 4}, {2, 0, 5}};
  g.facts = test;
  const EvalReport perfect = link_metrics(m, g, test);
  CHECK(perfect.hits_at_1 == 1.0);
  CHECK(perfect.hits_at_10 == 1.0);
  CHECK(perfect.mrr == 1.0);
  CHECK(perfect.mr == 1.0);
  CHECK(perfect.triples == 3);

  // Head 0 now scores tail 4 above its true tail 3.
  m.entities(0, 1) = 2.0;
  g.facts.push_back({0, 0, 4});
  const std::vector<Triple> hard{{0, 0, 3}};
  CHECK(link_metrics(m, g, hard).mr == 2.0);
  CHECK(link_metrics(m, g, hard, CandidatePolicy{true}).mr == 1.0);

  const EvalReport r = link_metrics(m, g, test);
  CHECK(r.hits_at_1 <= r.hits_at_10);
  CHECK(r.mrr >= r.hits_at_1);
  CHECK(r.mrr >= 1.0 / r.mr - 1e-12);
  CHECK_THROWS_AS(link_metrics(m, g, std::vector<Triple>{}), ArgumentError);
}

TEST_CASE("report serialization") {
  EvalReport r;
  r.task = EvalReport::Task::ranking;
  r.hits_at_1 = 0.1;
  r.hits_at_10 = 0.3;
  r.mrr = 0.2;
  r.mr = 12.5;
  r.triples = 4;
  CHECK(to_json(r)["mr"] == 12.5);
  CHECK(csv_header(r) == "task,hits_at_1,hits_at_10,mrr,mr,triples");
  CHECK(csv_row(r) == "ranking,0.1,0.3,0.2,12.5,4");
}

#include "doctest.h"
#include "helpers.hpp"

#include "kgaudit/detect.hpp"
#include "kgaudit/errors.hpp"

#include <algorithm>
#include <numeric>

using namespace kgaudit;

TEST_CASE("permutation p-value formula") {
  const std::vector<double> permuted{1, 2, 5, 6};
  CHECK(permutation_p_value(5, permuted, Direction::higher_is_evidence) == doctest::Approx(3.0 / 5.0));
  CHECK(permutation_p_value(5, permuted, Direction::lower_is_evidence) == doctest::Approx(4.0 / 5.0));
  CHECK(permutation_p_value(10, permuted, Direction::higher_is_evidence) == doctest::Approx(1.0 / 5.0));
  CHECK(permutation_p_value(0, permuted, Direction::lower_is_evidence) == doctest::Approx(1.0 / 5.0));
  CHECK(permutation_p_value(3, {}, Direction::higher_is_evidence) == 1.0);
}

TEST_CASE("permutations are reproducible from seed and index") {
  const auto a = permutation_for(50, 9, 3);
  CHECK(a == permutation_for(50, 9, 3));
  CHECK(a != permutation_for(50, 9, 4));
  CHECK(a != permutation_for(50, 10, 3));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> identity(50);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  CHECK(sorted == identity);
}

TEST_CASE("permutation test on constructed statistics") {
  // sum_i i * perm[i] is uniquely maximized by the identity (rearrangement inequality).
  auto rearrangement = [](std::span<const std::size_t> perm) {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += static_cast<double>(i * perm[i]);
    return s;
  };
  const DetectionReport high =
      permutation_test(rearrangement, 30, 100, 1, Direction::higher_is_evidence, Probe::lc, "rearrangement");
  CHECK(high.permuted.size() == 100);
  CHECK(high.p_value == 1.0 / 101.0);
  const DetectionReport low =
      permutation_test(rearrangement, 30, 100, 1, Direction::lower_is_evidence, Probe::lc, "rearrangement");
  CHECK(low.p_value == 1.0);

  // A statistic blind to the ordering ties with every permutation.
  const DetectionReport flat = permutation_test([](std::span<const std::size_t>) { return 4.0; }, 10, 20, 2,
                                                Direction::higher_is_evidence, Probe::cca, "flat");
  CHECK(flat.p_value == 1.0);

  SUBCASE("matrix form permutes A-side rows only") {
    Rng rng(4);
    const Matrix a = test::random_matrix(rng, 12, 2);
    const Matrix u = a;
    const DetectionReport r = permutation_test(
        [](const Matrix& x, const Matrix& y) { return -(x - y).norm(); }, a, u, 50, 3,
        Direction::higher_is_evidence, Probe::ld, "neg_distance");
    CHECK(r.observed == 0.0);
    CHECK(r.p_value == 1.0 / 51.0);
    CHECK_THROWS_AS(permutation_test([](const Matrix&, const Matrix&) { return 0.0; }, a, u.topRows(3), 5, 3,
                                     Direction::higher_is_evidence, Probe::ld, "x"),
                    ArgumentError);
  }
}

TEST_CASE("retrieval accuracy") {
  const Matrix u = Matrix::Identity(5, 5);
  CHECK(retrieval_accuracy(u, u) == 1.0);
  Matrix shifted(5, 5);
  for (int i = 0; i < 5; ++i) shifted.row(i) = u.row((i + 1) % 5);
  CHECK(retrieval_accuracy(u, shifted) == 0.0);
  Matrix zero_row = u;
  zero_row.row(2).setZero();
  CHECK(retrieval_accuracy(u, zero_row) == doctest::Approx(0.8));
  // Rows 0 and 1 of the original are identical: ties go to the lowest index.
  Matrix dup = u;
  dup.row(1) = dup.row(0);
  CHECK(retrieval_accuracy(dup, dup) == doctest::Approx(0.8));
}

TEST_CASE("linear decomposition recovers exact attribute embeddings") {
  Rng rng(5);
  // Two attributes with 2 and 3 values: all 6 combinations.
  Matrix a = Matrix::Zero(6, 5);
  int row = 0;
  for (int g = 0; g < 2; ++g) {
    for (int h = 0; h < 3; ++h, ++row) {
      a(row, g) = 1;
      a(row, 2 + h) = 1;
    }
  }
  const Matrix x = test::random_matrix(rng, 5, 8);
  const Matrix u = a * x;
  const DecompositionResult r = detect_ld(a, u);
  CHECK(r.l2_loss < 1e-9);
  CHECK(r.mean_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.retrieval_accuracy == 1.0);
  CHECK((a * r.x - u).norm() < 1e-9);

  const LdDetection p = detect_ld_permuted(a, u + 0.01 * test::random_matrix(rng, 6, 8), 30, 7);
  CHECK(p.l2.direction == Direction::lower_is_evidence);
  CHECK(p.l2.permuted.size() == 30);
  // Permutations that are symmetries of the full factorial design keep the
  // column space, so ties with the observed loss are possible.
  CHECK(p.l2.observed <= *std::min_element(p.l2.permuted.begin(), p.l2.permuted.end()) + 1e-12);
  CHECK(p.l2.observed < *std::max_element(p.l2.permuted.begin(), p.l2.permuted.end()));
  CHECK(p.cosine.observed > *std::max_element(p.cosine.permuted.begin(), p.cosine.permuted.end()) - 1e-12);
  CHECK_THROWS_AS(detect_ld(a, u.topRows(4)), ArgumentError);
}

TEST_CASE("detect-LC on separable and on label-independent data") {
  Rng rng(6);
  const int n = 200;
  Matrix x = test::random_matrix(rng, n, 4);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 2;
    x(i, 0) += (i % 2 == 0 ? -4.0 : 4.0);
  }
  LcOptions opts;
  opts.permutations = 20;
  const DetectionReport r = detect_lc(x, labels, 11, opts);
  CHECK(r.observed == 1.0);
  CHECK(r.p_value == doctest::Approx(1.0 / 21.0));
  CHECK(to_json(r)["p_value"] == r.p_value);

  const Matrix noise = test::random_matrix(rng, n, 4);
  const DetectionReport null = detect_lc(noise, labels, 11, opts);
  CHECK(null.observed < 0.7);
  CHECK(null.p_value > 0.05);

  SUBCASE("preconditions") {
    std::vector<int> few(n, 0);
    for (int i = 0; i < 9; ++i) few[static_cast<std::size_t>(i)] = 1;
    CHECK_THROWS_AS(detect_lc(x, few, 1), ArgumentError);
    CHECK_THROWS_AS(detect_lc(x, std::vector<int>(n, 0), 1), ArgumentError);
    CHECK_THROWS_AS(detect_lc(x.topRows(10), labels, 1), ArgumentError);
    CHECK_THROWS_AS(lc_accuracy(x, labels, 1.5, 1), ArgumentError);
  }
}

TEST_CASE("label helpers") {
  const std::vector<int> ages{0, 1, 2, 5, 6, 1};
  CHECK(binarize(ages, std::vector<int>{5, 6}) == std::vector<int>{0, 0, 0, 1, 1, 0});
  CHECK(majority_rate(ages) == doctest::Approx(2.0 / 6.0));
  CHECK_THROWS_AS(majority_rate(std::vector<int>{}), ArgumentError);
}

TEST_CASE("detect-CCA separates correlated from independent views") {
  Rng rng(8);
  const int n = 300;
  Matrix a = test::random_matrix(rng, n, 3);
  Matrix u = test::random_matrix(rng, n, 6);
  Matrix linked = u;
  linked.col(0) += 2.0 * a.col(0) - a.col(2);
  const CcaDetection hit = detect_cca(a, linked, std::nullopt, 1, 100);
  CHECK(hit.component_pcc.size() == 3);
  CHECK(hit.component_pcc.front() == doctest::Approx(hit.cca.correlations(0)).epsilon(1e-6));
  CHECK(hit.report.p_value == doctest::Approx(1.0 / 101.0));
  CHECK(hit.permuted_component_pcc.size() == 100);

  const CcaDetection miss = detect_cca(a, u, std::nullopt, 1, 100);
  CHECK(miss.report.p_value > 0.05);
}

TEST_CASE("detection CSV rows") {
  DetectionReport r;
  r.probe = Probe::ld;
  r.statistic = "l2_loss";
  r.observed = 0.5;
  r.permuted = {1.0, 2.0};
  r.p_value = 1.0 / 3.0;
  r.direction = Direction::lower_is_evidence;
  const std::string row = csv_row(r, "age-gender");
  CHECK(row.rfind("age-gender,ld,l2_loss,0.5,2,1,2,", 0) == 0);
  CHECK(row.substr(row.size() - 5) == "lower");
  const std::string header = csv_header_detection();
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}

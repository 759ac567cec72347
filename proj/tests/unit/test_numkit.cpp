#include "doctest.h"
#include "helpers.hpp"

#include "kgaudit/errors.hpp"
#include "kgaudit/numkit.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace kgaudit;

namespace {

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

void check_penrose(const Matrix& a) {
  const Matrix p = pinv(a);
  REQUIRE(p.rows() == a.cols());
  REQUIRE(p.cols() == a.rows());
  CHECK(rel(a * p * a, a) < 1e-9);
  CHECK(rel(p * a * p, p) < 1e-9);
  const Matrix ap = a * p;
  const Matrix pa = p * a;
  CHECK(rel(ap.transpose(), ap) < 1e-9);
  CHECK(rel(pa.transpose(), pa) < 1e-9);
}

// Logistic objective C * sum softplus(-s (w x + b)) + w^2 / 2 for 1-D inputs.
double logistic_objective(const std::vector<double>& x, const std::vector<int>& y, double w, double b, double c) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (y[i] == 1 ? 1.0 : -1.0) * (w * x[i] + b);
    loss += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
  }
  return c * loss + 0.5 * w * w;
}

}  // namespace

TEST_CASE("pinv satisfies the four Penrose identities") {
  Rng rng(101);
  const std::pair<int, int> shapes[] = {{1, 1}, {3, 5}, {7, 2}, {20, 20}, {50, 30}, {30, 50}, {50, 50}};
  for (auto [m, n] : shapes) {
    CAPTURE(m);
    CAPTURE(n);
    check_penrose(test::random_matrix(rng, m, n));
  }
  SUBCASE("rank deficient") {
    for (int r : {1, 5, 17}) {
      const Matrix a = test::random_matrix(rng, 50, r) * test::random_matrix(rng, r, 40);
      check_penrose(a);
    }
  }
  SUBCASE("zero matrix") {
    const Matrix p = pinv(Matrix::Zero(4, 3));
    CHECK(p.rows() == 3);
    CHECK(p.norm() == 0.0);
  }
}

TEST_CASE("least squares matches the normal equations on full-rank input") {
  Rng rng(7);
  const Matrix a = test::random_matrix(rng, 40, 6);
  const Matrix u = test::random_matrix(rng, 40, 3);
  const LeastSquaresResult r = solve_least_squares(a, u);
  const Matrix ata = a.transpose() * a;
  const Matrix normal = ata.ldlt().solve(a.transpose() * u);
  CHECK(rel(r.solution, normal) < 1e-9);
  CHECK(r.residual_norm == doctest::Approx((a * normal - u).norm()).epsilon(1e-9));
  SUBCASE("exact systems have zero residual") {
    const Matrix exact = a * test::random_matrix(rng, 6, 4);
    CHECK(solve_least_squares(a, exact).residual_norm < 1e-9);
  }
  SUBCASE("row mismatch") { CHECK_THROWS_AS(solve_least_squares(a, Matrix::Zero(3, 2)), ArgumentError); }
}

TEST_CASE("binary logistic regression agrees with a grid-search oracle") {
  // 20 overlapping 1-D points; the objective is strictly convex.
  std::vector<double> x;
  std::vector<int> y;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const int label = i % 2;
    x.push_back((label == 1 ? 0.8 : -0.4) + rng.normal());
    y.push_back(label);
  }
  for (double c : {0.1, 1.0, 10.0}) {
    CAPTURE(c);
    LogisticConfig cfg;
    cfg.inverse_l2_strength = c;
    cfg.tol = 1e-10;
    Matrix xm(20, 1);
    for (int i = 0; i < 20; ++i) xm(i, 0) = x[static_cast<std::size_t>(i)];
    const LinearClassifier clf = fit_logistic(xm, y, cfg);
    REQUIRE(clf.binary());
    const double w = clf.weights(0, 0);
    const double b = clf.bias(0);

    // Coarse grid then two refinements around the best cell.
    double bw = 0.0, bb = 0.0, best = logistic_objective(x, y, 0.0, 0.0, c);
    double span = 8.0;
    for (int level = 0; level < 3; ++level) {
      const double cw = bw, cb = bb;
      for (int i = -200; i <= 200; ++i) {
        for (int j = -200; j <= 200; ++j) {
          const double tw = cw + span * i / 200.0, tb = cb + span * j / 200.0;
          const double f = logistic_objective(x, y, tw, tb, c);
          if (f < best) {
            best = f;
            bw = tw;
            bb = tb;
          }
        }
      }
      span /= 50.0;
    }
    CHECK(w == doctest::Approx(bw).epsilon(1e-3).scale(1.0));
    CHECK(b == doctest::Approx(bb).epsilon(1e-3).scale(1.0));
    CHECK(logistic_objective(x, y, w, b, c) <= best + 1e-9);
  }
}

TEST_CASE("logistic loss traces never increase") {
  Rng rng(17);
  Matrix x = test::random_matrix(rng, 200, 5);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) y[static_cast<std::size_t>(i)] = (x(i, 0) + 0.3 * rng.normal() > 0) ? 2 : 0;
  const LinearClassifier clf = fit_logistic(x, y);
  CHECK(clf.classes == std::vector<int>{0, 2});
  CHECK(clf.converged);
  for (const auto& trace : clf.loss_traces) {
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  }
  CHECK(clf.accuracy(x, y) > 0.85);
}

TEST_CASE("one-vs-rest separates well-spaced clusters") {
  Rng rng(5);
  Matrix x(90, 2);
  std::vector<int> y(90);
  const double centers[3][2] = {{-5, 0}, {5, 0}, {0, 6}};
  for (int i = 0; i < 90; ++i) {
    const int k = i % 3;
    x(i, 0) = centers[k][0] + 0.5 * rng.normal();
    x(i, 1) = centers[k][1] + 0.5 * rng.normal();
    y[static_cast<std::size_t>(i)] = k + 10;
  }
  const LinearClassifier clf = fit_logistic(x, y);
  CHECK(clf.weights.rows() == 3);
  CHECK(clf.decision_function(x).cols() == 3);
  CHECK(clf.accuracy(x, y) == 1.0);
  CHECK_THROWS_AS(fit_logistic(x, std::vector<int>(90, 1)), ArgumentError);
  CHECK_THROWS_AS(fit_logistic(x, std::vector<int>(5, 1)), ArgumentError);
}

TEST_CASE("first canonical correlation matches a 2-D angle-grid oracle") {
  Rng rng(23);
  const int n = 300;
  Matrix a(n, 2), u(n, 2);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    a(i, 0) = z + 0.8 * rng.normal();
    a(i, 1) = 0.5 * z + rng.normal();
    u(i, 0) = -z + rng.normal();
    u(i, 1) = 0.3 * a(i, 1) + rng.normal();
  }
  const CcaResult r = cca(a, u);
  REQUIRE(r.correlations.size() == 2);
  CHECK(r.correlations(0) >= r.correlations(1));

  const Matrix ac = a.rowwise() - a.colwise().mean();
  const Matrix uc = u.rowwise() - u.colwise().mean();
  const Eigen::Matrix2d saa = ac.transpose() * ac, suu = uc.transpose() * uc, sau = ac.transpose() * uc;
  auto corr = [&](double alpha, double beta) {
    const Eigen::Vector2d p(std::cos(alpha), std::sin(alpha)), q(std::cos(beta), std::sin(beta));
    return (p.transpose() * sau * q)(0) / std::sqrt((p.transpose() * saa * p)(0) * (q.transpose() * suu * q)(0));
  };
  double best = 0.0;
  const int steps = 1000;
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < steps; ++j) {
      best = std::max(best, std::abs(corr(std::numbers::pi * i / steps, std::numbers::pi * j / steps)));
    }
  }
  CHECK(r.correlations(0) == doctest::Approx(best).epsilon(1e-3));

  // The returned weights realize the reported correlation.
  const Vector pa = a * r.weights_a.col(0);
  const Vector pu = u * r.weights_u.col(0);
  CHECK(pearson(pa, pu) == doctest::Approx(r.correlations(0)).epsilon(1e-6));

  CHECK_THROWS_AS(cca(a, u, std::size_t{3}), ArgumentError);
  CHECK_THROWS_AS(cca(a, u.topRows(10)), ArgumentError);
}

TEST_CASE("pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 6, 8, 10};
  const std::vector<double> z{5, 4, 3, 2, 1};
  CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-15));
  // Centered cross-products: sum dx*dw = 8, sum dx^2 = sum dw^2 = 10.
  const std::vector<double> w{1, 3, 2, 5, 4};
  CHECK(pearson(x, w) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(pearson(x, std::vector<double>(5, 1.0)), NumericError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), ArgumentError);
}

TEST_CASE("matrix serialization round-trips bit-exactly") {
  Rng rng(9);
  const Matrix m = test::random_matrix(rng, 4, 7);
  std::stringstream buf;
  write_matrix(buf, m);
  CHECK(buf.str().size() == 16 + 4 * 7 * 8);
  const Matrix back = read_matrix(buf);
  CHECK(back == m);
  std::stringstream truncated(buf.str().substr(0, 30));
  CHECK_THROWS(read_matrix(truncated));

  std::ostringstream csv;
  write_matrix_csv(csv, Matrix::Identity(2, 2));
  CHECK(csv.str().find(',') != std::string::npos);
  CHECK(all_finite(m));
  Matrix bad = m;
  bad(1, 1) = std::nan("");
  CHECK_FALSE(all_finite(bad));
}

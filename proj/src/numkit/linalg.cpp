#include "kgaudit/numkit.hpp"

#include "kgaudit/errors.hpp"

#include <algorithm>
#include <cmath>

namespace kgaudit {

bool all_finite(const Matrix& m) noexcept { return m.allFinite(); }

Matrix pinv(const Matrix& m, double tolerance) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  if (!m.allFinite()) throw NumericError("pinv: input contains non-finite entries");

  const Eigen::MatrixXd dense = m;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("pinv: SVD did not converge");

  const Vector& s = svd.singularValues();
  const double cutoff = tolerance * (s.size() > 0 ? s(0) : 0.0);
  Vector s_inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) s_inv(i) = 1.0 / s(i);
  }
  Matrix out = svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
  if (!out.allFinite()) throw NumericError("pinv: result is not finite");
  return out;
}

LeastSquaresResult solve_least_squares(const Matrix& a, const Matrix& u) {
  if (a.rows() != u.rows()) {
    throw ArgumentError("solve_least_squares: A has " + std::to_string(a.rows()) +
                        " rows but U has " + std::to_string(u.rows()));
  }
  LeastSquaresResult r;
  r.solution = pinv(a) * u;
  r.residual_norm = (a * r.solution - u).norm();
  return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw ArgumentError("pearson: need at least two observations");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw NumericError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(const Vector& x, const Vector& y) {
  return pearson(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                 std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

namespace {

Eigen::MatrixXd centered(const Matrix& m) {
  Eigen::MatrixXd c = m;
  c.rowwise() -= c.colwise().mean();
  return c;
}

// Symmetric inverse square root; eigenvalues at or below the numerical floor
// are dropped (pseudo-inverse square root).
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  if (eig.info() != Eigen::Success) throw NumericError("cca: eigendecomposition failed");
  const Vector& lambda = eig.eigenvalues();
  const double top = lambda.size() > 0 ? lambda.maxCoeff() : 0.0;
  const double floor = std::max(top, 0.0) * 1e-14;
  Vector d = Vector::Zero(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > floor && lambda(i) > 0.0) d(i) = 1.0 / std::sqrt(lambda(i));
  }
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

void add_ridge(Eigen::MatrixXd& c, double ridge) {
  if (ridge <= 0.0 || c.rows() == 0) return;
  const double scale = c.trace() / static_cast<double>(c.rows());
  c.diagonal().array() += ridge * (scale > 0.0 ? scale : 1.0);
}

}  // namespace

CcaResult cca(const Matrix& a, const Matrix& u, std::optional<std::size_t> k, double ridge) {
  if (a.rows() != u.rows()) throw ArgumentError("cca: A and U must have the same row count");
  if (a.rows() < 2) throw ArgumentError("cca: need at least two rows");
  if (ridge < 0.0) throw ArgumentError("cca: ridge must be non-negative");
  const auto max_k = static_cast<std::size_t>(std::min(a.cols(), u.cols()));
  const std::size_t comps = k.value_or(max_k);
  if (comps == 0 || comps > max_k) {
    throw ArgumentError("cca: k must be in [1, " + std::to_string(max_k) + "]");
  }

  const Eigen::MatrixXd ac = centered(a);
  const Eigen::MatrixXd uc = centered(u);
  const double denom = static_cast<double>(a.rows() - 1);
  Eigen::MatrixXd caa = ac.transpose() * ac / denom;
  Eigen::MatrixXd cuu = uc.transpose() * uc / denom;
  const Eigen::MatrixXd cau = ac.transpose() * uc / denom;
  add_ridge(caa, ridge);
  add_ridge(cuu, ridge);

  const Eigen::MatrixXd wa = inverse_sqrt(caa);
  const Eigen::MatrixXd wu = inverse_sqrt(cuu);
  const Eigen::MatrixXd t = wa * cau * wu;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("cca: SVD did not converge");

  const auto kk = static_cast<Eigen::Index>(comps);
  CcaResult r;
  r.weights_a = wa * svd.matrixU().leftCols(kk);
  r.weights_u = wu * svd.matrixV().leftCols(kk);
  r.correlations = svd.singularValues().head(kk).cwiseMax(0.0).cwiseMin(1.0);
  return r;
}

}  // namespace kgaudit

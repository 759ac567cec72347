#include "kgaudit/numkit.hpp"

#include "kgaudit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace kgaudit {

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) noexcept {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct BinaryFit {
  Vector w;
  double b = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;
};

// Objective: C * sum_i softplus(-s_i z_i) + ||w||^2 / 2, s_i in {-1, +1}.
// Damped Newton with Armijo backtracking, so the objective never increases.
class BinaryProblem {
 public:
  BinaryProblem(const Eigen::MatrixXd& x, const Vector& sign, double c)
      : x_(x), sign_(sign), c_(c), d_(x.cols()) {}

  double objective(const Vector& theta) const {
    const Vector z = margins(theta);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(-sign_(i) * z(i));
    return c_ * loss + 0.5 * theta.head(d_).squaredNorm();
  }

  void gradient_hessian(const Vector& theta, Vector& grad, Eigen::MatrixXd& hess) const {
    const Vector z = margins(theta);
    const Eigen::Index n = x_.rows();
    Vector resid(n);
    Vector curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(z(i));
      const double target = sign_(i) > 0.0 ? 1.0 : 0.0;
      resid(i) = c_ * (p - target);
      curv(i) = c_ * p * (1.0 - p);
    }
    grad.resize(d_ + 1);
    grad.head(d_) = x_.transpose() * resid + theta.head(d_);
    grad(d_) = resid.sum();

    hess.setZero(d_ + 1, d_ + 1);
    const Eigen::MatrixXd weighted = x_.array().colwise() * curv.array();
    hess.topLeftCorner(d_, d_) = x_.transpose() * weighted;
    hess.topLeftCorner(d_, d_).diagonal().array() += 1.0;
    const Vector cross = weighted.colwise().sum().transpose();
    hess.block(0, d_, d_, 1) = cross;
    hess.block(d_, 0, 1, d_) = cross.transpose();
    hess(d_, d_) = curv.sum();
  }

 private:
  Vector margins(const Vector& theta) const {
    return (x_ * theta.head(d_)).array() + theta(d_);
  }

  const Eigen::MatrixXd& x_;
  const Vector& sign_;
  double c_;
  Eigen::Index d_;
};

BinaryFit fit_binary(const Eigen::MatrixXd& x, const Vector& sign, const LogisticConfig& cfg) {
  const Eigen::Index d = x.cols();
  BinaryProblem problem(x, sign, cfg.inverse_l2_strength);

  Vector theta = Vector::Zero(d + 1);
  double f = problem.objective(theta);
  BinaryFit fit;
  fit.trace.push_back(f);

  Vector grad;
  Eigen::MatrixXd hess;
  for (int it = 0; it < cfg.max_iter; ++it) {
    problem.gradient_hessian(theta, grad, hess);
    if (grad.norm() <= cfg.tol) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Vector step = ldlt.info() == Eigen::Success ? Vector(-ldlt.solve(grad)) : Vector(-grad);
    double slope = grad.dot(step);
    if (!step.allFinite() || slope >= 0.0) {
      step = -grad;
      slope = -grad.squaredNorm();
    }

    double t = 1.0;
    double f_new = problem.objective(theta + step);
    while (f_new > f + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      f_new = problem.objective(theta + t * step);
    }
    ++fit.iterations;
    if (!(f_new <= f)) break;  // no descent possible at working precision
    const bool stalled = (f - f_new) <= 1e-15 * std::max(1.0, std::abs(f));
    theta += t * step;
    f = f_new;
    fit.trace.push_back(f);
    if (stalled) {
      problem.gradient_hessian(theta, grad, hess);
      fit.converged = grad.norm() <= cfg.tol;
      break;
    }
  }
  if (!fit.converged) {
    problem.gradient_hessian(theta, grad, hess);
    fit.converged = grad.norm() <= cfg.tol;
  }
  fit.w = theta.head(d);
  fit.b = theta(d);
  return fit;
}

}  // namespace

Matrix LinearClassifier::decision_function(const Matrix& x) const {
  if (x.cols() != weights.cols()) throw ArgumentError("decision_function: feature count mismatch");
  Matrix scores = x * weights.transpose();
  scores.rowwise() += bias.transpose();
  return scores;
}

std::vector<int> LinearClassifier::predict(const Matrix& x) const {
  const Matrix scores = decision_function(x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (binary()) {
      out[static_cast<std::size_t>(i)] = scores(i, 0) > 0.0 ? classes[1] : classes[0];
    } else {
      Eigen::Index best = 0;
      scores.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(best)];
    }
  }
  return out;
}

double LinearClassifier::accuracy(const Matrix& x, std::span<const int> y) const {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ArgumentError("accuracy: size mismatch");
  if (y.empty()) throw ArgumentError("accuracy: empty input");
  const auto pred = predict(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

LinearClassifier fit_logistic(const Matrix& x, std::span<const int> y, const LogisticConfig& cfg) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw ArgumentError("fit_logistic: X has " + std::to_string(x.rows()) + " rows but " +
                        std::to_string(y.size()) + " labels");
  }
  if (!x.allFinite()) throw ArgumentError("fit_logistic: non-finite features");
  if (cfg.inverse_l2_strength <= 0.0) throw ArgumentError("fit_logistic: C must be positive");

  std::map<int, std::size_t> counts;
  for (int label : y) ++counts[label];
  if (counts.size() < 2) throw ArgumentError("fit_logistic: need at least two classes");

  LinearClassifier clf;
  for (const auto& [label, n] : counts) clf.classes.push_back(label);

  const Eigen::MatrixXd dense = x;
  const std::size_t problems = clf.binary() ? 1 : clf.classes.size();
  clf.weights = Matrix::Zero(static_cast<Eigen::Index>(problems), x.cols());
  clf.bias = Vector::Zero(static_cast<Eigen::Index>(problems));

  for (std::size_t p = 0; p < problems; ++p) {
    const int positive = clf.binary() ? clf.classes[1] : clf.classes[p];
    Vector sign(x.rows());
    for (std::size_t i = 0; i < y.size(); ++i) {
      sign(static_cast<Eigen::Index>(i)) = y[i] == positive ? 1.0 : -1.0;
    }
    BinaryFit fit = fit_binary(dense, sign, cfg);
    clf.weights.row(static_cast<Eigen::Index>(p)) = fit.w.transpose();
    clf.bias(static_cast<Eigen::Index>(p)) = fit.b;
    clf.converged = clf.converged && fit.converged;
    clf.iterations += fit.iterations;
    clf.loss_traces.push_back(std::move(fit.trace));
  }
  return clf;
}

}  // namespace kgaudit

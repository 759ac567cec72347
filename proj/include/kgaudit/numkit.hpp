#pragma once

// Dense kernels shared by detection and debiasing: pseudo-inverse and least
// squares, canonical correlation, logistic regression, Pearson correlation,
// and matrix serialization. All values are 64-bit floats.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kgaudit {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Pseudo-inverse and least squares

// Moore-Penrose pseudo-inverse by SVD. Singular values below
// tolerance * (largest singular value) are treated as zero.
Matrix pinv(const Matrix& m, double tolerance = 1e-12);

struct LeastSquaresResult {
  Matrix solution;             // minimum-norm X
  double residual_norm = 0.0;  // ||A X - U||_F
};

LeastSquaresResult solve_least_squares(const Matrix& a, const Matrix& u);

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticConfig {
  double inverse_l2_strength = 1.0;  // C: loss is C * sum(log-loss) + ||w||^2 / 2
  double tol = 1e-4;                 // on the Euclidean gradient norm
  int max_iter = 1000;
  std::uint64_t seed = 0;            // kept for replay records; the solver is deterministic
};

// Binary: one weight row, predicts classes[1] when w.x + b > 0.
// Multiclass: one-vs-rest, one row per class, predicts the argmax score.
struct LinearClassifier {
  std::vector<int> classes;
  Matrix weights;
  Vector bias;
  bool converged = true;
  int iterations = 0;  // summed over one-vs-rest subproblems
  // Objective value per optimizer iteration, one trace per subproblem.
  std::vector<std::vector<double>> loss_traces;

  bool binary() const noexcept { return classes.size() == 2; }
  // n x 1 for binary, n x K for one-vs-rest.
  Matrix decision_function(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
  double accuracy(const Matrix& x, std::span<const int> y) const;
};

LinearClassifier fit_logistic(const Matrix& x, std::span<const int> y,
                              const LogisticConfig& config = {});

// ---------------------------------------------------------------------------
// Canonical correlation

struct CcaResult {
  Matrix weights_a;     // cols(A) x k
  Matrix weights_u;     // cols(U) x k
  Vector correlations;  // k values, descending, each in [0, 1]
};

// Columns are centered; within-set covariances get ridge * (trace / p) added
// on the diagonal. k defaults to min(cols(A), cols(U)).
CcaResult cca(const Matrix& a, const Matrix& u, std::optional<std::size_t> k = std::nullopt,
              double ridge = 1e-8);

double pearson(std::span<const double> x, std::span<const double> y);
double pearson(const Vector& x, const Vector& y);

// ---------------------------------------------------------------------------
// Serialization: u64 rows, u64 cols, then rows*cols f64, all little-endian.

void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const Matrix& m);
Matrix load_matrix(const std::string& path);
void write_matrix_csv(std::ostream& out, const Matrix& m);

bool all_finite(const Matrix& m) noexcept;

}  // namespace kgaudit

#include "kgaudit/detect.hpp"

#include "kgaudit/errors.hpp"
#include "kgaudit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace kgaudit {

namespace {

constexpr std::uint64_t kPermutationStream = 0x7065726D;  // "perm"
constexpr std::uint64_t kSplitStream = 0x73706C74;        // "splt"

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

double permutation_p_value(double observed, std::span<const double> permuted, Direction direction) {
  std::size_t extreme = 0;
  for (double v : permuted) {
    const bool at_least = direction == Direction::higher_is_evidence ? v >= observed : v <= observed;
    if (at_least || std::isnan(v)) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + permuted.size());
}

std::vector<std::size_t> permutation_for(std::size_t rows, std::uint64_t seed, std::size_t index) {
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(Rng::derive_seed(seed, {kPermutationStream, index}));
  rng.shuffle(std::span<std::size_t>(perm));
  return perm;
}

DetectionReport permutation_test(const PermutedStatistic& statistic, std::size_t rows, std::size_t permutations,
                                 std::uint64_t seed, Direction direction, Probe probe, std::string statistic_name) {
  DetectionReport r;
  r.probe = probe;
  r.statistic = std::move(statistic_name);
  r.direction = direction;
  r.seed = seed;
  std::vector<std::size_t> identity(rows);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  r.observed = statistic(identity);
  r.permuted.reserve(permutations);
  for (std::size_t k = 0; k < permutations; ++k) r.permuted.push_back(statistic(permutation_for(rows, seed, k)));
  r.p_value = permutation_p_value(r.observed, r.permuted, direction);
  return r;
}

DetectionReport permutation_test(const std::function<double(const Matrix&, const Matrix&)>& statistic,
                                 const Matrix& a_side, const Matrix& u_side, std::size_t permutations,
                                 std::uint64_t seed, Direction direction, Probe probe,
                                 std::string statistic_name) {
  if (a_side.rows() != u_side.rows()) throw ArgumentError("permutation_test: A-side and U-side rows differ");
  return permutation_test(
      [&](std::span<const std::size_t> perm) { return statistic(take_rows(a_side, perm), u_side); },
      static_cast<std::size_t>(a_side.rows()), permutations, seed, direction, probe, std::move(statistic_name));
}

// ---------------------------------------------------------------------------
// detect-LC

double lc_accuracy(const Matrix& embeddings, std::span<const int> labels, double train_fraction,
                   std::uint64_t seed, const LogisticConfig& logistic) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw ArgumentError("detect_lc: embeddings and labels differ in length");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ArgumentError("detect_lc: split ratio outside (0, 1)");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive_seed(seed, {kSplitStream}));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw ArgumentError("detect_lc: split leaves an empty side");

  const std::span<const std::size_t> train_idx(order.data(), n_train);
  const std::span<const std::size_t> test_idx(order.data() + n_train, n - n_train);
  std::vector<int> y_train, y_test;
  for (std::size_t i : train_idx) y_train.push_back(labels[i]);
  for (std::size_t i : test_idx) y_test.push_back(labels[i]);
  const LinearClassifier clf = fit_logistic(take_rows(embeddings, train_idx), y_train, logistic);
  return clf.accuracy(take_rows(embeddings, test_idx), y_test);
}

DetectionReport detect_lc(const Matrix& embeddings, std::span<const int> labels, std::uint64_t seed,
                          const LcOptions& options) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw ArgumentError("detect_lc: need at least two classes");
  for (const auto& [label, count] : counts) {
    if (count < options.min_rows_per_class) {
      throw ArgumentError("detect_lc: class " + std::to_string(label) + " has only " + std::to_string(count) +
                          " rows (need " + std::to_string(options.min_rows_per_class) + ")");
    }
  }
  const std::vector<int> base(labels.begin(), labels.end());
  std::vector<int> shuffled(base.size());
  return permutation_test(
      [&](std::span<const std::size_t> perm) {
        for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = base[perm[i]];
        return lc_accuracy(embeddings, shuffled, options.train_fraction, seed, options.logistic);
      },
      base.size(), options.permutations, seed, Direction::higher_is_evidence, Probe::lc, "accuracy");
}

std::vector<int> binarize(std::span<const int> labels, std::span<const int> positive) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = std::find(positive.begin(), positive.end(), labels[i]) != positive.end() ? 1 : 0;
  }
  return out;
}

double majority_rate(std::span<const int> labels) {
  if (labels.empty()) throw ArgumentError("majority_rate: empty labels");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  std::size_t top = 0;
  for (const auto& [l, c] : counts) top = std::max(top, c);
  return static_cast<double>(top) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// detect-CCA

namespace {

std::vector<double> projected_pcc(const Matrix& a, const Matrix& u, const CcaResult& r) {
  const Matrix pa = a * r.weights_a;
  const Matrix pu = u * r.weights_u;
  std::vector<double> out;
  for (Eigen::Index c = 0; c < pa.cols(); ++c) {
    const Vector x = pa.col(c);
    const Vector y = pu.col(c);
    // A component with no variance on either side carries no correlation.
    const bool flat = (x.array() - x.mean()).matrix().norm() <= 1e-300 ||
                      (y.array() - y.mean()).matrix().norm() <= 1e-300;
    out.push_back(flat ? 0.0 : pearson(x, y));
  }
  return out;
}

}  // namespace

CcaDetection detect_cca(const Matrix& attributes, const Matrix& embeddings, std::optional<std::size_t> k,
                        std::uint64_t seed, std::size_t permutations, double ridge) {
  if (attributes.rows() != embeddings.rows()) throw ArgumentError("detect_cca: row counts differ");
  CcaDetection out;
  out.cca = cca(attributes, embeddings, k, ridge);
  out.component_pcc = projected_pcc(attributes, embeddings, out.cca);

  out.report = permutation_test(
      [&](std::span<const std::size_t> perm) {
        const bool identity = std::is_sorted(perm.begin(), perm.end());
        if (identity) return out.component_pcc.front();
        const Matrix a = take_rows(attributes, perm);
        const CcaResult r = cca(a, embeddings, k, ridge);
        auto pcc = projected_pcc(a, embeddings, r);
        const double first = pcc.front();
        out.permuted_component_pcc.push_back(std::move(pcc));
        return first;
      },
      static_cast<std::size_t>(attributes.rows()), permutations, seed, Direction::higher_is_evidence, Probe::cca,
      "first_component_pcc");
  return out;
}

// ---------------------------------------------------------------------------
// detect-LD

double mean_row_cosine(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("mean_row_cosine: shape mismatch");
  if (a.rows() == 0) throw ArgumentError("mean_row_cosine: empty input");
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double na = a.row(i).norm();
    const double nb = b.row(i).norm();
    if (na > 0.0 && nb > 0.0) total += a.row(i).dot(b.row(i)) / (na * nb);
  }
  return total / static_cast<double>(a.rows());
}

double retrieval_accuracy(const Matrix& original, const Matrix& reconstructed) {
  if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
    throw ArgumentError("retrieval_accuracy: shape mismatch");
  }
  const Eigen::Index n = original.rows();
  if (n == 0) throw ArgumentError("retrieval_accuracy: empty input");
  Vector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = original.row(j).norm();
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ni = reconstructed.row(i).norm();
    if (ni == 0.0) continue;
    Eigen::Index best = -1;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (norms(j) == 0.0) continue;
      const double c = reconstructed.row(i).dot(original.row(j)) / (ni * norms(j));
      if (c > best_cos) {
        best_cos = c;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

DecompositionResult detect_ld(const Matrix& indicators, const Matrix& group_means) {
  if (indicators.rows() != group_means.rows()) throw ArgumentError("detect_ld: row counts differ");
  const LeastSquaresResult ls = solve_least_squares(indicators, group_means);
  const Matrix recon = indicators * ls.solution;
  DecompositionResult r;
  r.x = ls.solution;
  r.l2_loss = ls.residual_norm;
  r.mean_cosine = mean_row_cosine(recon, group_means);
  r.retrieval_accuracy = retrieval_accuracy(group_means, recon);
  return r;
}

LdDetection detect_ld_permuted(const Matrix& indicators, const Matrix& group_means, std::size_t permutations,
                               std::uint64_t seed) {
  if (indicators.rows() != group_means.rows()) throw ArgumentError("detect_ld: row counts differ");
  LdDetection out;
  out.observed = detect_ld(indicators, group_means);

  std::vector<DecompositionResult> runs;
  runs.reserve(permutations);
  for (std::size_t k = 0; k < permutations; ++k) {
    const auto perm = permutation_for(static_cast<std::size_t>(indicators.rows()), seed, k);
    runs.push_back(detect_ld(take_rows(indicators, perm), group_means));
  }
  auto fill = [&](DetectionReport& r, const char* name, Direction dir, double observed, auto member) {
    r.probe = Probe::ld;
    r.statistic = name;
    r.direction = dir;
    r.seed = seed;
    r.observed = observed;
    for (const auto& run : runs) r.permuted.push_back(run.*member);
    r.p_value = permutation_p_value(r.observed, r.permuted, dir);
  };
  fill(out.l2, "l2_loss", Direction::lower_is_evidence, out.observed.l2_loss, &DecompositionResult::l2_loss);
  fill(out.cosine, "mean_cosine", Direction::higher_is_evidence, out.observed.mean_cosine,
       &DecompositionResult::mean_cosine);
  fill(out.retrieval, "retrieval_accuracy", Direction::higher_is_evidence, out.observed.retrieval_accuracy,
       &DecompositionResult::retrieval_accuracy);
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Probe probe) {
  switch (probe) {
    case Probe::lc: return "lc";
    case Probe::cca: return "cca";
    case Probe::ld: return "ld";
  }
  return "lc";
}

nlohmann::json to_json(const DetectionReport& r) {
  return {{"probe", to_string(r.probe)},
          {"statistic", r.statistic},
          {"observed", r.observed},
          {"permuted", r.permuted},
          {"permutations", r.permuted.size()},
          {"p_value", r.p_value},
          {"direction", r.direction == Direction::higher_is_evidence ? "higher-is-evidence" : "lower-is-evidence"},
          {"seed", r.seed}};
}

nlohmann::json to_json(const DecompositionResult& r) {
  return {{"l2_loss", r.l2_loss},
          {"mean_cosine", r.mean_cosine},
          {"retrieval_accuracy", r.retrieval_accuracy},
          {"attribute_rows", r.x.rows()},
          {"dim", r.x.cols()}};
}

std::string csv_header_detection() {
  return "label,probe,statistic,observed,permutations,permuted_min,permuted_max,p_value,direction";
}

std::string csv_row(const DetectionReport& r, const std::string& label) {
  std::ostringstream out;
  out.precision(10);
  const auto [lo, hi] = r.permuted.empty() ? std::pair{std::nan(""), std::nan("")}
                                           : std::pair{*std::min_element(r.permuted.begin(), r.permuted.end()),
                                                       *std::max_element(r.permuted.begin(), r.permuted.end())};
  out << label << ',' << to_string(r.probe) << ',' << r.statistic << ',' << r.observed << ',' << r.permuted.size()
      << ',' << lo << ',' << hi << ',' << r.p_value << ','
      << (r.direction == Direction::higher_is_evidence ? "higher" : "lower");
  return out.str();
}

}  // namespace kgaudit

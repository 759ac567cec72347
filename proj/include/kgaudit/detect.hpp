#pragma once

// Leakage probes over trained embeddings (logistic classifier, canonical
// correlation, linear decomposition) and the row-permutation significance
// test shared by all three.

#include "kgaudit/numkit.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kgaudit {

enum class Probe { lc, cca, ld };
enum class Direction { higher_is_evidence, lower_is_evidence };

struct DetectionReport {
  Probe probe = Probe::lc;
  std::string statistic;
  double observed = 0.0;
  std::vector<double> permuted;
  double p_value = 1.0;
  Direction direction = Direction::higher_is_evidence;
  std::uint64_t seed = 0;
};

// (1 + #{permuted at least as extreme as observed}) / (1 + count).
double permutation_p_value(double observed, std::span<const double> permuted, Direction direction);

// Statistic evaluated with the A-side rows reordered: row i of the permuted
// A-side is original row permutation[i]. The identity gives the observed value.
using PermutedStatistic = std::function<double(std::span<const std::size_t> permutation)>;

// Permutation k uses a stream derived from (seed, k) alone.
std::vector<std::size_t> permutation_for(std::size_t rows, std::uint64_t seed, std::size_t index);

DetectionReport permutation_test(const PermutedStatistic& statistic, std::size_t rows, std::size_t permutations,
                                 std::uint64_t seed, Direction direction, Probe probe, std::string statistic_name);

DetectionReport permutation_test(const std::function<double(const Matrix& a_side, const Matrix& u_side)>& statistic,
                                 const Matrix& a_side, const Matrix& u_side, std::size_t permutations,
                                 std::uint64_t seed, Direction direction, Probe probe,
                                 std::string statistic_name);

// ---------------------------------------------------------------------------
// detect-LC

struct LcOptions {
  double train_fraction = 0.8;
  LogisticConfig logistic;
  std::size_t permutations = 0;
  std::size_t min_rows_per_class = 10;
};

// Held-out accuracy of a logistic classifier trained on a seeded
// train/test split of the rows.
double lc_accuracy(const Matrix& embeddings, std::span<const int> labels, double train_fraction,
                   std::uint64_t seed, const LogisticConfig& logistic = {});

DetectionReport detect_lc(const Matrix& embeddings, std::span<const int> labels, std::uint64_t seed,
                          const LcOptions& options = {});

// 1 where the label is in `positive`, else 0.
std::vector<int> binarize(std::span<const int> labels, std::span<const int> positive);

// Share of the most frequent label.
double majority_rate(std::span<const int> labels);

// ---------------------------------------------------------------------------
// detect-CCA

struct CcaDetection {
  CcaResult cca;
  std::vector<double> component_pcc;  // PCC of each projected pair
  std::vector<std::vector<double>> permuted_component_pcc;
  DetectionReport report;  // statistic: first-component PCC
};

CcaDetection detect_cca(const Matrix& attributes, const Matrix& embeddings, std::optional<std::size_t> k,
                        std::uint64_t seed, std::size_t permutations = 0, double ridge = 1e-8);

// ---------------------------------------------------------------------------
// detect-LD

struct DecompositionResult {
  Matrix x;                 // attribute embeddings
  double l2_loss = 0.0;     // ||A X - U||_F
  double mean_cosine = 0.0;
  double retrieval_accuracy = 0.0;
};

DecompositionResult detect_ld(const Matrix& indicators, const Matrix& group_means);

// Fraction of rows whose reconstruction is cosine-nearest to its own row
// (ties go to the lowest index; zero-norm reconstructions are misses).
double retrieval_accuracy(const Matrix& original, const Matrix& reconstructed);

double mean_row_cosine(const Matrix& a, const Matrix& b);

struct LdDetection {
  DecompositionResult observed;
  DetectionReport l2;         // lower is evidence
  DetectionReport cosine;     // higher is evidence
  DetectionReport retrieval;  // higher is evidence
};

LdDetection detect_ld_permuted(const Matrix& indicators, const Matrix& group_means, std::size_t permutations,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization

std::string to_string(Probe probe);
nlohmann::json to_json(const DetectionReport& report);
nlohmann::json to_json(const DecompositionResult& result);
std::string csv_header_detection();
std::string csv_row(const DetectionReport& report, const std::string& label);

}  // namespace kgaudit

#pragma once

// Bilinear-diagonal (DistMult) embeddings trained by plain SGD over
// negative-sampled triples, with optional first-moment fairness penalties.

#include "kgaudit/graph_store.hpp"
#include "kgaudit/numkit.hpp"
#include "kgaudit/rng.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgaudit {

struct EmbeddingModel {
  Matrix entities;   // |V| x d
  Matrix relations;  // |R| x d, the diagonal of each bilinear form

  std::size_t dim() const noexcept { return static_cast<std::size_t>(entities.cols()); }
};

enum class LossKind { softmax, margin };
enum class FmMode { off, two_class, multi_class };
// How the spread term of the multi-class penalty visits a class: every member
// (default) or only its lowest-id member present.
enum class FmSpreadTerm { member_sum, representative };

struct FmConfig {
  FmMode mode = FmMode::off;
  std::string attribute;
  double sigma = 0.0;  // two-class weight on the mean-difference norm
  double theta = 1.0;  // multi-class weight on the base loss
  // Two-class values; empty means "the attribute's two declared values".
  std::string value_m;
  std::string value_n;
  // Multi-class: optional subset of values; empty means all declared values.
  std::vector<std::string> values;
  FmSpreadTerm spread_term = FmSpreadTerm::member_sum;
};

struct TrainConfig {
  std::size_t dim = 64;
  double learning_rate = 0.01;
  int epochs = 300;
  std::size_t neg_entities = 10;
  std::size_t neg_relations = 4;
  LossKind loss = LossKind::softmax;
  double margin = 6.0;
  FmConfig fm;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // results are identical for any thread count
  std::filesystem::path checkpoint_dir;  // empty: no periodic checkpoints
  int checkpoint_every = 50;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

// Row-sparse gradient for one parameter table.
class RowGradients {
 public:
  explicit RowGradients(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  // Zero-initialized on first touch.
  double* row(std::uint32_t id);
  const double* find(std::uint32_t id) const;
  std::span<const std::uint32_t> rows() const noexcept { return rows_; }
  const double* slot(std::size_t i) const noexcept { return values_.data() + i * dim_; }
  void clear();
  // Adds `other` row by row in its insertion order.
  void merge(const RowGradients& other);

 private:
  std::size_t dim_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
  std::vector<std::uint32_t> rows_;
  std::vector<double> values_;
};

struct SparseGradient {
  RowGradients entities;
  RowGradients relations;

  explicit SparseGradient(std::size_t dim = 0) : entities(dim), relations(dim) {}
  void clear() {
    entities.clear();
    relations.clear();
  }
  void merge(const SparseGradient& other) {
    entities.merge(other.entities);
    relations.merge(other.relations);
  }
  // params -= learning_rate * gradient
  void apply(EmbeddingModel& model, double learning_rate) const;
};

// ---------------------------------------------------------------------------
// Scores and losses. Loss functions return the value and, when `grad` is
// given, accumulate `scale` times their gradient into it.

double score(const EmbeddingModel& model, const Triple& triple);

double softmax_loss(const EmbeddingModel& model, const Triple& fact, std::span<const Triple> corruptions,
                    SparseGradient* grad = nullptr, double scale = 1.0);

double margin_loss(const EmbeddingModel& model, const Triple& fact, std::span<const Triple> corruptions,
                   double margin, SparseGradient* grad = nullptr, double scale = 1.0);

// sigma * || mean(group_m) - mean(group_n) ||_2.
double fm_penalty(const EmbeddingModel& model, std::span<const EntityId> group_m,
                  std::span<const EntityId> group_n, double sigma, SparseGradient* grad = nullptr);

struct FmMultiValue {
  double total = 0.0;    // theta * base_loss + spread + separation
  double spread = 0.0;   // sum_i (1/N_i) sum_{u in c_i} (||u - mu_i||^2 - 1)^2
  double separation = 0.0;  // (1/N_pairs) sum_{i<j} ||mu_i - mu_j||^2
};

// Gradient covers the two penalty terms only; the caller scales its own
// base-loss gradient by theta.
FmMultiValue fm_multi_penalty(const EmbeddingModel& model, std::span<const std::vector<EntityId>> groups,
                              double theta, double base_loss, SparseGradient* grad = nullptr,
                              FmSpreadTerm spread_term = FmSpreadTerm::member_sum);

// ---------------------------------------------------------------------------
// Negative sampling

class NegativeSampler {
 public:
  // `known_facts` are the triples corruptions must avoid (normally the
  // training facts).
  NegativeSampler(const KnowledgeGraph& graph, std::span<const Triple> known_facts);

  // k_e entity corruptions (head or tail by fair coin, replaced by an entity
  // of the same kind) then k_r relation corruptions (a different relation).
  // Collisions with known facts are redrawn up to 100 times, then kept.
  // Replaces the contents of `out`.
  // Safe to call concurrently with distinct `rng` and `out`.
  void sample(const Triple& fact, std::size_t k_entities, std::size_t k_relations, Rng& rng,
              std::vector<Triple>& out) const;

  std::size_t collisions_kept() const noexcept { return collisions_kept_.load(); }

  static constexpr int kMaxRedraws = 100;

 private:
  const KnowledgeGraph& graph_;
  std::vector<std::vector<EntityId>> by_kind_;
  std::unordered_set<Triple, TripleHash> known_;
  mutable std::atomic<std::size_t> collisions_kept_{0};
};

std::vector<Triple> sample_negatives(const Triple& fact, const KnowledgeGraph& graph, std::size_t k_entities,
                                     std::size_t k_relations, Rng& rng);

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_loss;
  // Full-group penalty value recomputed at each epoch end (empty when fm is off).
  std::vector<double> epoch_fm_penalty;
  std::size_t collisions_kept = 0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

EmbeddingModel init_model(std::size_t entities, std::size_t relations, std::size_t dim, std::uint64_t seed);

TrainResult train(const KnowledgeGraph& graph, const Split& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Checkpoint directory: embeddings.bin (entity matrix then relation matrix,
// each dimension-prefixed) and config.json.
void save_checkpoint(const std::filesystem::path& dir, const EmbeddingModel& model, const TrainConfig& config);
EmbeddingModel load_checkpoint(const std::filesystem::path& dir, TrainConfig* config = nullptr);

}  // namespace kgaudit

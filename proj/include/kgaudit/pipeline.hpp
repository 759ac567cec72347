#pragma once

// Configuration, stage operations and the cached end-to-end audit pipeline
// behind the command-line tool.

#include "kgaudit/debias.hpp"
#include "kgaudit/detect.hpp"
#include "kgaudit/eval.hpp"
#include "kgaudit/graph_store.hpp"
#include "kgaudit/synthetic.hpp"
#include "kgaudit/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kgaudit {

std::string_view tool_version() noexcept;

// ---------------------------------------------------------------------------
// Configuration

// Sectioned key = value text. `[a.b]` nests objects; `[probe NAME]` and
// `[debias NAME]` append an object with "name": NAME to the "probes" /
// "debias" arrays. Values parse as bool, integer, float, comma list, or
// string. `#` and `;` start comment lines.
nlohmann::json parse_ini(std::string_view text, const std::string& source = "<ini>");

// .json files are read verbatim; anything else goes through parse_ini.
nlohmann::json read_config_file(const std::filesystem::path& path);

enum class DatasetKind { movielens, kg20c, synthetic };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::filesystem::path path;
  SyntheticSpec synthetic;
  double test_ratio = 0.1;
  // Keep only this fraction of `subsample_kind` entities (1 keeps all).
  double subsample = 1.0;
  std::string subsample_kind;
};

struct ProbeSpec {
  std::string name;
  Probe probe = Probe::lc;
  std::vector<std::string> attributes;  // lc uses the first
  // lc only: values mapped to class 1, all others to 0 (empty: keep classes).
  std::vector<std::string> positive;
  bool balanced = false;  // lc only: subsample every class to the minority size
};

enum class DebiasMethod { lp, lp_multi, fm, fm_multi };

struct DebiasSpec {
  std::string name;
  DebiasMethod method = DebiasMethod::lp;
  std::string attribute;
  std::vector<std::string> positive;  // lp: binarization of the attribute
  int iterations = 10;
  double sigma = 0.0;
  double theta = 1.0;
  std::string value_m;
  std::string value_n;
  FmSpreadTerm spread_term = FmSpreadTerm::member_sum;
};

struct PipelineConfig {
  DatasetConfig dataset;
  TrainConfig train;
  std::vector<ProbeSpec> probes;
  std::vector<DebiasSpec> debias;
  std::size_t permutations = 100;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::filesystem::path cache;  // empty: $KGAUDIT_CACHE, else <output>/.cache

  void validate() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);
// Canonical form (output and cache paths excluded, so the hash only covers
// what affects results).
nlohmann::json to_json(const PipelineConfig& config);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
std::string config_hash(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Stage operations (shared with the single-verb commands)

KnowledgeGraph load_dataset(const DatasetConfig& config, std::uint64_t seed);

void save_split(const std::filesystem::path& path, const Split& split);
Split load_split(const std::filesystem::path& path);

// Probe target rows and labels derived from the graph for one attribute.
struct LabeledEntities {
  std::vector<EntityId> entities;
  std::vector<int> labels;
  std::vector<EntityId> kind_members;  // every entity of the attribute's kind
};

LabeledEntities labeled_entities(const KnowledgeGraph& graph, const std::string& attribute,
                                 std::span<const std::string> positive = {});

struct ProbeOutcome {
  nlohmann::json report;
  // lc: held-out accuracy; cca: first-component PCC; ld: retrieval accuracy.
  double headline = 0.0;
  std::vector<std::string> csv_rows;
};

ProbeOutcome run_probe(const KnowledgeGraph& graph, const Matrix& entity_embeddings, const ProbeSpec& probe,
                       std::size_t permutations, std::uint64_t seed);

EvalReport evaluate(const KnowledgeGraph& graph, const EmbeddingModel& model, const Split& split);
// The metric tracked in trade-off curves: RMSE for rating graphs, Hits@10 otherwise.
double task_metric(const EvalReport& report);

struct DebiasOutcome {
  EmbeddingModel model;
  std::optional<DebiasTrace> trace;  // post-hoc methods only
  std::vector<double> train_loss;    // retraining methods only
};

// `probe`, when given, replaces the default probe accuracy in lp traces.
DebiasOutcome run_debias(const KnowledgeGraph& graph, const Split& split, const EmbeddingModel& baseline,
                         const TrainConfig& train, const DebiasSpec& spec, std::uint64_t seed,
                         const std::function<double(const Matrix&)>& probe = {});

// ---------------------------------------------------------------------------
// Pipeline

struct StageRecord {
  std::string name;
  std::string key;
  bool cache_hit = false;
  double seconds = 0.0;
  std::string status;  // "ok" or "failed"
  std::string error;
};

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::uint64_t seed = 0;
  std::uint64_t train_seed = 0;
  std::vector<StageRecord> stages;
  std::vector<ArtifactRecord> artifacts;
  bool complete = false;
};

nlohmann::json to_json(const RunManifest& manifest);

// Runs every stage, writes reports and manifest.json under config.output.
// Stage failures are recorded (complete = false) rather than thrown.
RunManifest run_pipeline(const PipelineConfig& config);

}  // namespace kgaudit

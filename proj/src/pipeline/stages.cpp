#include "kgaudit/errors.hpp"
#include "kgaudit/pipeline.hpp"
#include "kgaudit/rng.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace kgaudit {

namespace {

constexpr char kSplitMagic[8] = {'K', 'G', 'S', 'P', 'L', 'I', 'T', '1'};
static_assert(std::endian::native == std::endian::little, "split files are little-endian");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("split", 0, "truncated split file");
  return v;
}

void write_triples(std::ostream& out, std::span<const Triple> ts) {
  write_u64(out, ts.size());
  for (const Triple& t : ts) {
    const std::uint32_t v[3] = {t.head, t.relation, t.tail};
    out.write(reinterpret_cast<const char*>(v), sizeof v);
  }
}

std::vector<Triple> read_triples(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::vector<Triple> ts;
  ts.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t v[3];
    if (!in.read(reinterpret_cast<char*>(v), sizeof v)) throw ParseError("split", 0, "truncated split file");
    ts.push_back({v[0], v[1], v[2]});
  }
  return ts;
}

Matrix gather(const Matrix& m, std::span<const EntityId> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::string kind_of(const KnowledgeGraph& graph, std::span<const std::string> attributes) {
  const auto a = graph.find_attribute(attributes.front());
  if (!a) throw ArgumentError("unknown attribute '" + attributes.front() + "'");
  return graph.kinds[graph.attributes[*a].kind];
}

}  // namespace

KnowledgeGraph load_dataset(const DatasetConfig& config, std::uint64_t seed) {
  KnowledgeGraph g;
  switch (config.kind) {
    case DatasetKind::movielens: g = ingest_movielens(config.path); break;
    case DatasetKind::kg20c: g = ingest_kg20c(config.path); break;
    case DatasetKind::synthetic: g = generate_synthetic(config.synthetic); break;
  }
  if (config.subsample < 1.0) {
    g = subsample_kind(g, config.subsample_kind, config.subsample, Rng::derive_seed(seed, {0x73756273}));  // "subs"
  }
  return g;
}

void save_split(const std::filesystem::path& path, const Split& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(kSplitMagic, sizeof kSplitMagic);
  write_u64(out, split.seed);
  write_u64(out, split.predefined ? 1 : 0);
  write_triples(out, split.train);
  write_triples(out, split.test);
  if (!out) throw ArgumentError("failed writing " + path.string());
}

Split load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kSplitMagic, sizeof magic) != 0) {
    throw ParseError(path.string(), 0, "not a split file");
  }
  Split s;
  s.seed = read_u64(in);
  s.predefined = read_u64(in) != 0;
  s.train = read_triples(in);
  s.test = read_triples(in);
  return s;
}

LabeledEntities labeled_entities(const KnowledgeGraph& graph, const std::string& attribute,
                                 std::span<const std::string> positive) {
  const std::size_t a = graph.attribute_index(attribute);
  const AttributeSchema& schema = graph.attributes[a];
  std::set<int> positive_ids;
  for (const auto& v : positive) {
    const auto it = std::find(schema.values.begin(), schema.values.end(), v);
    if (it == schema.values.end()) throw ArgumentError("attribute '" + attribute + "' has no value '" + v + "'");
    positive_ids.insert(static_cast<int>(it - schema.values.begin()));
  }
  LabeledEntities out;
  out.kind_members = graph.entities_of_kind(schema.kind);
  for (EntityId e : out.kind_members) {
    const std::int32_t v = graph.attribute_values[a][e];
    if (v == kMissingValue) continue;
    out.entities.push_back(e);
    out.labels.push_back(positive.empty() ? v : (positive_ids.contains(v) ? 1 : 0));
  }
  return out;
}

ProbeOutcome run_probe(const KnowledgeGraph& graph, const Matrix& entity_embeddings, const ProbeSpec& probe,
                       std::size_t permutations, std::uint64_t seed) {
  if (probe.attributes.empty()) throw ArgumentError("probe '" + probe.name + "' names no attribute");
  ProbeOutcome out;
  nlohmann::json head{{"name", probe.name}, {"attributes", probe.attributes}};
  switch (probe.probe) {
    case Probe::lc: {
      LabeledEntities le = labeled_entities(graph, probe.attributes.front(), probe.positive);
      std::vector<int> labels = le.labels;
      std::vector<EntityId> rows = le.entities;
      if (probe.balanced) {
        const auto keep = balanced_subsample(le.labels, Rng::derive_seed(seed, {0x62616C}));  // "bal"
        labels.clear();
        rows.clear();
        for (std::size_t i : keep) {
          labels.push_back(le.labels[i]);
          rows.push_back(le.entities[i]);
        }
      }
      LcOptions opts;
      opts.permutations = permutations;
      const DetectionReport r = detect_lc(gather(entity_embeddings, rows), labels, seed, opts);
      out.headline = r.observed;
      out.report = head;
      out.report["positive"] = probe.positive;
      out.report["balanced"] = probe.balanced;
      out.report["rows"] = rows.size();
      out.report["classes"] = std::set<int>(labels.begin(), labels.end()).size();
      out.report["majority_rate"] = majority_rate(labels);
      out.report["test"] = to_json(r);
      out.csv_rows.push_back(csv_row(r, probe.name));
      break;
    }
    case Probe::cca: {
      const AttributeMatrix am = build_attribute_matrix(graph, probe.attributes, kind_of(graph, probe.attributes));
      const CcaDetection r = detect_cca(am.data, gather(entity_embeddings, am.rows), std::nullopt, seed, permutations);
      out.headline = r.report.observed;
      out.report = head;
      out.report["rows"] = am.rows.size();
      out.report["components"] = r.component_pcc.size();
      out.report["canonical_correlations"] = r.cca.correlations;
      out.report["component_pcc"] = r.component_pcc;
      out.report["permuted_component_pcc"] = r.permuted_component_pcc;
      out.report["test"] = to_json(r.report);
      out.csv_rows.push_back(csv_row(r.report, probe.name));
      break;
    }
    case Probe::ld: {
      const AttributeMatrix am = build_attribute_matrix(graph, probe.attributes, kind_of(graph, probe.attributes));
      const GroupMeans gm = group_mean_embeddings(entity_embeddings, am);
      const LdDetection r = detect_ld_permuted(gm.indicators, gm.means, permutations, seed);
      out.headline = r.observed.retrieval_accuracy;
      out.report = head;
      out.report["groups"] = gm.means.rows();
      out.report["member_counts"] = gm.member_counts;
      out.report["observed"] = to_json(r.observed);
      out.report["tests"] = {to_json(r.l2), to_json(r.cosine), to_json(r.retrieval)};
      for (const DetectionReport* t : {&r.l2, &r.cosine, &r.retrieval}) out.csv_rows.push_back(csv_row(*t, probe.name));
      break;
    }
  }
  return out;
}

EvalReport evaluate(const KnowledgeGraph& graph, const EmbeddingModel& model, const Split& split) {
  const bool rated = std::any_of(graph.relation_values.begin(), graph.relation_values.end(),
                                 [](const auto& v) { return v.has_value(); });
  return rated ? rating_metrics(model, graph, split.test) : link_metrics(model, graph, split.test);
}

double task_metric(const EvalReport& report) {
  return report.task == EvalReport::Task::rating ? report.rmse : report.hits_at_10;
}

DebiasOutcome run_debias(const KnowledgeGraph& graph, const Split& split, const EmbeddingModel& baseline,
                         const TrainConfig& train_config, const DebiasSpec& spec, std::uint64_t seed,
                         const std::function<double(const Matrix&)>& probe) {
  DebiasOutcome out;
  switch (spec.method) {
    case DebiasMethod::lp:
    case DebiasMethod::lp_multi: {
      const LabeledEntities le = labeled_entities(graph, spec.attribute, spec.positive);
      LpOptions opts;
      opts.iterations = spec.iterations;
      opts.seed = seed;
      opts.probe = probe;
      opts.task_metric = [&](const Matrix& e) {
        return task_metric(evaluate(graph, EmbeddingModel{e, baseline.relations}, split));
      };
      DebiasResult r = spec.method == DebiasMethod::lp
                           ? remove_lp(baseline.entities, le.entities, le.labels, le.kind_members, opts)
                           : remove_lp_multi(baseline.entities, le.entities, le.labels, opts);
      out.model = EmbeddingModel{std::move(r.embeddings), baseline.relations};
      out.trace = std::move(r.trace);
      break;
    }
    case DebiasMethod::fm:
    case DebiasMethod::fm_multi: {
      TrainConfig t = train_config;
      t.checkpoint_dir.clear();
      t.fm.attribute = spec.attribute;
      if (spec.method == DebiasMethod::fm) {
        t.fm.mode = FmMode::two_class;
        t.fm.sigma = spec.sigma;
        t.fm.value_m = spec.value_m;
        t.fm.value_n = spec.value_n;
      } else {
        t.fm.mode = FmMode::multi_class;
        t.fm.theta = spec.theta;
        t.fm.spread_term = spec.spread_term;
      }
      TrainResult r = train(graph, split, t);
      out.model = std::move(r.model);
      out.train_loss = std::move(r.epoch_loss);
      break;
    }
  }
  return out;
}

}  // namespace kgaudit

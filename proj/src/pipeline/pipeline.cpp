#include "kgaudit/errors.hpp"
#include "kgaudit/pipeline.hpp"
#include "kgaudit/rng.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>

namespace kgaudit {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
  if (!out) throw ArgumentError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_text(path)); }

std::string key_of(const nlohmann::json& parts) { return sha256_hex(parts.dump()).substr(0, 32); }

fs::path cache_root(const PipelineConfig& config) {
  if (!config.cache.empty()) return config.cache;
  if (const char* env = std::getenv("KGAUDIT_CACHE"); env != nullptr && *env != '\0') return env;
  return config.output / ".cache";
}

std::string loss_csv(std::span<const double> losses, std::span<const double> fm) {
  std::ostringstream out;
  out.precision(12);
  out << "epoch,loss" << (fm.empty() ? "" : ",fm_penalty") << '\n';
  for (std::size_t e = 0; e < losses.size(); ++e) {
    out << e + 1 << ',' << losses[e];
    if (e < fm.size()) out << ',' << fm[e];
    out << '\n';
  }
  return out.str();
}

// A cache entry is a directory that exists only once complete: stages build
// in a private temporary directory and rename it into place, so concurrent
// processes sharing the cache never observe partial output.
class StageCache {
 public:
  explicit StageCache(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  fs::path entry(const std::string& stage, const std::string& key) const { return root_ / (stage + "-" + key); }

  bool has(const std::string& stage, const std::string& key) const { return fs::is_directory(entry(stage, key)); }

  template <class Build>
  void build(const std::string& stage, const std::string& key, Build&& fn) {
    std::random_device rd;
    const fs::path tmp = root_ / (".tmp-" + stage + "-" + key + "-" + std::to_string(rd()));
    fs::create_directories(tmp);
    try {
      fn(tmp);
    } catch (...) {
      std::error_code ec;
      fs::remove_all(tmp, ec);
      throw;
    }
    std::error_code ec;
    fs::rename(tmp, entry(stage, key), ec);
    if (ec) {
      // Another process completed the same stage first; its output is identical.
      fs::remove_all(tmp, ec);
      if (!has(stage, key)) throw ArgumentError("cannot publish cache entry " + entry(stage, key).string());
    }
  }

 private:
  fs::path root_;
};

// Copies every file of a cache entry into the output directory, except the
// names in `skip`.
void publish(const fs::path& from, const fs::path& to, std::initializer_list<const char*> skip = {}) {
  fs::create_directories(to);
  for (const auto& item : fs::recursive_directory_iterator(from)) {
    if (!item.is_regular_file()) continue;
    const fs::path rel = fs::relative(item.path(), from);
    bool skipped = false;
    for (const char* s : skip) skipped = skipped || rel == s;
    if (skipped) continue;
    fs::create_directories((to / rel).parent_path());
    fs::copy_file(item.path(), to / rel, fs::copy_options::overwrite_existing);
  }
}

ProbeSpec tradeoff_probe(const PipelineConfig& config, const DebiasSpec& d) {
  for (const ProbeSpec& p : config.probes) {
    if (p.probe == Probe::lc && p.attributes.front() == d.attribute && (d.positive.empty() || p.positive == d.positive)) {
      return p;
    }
  }
  ProbeSpec p;
  p.name = d.name + "-probe";
  p.probe = Probe::lc;
  p.attributes = {d.attribute};
  p.positive = d.positive;
  return p;
}

}  // namespace

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : m.stages) {
    nlohmann::json j{{"name", s.name}, {"key", s.key}, {"cache_hit", s.cache_hit}, {"seconds", s.seconds},
                     {"status", s.status}};
    if (!s.error.empty()) j["error"] = s.error;
    stages.push_back(j);
  }
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : m.artifacts) artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  return {{"config_hash", m.config_hash},
          {"version", m.version},
          {"seeds", {{"run", m.seed}, {"train", m.train_seed}}},
          {"complete", m.complete},
          {"stages", stages},
          {"artifacts", artifacts}};
}

RunManifest run_pipeline(const PipelineConfig& config) {
  config.validate();
  if (config.output.empty()) throw ArgumentError("pipeline: no output directory");
  fs::create_directories(config.output);
  StageCache cache(cache_root(config));

  RunManifest manifest;
  manifest.config_hash = config_hash(config);
  manifest.version = std::string(tool_version());
  manifest.seed = config.seed;
  manifest.train_seed = config.train.seed;

  const nlohmann::json probes_json = to_json(config).at("probes");
  std::optional<KnowledgeGraph> graph;
  std::optional<Split> split;
  std::optional<EmbeddingModel> baseline;
  std::string train_key;

  // Runs one stage; returns false (after recording the failure) on error.
  auto stage = [&](const std::string& name, const std::string& cache_name, const std::string& key, auto&& build,
                   auto&& load) {
    StageRecord rec{name, key, cache.has(cache_name, key), 0.0, "ok", {}};
    const auto start = std::chrono::steady_clock::now();
    try {
      if (!rec.cache_hit) cache.build(cache_name, key, build);
      load(cache.entry(cache_name, key));
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.stages.push_back(rec);
    return rec.status == "ok";
  };

  const nlohmann::json full = to_json(config);
  const std::string ingest_key = key_of({full.at("dataset"), full.value("synthetic", nlohmann::json()), config.seed});
  bool ok = stage(
      "ingest", "ingest", ingest_key,
      [&](const fs::path& dir) {
        KnowledgeGraph g = load_dataset(config.dataset, config.seed);
        save_graph(dir / "graph.json", g);
        nlohmann::json summary{{"entities", g.entity_count()},
                               {"relations", g.relation_count()},
                               {"facts", g.facts.size()},
                               {"kinds", g.kinds},
                               {"warnings", g.warnings.size()}};
        write_json(dir / "summary.json", summary);
        graph = std::move(g);
      },
      [&](const fs::path& dir) {
        if (!graph) graph = load_graph(dir / "graph.json");
        publish(dir, config.output / "ingest", {"graph.json"});
      });

  const std::string split_key = key_of({ingest_key, config.dataset.test_ratio, config.seed});
  ok = ok && stage(
                 "split", "split", split_key,
                 [&](const fs::path& dir) {
                   save_split(dir / "split.bin",
                              split_triples(*graph, config.dataset.test_ratio,
                                            Rng::derive_seed(config.seed, {0x73706C6974})));  // "split"
                 },
                 [&](const fs::path& dir) { split = load_split(dir / "split.bin"); });

  train_key = key_of({split_key, full.at("train")});
  ok = ok && stage(
                 "train", "train", train_key,
                 [&](const fs::path& dir) {
                   const TrainResult r = train(*graph, *split, config.train);
                   save_checkpoint(dir / "model", r.model, config.train);
                   write_text(dir / "loss.csv", loss_csv(r.epoch_loss, r.epoch_fm_penalty));
                   write_json(dir / "eval.json", to_json(evaluate(*graph, r.model, *split)));
                 },
                 [&](const fs::path& dir) {
                   baseline = load_checkpoint(dir / "model");
                   publish(dir, config.output / "baseline");
                 });

  const std::string detect_key = key_of({train_key, probes_json, config.permutations, config.seed});
  ok = ok && stage(
                 "detect", "detect", detect_key,
                 [&](const fs::path& dir) {
                   nlohmann::json reports = nlohmann::json::array();
                   std::string csv = csv_header_detection() + "\n";
                   for (const ProbeSpec& p : config.probes) {
                     const ProbeOutcome o = run_probe(*graph, baseline->entities, p, config.permutations, config.seed);
                     reports.push_back(o.report);
                     for (const auto& row : o.csv_rows) csv += row + "\n";
                   }
                   write_json(dir / "detect.json", reports);
                   write_text(dir / "detect.csv", csv);
                 },
                 [&](const fs::path& dir) { publish(dir, config.output / "baseline"); });

  std::ostringstream tradeoff;
  tradeoff.precision(10);
  tradeoff << "name,method,x,task_metric,probe_accuracy\n";
  for (std::size_t i = 0; ok && i < config.debias.size(); ++i) {
    const DebiasSpec& d = config.debias[i];
    const nlohmann::json d_json = full.at("debias").at(i);
    const ProbeSpec probe = tradeoff_probe(config, d);
    const std::string key = key_of({train_key, d_json, probes_json, config.permutations, config.seed});
    nlohmann::json summary;
    ok = stage(
        "debias:" + d.name, "debias", key,
        [&](const fs::path& dir) {
          auto probe_fn = [&](const Matrix& e) { return run_probe(*graph, e, probe, 0, config.seed).headline; };
          const DebiasOutcome o = run_debias(*graph, *split, *baseline, config.train, d, config.seed, probe_fn);
          save_checkpoint(dir / "model", o.model, config.train);
          const EvalReport eval = evaluate(*graph, o.model, *split);
          write_json(dir / "eval.json", to_json(eval));
          nlohmann::json s{{"name", d.name},
                           {"method", d_json.at("method")},
                           {"probe", probe.name},
                           {"task_metric", task_metric(eval)},
                           {"probe_accuracy", probe_fn(o.model.entities)}};
          if (o.trace) {
            write_json(dir / "trace.json", to_json(*o.trace));
            write_text(dir / "trace.csv", trace_csv(*o.trace));
            s["trace"] = {{"probe_accuracy", o.trace->probe_accuracy}, {"task_metric", o.trace->task_metric}};
          }
          if (!o.train_loss.empty()) write_text(dir / "loss.csv", loss_csv(o.train_loss, {}));
          write_json(dir / "summary.json", s);

          nlohmann::json reports = nlohmann::json::array();
          std::string csv = csv_header_detection() + "\n";
          for (const ProbeSpec& p : config.probes) {
            const ProbeOutcome r = run_probe(*graph, o.model.entities, p, config.permutations, config.seed);
            reports.push_back(r.report);
            for (const auto& row : r.csv_rows) csv += row + "\n";
          }
          write_json(dir / "detect.json", reports);
          write_text(dir / "detect.csv", csv);
        },
        [&](const fs::path& dir) {
          summary = read_json(dir / "summary.json");
          publish(dir, config.output / "debias" / d.name);
        });
    if (!ok) break;
    const std::string method = summary.at("method");
    if (summary.contains("trace")) {
      const auto& acc = summary["trace"]["probe_accuracy"];
      const auto& task = summary["trace"]["task_metric"];
      for (std::size_t it = 0; it < acc.size(); ++it) {
        tradeoff << d.name << ',' << method << ',' << it << ',' << task.at(it).get<double>() << ','
                 << acc.at(it).get<double>() << '\n';
      }
    } else {
      const double x = d.method == DebiasMethod::fm ? d.sigma : d.theta;
      tradeoff << d.name << ',' << method << ',' << x << ',' << summary.at("task_metric").get<double>() << ','
               << summary.at("probe_accuracy").get<double>() << '\n';
    }
  }

  manifest.complete = ok && manifest.stages.size() == 4 + config.debias.size();
  try {
    if (!config.debias.empty()) write_text(config.output / "tradeoff.csv", tradeoff.str());
    write_json(config.output / "config.json", to_json(config));
    const fs::path manifest_path = config.output / "manifest.json";
    const fs::path cache_dir = fs::absolute(cache_root(config));
    std::vector<fs::path> files;
    for (const auto& item : fs::recursive_directory_iterator(config.output)) {
      if (!item.is_regular_file() || item.path() == manifest_path) continue;
      const fs::path abs = fs::absolute(item.path());
      const auto [end, _] = std::mismatch(cache_dir.begin(), cache_dir.end(), abs.begin(), abs.end());
      if (end == cache_dir.end()) continue;  // inside the cache
      files.push_back(item.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      manifest.artifacts.push_back(
          {fs::relative(f, config.output).generic_string(), file_sha256(f), fs::file_size(f)});
    }
    write_json(manifest_path, to_json(manifest));
  } catch (const std::exception& e) {
    manifest.complete = false;
    manifest.stages.push_back({"manifest", "", false, 0.0, "failed", e.what()});
  }
  return manifest;
}

}  // namespace kgaudit

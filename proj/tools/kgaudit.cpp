// kgaudit: train knowledge-graph embeddings, probe them for protected
// attribute leakage and remove it.

#include "kgaudit/errors.hpp"
#include "kgaudit/pipeline.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kgaudit;

namespace {

struct Globals {
  fs::path config;
  std::optional<std::uint64_t> seed;
  fs::path out;
  std::optional<std::size_t> threads;
};

json config_doc(const Globals& g) { return g.config.empty() ? json::object() : read_config_file(g.config); }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
}

void write_graph(const fs::path& path, const KnowledgeGraph& graph) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_graph(path, graph);
}

void emit(const Globals& g, const json& doc) {
  if (g.out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    write_file(g.out, doc.dump(2) + "\n");
  }
}

void require_out(const Globals& g, const char* verb) {
  if (g.out.empty()) throw ArgumentError(std::string(verb) + ": --out is required");
}

// Training options layered over the config file's [train] section.
struct TrainFlags {
  std::optional<std::size_t> dim, neg_entities, neg_relations, batch_size;
  std::optional<double> learning_rate, margin;
  std::optional<int> epochs;
  std::optional<std::string> loss;

  void add(CLI::App* app) {
    app->add_option("--dim", dim, "Embedding dimension");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", learning_rate, "Learning rate");
    app->add_option("--neg-entities", neg_entities, "Entity corruptions per fact");
    app->add_option("--neg-relations", neg_relations, "Relation corruptions per fact");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--loss", loss, "softmax or margin");
    app->add_option("--margin", margin, "Margin for the margin loss");
  }

  json apply(json train) const {
    if (dim) train["dim"] = *dim;
    if (epochs) train["epochs"] = *epochs;
    if (learning_rate) train["learning_rate"] = *learning_rate;
    if (neg_entities) train["neg_entities"] = *neg_entities;
    if (neg_relations) train["neg_relations"] = *neg_relations;
    if (batch_size) train["batch_size"] = *batch_size;
    if (loss) train["loss"] = *loss;
    if (margin) train["margin"] = *margin;
    return train;
  }
};

TrainConfig train_config(const Globals& g, const TrainFlags& flags) {
  json t = flags.apply(config_doc(g).value("train", json::object()));
  if (g.seed) t["seed"] = *g.seed;
  if (g.threads) t["threads"] = *g.threads;
  TrainConfig c = train_config_from_json(t);
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph embedding leakage audit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(tool_version()));

  Globals g;
  app.add_option("--config", g.config, "Configuration file (.ini-style or .json)");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--threads", g.threads, "Worker threads for training");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Read a dataset into the canonical graph JSON");
  std::string ingest_kind;
  fs::path ingest_path;
  ingest->add_option("--dataset", ingest_kind, "movielens or kg20c")->required();
  ingest->add_option("--path", ingest_path, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic rating graph with a planted leak");
  std::optional<std::size_t> s_users, s_items, s_latent, s_per_user;
  std::optional<double> s_leak, s_effect, s_noise;
  synth->add_option("--users", s_users);
  synth->add_option("--items", s_items);
  synth->add_option("--latent-dim", s_latent);
  synth->add_option("--ratings-per-user", s_per_user);
  synth->add_option("--leak", s_leak, "Leak strength in [0, 1]");
  synth->add_option("--effect", s_effect, "Rating shift in stars at full strength");
  synth->add_option("--noise", s_noise, "Rating noise standard deviation");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train embeddings; writes model/, split.bin, loss.csv, eval.json");
  fs::path graph_path, model_path, split_path;
  double test_ratio = 0.1;
  TrainFlags train_flags;
  train_cmd->add_option("--graph", graph_path, "Graph JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--split", split_path, "Reuse an existing split file")->check(CLI::ExistingFile);
  train_cmd->add_option("--test-ratio", test_ratio, "Held-out share when no split is predefined");
  train_flags.add(train_cmd);
  std::string fm_mode = "off", fm_attribute, value_m, value_n;
  double sigma = 0.0, theta = 1.0;
  train_cmd->add_option("--fm-mode", fm_mode, "off, two-class or multi-class");
  train_cmd->add_option("--fm-attribute", fm_attribute);
  train_cmd->add_option("--sigma", sigma);
  train_cmd->add_option("--theta", theta);
  train_cmd->add_option("--value-m", value_m);
  train_cmd->add_option("--value-n", value_n);

  // detect
  auto* detect = app.add_subcommand("detect", "Run one leakage probe with a permutation test");
  std::string probe_name = "lc", attributes, positive;
  bool balanced = false;
  std::size_t permutations = 100;
  detect->add_option("--graph", graph_path)->required()->check(CLI::ExistingFile);
  detect->add_option("--model", model_path, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  detect->add_option("--probe", probe_name, "lc, cca or ld");
  detect->add_option("--attributes", attributes, "Comma-separated attribute names")->required();
  detect->add_option("--positive", positive, "Comma-separated values mapped to class 1 (lc)");
  detect->add_flag("--balanced", balanced, "Balance classes by subsampling (lc)");
  detect->add_option("--permutations", permutations);

  // debias
  auto* debias = app.add_subcommand("debias", "Apply one debiasing method; writes model/, eval.json, trace.csv");
  std::string method = "lp", attribute;
  int iterations = 10;
  debias->add_option("--graph", graph_path)->required()->check(CLI::ExistingFile);
  debias->add_option("--model", model_path)->required()->check(CLI::ExistingDirectory);
  debias->add_option("--split", split_path)->required()->check(CLI::ExistingFile);
  debias->add_option("--method", method, "lp, lp-multi, fm or fm-multi");
  debias->add_option("--attribute", attribute)->required();
  debias->add_option("--positive", positive, "Comma-separated values mapped to class 1 (lp)");
  debias->add_option("--iterations", iterations);
  debias->add_option("--sigma", sigma);
  debias->add_option("--theta", theta);
  debias->add_option("--value-m", value_m);
  debias->add_option("--value-n", value_n);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on the held-out split");
  bool filtered = false;
  eval_cmd->add_option("--graph", graph_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", split_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_flag("--filtered", filtered, "Filter other known tails when ranking");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the cached end-to-end audit from --config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ingest->parsed()) {
      json ds = config_doc(g).value("dataset", json::object());
      ds["kind"] = ingest_kind;
      ds["path"] = ingest_path.string();
      if (ingest_kind != "movielens" && ingest_kind != "kg20c") throw ArgumentError("ingest: unknown dataset");
      const PipelineConfig pc = pipeline_config_from_json({{"dataset", ds}});
      const KnowledgeGraph graph = load_dataset(pc.dataset, g.seed.value_or(0));
      require_out(g, "ingest");
      write_graph(g.out, graph);
      for (const auto& w : graph.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "entities " << graph.entity_count() << ", relations " << graph.relation_count() << ", facts "
                << graph.facts.size() << '\n';
    } else if (synth->parsed()) {
      json spec = config_doc(g).value("synthetic", json::object());
      if (s_users) spec["users"] = *s_users;
      if (s_items) spec["items"] = *s_items;
      if (s_latent) spec["latent_dim"] = *s_latent;
      if (s_per_user) spec["ratings_per_user"] = *s_per_user;
      if (s_leak) spec["leak_strength"] = *s_leak;
      if (s_effect) spec["effect"] = *s_effect;
      if (s_noise) spec["noise"] = *s_noise;
      if (g.seed) spec["seed"] = *g.seed;
      require_out(g, "synth");
      const KnowledgeGraph graph = generate_synthetic(synthetic_spec_from_json(spec));
      write_graph(g.out, graph);
      std::cout << "entities " << graph.entity_count() << ", facts " << graph.facts.size() << '\n';
    } else if (train_cmd->parsed()) {
      require_out(g, "train");
      const KnowledgeGraph graph = load_graph(graph_path);
      TrainConfig config = train_config(g, train_flags);
      if (fm_mode != "off") {
        json t = to_json(config);
        t["fm"] = {{"mode", fm_mode}, {"attribute", fm_attribute}, {"sigma", sigma}, {"theta", theta},
                   {"value_m", value_m}, {"value_n", value_n}};
        t["threads"] = config.threads;
        config = train_config_from_json(t);
      }
      const Split split =
          split_path.empty() ? split_triples(graph, test_ratio, config.seed) : load_split(split_path);
      fs::create_directories(g.out);
      config.checkpoint_dir = g.out / "checkpoints";
      const TrainResult r = train(graph, split, config, [](int epoch, double loss) {
        if (epoch % 10 == 0) std::cerr << "epoch " << epoch << " loss " << loss << '\n';
      });
      save_checkpoint(g.out / "model", r.model, config);
      save_split(g.out / "split.bin", split);
      std::ofstream loss(g.out / "loss.csv");
      loss << "epoch,loss\n";
      for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) loss << e + 1 << ',' << r.epoch_loss[e] << '\n';
      const EvalReport report = evaluate(graph, r.model, split);
      write_file(g.out / "eval.json", to_json(report).dump(2) + "\n");
      std::cout << csv_header(report) << '\n' << csv_row(report) << '\n';
    } else if (detect->parsed()) {
      const KnowledgeGraph graph = load_graph(graph_path);
      const EmbeddingModel model = load_checkpoint(model_path);
      json p{{"probe", probe_name}, {"attributes", split_list(attributes)}, {"positive", split_list(positive)},
             {"balanced", balanced}};
      const PipelineConfig pc = pipeline_config_from_json({{"probes", json::array({p})}});
      const ProbeOutcome o = run_probe(graph, model.entities, pc.probes.front(), permutations, g.seed.value_or(0));
      emit(g, o.report);
      std::cerr << csv_header_detection() << '\n';
      for (const auto& row : o.csv_rows) std::cerr << row << '\n';
    } else if (debias->parsed()) {
      require_out(g, "debias");
      const KnowledgeGraph graph = load_graph(graph_path);
      TrainConfig config;
      const EmbeddingModel model = load_checkpoint(model_path, &config);
      if (g.threads) config.threads = *g.threads;
      const Split split = load_split(split_path);
      json d{{"method", method},   {"attribute", attribute}, {"positive", split_list(positive)},
             {"iterations", iterations}, {"sigma", sigma}, {"theta", theta}};
      if (!value_m.empty()) d["value_m"] = value_m;
      if (!value_n.empty()) d["value_n"] = value_n;
      const PipelineConfig pc = pipeline_config_from_json({{"debias", json::array({d})}});
      const DebiasOutcome o = run_debias(graph, split, model, config, pc.debias.front(), g.seed.value_or(0));
      fs::create_directories(g.out);
      save_checkpoint(g.out / "model", o.model, config);
      const EvalReport report = evaluate(graph, o.model, split);
      write_file(g.out / "eval.json", to_json(report).dump(2) + "\n");
      if (o.trace) {
        write_file(g.out / "trace.csv", trace_csv(*o.trace));
        write_file(g.out / "trace.json", to_json(*o.trace).dump(2) + "\n");
        std::cout << trace_csv(*o.trace);
      }
      std::cout << csv_header(report) << '\n' << csv_row(report) << '\n';
    } else if (eval_cmd->parsed()) {
      const KnowledgeGraph graph = load_graph(graph_path);
      const EmbeddingModel model = load_checkpoint(model_path);
      const Split split = load_split(split_path);
      const bool rated = std::any_of(graph.relation_values.begin(), graph.relation_values.end(),
                                     [](const auto& v) { return v.has_value(); });
      const EvalReport report = rated ? rating_metrics(model, graph, split.test)
                                      : link_metrics(model, graph, split.test, CandidatePolicy{filtered});
      emit(g, to_json(report));
      std::cerr << csv_header(report) << '\n' << csv_row(report) << '\n';
    } else if (pipeline->parsed()) {
      if (g.config.empty()) throw ArgumentError("pipeline: --config is required");
      json doc = read_config_file(g.config);
      if (!doc.contains("run")) doc["run"] = json::object();
      if (g.seed) doc["run"]["seed"] = *g.seed;
      if (g.threads) doc["run"]["threads"] = *g.threads;
      if (!g.out.empty()) doc["run"]["output"] = g.out.string();
      const PipelineConfig config = pipeline_config_from_json(doc);
      const RunManifest m = run_pipeline(config);
      for (const auto& s : m.stages) {
        std::cout << s.name << ": " << s.status << (s.cache_hit ? " (cache hit)" : "") << ' ' << s.seconds << "s";
        if (!s.error.empty()) std::cout << " - " << s.error;
        std::cout << '\n';
      }
      return m.complete ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "doctest.h"
#include "helpers.hpp"

#include "kgaudit/errors.hpp"
#include "kgaudit/pipeline.hpp"

#include <fstream>
#include <map>
#include <sstream>

using namespace kgaudit;
namespace fs = std::filesystem;

namespace {

constexpr const char* kIni = R"(# tiny audit
[dataset]
kind = synthetic
test_ratio = 0.1

[synthetic]
users = 80
items = 30
ratings_per_user = 12
seed = 3

[train]
dim = 8
epochs = 4
batch_size = 64

[run]
seed = 5
permutations = 9

[probe group-lc]
probe = lc
attributes = group

[debias lp-group]
method = lp
attribute = group
iterations = 2
)";

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.starts_with(".cache") || rel == "manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[rel] = ss.str();
  }
  return files;
}

}  // namespace

TEST_CASE("INI parsing") {
  const auto doc = parse_ini(R"(
top = 1
[a.b]
x = 2.5
flag = true
list = p, q , r
quoted = "x, y"
[probe one]
probe = cca
)");
  CHECK(doc["top"] == 1);
  CHECK(doc["a"]["b"]["x"] == 2.5);
  CHECK(doc["a"]["b"]["flag"] == true);
  CHECK(doc["a"]["b"]["list"] == nlohmann::json::array({"p", "q", "r"}));
  CHECK(doc["a"]["b"]["quoted"] == "x, y");
  CHECK(doc["probes"][0]["name"] == "one");
  CHECK(doc["probes"][0]["probe"] == "cca");

  CHECK_THROWS_AS(parse_ini("[a]\nx = 1\nx = 2\n"), ParseError);
  CHECK_THROWS_AS(parse_ini("[probe p]\n[probe p]\n"), ParseError);
  CHECK_THROWS_AS(parse_ini("no equals sign\n"), ParseError);
  CHECK_THROWS_AS(parse_ini("[bad\n"), ParseError);
}

TEST_CASE("INI and JSON configs hash identically") {
  const PipelineConfig from_ini = pipeline_config_from_json(parse_ini(kIni));
  const PipelineConfig from_json = pipeline_config_from_json(to_json(from_ini));
  CHECK(to_json(from_json) == to_json(from_ini));
  CHECK(config_hash(from_json) == config_hash(from_ini));
  CHECK(config_hash(from_ini).size() == 64);

  PipelineConfig moved = from_ini;
  moved.output = "/somewhere/else";
  CHECK(config_hash(moved) == config_hash(from_ini));
  PipelineConfig reseeded = from_ini;
  reseeded.seed = 6;
  CHECK(config_hash(reseeded) != config_hash(from_ini));

  CHECK(from_ini.train.seed == Rng::derive_seed(5, {0x747261696E}));
  CHECK(from_ini.probes.size() == 1);
  CHECK(from_ini.debias.front().iterations == 2);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.users = 50;
  spec.items = 20;
  spec.ratings_per_user = 10;
  spec.seed = 9;
  const KnowledgeGraph g = generate_synthetic(spec);
  g.validate();
  CHECK(g.entities_of_kind(g.kind_id("user")).size() == 50);
  CHECK(g.entities_of_kind(g.kind_id("movie")).size() == 20);
  CHECK(g.facts.size() == 500);
  CHECK(graph_to_json(generate_synthetic(spec)) == graph_to_json(g));
  CHECK(g.attributes[g.attribute_index("group")].values == std::vector<std::string>{"a", "b"});

  spec.seed = 10;
  CHECK(graph_to_json(generate_synthetic(spec)) != graph_to_json(g));
  CHECK(synthetic_spec_from_json(to_json(spec)).seed == 10);

  spec.users = 0;
  CHECK_THROWS_AS(spec.validate(), ArgumentError);
}

TEST_CASE("split files round trip") {
  const KnowledgeGraph g = ingest_movielens(test::data_dir() / "movielens-mini");
  const Split s = split_triples(g, 0.25, 2);
  const auto dir = test::scratch_dir("split");
  save_split(dir / "split.bin", s);
  const Split back = load_split(dir / "split.bin");
  CHECK(back.train == s.train);
  CHECK(back.test == s.test);
  CHECK(back.seed == s.seed);
  std::ofstream(dir / "junk.bin") << "not a split";
  CHECK_THROWS(load_split(dir / "junk.bin"));
}

TEST_CASE("pipeline run is cached and reproducible") {
  const auto dir = test::scratch_dir("pipeline");
  PipelineConfig config = pipeline_config_from_json(parse_ini(kIni));
  config.output = dir / "out";
  config.cache = dir / "cache";

  const RunManifest first = run_pipeline(config);
  REQUIRE(first.complete);
  CHECK(first.stages.size() == 5);
  for (const StageRecord& s : first.stages) {
    CHECK(s.status == "ok");
    CHECK_FALSE(s.cache_hit);
  }
  const auto files = read_tree(config.output);
  CHECK(files.contains("tradeoff.csv"));
  CHECK(files.contains("config.json"));
  CHECK(files.at("tradeoff.csv").starts_with("name,method,x,task_metric,probe_accuracy\n"));

  const RunManifest again = run_pipeline(config);
  REQUIRE(again.complete);
  for (const StageRecord& s : again.stages) CHECK(s.cache_hit);
  CHECK(read_tree(config.output) == files);
  CHECK(again.config_hash == first.config_hash);

  // A fresh cache recomputes the same bytes.
  config.cache = dir / "cache2";
  config.train.threads = 3;
  const RunManifest fresh = run_pipeline(config);
  REQUIRE(fresh.complete);
  CHECK_FALSE(fresh.stages.front().cache_hit);
  CHECK(read_tree(config.output) == files);

  std::ifstream in(config.output / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  CHECK(manifest["complete"] == true);
  for (const auto& a : manifest["artifacts"]) {
    CHECK(file_sha256(config.output / a["path"].get<std::string>()) == a["sha256"]);
  }
}

TEST_CASE("pipeline failures are recorded") {
  const auto dir = test::scratch_dir("pipeline-fail");
  PipelineConfig config = pipeline_config_from_json(parse_ini(kIni));
  config.output = dir / "out";
  config.cache = dir / "cache";
  config.debias.clear();
  config.probes.front().attributes = {"no-such-attribute"};
  const RunManifest m = run_pipeline(config);
  CHECK_FALSE(m.complete);
  bool failed = false;
  for (const StageRecord& s : m.stages) failed = failed || s.status == "failed";
  CHECK(failed);
}

TEST_CASE("shipped configurations parse and validate") {
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(KGAUDIT_CONFIG_DIR)) {
    if (e.path().extension() != ".ini") continue;
    CAPTURE(e.path().string());
    const PipelineConfig c = pipeline_config_from_json(read_config_file(e.path()));
    CHECK_NOTHROW(c.validate());
    CHECK_FALSE(c.probes.empty());
    ++seen;
  }
  CHECK(seen == 3);
}

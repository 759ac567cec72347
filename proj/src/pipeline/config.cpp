#include "kgaudit/errors.hpp"
#include "kgaudit/pipeline.hpp"
#include "kgaudit/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace kgaudit {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

nlohmann::json scalar(const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
  if (raw == "true") return true;
  if (raw == "false") return false;
  std::int64_t i = 0;
  auto [ip, iec] = std::from_chars(raw.data(), raw.data() + raw.size(), i);
  if (iec == std::errc() && ip == raw.data() + raw.size() && !raw.empty()) return i;
  double d = 0.0;
  auto [dp, dec] = std::from_chars(raw.data(), raw.data() + raw.size(), d);
  if (dec == std::errc() && dp == raw.data() + raw.size() && !raw.empty()) return d;
  return raw;
}

nlohmann::json ini_value(const std::string& raw) {
  const bool quoted = raw.size() >= 2 && raw.front() == '"' && raw.back() == '"';
  if (quoted || raw.find(',') == std::string::npos) return scalar(raw);
  nlohmann::json list = nlohmann::json::array();
  std::stringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) list.push_back(scalar(item));
  }
  return list;
}

// Strings, or numbers rendered as integers where exact.
std::vector<std::string> string_list(const nlohmann::json& j, const char* what) {
  auto one = [&](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) return v.dump();
    throw ArgumentError(std::string("config: '") + what + "' must hold strings");
  };
  std::vector<std::string> out;
  if (j.is_null()) return out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(one(v));
  } else {
    out.push_back(one(j));
  }
  return out;
}

std::string one_string(const nlohmann::json& obj, const char* key, const std::string& fallback = {}) {
  if (!obj.contains(key)) return fallback;
  const auto list = string_list(obj.at(key), key);
  if (list.size() != 1) throw ArgumentError(std::string("config: '") + key + "' must be a single value");
  return list.front();
}

Probe probe_from(const std::string& s) {
  if (s == "lc") return Probe::lc;
  if (s == "cca") return Probe::cca;
  if (s == "ld") return Probe::ld;
  throw ArgumentError("config: unknown probe '" + s + "' (expected lc, cca or ld)");
}

DebiasMethod method_from(const std::string& s) {
  if (s == "lp") return DebiasMethod::lp;
  if (s == "lp-multi") return DebiasMethod::lp_multi;
  if (s == "fm") return DebiasMethod::fm;
  if (s == "fm-multi") return DebiasMethod::fm_multi;
  throw ArgumentError("config: unknown debias method '" + s + "' (expected lp, lp-multi, fm or fm-multi)");
}

const char* to_string(DebiasMethod m) {
  switch (m) {
    case DebiasMethod::lp: return "lp";
    case DebiasMethod::lp_multi: return "lp-multi";
    case DebiasMethod::fm: return "fm";
    case DebiasMethod::fm_multi: return "fm-multi";
  }
  return "lp";
}

const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::movielens: return "movielens";
    case DatasetKind::kg20c: return "kg20c";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "synthetic";
}

}  // namespace

std::string_view tool_version() noexcept { return KGAUDIT_VERSION; }

nlohmann::json parse_ini(std::string_view text, const std::string& source) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* section = &root;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(source, line_no, "unterminated section header");
      const std::string header = trim(std::string_view(t).substr(1, t.size() - 2));
      const auto space = header.find_first_of(" \t");
      if (space != std::string::npos) {
        const std::string type = header.substr(0, space);
        const std::string name = trim(std::string_view(header).substr(space));
        if (type != "probe" && type != "debias") {
          throw ParseError(source, line_no, "labeled sections must be [probe NAME] or [debias NAME]");
        }
        const std::string key = type == "probe" ? "probes" : "debias";
        nlohmann::json& list = root[key];
        if (list.is_null()) list = nlohmann::json::array();
        for (const auto& entry : list) {
          if (entry.value("name", "") == name) throw ParseError(source, line_no, "duplicate section '" + header + "'");
        }
        list.push_back({{"name", name}});
        section = &list.back();
        continue;
      }
      if (header.empty()) throw ParseError(source, line_no, "empty section name");
      section = &root;
      std::stringstream parts(header);
      std::string part;
      while (std::getline(parts, part, '.')) {
        part = trim(part);
        if (part.empty()) throw ParseError(source, line_no, "empty section path component");
        nlohmann::json& child = (*section)[part];
        if (child.is_null()) child = nlohmann::json::object();
        if (!child.is_object()) throw ParseError(source, line_no, "section '" + part + "' clashes with a value");
        section = &child;
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    if (section->contains(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    (*section)[key] = ini_value(trim(std::string_view(t).substr(eq + 1)));
  }
  return root;
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), 0, e.what());
    }
  }
  return parse_ini(buf.str(), path.string());
}

void PipelineConfig::validate() const {
  if (!(dataset.test_ratio > 0.0 && dataset.test_ratio < 1.0)) throw ArgumentError("config: test_ratio outside (0, 1)");
  if (!(dataset.subsample > 0.0 && dataset.subsample <= 1.0)) throw ArgumentError("config: subsample outside (0, 1]");
  if (dataset.subsample < 1.0 && dataset.subsample_kind.empty()) {
    throw ArgumentError("config: subsample needs subsample_kind");
  }
  if (dataset.kind != DatasetKind::synthetic && dataset.path.empty()) throw ArgumentError("config: dataset path missing");
  if (dataset.kind == DatasetKind::synthetic) dataset.synthetic.validate();
  train.validate();
  std::vector<std::string> names;
  for (const auto& p : probes) {
    if (p.attributes.empty()) throw ArgumentError("config: probe '" + p.name + "' names no attribute");
    names.push_back("probe:" + p.name);
  }
  for (const auto& d : debias) {
    if (d.attribute.empty()) throw ArgumentError("config: debias '" + d.name + "' names no attribute");
    if (d.method == DebiasMethod::lp && d.iterations < 1) throw ArgumentError("config: lp needs iterations >= 1");
    names.push_back("debias:" + d.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) throw ArgumentError("config: duplicate section name");
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ArgumentError("config: top level must be an object");
  PipelineConfig c;
  try {
    const nlohmann::json ds = doc.value("dataset", nlohmann::json::object());
    const std::string kind = ds.value("kind", std::string("synthetic"));
    if (kind == "movielens") c.dataset.kind = DatasetKind::movielens;
    else if (kind == "kg20c") c.dataset.kind = DatasetKind::kg20c;
    else if (kind == "synthetic") c.dataset.kind = DatasetKind::synthetic;
    else throw ArgumentError("config: unknown dataset kind '" + kind + "'");
    c.dataset.path = ds.value("path", std::string());
    c.dataset.test_ratio = ds.value("test_ratio", c.dataset.test_ratio);
    c.dataset.subsample = ds.value("subsample", c.dataset.subsample);
    c.dataset.subsample_kind = ds.value("subsample_kind", std::string());
    if (doc.contains("synthetic")) c.dataset.synthetic = synthetic_spec_from_json(doc.at("synthetic"));

    const nlohmann::json run = doc.value("run", nlohmann::json::object());
    c.seed = run.value("seed", c.seed);
    c.permutations = run.value("permutations", c.permutations);
    c.output = run.value("output", std::string());
    c.cache = run.value("cache", std::string());

    nlohmann::json train = doc.value("train", nlohmann::json::object());
    if (!train.contains("seed")) train["seed"] = Rng::derive_seed(c.seed, {0x747261696E});  // "train"
    if (run.contains("threads")) train["threads"] = run.at("threads");
    c.train = train_config_from_json(train);

    for (const auto& p : doc.value("probes", nlohmann::json::array())) {
      ProbeSpec s;
      s.name = p.value("name", std::string());
      s.probe = probe_from(p.value("probe", std::string()));
      s.attributes = string_list(p.contains("attributes") ? p.at("attributes") : p.value("attribute", nlohmann::json()),
                                 "attributes");
      s.positive = string_list(p.value("positive", nlohmann::json()), "positive");
      s.balanced = p.value("balanced", false);
      if (s.name.empty()) s.name = to_string(s.probe) + "-" + (s.attributes.empty() ? "" : s.attributes.front());
      c.probes.push_back(std::move(s));
    }
    for (const auto& d : doc.value("debias", nlohmann::json::array())) {
      DebiasSpec s;
      s.method = method_from(d.value("method", std::string()));
      s.attribute = one_string(d, "attribute");
      s.name = d.value("name", std::string(to_string(s.method)) + "-" + s.attribute);
      s.positive = string_list(d.value("positive", nlohmann::json()), "positive");
      s.iterations = d.value("iterations", s.iterations);
      s.sigma = d.value("sigma", s.sigma);
      s.theta = d.value("theta", s.theta);
      s.value_m = one_string(d, "value_m");
      s.value_n = one_string(d, "value_n");
      const std::string spread = d.value("spread_term", std::string("member-sum"));
      if (spread == "member-sum") s.spread_term = FmSpreadTerm::member_sum;
      else if (spread == "representative") s.spread_term = FmSpreadTerm::representative;
      else throw ArgumentError("config: unknown spread_term '" + spread + "'");
      c.debias.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : c.probes) {
    probes.push_back({{"name", p.name},
                      {"probe", to_string(p.probe)},
                      {"attributes", p.attributes},
                      {"positive", p.positive},
                      {"balanced", p.balanced}});
  }
  nlohmann::json debias = nlohmann::json::array();
  for (const auto& d : c.debias) {
    debias.push_back({{"name", d.name},
                      {"method", to_string(d.method)},
                      {"attribute", d.attribute},
                      {"positive", d.positive},
                      {"iterations", d.iterations},
                      {"sigma", d.sigma},
                      {"theta", d.theta},
                      {"value_m", d.value_m},
                      {"value_n", d.value_n},
                      {"spread_term", d.spread_term == FmSpreadTerm::member_sum ? "member-sum" : "representative"}});
  }
  nlohmann::json doc{{"dataset",
                      {{"kind", to_string(c.dataset.kind)},
                       {"path", c.dataset.path.string()},
                       {"test_ratio", c.dataset.test_ratio},
                       {"subsample", c.dataset.subsample},
                       {"subsample_kind", c.dataset.subsample_kind}}},
                     {"train", to_json(c.train)},
                     {"probes", probes},
                     {"debias", debias},
                     {"run", {{"seed", c.seed}, {"permutations", c.permutations}}}};
  if (c.dataset.kind == DatasetKind::synthetic) doc["synthetic"] = to_json(c.dataset.synthetic);
  return doc;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string config_hash(const PipelineConfig& config) { return sha256_hex(to_json(config).dump()); }

}  // namespace kgaudit

#include "kgaudit/graph_store.hpp"

#include "text_lines.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

namespace kgaudit {

namespace {

enum Kind : KindId { kPaper = 0, kAuthor, kAffiliation, kDomain, kConference };

struct RelationRule {
  std::string_view canonical;
  std::string_view normalized;
  Kind head;
  Kind tail;
};

constexpr RelationRule kRelations[] = {
    {"Author in affiliation", "author in affiliation", kAuthor, kAffiliation},
    {"Author write paper", "author write paper", kAuthor, kPaper},
    {"Paper cite paper", "paper cite paper", kPaper, kPaper},
    {"Paper in domain", "paper in domain", kPaper, kDomain},
};
constexpr std::string_view kVenueRelations[] = {"paper in venue", "paper in conference",
                                                "paper published in venue"};

// "author_write_paper", "Author write paper" and "author-write-paper" all
// normalize to "author write paper".
std::string normalize_relation(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ' || c == '\t') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::filesystem::path> single_file_candidates(const std::filesystem::path& dir) {
  for (const char* name : {"triples.txt", "all_triples.txt", "kg20c.txt", "triples.tsv"}) {
    if (std::filesystem::exists(dir / name)) return {dir / name};
  }
  std::vector<std::filesystem::path> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".txt" || ext == ".tsv")) found.push_back(entry.path());
  }
  return found;
}

}  // namespace

KnowledgeGraph ingest_kg20c(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory)) {
    throw ArgumentError("KG20C directory not found: " + directory.string());
  }

  struct Part {
    std::filesystem::path path;
    bool test = false;
  };
  std::vector<Part> parts;
  const bool has_split = std::filesystem::exists(directory / "train.txt");
  if (has_split) {
    parts.push_back({directory / "train.txt", false});
    if (std::filesystem::exists(directory / "valid.txt")) parts.push_back({directory / "valid.txt", false});
    if (std::filesystem::exists(directory / "test.txt")) parts.push_back({directory / "test.txt", true});
  } else {
    auto files = single_file_candidates(directory);
    if (files.size() != 1) {
      throw ArgumentError("KG20C directory must contain train.txt or exactly one triples file: " +
                          directory.string());
    }
    parts.push_back({files.front(), false});
  }

  KnowledgeGraph g;
  g.kinds = {"paper", "author", "affiliation", "domain", "conference"};
  for (const auto& rule : kRelations) {
    g.relation_names.emplace_back(rule.canonical);
    g.relation_values.emplace_back(std::nullopt);
  }

  std::unordered_map<std::string, EntityId> ids;
  auto entity = [&](std::string_view name, Kind kind, const std::string& file, std::size_t line) {
    std::string key(name);
    auto it = ids.find(key);
    if (it != ids.end()) {
      if (g.entity_kind[it->second] != kind) {
        throw DomainError(file + ":" + std::to_string(line) + ": entity '" + key + "' used as both " +
                          g.kinds[g.entity_kind[it->second]] + " and " + g.kinds[kind]);
      }
      return it->second;
    }
    const auto id = static_cast<EntityId>(g.entity_names.size());
    g.entity_names.push_back(key);
    g.entity_kind.push_back(kind);
    ids.emplace(std::move(key), id);
    return id;
  };

  std::unordered_map<EntityId, std::vector<EntityId>> venues;  // paper -> conference entities
  std::vector<EntityId> conference_order;
  std::unordered_set<Triple, TripleHash> seen;
  std::vector<bool> in_test;
  std::size_t duplicates = 0;

  for (const Part& part : parts) {
    const std::string file = part.path.string();
    detail::for_each_record(part.path, "\t", [&](std::size_t line, const auto& f) {
      if (f.size() != 3) {
        throw ParseError(file, line, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
      }
      const auto head = detail::trim(f[0]);
      const auto tail = detail::trim(f[2]);
      if (head.empty() || tail.empty()) throw ParseError(file, line, "empty entity field");
      const std::string rel = normalize_relation(f[1]);

      if (std::find(std::begin(kVenueRelations), std::end(kVenueRelations), rel) != std::end(kVenueRelations)) {
        const EntityId paper = entity(head, kPaper, file, line);
        const bool fresh = !ids.contains(std::string(tail));
        const EntityId conf = entity(tail, kConference, file, line);
        if (fresh) conference_order.push_back(conf);
        auto& v = venues[paper];
        if (std::find(v.begin(), v.end(), conf) == v.end()) v.push_back(conf);
        return;
      }
      for (std::size_t r = 0; r < std::size(kRelations); ++r) {
        if (kRelations[r].normalized != rel) continue;
        const Triple t{entity(head, kRelations[r].head, file, line), static_cast<RelationId>(r),
                       entity(tail, kRelations[r].tail, file, line)};
        if (!seen.insert(t).second) {
          ++duplicates;
          return;
        }
        g.facts.push_back(t);
        in_test.push_back(part.test);
        return;
      }
      throw ParseError(file, line, "unknown relation '" + std::string(f[1]) + "'");
    });
  }

  AttributeSchema conference{"conference", kPaper, {}};
  std::unordered_map<EntityId, std::int32_t> conf_index;
  for (EntityId c : conference_order) {
    conf_index.emplace(c, static_cast<std::int32_t>(conference.values.size()));
    conference.values.push_back(g.entity_names[c]);
  }
  std::vector<std::int32_t> labels(g.entity_count(), kMissingValue);
  for (EntityId e = 0; e < g.entity_count(); ++e) {
    if (g.entity_kind[e] != kPaper) continue;
    auto it = venues.find(e);
    if (it == venues.end() || it->second.empty()) {
      throw DomainError("paper '" + g.entity_names[e] + "' has no conference label");
    }
    if (it->second.size() > 1) {
      throw DomainError("paper '" + g.entity_names[e] + "' has " + std::to_string(it->second.size()) +
                        " conference labels");
    }
    labels[e] = conf_index.at(it->second.front());
  }
  g.attributes.push_back(std::move(conference));
  g.attribute_values.push_back(std::move(labels));

  if (has_split) {
    PredefinedSplit split;
    for (std::size_t i = 0; i < g.facts.size(); ++i) (in_test[i] ? split.test : split.train).push_back(i);
    g.predefined_split = std::move(split);
  }
  if (duplicates > 0) {
    g.warnings.push_back("dropped " + std::to_string(duplicates) + " duplicate triple(s)");
  }
  return g;
}

}  // namespace kgaudit

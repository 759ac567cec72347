#include "kgaudit/graph_store.hpp"

#include "text_lines.hpp"

#include <algorithm>
#include <array>
#include <unordered_map>
#include <unordered_set>

namespace kgaudit {

namespace {

// Code books from the 1M release README.
constexpr std::array<std::string_view, 2> kGenders{"F", "M"};
constexpr std::array<std::string_view, 7> kAgeCodes{"1", "18", "25", "35", "45", "50", "56"};
constexpr int kOccupations = 21;

template <std::size_t N>
std::int32_t code_index(const std::array<std::string_view, N>& book, std::string_view v) {
  for (std::size_t i = 0; i < N; ++i) {
    if (book[i] == v) return static_cast<std::int32_t>(i);
  }
  return kMissingValue;
}

}  // namespace

KnowledgeGraph ingest_movielens(const std::filesystem::path& directory) {
  const auto users_path = directory / "users.dat";
  const auto ratings_path = directory / "ratings.dat";
  for (const auto& p : {users_path, ratings_path}) {
    if (!std::filesystem::exists(p)) throw ArgumentError("missing MovieLens file " + p.string());
  }

  KnowledgeGraph g;
  g.kinds = {"user", "movie"};
  constexpr KindId kUser = 0;
  constexpr KindId kMovie = 1;
  for (int r = 1; r <= 5; ++r) {
    g.relation_names.push_back("rating-" + std::to_string(r));
    g.relation_values.emplace_back(static_cast<double>(r));
  }

  AttributeSchema gender{"gender", kUser, {kGenders.begin(), kGenders.end()}};
  AttributeSchema age{"age", kUser, {kAgeCodes.begin(), kAgeCodes.end()}};
  AttributeSchema occupation{"occupation", kUser, {}};
  for (int o = 0; o < kOccupations; ++o) occupation.values.push_back(std::to_string(o));
  g.attributes = {gender, age, occupation};
  g.attribute_values.assign(3, {});

  std::unordered_map<long long, EntityId> users;
  std::unordered_map<long long, EntityId> movies;
  auto add_entity = [&](std::string name, KindId kind) {
    const auto id = static_cast<EntityId>(g.entity_names.size());
    g.entity_names.push_back(std::move(name));
    g.entity_kind.push_back(kind);
    for (auto& col : g.attribute_values) col.push_back(kMissingValue);
    return id;
  };

  const std::string users_file = users_path.string();
  detail::for_each_record(users_path, "::", [&](std::size_t line, const auto& f) {
    if (f.size() != 5) {
      throw ParseError(users_file, line, "expected 5 '::'-separated fields, got " + std::to_string(f.size()));
    }
    long long uid = 0;
    if (!detail::parse_int(f[0], uid)) throw ParseError(users_file, line, "non-integer UserID");
    if (users.contains(uid)) throw ParseError(users_file, line, "duplicate UserID " + std::to_string(uid));
    const std::int32_t gi = code_index(kGenders, detail::trim(f[1]));
    const std::int32_t ai = code_index(kAgeCodes, detail::trim(f[2]));
    long long occ = 0;
    if (!detail::parse_int(f[3], occ)) throw ParseError(users_file, line, "non-integer occupation");
    if (gi == kMissingValue) throw DomainError(users_file + ":" + std::to_string(line) + ": unknown gender code");
    if (ai == kMissingValue) throw DomainError(users_file + ":" + std::to_string(line) + ": unknown age code");
    if (occ < 0 || occ >= kOccupations) {
      throw DomainError(users_file + ":" + std::to_string(line) + ": occupation code out of range");
    }
    const EntityId id = add_entity("user:" + std::to_string(uid), kUser);
    users.emplace(uid, id);
    g.attribute_values[0][id] = gi;
    g.attribute_values[1][id] = ai;
    g.attribute_values[2][id] = static_cast<std::int32_t>(occ);
  });

  std::unordered_set<Triple, TripleHash> seen;
  std::size_t duplicates = 0;
  std::size_t first_duplicate_line = 0;
  std::size_t unknown_users = 0;
  const std::string ratings_file = ratings_path.string();
  detail::for_each_record(ratings_path, "::", [&](std::size_t line, const auto& f) {
    if (f.size() != 4) {
      throw ParseError(ratings_file, line, "expected 4 '::'-separated fields, got " + std::to_string(f.size()));
    }
    long long uid = 0, mid = 0, rating = 0, ts = 0;
    if (!detail::parse_int(f[0], uid)) throw ParseError(ratings_file, line, "non-integer UserID");
    if (!detail::parse_int(f[1], mid)) throw ParseError(ratings_file, line, "non-integer MovieID");
    if (!detail::parse_int(f[2], rating)) throw ParseError(ratings_file, line, "non-integer rating");
    if (!detail::parse_int(f[3], ts)) throw ParseError(ratings_file, line, "non-integer timestamp");
    if (rating < 1 || rating > 5) {
      throw DomainError(ratings_file + ":" + std::to_string(line) + ": rating " + std::to_string(rating) +
                        " outside 1..5");
    }
    auto u = users.find(uid);
    if (u == users.end()) {
      ++unknown_users;
      u = users.emplace(uid, add_entity("user:" + std::to_string(uid), kUser)).first;
    }
    auto m = movies.find(mid);
    if (m == movies.end()) m = movies.emplace(mid, add_entity("movie:" + std::to_string(mid), kMovie)).first;
    const Triple t{u->second, static_cast<RelationId>(rating - 1), m->second};
    if (!seen.insert(t).second) {
      if (duplicates++ == 0) first_duplicate_line = line;
      return;
    }
    g.facts.push_back(t);
  });

  if (duplicates > 0) {
    g.warnings.push_back("ratings.dat: dropped " + std::to_string(duplicates) +
                         " duplicate rating line(s), first at line " + std::to_string(first_duplicate_line));
  }
  if (unknown_users > 0) {
    g.warnings.push_back("ratings.dat: " + std::to_string(unknown_users) +
                         " user(s) absent from users.dat were added without attributes");
  }
  return g;
}

}  // namespace kgaudit

#include "kgaudit/synthetic.hpp"

#include "kgaudit/errors.hpp"
#include "kgaudit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kgaudit {

namespace {

enum Stream : std::uint64_t { kGroups = 1, kUserLatent, kItemLatent, kAffected, kChoice, kNoise };

}  // namespace

void SyntheticSpec::validate() const {
  if (!(leak_strength >= 0.0 && leak_strength <= 1.0)) throw ArgumentError("synthetic: leak strength outside [0, 1]");
  if (users < 2) throw ArgumentError("synthetic: need at least two users");
  if (items < 2) throw ArgumentError("synthetic: need at least two items");
  if (latent_dim == 0) throw ArgumentError("synthetic: latent dimension must be positive");
  if (ratings_per_user == 0 || ratings_per_user > items) {
    throw ArgumentError("synthetic: ratings per user must lie in [1, items]");
  }
  if (!(noise >= 0.0) || !std::isfinite(effect)) throw ArgumentError("synthetic: invalid noise or effect");
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"users", s.users},
          {"items", s.items},
          {"latent_dim", s.latent_dim},
          {"leak_strength", s.leak_strength},
          {"seed", s.seed},
          {"ratings_per_user", s.ratings_per_user},
          {"effect", s.effect},
          {"noise", s.noise}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.users = j.value("users", s.users);
    s.items = j.value("items", s.items);
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.leak_strength = j.value("leak_strength", s.leak_strength);
    s.seed = j.value("seed", s.seed);
    s.ratings_per_user = j.value("ratings_per_user", s.ratings_per_user);
    s.effect = j.value("effect", s.effect);
    s.noise = j.value("noise", s.noise);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

KnowledgeGraph generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);

  KnowledgeGraph g;
  g.kinds = {"user", "movie"};
  for (int r = 1; r <= 5; ++r) {
    g.relation_names.push_back("rating-" + std::to_string(r));
    g.relation_values.emplace_back(static_cast<double>(r));
  }
  g.attributes.push_back({"group", 0, {"a", "b"}});
  g.attribute_values.assign(1, {});

  Rng groups = root.split(kGroups);
  for (std::size_t u = 0; u < spec.users; ++u) {
    g.entity_names.push_back("user:" + std::to_string(u + 1));
    g.entity_kind.push_back(0);
    g.attribute_values[0].push_back(groups.coin() ? 0 : 1);
  }
  for (std::size_t i = 0; i < spec.items; ++i) {
    g.entity_names.push_back("movie:" + std::to_string(i + 1));
    g.entity_kind.push_back(1);
    g.attribute_values[0].push_back(kMissingValue);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  auto latent = [&](Rng rng, std::size_t n) {
    std::vector<double> v(n * spec.latent_dim);
    for (double& x : v) x = rng.normal() * std::sqrt(scale);
    return v;
  };
  const std::vector<double> p = latent(root.split(kUserLatent), spec.users);
  const std::vector<double> q = latent(root.split(kItemLatent), spec.items);

  std::vector<std::size_t> order(spec.items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng affected_rng = root.split(kAffected);
  affected_rng.shuffle(std::span<std::size_t>(order));
  std::vector<bool> affected(spec.items, false);
  for (std::size_t i = 0; i < spec.items / 2; ++i) affected[order[i]] = true;

  Rng choice = root.split(kChoice);
  Rng noise = root.split(kNoise);
  std::vector<std::size_t> pool(spec.items);
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // Partial Fisher-Yates: the first ratings_per_user slots are a uniform sample.
    for (std::size_t k = 0; k < spec.ratings_per_user; ++k) {
      std::swap(pool[k], pool[k + choice.uniform_index(spec.items - k)]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.ratings_per_user));
    const double sign = g.attribute_values[0][u] == 0 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < spec.ratings_per_user; ++k) {
      const std::size_t i = pool[k];
      double mean = 3.0;
      for (std::size_t c = 0; c < spec.latent_dim; ++c) mean += p[u * spec.latent_dim + c] * q[i * spec.latent_dim + c];
      if (affected[i]) mean += spec.leak_strength * spec.effect * sign;
      const double draw = mean + spec.noise * noise.normal();
      const int rating = static_cast<int>(std::clamp(std::lround(draw), 1L, 5L));
      g.facts.push_back({static_cast<EntityId>(u), static_cast<RelationId>(rating - 1),
                         static_cast<EntityId>(spec.users + i)});
    }
  }
  g.validate();
  return g;
}

}  // namespace kgaudit

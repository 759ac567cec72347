#pragma once

// MovieLens-shaped rating graphs with a planted dependence between a binary
// user attribute and rating behaviour.

#include "kgaudit/graph_store.hpp"

#include "json.hpp"

#include <cstdint>

namespace kgaudit {

struct SyntheticSpec {
  std::size_t users = 500;
  std::size_t items = 200;
  std::size_t latent_dim = 8;
  // 0: ratings ignore the attribute; 1: full planted effect.
  double leak_strength = 1.0;
  std::uint64_t seed = 0;
  std::size_t ratings_per_user = 40;
  // Rating-mean shift (in stars) applied on affected items at full strength,
  // upward for group "a" and downward for group "b".
  double effect = 1.5;
  double noise = 0.5;

  void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);

// Kinds "user" and "movie", relations "rating-1".."rating-5", binary user
// attribute "group" with values {a, b}. Half the items (chosen by the seed)
// carry the planted shift.
KnowledgeGraph generate_synthetic(const SyntheticSpec& spec);

}  // namespace kgaudit

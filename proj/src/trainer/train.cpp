#include "kgaudit/errors.hpp"
#include "kgaudit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace kgaudit {

namespace {

// Stream tags for Rng::derive_seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kFactStream = 2;

// Gradient work in a batch is cut into this many contiguous chunks whatever
// the thread count, and merged in chunk order, so the floating-point sums are
// the same for 1 or N threads.
constexpr std::size_t kChunks = 8;

const char* to_string(LossKind k) { return k == LossKind::softmax ? "softmax" : "margin"; }

const char* to_string(FmMode m) {
  switch (m) {
    case FmMode::off: return "off";
    case FmMode::two_class: return "two-class";
    case FmMode::multi_class: return "multi-class";
  }
  return "off";
}

// Entity -> fm group index (or -1), plus the group count.
struct FmGroups {
  std::vector<int> group_of;
  std::size_t count = 0;
};

FmGroups resolve_fm_groups(const KnowledgeGraph& graph, const FmConfig& fm) {
  FmGroups out;
  if (fm.mode == FmMode::off) return out;
  const std::size_t a = graph.attribute_index(fm.attribute);
  const auto& schema = graph.attributes[a];
  auto value_id = [&](const std::string& v) {
    auto it = std::find(schema.values.begin(), schema.values.end(), v);
    if (it == schema.values.end()) {
      throw ArgumentError("fm: attribute '" + schema.name + "' has no value '" + v + "'");
    }
    return static_cast<std::int32_t>(it - schema.values.begin());
  };

  std::vector<int> slot(schema.values.size(), -1);
  if (fm.mode == FmMode::two_class) {
    std::int32_t m = 0, n = 1;
    if (!fm.value_m.empty() || !fm.value_n.empty()) {
      m = value_id(fm.value_m);
      n = value_id(fm.value_n);
    } else if (schema.values.size() != 2) {
      throw ArgumentError("fm: two-class mode on '" + schema.name + "' needs explicit values m and n");
    }
    if (m == n) throw ArgumentError("fm: values m and n must differ");
    slot[static_cast<std::size_t>(m)] = 0;
    slot[static_cast<std::size_t>(n)] = 1;
    out.count = 2;
  } else {
    if (fm.values.empty()) {
      std::iota(slot.begin(), slot.end(), 0);
      out.count = slot.size();
    } else {
      for (const auto& v : fm.values) {
        auto& s = slot[static_cast<std::size_t>(value_id(v))];
        if (s < 0) s = static_cast<int>(out.count++);
      }
    }
    if (out.count < 2) throw ArgumentError("fm: multi-class mode needs at least two values");
  }

  out.group_of.assign(graph.entity_count(), -1);
  std::vector<std::size_t> sizes(out.count, 0);
  for (EntityId e = 0; e < graph.entity_count(); ++e) {
    const auto v = graph.attribute_values[a][e];
    if (v == kMissingValue) continue;
    out.group_of[e] = slot[static_cast<std::size_t>(v)];
    if (out.group_of[e] >= 0) ++sizes[static_cast<std::size_t>(out.group_of[e])];
  }
  for (std::size_t s : sizes) {
    if (s == 0) throw ArgumentError("fm: a protected group has no members");
  }
  return out;
}

// Penalty for the given members grouped by FmGroups; adds its gradient.
double apply_fm(const EmbeddingModel& model, const FmConfig& fm, const FmGroups& groups,
                std::span<const EntityId> members, SparseGradient* grad) {
  std::vector<std::vector<EntityId>> buckets(groups.count);
  for (EntityId e : members) buckets[static_cast<std::size_t>(groups.group_of[e])].push_back(e);
  if (fm.mode == FmMode::two_class) {
    if (buckets[0].empty() || buckets[1].empty()) return 0.0;
    return fm_penalty(model, buckets[0], buckets[1], fm.sigma, grad);
  }
  std::erase_if(buckets, [](const auto& b) { return b.empty(); });
  if (buckets.size() < 2) return 0.0;
  const FmMultiValue v = fm_multi_penalty(model, buckets, fm.theta, 0.0, grad, fm.spread_term);
  return v.spread + v.separation;
}

struct ChunkState {
  SparseGradient grad;
  std::vector<Triple> negatives;
  double loss = 0.0;
};

}  // namespace

void TrainConfig::validate() const {
  if (dim == 0) throw ArgumentError("train config: dim must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("train config: learning rate must be positive");
  if (epochs < 1) throw ArgumentError("train config: epochs must be at least 1");
  if (batch_size == 0) throw ArgumentError("train config: batch size must be positive");
  if (loss == LossKind::margin && !(margin > 0.0)) throw ArgumentError("train config: margin must be positive");
  if (fm.mode != FmMode::off && fm.attribute.empty()) throw ArgumentError("train config: fm needs an attribute");
  if (fm.mode == FmMode::two_class && !(fm.sigma >= 0.0)) throw ArgumentError("train config: sigma must be >= 0");
  if (fm.mode == FmMode::multi_class && !(fm.theta > 0.0)) throw ArgumentError("train config: theta must be > 0");
  if (checkpoint_every < 1) throw ArgumentError("train config: checkpoint interval must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json fm{{"mode", to_string(c.fm.mode)}};
  if (c.fm.mode != FmMode::off) {
    fm["attribute"] = c.fm.attribute;
    if (c.fm.mode == FmMode::two_class) {
      fm["sigma"] = c.fm.sigma;
      fm["value_m"] = c.fm.value_m;
      fm["value_n"] = c.fm.value_n;
    } else {
      fm["theta"] = c.fm.theta;
      fm["values"] = c.fm.values;
      fm["spread_term"] = c.fm.spread_term == FmSpreadTerm::member_sum ? "member-sum" : "representative";
    }
  }
  return {{"dim", c.dim},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"neg_entities", c.neg_entities},
          {"neg_relations", c.neg_relations},
          {"loss", to_string(c.loss)},
          {"margin", c.margin},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"fm", fm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.neg_entities = j.value("neg_entities", c.neg_entities);
    c.neg_relations = j.value("neg_relations", c.neg_relations);
    const std::string loss = j.value("loss", std::string("softmax"));
    if (loss == "softmax") c.loss = LossKind::softmax;
    else if (loss == "margin") c.loss = LossKind::margin;
    else throw ArgumentError("train config: unknown loss '" + loss + "'");
    c.margin = j.value("margin", c.margin);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("fm")) {
      const auto& f = j.at("fm");
      const std::string mode = f.value("mode", std::string("off"));
      if (mode == "off") c.fm.mode = FmMode::off;
      else if (mode == "two-class") c.fm.mode = FmMode::two_class;
      else if (mode == "multi-class") c.fm.mode = FmMode::multi_class;
      else throw ArgumentError("train config: unknown fm mode '" + mode + "'");
      c.fm.attribute = f.value("attribute", std::string{});
      c.fm.sigma = f.value("sigma", c.fm.sigma);
      c.fm.theta = f.value("theta", c.fm.theta);
      c.fm.value_m = f.value("value_m", std::string{});
      c.fm.value_n = f.value("value_n", std::string{});
      c.fm.values = f.value("values", std::vector<std::string>{});
      const std::string term = f.value("spread_term", std::string("member-sum"));
      if (term == "member-sum") c.fm.spread_term = FmSpreadTerm::member_sum;
      else if (term == "representative") c.fm.spread_term = FmSpreadTerm::representative;
      else throw ArgumentError("train config: unknown spread term '" + term + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("train config: ") + e.what());
  }
  return c;
}

EmbeddingModel init_model(std::size_t entities, std::size_t relations, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  EmbeddingModel m;
  m.entities.resize(static_cast<Eigen::Index>(entities), static_cast<Eigen::Index>(dim));
  m.relations.resize(static_cast<Eigen::Index>(relations), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.entities.size(); ++i) m.entities.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < m.relations.size(); ++i) m.relations.data()[i] = rng.uniform(-bound, bound);
  return m;
}

TrainResult train(const KnowledgeGraph& graph, const Split& split, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.empty()) throw ArgumentError("train: empty training split");

  const FmGroups fm_groups = resolve_fm_groups(graph, config.fm);
  const bool fm_on = config.fm.mode != FmMode::off;
  const double base_scale = config.fm.mode == FmMode::multi_class ? config.fm.theta : 1.0;

  TrainResult result;
  result.model = init_model(graph.entity_count(), graph.relation_count(), config.dim,
                            Rng::derive_seed(config.seed, {kInitStream}));
  EmbeddingModel& model = result.model;
  const NegativeSampler sampler(graph, split.train);

  std::vector<EntityId> fm_all;
  if (fm_on) {
    for (EntityId e = 0; e < graph.entity_count(); ++e) {
      if (fm_groups.group_of[e] >= 0) fm_all.push_back(e);
    }
  }

  const std::size_t n = split.train.size();
  std::vector<std::size_t> order(n);
  std::vector<ChunkState> chunks(kChunks);
  for (auto& c : chunks) c.grad = SparseGradient(config.dim);
  SparseGradient batch_grad(config.dim);
  std::vector<char> in_batch(graph.entity_count(), 0);
  std::vector<EntityId> batch_members;
  const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, kChunks));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(Rng::derive_seed(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < n; start += config.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::size_t len = end - start;

      auto run_chunk = [&](std::size_t c) {
        ChunkState& st = chunks[c];
        st.grad.clear();
        st.loss = 0.0;
        const std::size_t lo = start + len * c / kChunks;
        const std::size_t hi = start + len * (c + 1) / kChunks;
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t fact_index = order[i];
          const Triple& fact = split.train[fact_index];
          Rng rng(Rng::derive_seed(config.seed, {kFactStream, static_cast<std::uint64_t>(epoch), fact_index}));
          sampler.sample(fact, config.neg_entities, config.neg_relations, rng, st.negatives);
          const double l = config.loss == LossKind::softmax
                               ? softmax_loss(model, fact, st.negatives, &st.grad, base_scale)
                               : margin_loss(model, fact, st.negatives, config.margin, &st.grad, base_scale);
          st.loss += base_scale * l;
        }
      };
      if (threads == 1) {
        for (std::size_t c = 0; c < kChunks; ++c) run_chunk(c);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
          pool.emplace_back([&, t] {
            for (std::size_t c = t; c < kChunks; c += threads) run_chunk(c);
          });
        }
      }

      batch_grad.clear();
      double batch_loss = 0.0;
      for (const auto& st : chunks) {
        batch_grad.merge(st.grad);
        batch_loss += st.loss;
      }

      if (fm_on) {
        batch_members.clear();
        for (std::size_t i = start; i < end; ++i) {
          const Triple& f = split.train[order[i]];
          for (EntityId e : {f.head, f.tail}) {
            if (fm_groups.group_of[e] >= 0 && !in_batch[e]) {
              in_batch[e] = 1;
              batch_members.push_back(e);
            }
          }
        }
        batch_loss += apply_fm(model, config.fm, fm_groups, batch_members, &batch_grad);
        for (EntityId e : batch_members) in_batch[e] = 0;
      }

      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << batch
            << " (learning rate " << config.learning_rate << ")";
        throw NumericError(msg.str());
      }
      batch_grad.apply(model, config.learning_rate);
      epoch_loss += batch_loss;
    }

    if (!model.entities.allFinite() || !model.relations.allFinite()) {
      throw NumericError("training diverged: non-finite parameters after epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(epoch_loss);
    if (fm_on) result.epoch_fm_penalty.push_back(apply_fm(model, config.fm, fm_groups, fm_all, nullptr));
    if (on_epoch) on_epoch(epoch, epoch_loss);
    if (!config.checkpoint_dir.empty() && epoch % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%04d", epoch);
      save_checkpoint(config.checkpoint_dir / name, model, config);
    }
  }
  result.collisions_kept = sampler.collisions_kept();
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const EmbeddingModel& model, const TrainConfig& config) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "embeddings.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write checkpoint in " + dir.string());
    write_matrix(out, model.entities);
    write_matrix(out, model.relations);
  }
  std::ofstream side(dir / "config.json", std::ios::trunc);
  side << to_json(config).dump(2) << '\n';
}

EmbeddingModel load_checkpoint(const std::filesystem::path& dir, TrainConfig* config) {
  std::ifstream in(dir / "embeddings.bin", std::ios::binary);
  if (!in) throw ArgumentError("no checkpoint in " + dir.string());
  EmbeddingModel m;
  m.entities = read_matrix(in);
  m.relations = read_matrix(in);
  if (m.entities.cols() != m.relations.cols()) throw ArgumentError("checkpoint: dimension mismatch");
  if (config) {
    std::ifstream side(dir / "config.json");
    if (!side) throw ArgumentError("checkpoint: missing config.json in " + dir.string());
    *config = train_config_from_json(nlohmann::json::parse(side));
  }
  return m;
}

}  // namespace kgaudit

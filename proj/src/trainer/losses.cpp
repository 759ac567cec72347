#include "kgaudit/errors.hpp"
#include "kgaudit/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace kgaudit {

// ---------------------------------------------------------------------------
// RowGradients

double* RowGradients::row(std::uint32_t id) {
  auto [it, inserted] = index_.try_emplace(id, rows_.size());
  if (inserted) {
    rows_.push_back(id);
    values_.resize(values_.size() + dim_, 0.0);
  }
  return values_.data() + it->second * dim_;
}

const double* RowGradients::find(std::uint32_t id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : values_.data() + it->second * dim_;
}

void RowGradients::clear() {
  index_.clear();
  rows_.clear();
  values_.clear();
}

void RowGradients::merge(const RowGradients& other) {
  for (std::size_t i = 0; i < other.rows_.size(); ++i) {
    double* dst = row(other.rows_[i]);
    const double* src = other.slot(i);
    for (std::size_t k = 0; k < dim_; ++k) dst[k] += src[k];
  }
}

void SparseGradient::apply(EmbeddingModel& model, double learning_rate) const {
  const std::size_t d = model.dim();
  for (std::size_t i = 0; i < entities.size(); ++i) {
    double* p = model.entities.row(entities.rows()[i]).data();
    const double* g = entities.slot(i);
    for (std::size_t k = 0; k < d; ++k) p[k] -= learning_rate * g[k];
  }
  for (std::size_t i = 0; i < relations.size(); ++i) {
    double* p = model.relations.row(relations.rows()[i]).data();
    const double* g = relations.slot(i);
    for (std::size_t k = 0; k < d; ++k) p[k] -= learning_rate * g[k];
  }
}

// ---------------------------------------------------------------------------
// Scores and losses

namespace {

// d score / d{h, r, t} scaled by `coeff`.
void add_score_gradient(const EmbeddingModel& model, const Triple& t, double coeff, SparseGradient& grad) {
  const std::size_t d = model.dim();
  const double* h = model.entities.row(t.head).data();
  const double* r = model.relations.row(t.relation).data();
  const double* tl = model.entities.row(t.tail).data();
  double* gh = grad.entities.row(t.head);
  for (std::size_t k = 0; k < d; ++k) gh[k] += coeff * r[k] * tl[k];
  double* gr = grad.relations.row(t.relation);
  for (std::size_t k = 0; k < d; ++k) gr[k] += coeff * h[k] * tl[k];
  double* gt = grad.entities.row(t.tail);
  for (std::size_t k = 0; k < d; ++k) gt[k] += coeff * h[k] * r[k];
}

}  // namespace

double score(const EmbeddingModel& model, const Triple& t) {
  const std::size_t d = model.dim();
  const double* h = model.entities.row(t.head).data();
  const double* r = model.relations.row(t.relation).data();
  const double* tl = model.entities.row(t.tail).data();
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += h[k] * r[k] * tl[k];
  return s;
}

double softmax_loss(const EmbeddingModel& model, const Triple& fact, std::span<const Triple> corruptions,
                    SparseGradient* grad, double scale) {
  const std::size_t n = corruptions.size() + 1;
  std::vector<double> s(n);
  s[0] = score(model, fact);
  for (std::size_t j = 0; j < corruptions.size(); ++j) s[j + 1] = score(model, corruptions[j]);
  const double top = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - top);
  const double log_z = top + std::log(z);
  const double loss = log_z - s[0];

  if (grad) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p = std::exp(s[j] - log_z);
      const double coeff = scale * (p - (j == 0 ? 1.0 : 0.0));
      add_score_gradient(model, j == 0 ? fact : corruptions[j - 1], coeff, *grad);
    }
  }
  return std::max(loss, 0.0);
}

double margin_loss(const EmbeddingModel& model, const Triple& fact, std::span<const Triple> corruptions,
                   double margin, SparseGradient* grad, double scale) {
  const double s0 = score(model, fact);
  double loss = 0.0;
  std::size_t active = 0;
  for (const Triple& c : corruptions) {
    const double violation = margin + score(model, c) - s0;
    if (violation > 0.0) {
      loss += violation;
      ++active;
      if (grad) add_score_gradient(model, c, scale, *grad);
    }
  }
  if (grad && active > 0) add_score_gradient(model, fact, -scale * static_cast<double>(active), *grad);
  return loss;
}

namespace {

Vector group_mean(const Matrix& entities, std::span<const EntityId> members) {
  Vector mu = Vector::Zero(entities.cols());
  for (EntityId e : members) mu += entities.row(e).transpose();
  return mu / static_cast<double>(members.size());
}

void add_to_rows(SparseGradient& grad, std::span<const EntityId> members, const Vector& g) {
  for (EntityId e : members) {
    double* row = grad.entities.row(e);
    for (Eigen::Index k = 0; k < g.size(); ++k) row[k] += g(k);
  }
}

}  // namespace

double fm_penalty(const EmbeddingModel& model, std::span<const EntityId> group_m,
                  std::span<const EntityId> group_n, double sigma, SparseGradient* grad) {
  if (group_m.empty() || group_n.empty()) throw ArgumentError("fm_penalty: both groups must be non-empty");
  const Vector diff = group_mean(model.entities, group_m) - group_mean(model.entities, group_n);
  const double norm = diff.norm();
  if (grad && norm > 0.0) {
    const Vector g = (sigma / norm) * diff;
    add_to_rows(*grad, group_m, g / static_cast<double>(group_m.size()));
    add_to_rows(*grad, group_n, -g / static_cast<double>(group_n.size()));
  }
  return sigma * norm;
}

FmMultiValue fm_multi_penalty(const EmbeddingModel& model, std::span<const std::vector<EntityId>> groups,
                              double theta, double base_loss, SparseGradient* grad, FmSpreadTerm spread_term) {
  if (groups.size() < 2) throw ArgumentError("fm_multi_penalty: need at least two groups");
  for (const auto& g : groups) {
    if (g.empty()) throw ArgumentError("fm_multi_penalty: empty group");
  }
  const Matrix& emb = model.entities;
  const Eigen::Index d = emb.cols();
  std::vector<Vector> mu;
  mu.reserve(groups.size());
  for (const auto& g : groups) mu.push_back(group_mean(emb, g));

  FmMultiValue out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& members = groups[i];
    const auto n = static_cast<double>(members.size());
    if (spread_term == FmSpreadTerm::member_sum) {
      Vector weighted = Vector::Zero(d);  // sum_u s_u v_u
      std::vector<std::pair<double, Vector>> terms;
      terms.reserve(members.size());
      for (EntityId e : members) {
        Vector v = emb.row(e).transpose() - mu[i];
        const double s = v.squaredNorm() - 1.0;
        out.spread += s * s / n;
        weighted += s * v;
        if (grad) terms.emplace_back(s, std::move(v));
      }
      if (grad) {
        for (std::size_t m = 0; m < members.size(); ++m) {
          const Vector g = (4.0 / n) * (terms[m].first * terms[m].second - weighted / n);
          double* row = grad->entities.row(members[m]);
          for (Eigen::Index k = 0; k < d; ++k) row[k] += g(k);
        }
      }
    } else {
      const EntityId rep = *std::min_element(members.begin(), members.end());
      const Vector v = emb.row(rep).transpose() - mu[i];
      const double s = v.squaredNorm() - 1.0;
      out.spread += s * s / n;
      if (grad) {
        const Vector base = (4.0 * s / n) * v;
        add_to_rows(*grad, members, -base / n);
        double* row = grad->entities.row(rep);
        for (Eigen::Index k = 0; k < d; ++k) row[k] += base(k);
      }
    }
  }

  const auto c = static_cast<double>(groups.size());
  const double pairs = c * (c - 1.0) / 2.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    Vector pull = Vector::Zero(d);
    for (std::size_t j = 0; j < groups.size(); ++j) {
      if (j == i) continue;
      const Vector diff = mu[i] - mu[j];
      if (j > i) out.separation += diff.squaredNorm() / pairs;
      pull += diff;
    }
    if (grad) add_to_rows(*grad, groups[i], (2.0 / pairs / static_cast<double>(groups[i].size())) * pull);
  }

  out.total = theta * base_loss + out.spread + out.separation;
  return out;
}

}  // namespace kgaudit

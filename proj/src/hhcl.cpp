#include "hgcl/hhcl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hgcl/errors.hpp"
#include "hgcl/lorentz.hpp"
#include "hgcl/ops.hpp"

namespace hgcl::hhcl {
namespace {

constexpr double kTieTolerance = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

class ExactPairing {
 public:
  ExactPairing(const Tensor& sim, std::size_t pairs)
      : sim_(sim), n_(sim.rows()), pairs_(pairs),
        memo_((std::size_t{1} << n_) * (pairs + 1), std::numeric_limits<double>::quiet_NaN()),
        choice_(memo_.size(), -2) {}

  std::vector<std::pair<std::size_t, std::size_t>> solve() {
    value(0, pairs_);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t mask = 0, rem = pairs_;
    while (rem > 0) {
      const std::size_t i = lowest_free(mask);
      const int c = choice_[key(mask, rem)];
      if (c >= 0) {
        out.emplace_back(i, static_cast<std::size_t>(c));
        mask |= (std::size_t{1} << i) | (std::size_t{1} << c);
        --rem;
      } else {
        mask |= std::size_t{1} << i;
      }
    }
    return out;
  }

 private:
  std::size_t key(std::size_t mask, std::size_t rem) const { return mask * (pairs_ + 1) + rem; }

  std::size_t lowest_free(std::size_t mask) const {
    std::size_t i = 0;
    while (mask & (std::size_t{1} << i)) ++i;
    return i;
  }

  double value(std::size_t mask, std::size_t rem) {
    if (rem == 0) return 0.0;
    const std::size_t free = n_ - static_cast<std::size_t>(__builtin_popcountll(mask));
    if (2 * rem > free) return kNegInf;
    const std::size_t k = key(mask, rem);
    if (!std::isnan(memo_[k])) return memo_[k];
    const std::size_t i = lowest_free(mask);
    double best = kNegInf;
    int pick = -2;
    for (std::size_t j = i + 1; j < n_; ++j) {
      if (mask & (std::size_t{1} << j)) continue;
      const double v =
          sim_(i, j) + value(mask | (std::size_t{1} << i) | (std::size_t{1} << j), rem - 1);
      if (v > best + kTieTolerance || (pick == -2 && v > kNegInf)) {
        best = v;
        pick = static_cast<int>(j);
      }
    }
    if (free - 1 >= 2 * rem) {
      const double v = value(mask | (std::size_t{1} << i), rem);
      if (v > best + kTieTolerance || (pick == -2 && v > kNegInf)) {
        best = v;
        pick = -1;
      }
    }
    memo_[k] = best;
    choice_[k] = pick;
    return best;
  }

  const Tensor& sim_;
  std::size_t n_;
  std::size_t pairs_;
  std::vector<double> memo_;
  std::vector<int> choice_;
};

std::vector<std::pair<std::size_t, std::size_t>> greedy_pairing(const Tensor& sim,
                                                                std::size_t pairs) {
  const std::size_t n = sim.rows();
  std::vector<bool> used(n, false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = 0; p < pairs; ++p) {
    double best = kNegInf;
    std::pair<std::size_t, std::size_t> pick{n, n};
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (used[j]) continue;
        if (pick.first == n || sim(i, j) > best + kTieTolerance) {
          best = sim(i, j);
          pick = {i, j};
        }
      }
    }
    used[pick.first] = used[pick.second] = true;
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor group_mean(const Tensor& level, const std::vector<std::size_t>& members) {
  const std::size_t c = level.cols();
  Tensor out({1, c});
  for (std::size_t m : members)
    for (std::size_t k = 0; k < c; ++k) out[k] += level(m, k);
  for (std::size_t k = 0; k < c; ++k) out[k] /= static_cast<double>(members.size());
  return out;
}

// Partition the rows of `level` into `target` groups by pairing rounds.
std::vector<std::vector<std::size_t>> merge_level(const Tensor& level, std::size_t target) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < level.rows(); ++i) groups.push_back({i});
  while (groups.size() > target) {
    const std::size_t n = groups.size();
    const std::size_t round_target = std::max(target, (n + 1) / 2);
    std::vector<Tensor> means;
    for (const auto& g : groups) means.push_back(group_mean(level, g));
    Tensor sim({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) sim(i, j) = cosine(means[i].data(), means[j].data());
    const auto pairing = max_similarity_pairing(sim, n - round_target);
    std::vector<bool> absorbed(n, false);
    std::vector<std::vector<std::size_t>> next;
    std::vector<int> paired_with(n, -1);
    for (auto [a, b] : pairing) {
      paired_with[a] = static_cast<int>(b);
      absorbed[b] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (absorbed[i]) continue;
      std::vector<std::size_t> g = groups[i];
      if (paired_with[i] >= 0) {
        const auto& other = groups[static_cast<std::size_t>(paired_with[i])];
        g.insert(g.end(), other.begin(), other.end());
      }
      std::sort(g.begin(), g.end());
      next.push_back(std::move(g));
    }
    std::sort(next.begin(), next.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });
    groups = std::move(next);
  }
  return groups;
}

Tensor averaging_matrix(const std::vector<std::size_t>& parent_map, std::size_t parents) {
  std::vector<std::size_t> counts(parents, 0);
  for (std::size_t p : parent_map) ++counts[p];
  Tensor g({parents, parent_map.size()});
  for (std::size_t c = 0; c < parent_map.size(); ++c)
    g(parent_map[c], c) = 1.0 / static_cast<double>(counts[parent_map[c]]);
  return g;
}

Tensor selection_matrix(const std::vector<std::size_t>& parent_map, std::size_t parents) {
  Tensor s({parent_map.size(), parents});
  for (std::size_t c = 0; c < parent_map.size(); ++c) s(c, parent_map[c]) = 1.0;
  return s;
}

Var zero_scalar(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

Var weighted_sum(Tape& tape, const std::vector<std::pair<double, Var>>& terms) {
  Var acc = zero_scalar(tape);
  for (const auto& [w, v] : terms) {
    if (w != 0.0) acc = ops::add(acc, ops::scale(v, w));
  }
  return acc;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> max_similarity_pairing(const Tensor& similarity,
                                                                        std::size_t pairs) {
  require_matrix(similarity, "max_similarity_pairing");
  const std::size_t n = similarity.rows();
  if (similarity.cols() != n) throw DimensionError("max_similarity_pairing: matrix not square");
  if (2 * pairs > n) {
    throw ConfigError("cannot form " + std::to_string(pairs) + " disjoint pairs from " +
                      std::to_string(n) + " nodes");
  }
  if (pairs == 0) return {};
  if (n > kExactPairingLimit) return greedy_pairing(similarity, pairs);
  return ExactPairing(similarity, pairs).solve();
}

void validate_fusion_ratios(std::span<const std::size_t> fusion_ratios, std::size_t leaves) {
  if (fusion_ratios.empty()) throw ConfigError("fusion ratios are empty");
  if (fusion_ratios.front() != leaves) {
    throw ConfigError("fusion ratios start at " + std::to_string(fusion_ratios.front()) +
                      " but there are " + std::to_string(leaves) + " leaves");
  }
  if (fusion_ratios.back() != 1) throw ConfigError("fusion ratios must end at 1");
  for (std::size_t l = 1; l < fusion_ratios.size(); ++l) {
    if (fusion_ratios[l] >= fusion_ratios[l - 1]) {
      throw ConfigError("fusion ratios must be strictly decreasing");
    }
  }
}

HierarchyTree build_hierarchy(const Tensor& leaves, std::span<const std::size_t> fusion_ratios) {
  require_matrix(leaves, "build_hierarchy");
  validate_fusion_ratios(fusion_ratios, leaves.rows());
  if (!leaves.all_finite()) throw NumericalError("build_hierarchy: non-finite leaf embedding");
  HierarchyTree tree;
  tree.fusion_ratios.assign(fusion_ratios.begin(), fusion_ratios.end());
  tree.levels.push_back(leaves);
  for (std::size_t l = 1; l < fusion_ratios.size(); ++l) {
    const Tensor& level = tree.levels.back();
    const auto groups = merge_level(level, fusion_ratios[l]);
    std::vector<std::size_t> parent_map(level.rows());
    Tensor parents({groups.size(), level.cols()});
    for (std::size_t p = 0; p < groups.size(); ++p) {
      for (std::size_t child : groups[p]) parent_map[child] = p;
      const Tensor mean = group_mean(level, groups[p]);
      for (std::size_t k = 0; k < level.cols(); ++k) parents(p, k) = mean[k];
    }
    tree.parent_maps.push_back(std::move(parent_map));
    tree.levels.push_back(std::move(parents));
  }
  return tree;
}

HierarchyVars hierarchy_vars(Var leaves, const HierarchyTree& structure) {
  HierarchyVars out;
  out.levels.push_back(leaves);
  out.parent_maps = structure.parent_maps;
  for (std::size_t l = 0; l < structure.parent_maps.size(); ++l) {
    const std::size_t parents = structure.levels[l + 1].rows();
    Var avg = leaves.tape->constant(averaging_matrix(structure.parent_maps[l], parents));
    out.levels.push_back(ops::matmul(avg, out.levels.back()));
  }
  return out;
}

Var hybrid_distance(Var zi, Var zj, double lambda, double curvature) {
  Var euclid = ops::l2_norm_rows(ops::sub(zi, zj));
  Var xi = lorentz::exp_map_origin(zi, curvature);
  Var xj = lorentz::exp_map_origin(zj, curvature);
  Var hyper = lorentz::lorentz_distance_rows(xi, xj, curvature);
  return ops::sum(ops::add(euclid, ops::scale(hyper, lambda)));
}

Var pairwise_distance(Var z, DistanceKind kind, double lambda, double curvature) {
  switch (kind) {
    case DistanceKind::Euclidean:
      return ops::pairwise_euclidean(z);
    case DistanceKind::Hyperbolic:
      return lorentz::pairwise_lorentz_distance(lorentz::exp_map_origin(z, curvature), curvature);
    case DistanceKind::Hybrid:
      return ops::add(ops::pairwise_euclidean(z),
                      ops::scale(pairwise_distance(z, DistanceKind::Hyperbolic, lambda, curvature),
                                 lambda));
  }
  throw std::logic_error("unknown distance kind");
}

Var contrastive_from_distances(Var distances, std::span<const int> labels, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  const Tensor& d = distances.value();
  require_matrix(d, "supervised_contrastive");
  const std::size_t b = d.rows();
  if (b < 2) throw BatchError("supervised contrastive loss needs a batch of at least 2");
  if (d.cols() != b || labels.size() != b) {
    throw DimensionError("supervised_contrastive: distance matrix " + shape_string(d.shape()) +
                         " with " + std::to_string(labels.size()) + " labels");
  }
  Tape& tape = *distances.tape;
  Tensor others({b, b}, 1.0);
  Tensor positive_weights({b, b});
  Tensor anchor_weights({b, 1});
  std::size_t valid = 0;
  for (std::size_t i = 0; i < b; ++i) {
    others(i, i) = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < b; ++j)
      if (j != i && labels[j] == labels[i]) ++count;
    if (count == 0) continue;
    ++valid;
    anchor_weights[i] = 1.0;
    for (std::size_t j = 0; j < b; ++j)
      if (j != i && labels[j] == labels[i]) positive_weights(i, j) = 1.0 / static_cast<double>(count);
  }
  if (valid == 0) return zero_scalar(tape);
  for (double& w : anchor_weights.data()) w /= static_cast<double>(valid);

  Var logits = ops::scale(distances, -1.0 / tau);
  Var lse = ops::logsumexp_rows_masked(logits, others);
  Var positive = ops::sum_axis(ops::mul(logits, tape.constant(std::move(positive_weights))), 1);
  Var per_anchor = ops::sub(lse, positive);
  return ops::sum(ops::mul(per_anchor, tape.constant(std::move(anchor_weights))));
}

Var supervised_contrastive(Var z, std::span<const int> labels, double tau, DistanceKind kind,
                           double lambda, double curvature) {
  if (z.value().rows() < 2) throw BatchError("supervised contrastive loss needs a batch of at least 2");
  return contrastive_from_distances(pairwise_distance(z, kind, lambda, curvature), labels, tau);
}

Var popl(const HierarchyVars& tree, double curvature) {
  const std::size_t depth = tree.levels.size();
  if (depth < 2) throw ConfigError("partial-order loss needs at least two hierarchy levels");
  Tape& tape = *tree.levels.front().tape;
  Var acc = zero_scalar(tape);
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    const Var children = tree.levels[l];
    const Var parents = tree.levels[l + 1];
    Var select = tape.constant(selection_matrix(tree.parent_maps[l], parents.value().rows()));
    Var expanded = ops::matmul(select, parents);
    Var d = lorentz::lorentz_distance_rows(lorentz::exp_map_origin(expanded, curvature),
                                           lorentz::exp_map_origin(children, curvature),
                                           curvature);
    acc = ops::add(acc, ops::mean(ops::relu(d)));
  }
  return ops::scale(acc, 1.0 / static_cast<double>(depth - 1));
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "hybrid") return LossMode::Hybrid;
  if (name == "split") return LossMode::Split;
  throw ConfigError("unknown loss mode '" + name + "' (expected hybrid or split)");
}

std::string to_string(LossMode mode) { return mode == LossMode::Hybrid ? "hybrid" : "split"; }

ContrastLevels parse_contrast_levels(const std::string& name) {
  if (name == "root") return ContrastLevels::Root;
  if (name == "all") return ContrastLevels::All;
  throw ConfigError("unknown contrast_levels '" + name + "' (expected root or all)");
}

std::string to_string(ContrastLevels levels) {
  return levels == ContrastLevels::Root ? "root" : "all";
}

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw ConfigError("loss.tau must be positive");
  if (!(curvature > 0.0)) throw ConfigError("loss.curvature must be positive");
  const std::pair<const char*, double> weights[] = {{"alpha", alpha},   {"lambda", lambda},
                                                    {"beta", beta},     {"w_hcon", w_hcon},
                                                    {"w_econ", w_econ}, {"w_hpop", w_hpop}};
  for (const auto& [name, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError(std::string("loss.") + name + " must be a finite non-negative number");
    }
  }
}

HhclTerms hhcl_total(std::span<const HierarchyVars> batch, std::span<const int> labels,
                     const LossWeights& weights, LossMode mode, ContrastLevels levels) {
  weights.validate();
  if (batch.empty()) throw BatchError("hhcl_total: empty batch");
  if (labels.size() != batch.size()) {
    throw DimensionError("hhcl_total: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch.size()) + " samples");
  }
  Tape& tape = *batch.front().levels.front().tape;
  const std::size_t depth = batch.front().levels.size();
  for (const auto& h : batch) {
    if (h.levels.size() != depth) throw DimensionError("hhcl_total: hierarchies differ in depth");
  }

  // Contrastive batches: (features, labels) per participating level.
  std::vector<std::pair<Var, std::vector<int>>> contrast_sets;
  const std::size_t first = levels == ContrastLevels::Root ? depth - 1 : 0;
  for (std::size_t l = first; l < depth; ++l) {
    std::vector<Var> rows;
    std::vector<int> ls;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      rows.push_back(batch[s].levels[l]);
      ls.insert(ls.end(), batch[s].levels[l].value().rows(), labels[s]);
    }
    contrast_sets.emplace_back(ops::concat_rows(rows), std::move(ls));
  }
  auto contrast = [&](DistanceKind kind) {
    Var acc = zero_scalar(tape);
    for (const auto& [z, ls] : contrast_sets) {
      acc = ops::add(acc, supervised_contrastive(z, ls, weights.tau, kind, weights.lambda,
                                                 weights.curvature));
    }
    return ops::scale(acc, 1.0 / static_cast<double>(contrast_sets.size()));
  };

  HhclTerms terms;
  if (depth >= 2) {
    Var acc = zero_scalar(tape);
    for (const auto& h : batch) acc = ops::add(acc, popl(h, weights.curvature));
    terms.hpop = ops::scale(acc, 1.0 / static_cast<double>(batch.size()));
  } else {
    terms.hpop = zero_scalar(tape);
  }

  if (mode == LossMode::Hybrid) {
    terms.hcon = contrast(DistanceKind::Hybrid);
    terms.econ = zero_scalar(tape);
    terms.total = weighted_sum(tape, {{1.0, terms.hcon}, {weights.beta, terms.hpop}});
  } else {
    terms.hcon = contrast(DistanceKind::Hyperbolic);
    terms.econ = contrast(DistanceKind::Euclidean);
    terms.total = weighted_sum(tape, {{weights.w_hcon, terms.hcon},
                                      {weights.w_econ, terms.econ},
                                      {weights.w_hpop, terms.hpop}});
  }
  return terms;
}

Var total_loss(Var logits, std::span<const int> labels, Var hhcl_value, double alpha) {
  Var ce = ops::cross_entropy(logits, labels);
  if (alpha == 0.0) return ce;
  return ops::add(ce, ops::scale(hhcl_value, alpha));
}

}  // namespace hgcl::hhcl

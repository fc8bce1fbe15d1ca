#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hgcl/tape.hpp"
#include "hgcl/tensor.hpp"

// Region hierarchy over hyperedge features and the hyperbolic hierarchical
// contrastive loss built on it.
namespace hgcl::hhcl {

/// Levels of region features, leaves first. `parent_maps[l][c]` is the index in
/// level l+1 of the parent of node c in level l.
struct HierarchyTree {
  std::vector<Tensor> levels;
  std::vector<std::vector<std::size_t>> parent_maps;
  std::vector<std::size_t> fusion_ratios;

  std::size_t depth() const { return levels.size(); }
};

/// Pairing of `pairs` disjoint node pairs maximizing the summed similarity.
/// Ties resolve to the lexicographically first choice (lowest index pairs).
std::vector<std::pair<std::size_t, std::size_t>> max_similarity_pairing(const Tensor& similarity,
                                                                        std::size_t pairs);

/// Node count up to which `max_similarity_pairing` is solved exactly; larger
/// levels fall back to greedy highest-similarity pairing.
inline constexpr std::size_t kExactPairingLimit = 16;

/// Build the region hierarchy by similarity-driven merging.
///
/// Each level transition n -> t runs pairing rounds. A round reduces the
/// current groups to max(t, ceil(n/2)) by merging disjoint pairs chosen to
/// maximize total cosine similarity of group means; further rounds run until t
/// is reached. Unpaired groups carry over unchanged. Parents are the arithmetic
/// mean of their children and are ordered by their smallest child index.
HierarchyTree build_hierarchy(const Tensor& leaves, std::span<const std::size_t> fusion_ratios);

void validate_fusion_ratios(std::span<const std::size_t> fusion_ratios, std::size_t leaves);

/// A hierarchy whose level features live on a tape.
struct HierarchyVars {
  std::vector<Var> levels;
  std::vector<std::vector<std::size_t>> parent_maps;
};

/// Recompute the level features of `structure` from tape leaves (parents = child means).
HierarchyVars hierarchy_vars(Var leaves, const HierarchyTree& structure);

enum class DistanceKind { Hybrid, Hyperbolic, Euclidean };

/// |z_i - z_j| + lambda * d_L(exp0(z_i), exp0(z_j)) for two 1 x C rows; scalar result.
Var hybrid_distance(Var zi, Var zj, double lambda, double curvature);

/// All-pairs distance matrix between rows of z.
Var pairwise_distance(Var z, DistanceKind kind, double lambda, double curvature);

/// Supervised contrastive loss over a precomputed B x B distance matrix.
///
/// Per anchor i with positives P(i):
///   l_i = -(1/|P(i)|) sum_p log( exp(-D_ip/tau) / sum_{a != i} exp(-D_ia/tau) )
/// The loss is the mean of l_i over anchors with at least one positive; 0 if none.
Var contrastive_from_distances(Var distances, std::span<const int> labels, double tau);

Var supervised_contrastive(Var z, std::span<const int> labels, double tau, DistanceKind kind,
                           double lambda, double curvature);

/// Mean over level transitions of the mean child-parent hyperbolic distance.
Var popl(const HierarchyVars& tree, double curvature);

enum class LossMode { Hybrid, Split };
enum class ContrastLevels { Root, All };

LossMode parse_loss_mode(const std::string& name);
std::string to_string(LossMode mode);
ContrastLevels parse_contrast_levels(const std::string& name);
std::string to_string(ContrastLevels levels);

struct LossWeights {
  double alpha = 1.0;
  double lambda = 1.0;
  double tau = 0.1;
  double beta = 0.1;
  double w_hcon = 0.1;
  double w_econ = 0.1;
  double w_hpop = 0.1;
  double curvature = 0.1;

  void validate() const;
};

struct HhclTerms {
  Var total;
  Var hcon;  // hyperbolic-only term (split) or hybrid term (hybrid mode)
  Var econ;  // Euclidean-only term; zero in hybrid mode
  Var hpop;
};

/// Combined loss over a batch of per-sample hierarchies.
///
/// hybrid: L_con(hybrid D) + beta * L_hpop
/// split:  w_hcon * L_con(hyperbolic D) + w_econ * L_con(Euclidean D) + w_hpop * L_hpop
/// The contrastive batch is the per-sample root features (Root) or, level by
/// level, every region labeled with its sample's label, averaged over levels (All).
HhclTerms hhcl_total(std::span<const HierarchyVars> batch, std::span<const int> labels,
                     const LossWeights& weights, LossMode mode,
                     ContrastLevels levels = ContrastLevels::Root);

/// Mean cross-entropy + alpha * hhcl.
Var total_loss(Var logits, std::span<const int> labels, Var hhcl_value, double alpha);

}  // namespace hgcl::hhcl

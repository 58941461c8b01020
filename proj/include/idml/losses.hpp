#pragma once

// The seven metric-learning losses, each parameterized over a MetricKind so
// the Euclidean/cosine baselines and their introspective counterparts run
// through one code path. Every loss can also return exact gradients with
// respect to the sample embeddings and the proxies.

#include "idml/core.hpp"
#include "idml/metric.hpp"

#include <limits>
#include <string>
#include <vector>

namespace idml {

enum class LossKind {
  contrastive,
  margin_dw,
  triplet_sh,
  multi_similarity,
  softmax_proxy,
  proxy_nca,
  proxy_anchor,
};

LossKind parse_loss(const std::string& name);
std::string to_string(LossKind kind);
const std::vector<LossKind>& all_losses();

bool uses_proxies(LossKind kind);
/// Cosine-based losses and the distance-weighted margin loss work on
/// L2-normalized semantic embeddings; the rest use them as-is.
bool normalizes_semantic(LossKind kind);
/// Whether the loss compares pairs through the similarity form of the metric.
bool uses_similarity_form(LossKind kind);

struct LossParams {
  double contrastive_margin = 1.0;  // delta for the contrastive loss
  double triplet_margin = 0.2;      // delta for the triplet loss
  double margin_xi = 0.5;           // positive boundary of the margin loss
  double margin_omega = 1.4;        // negative boundary of the margin loss
  double phi = 10.0;                // distance-weighted sampling cap
  double ms_eps = 0.1;
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_lambda = 1.0;
  double pa_alpha = 32.0;
  double pa_delta = 0.1;
  bool mixed_as_anchor = true;  // mixed samples act as anchors in proxy losses

  friend bool operator==(const LossParams&, const LossParams&) = default;
  void validate() const;
};

/// One learnable representative per class, with its own uncertainty vector.
struct ProxySet {
  RowMatrix semantic;     // classes x semantic_dim
  RowMatrix uncertainty;  // classes x uncertainty_dim
  std::vector<int> class_of;

  Index size() const { return semantic.rows(); }
  void validate() const;
};

/// Encoder outputs for a batch, one sample per row.
struct EmbeddingBatch {
  RowMatrix semantic;
  RowMatrix uncertainty;

  Index size() const { return semantic.rows(); }
  EmbeddingPair pair(Index i) const {
    return {semantic.row(i).transpose(), uncertainty.row(i).transpose()};
  }
};

struct PairTerm {
  Index i = 0;
  Index j = -1;  // partner sample or proxy; -1 for per-anchor terms
  double term = 0.0;
};

struct LossValue {
  double value = 0.0;
  /// Contributions in evaluation order; value is their running sum.
  std::vector<PairTerm> pair_terms;
  bool mining_exhausted = false;
  /// Smallest distance of any hinge argument, mining comparison or sampling
  /// draw from its switching point. Finite-difference checks need it clear
  /// of their step.
  double kink_margin = std::numeric_limits<double>::infinity();
};

struct LossGradient {
  RowMatrix semantic;
  RowMatrix uncertainty;
  RowMatrix proxy_semantic;
  RowMatrix proxy_uncertainty;
};

struct LossContext {
  const EmbeddingBatch* batch = nullptr;
  const std::vector<LabelSet>* labels = nullptr;
  /// Empty means every sample is clean.
  std::vector<bool> is_mixed;
  const ProxySet* proxies = nullptr;
  MetricKind metric = MetricKind::ism;
  MetricParams metric_params;
  LossParams loss_params;
  /// Copied on use, so repeated evaluations draw identical negatives.
  Rng rng{0};
};

LossValue contrastive_loss(const LossContext& ctx, LossGradient* grad = nullptr);
LossValue margin_dw_loss(const LossContext& ctx, LossGradient* grad = nullptr);
LossValue triplet_sh_loss(const LossContext& ctx, LossGradient* grad = nullptr);
LossValue multi_similarity_loss(const LossContext& ctx, LossGradient* grad = nullptr);
LossValue softmax_proxy_loss(const LossContext& ctx, LossGradient* grad = nullptr);
LossValue proxy_nca_loss(const LossContext& ctx, LossGradient* grad = nullptr);
LossValue proxy_anchor_loss(const LossContext& ctx, LossGradient* grad = nullptr);

LossValue evaluate_loss(LossKind kind, const LossContext& ctx, LossGradient* grad = nullptr);

struct MiningMask {
  Matrix values;                                     // C* (zero where dropped)
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep;
};

/// Multi-similarity pair mining on a similarity table. For anchor i a negative
/// survives when it beats the weakest positive minus eps, a positive survives
/// when it falls below the hardest negative plus eps. If an anchor lacks one
/// of the two groups, the other group is kept whole. The diagonal is dropped.
MiningMask ms_modified_similarity(const Matrix& sims, const std::vector<LabelSet>& labels, double eps);

}  // namespace idml

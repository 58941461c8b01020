#pragma once

// Retrieval and clustering metrics plus the uncertainty / correlation
// diagnostics. Rankings break distance ties by index.

#include "idml/core.hpp"
#include "idml/losses.hpp"
#include "idml/metric.hpp"

#include <map>
#include <string>
#include <vector>

namespace idml {

/// Plain Euclidean distances between rows.
Matrix pairwise_distances(const RowMatrix& semantic);

/// Distances under any metric kind (ISM variants read the uncertainty rows).
Matrix pairwise_distances(const EmbeddingBatch& emb, MetricKind metric, const MetricParams& mp);

/// Other samples ordered by (distance, index).
std::vector<Index> ranked_neighbors(const Matrix& dists, Index query);

/// Fraction of queries with at least one matching sample among their k
/// nearest others.
double recall_at_k(const Matrix& dists, const std::vector<LabelSet>& labels, Index k);
double recall_at_k(const RowMatrix& semantic, const std::vector<LabelSet>& labels, Index k);

/// 2 I(L; C) / (H(L) + H(C)); 1 when both partitions are trivial.
double nmi(const std::vector<int>& labels, const std::vector<int>& clusters);

struct KMeansResult {
  std::vector<int> assignment;
  RowMatrix centers;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; best inertia over restarts.
KMeansResult kmeans(const RowMatrix& x, Index k, Rng& rng, int restarts = 10, int max_iter = 100);

struct RankScores {
  double r_precision = 0.0;
  double map_at_r = 0.0;
  Index skipped = 0;  // queries without any same-class partner
};

RankScores r_precision_and_map_at_r(const Matrix& dists, const std::vector<LabelSet>& labels);

inline double uncertainty_level(const EmbeddingPair& p) { return p.uncertainty.norm(); }

/// (cos(e, a_1), ..., cos(e, a_K))
Vector relative_embedding(const Vector& e, const std::vector<Vector>& anchors);

/// Relative embeddings of every row against the rows listed in `anchor_rows`.
RowMatrix relative_embeddings(const RowMatrix& x, const std::vector<Index>& anchor_rows);

struct Correlation {
  double jaccard = 0.0;
  double mrr = 0.0;
  double cosine = 0.0;
};

/// Agreement between two relative spaces: top-k neighbor Jaccard, mean
/// reciprocal rank (in the second space) of each sample's nearest neighbor in
/// the first, and mean row-wise cosine. Neighbors are ranked by cosine.
Correlation correlation_stats(const RowMatrix& rel_s, const RowMatrix& rel_u, Index knn_k);

struct EvalReport {
  std::map<int, double> recall_at_k;
  double nmi = 0.0;
  double r_precision = 0.0;
  double map_at_r = 0.0;
  double mean_uncert_clean = 0.0;
  double mean_uncert_mixed = 0.0;
  Correlation corr;
};

struct EvalOptions {
  std::vector<int> recall_ks{1, 2, 4, 8};
  MetricKind test_metric = MetricKind::euclidean;
  MetricParams metric_params;
  Index anchors = 100;
  Index knn_k = 10;
  int kmeans_restarts = 10;
  int kmeans_iters = 100;
};

/// Full report for a set of embeddings. Retrieval and clustering metrics use
/// the clean samples only; uncertainty means are split by the mixed flag.
/// The correlation uses clean rows whose semantic and uncertainty parts are
/// both nonzero, and is NaN when fewer than two remain.
EvalReport evaluate_embeddings(const EmbeddingBatch& emb, const std::vector<LabelSet>& labels,
                               const std::vector<bool>& is_mixed, const EvalOptions& opts, Rng& rng);

std::string eval_report_json(const EvalReport& r);
EvalReport eval_report_from_json(const std::string& text);
std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& r);

}  // namespace idml

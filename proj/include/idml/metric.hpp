#pragma once

// Introspective similarity metric (ISM) family and the Euclidean / Gaussian-KL
// baselines. Scalar kernels are templates so they compose with any Eigen
// scalar type; the EmbeddingPair overloads work in double.

#include "idml/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace idml {

enum class MetricKind {
  euclidean,    // plain semantic distance / cosine
  ism,          // soft introspective metric, beta = |u1 + u2|
  ism_strict,   // indicator form
  ism_dis,      // ambiguous pairs pushed toward dissimilar
  ism_sumnorm,  // soft form with beta = |u1| + |u2|
};

MetricKind parse_metric(const std::string& name);
std::string to_string(MetricKind kind);

/// Whether the metric reads the uncertainty embeddings at all.
inline bool uses_uncertainty(MetricKind kind) { return kind != MetricKind::euclidean; }

struct MetricParams {
  double gamma = 0.0;       // introspective bias
  double tau = 5.0;         // temperature
  double alpha_min = 1e-12; // clamp for the semantic distance in the ratio
  // Distance that ism_dis relaxes toward (diameter of the unit sphere).
  double dis_reference = 2.0;

  friend bool operator==(const MetricParams&, const MetricParams&) = default;
  void validate() const {
    if (!(gamma >= 0.0)) throw ParameterError("gamma must be >= 0");
    if (!(tau > 0.0)) throw ParameterError("tau must be > 0");
    if (!(alpha_min > 0.0)) throw ParameterError("alpha_min must be > 0");
  }
};

template <typename T>
struct PairGeometry {
  T alpha{};     // semantic distance
  T beta{};      // similarity uncertainty
  T beta_rel{};  // (beta + gamma) / max(alpha, alpha_min)
};

// ---------------------------------------------------------------------------
// Scalar kernels

template <typename T>
T relative_uncertainty(T alpha, T beta, const MetricParams& mp) {
  return (beta + T(mp.gamma)) / std::max(alpha, T(mp.alpha_min));
}

template <typename T>
T attenuation(T beta_rel, T tau) {
  using std::exp;
  return exp(-beta_rel / tau);
}

/// alpha * exp(-beta_rel / tau); zero at alpha == 0.
template <typename T>
T ism_distance(T alpha, T beta, const MetricParams& mp) {
  if (alpha == T(0)) return T(0);
  return alpha * attenuation(relative_uncertainty(alpha, beta, mp), T(mp.tau));
}

template <typename T>
T ism_strict(T alpha, T beta, const MetricParams& mp) {
  return alpha - beta - T(mp.gamma) > T(0) ? alpha : T(0);
}

/// 1 - (1 - c) exp(-beta_rel / tau)
template <typename T>
T ism_similarity(T c, T beta_rel, T tau) {
  if (!(c >= T(-1) && c <= T(1))) throw ParameterError("ism_similarity: c outside [-1, 1]");
  return T(1) - (T(1) - c) * attenuation(beta_rel, tau);
}

/// c exp(-beta_rel / tau); shrinks toward zero instead of one.
template <typename T>
T ism_dissim(T c, T beta_rel, T tau) {
  if (!(c >= T(-1) && c <= T(1))) throw ParameterError("ism_dissim: c outside [-1, 1]");
  return c * attenuation(beta_rel, tau);
}

/// H(alpha, beta) = dD/dalpha = exp(-x)(1 + x), x = beta_rel / tau. In (0, 1].
template <typename T>
T gradient_weight(T alpha, T beta, const MetricParams& mp) {
  if (!(alpha >= T(mp.alpha_min))) throw ParameterError("gradient_weight: alpha below clamp");
  const T x = relative_uncertainty(alpha, beta, mp) / T(mp.tau);
  using std::exp;
  return exp(-x) * (T(1) + x);
}

// ---------------------------------------------------------------------------
// Vector-level functions

template <typename DA, typename DB>
typename DA::Scalar euclidean_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  require_same_dim(a.size(), b.size(), "euclidean_distance");
  return (a - b).norm();
}

template <typename DA, typename DB>
typename DA::Scalar cosine_similarity(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                                      double norm_floor = 1e-12) {
  using T = typename DA::Scalar;
  require_same_dim(a.size(), b.size(), "cosine_similarity");
  const T na = a.norm();
  const T nb = b.norm();
  if (na < T(norm_floor) || nb < T(norm_floor)) throw DegenerateInputError("cosine_similarity: zero vector");
  return std::clamp(T(a.dot(b) / (na * nb)), T(-1), T(1));
}

/// Gaussian KL baseline, evaluated term by term as
///   -1/2 sum_k [ log(s1^2/s2^2) - s1^2/s2^2 - (m1-m2)^2/s2^2 + 1 ].
template <typename D1, typename D2, typename D3, typename D4>
typename D1::Scalar kl_gaussian(const Eigen::MatrixBase<D1>& mu1, const Eigen::MatrixBase<D2>& sigma1,
                                const Eigen::MatrixBase<D3>& mu2, const Eigen::MatrixBase<D4>& sigma2) {
  using T = typename D1::Scalar;
  require_same_dim(mu1.size(), sigma1.size(), "kl_gaussian");
  require_same_dim(mu1.size(), mu2.size(), "kl_gaussian");
  require_same_dim(mu1.size(), sigma2.size(), "kl_gaussian");
  if (!((sigma1.array() > T(0)).all() && (sigma2.array() > T(0)).all())) {
    throw ParameterError("kl_gaussian: sigma entries must be positive");
  }
  T sum(0);
  for (Index k = 0; k < mu1.size(); ++k) {
    const T ratio = sigma1(k) * sigma1(k) / (sigma2(k) * sigma2(k));
    const T diff = mu1(k) - mu2(k);
    using std::log;
    sum += log(ratio) - ratio - diff * diff / (sigma2(k) * sigma2(k)) + T(1);
  }
  return T(-0.5) * sum;
}

PairGeometry<double> pair_geometry(const EmbeddingPair& p1, const EmbeddingPair& p2, const MetricParams& mp);

/// |u1| + |u2|, the norm-then-sum alternative to beta.
double pair_uncertainty_sumnorm(const EmbeddingPair& p1, const EmbeddingPair& p2);

double ism_strict(const EmbeddingPair& p1, const EmbeddingPair& p2, const MetricParams& mp);
double ism_distance(const EmbeddingPair& p1, const EmbeddingPair& p2, const MetricParams& mp);

/// Distance between two samples under any metric kind.
double metric_distance(MetricKind kind, const EmbeddingPair& p1, const EmbeddingPair& p2,
                       const MetricParams& mp);

// ---------------------------------------------------------------------------
// Differentiable pair responses used by the losses.
//
// A response is the metric value together with its partial derivatives with
// respect to the pair's scalar ingredients: alpha, beta and (similarity form
// only) the raw cosine c.

struct PairResponse {
  double value = 0.0;
  double d_alpha = 0.0;
  double d_beta = 0.0;
  double d_cos = 0.0;
  double beta_rel = 0.0;
};

PairResponse distance_response(MetricKind kind, double alpha, double beta, const MetricParams& mp);
PairResponse similarity_response(MetricKind kind, double c, double alpha, double beta, const MetricParams& mp);

}  // namespace idml

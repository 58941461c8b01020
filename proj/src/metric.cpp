#include "idml/metric.hpp"

namespace idml {

MetricKind parse_metric(const std::string& name) {
  if (name == "euclidean") return MetricKind::euclidean;
  if (name == "ism") return MetricKind::ism;
  if (name == "ism_strict") return MetricKind::ism_strict;
  if (name == "ism_dis") return MetricKind::ism_dis;
  if (name == "ism_sumnorm" || name == "uncert_sumnorm") return MetricKind::ism_sumnorm;
  throw ParameterError("unknown metric '" + name + "'");
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::euclidean: return "euclidean";
    case MetricKind::ism: return "ism";
    case MetricKind::ism_strict: return "ism_strict";
    case MetricKind::ism_dis: return "ism_dis";
    case MetricKind::ism_sumnorm: return "ism_sumnorm";
  }
  return "?";
}

PairGeometry<double> pair_geometry(const EmbeddingPair& p1, const EmbeddingPair& p2, const MetricParams& mp) {
  require_same_dim(p1.semantic.size(), p2.semantic.size(), "pair_geometry semantic");
  require_same_dim(p1.uncertainty.size(), p2.uncertainty.size(), "pair_geometry uncertainty");
  PairGeometry<double> g;
  g.alpha = (p1.semantic - p2.semantic).norm();
  g.beta = (p1.uncertainty + p2.uncertainty).norm();
  g.beta_rel = relative_uncertainty(g.alpha, g.beta, mp);
  return g;
}

double pair_uncertainty_sumnorm(const EmbeddingPair& p1, const EmbeddingPair& p2) {
  require_same_dim(p1.uncertainty.size(), p2.uncertainty.size(), "pair_uncertainty_sumnorm");
  return p1.uncertainty.norm() + p2.uncertainty.norm();
}

double ism_strict(const EmbeddingPair& p1, const EmbeddingPair& p2, const MetricParams& mp) {
  const auto g = pair_geometry(p1, p2, mp);
  return ism_strict(g.alpha, g.beta, mp);
}

double ism_distance(const EmbeddingPair& p1, const EmbeddingPair& p2, const MetricParams& mp) {
  const auto g = pair_geometry(p1, p2, mp);
  return ism_distance(g.alpha, g.beta, mp);
}

double metric_distance(MetricKind kind, const EmbeddingPair& p1, const EmbeddingPair& p2,
                       const MetricParams& mp) {
  const auto g = pair_geometry(p1, p2, mp);
  const double beta = kind == MetricKind::ism_sumnorm ? pair_uncertainty_sumnorm(p1, p2) : g.beta;
  return distance_response(kind, g.alpha, beta, mp).value;
}

PairResponse distance_response(MetricKind kind, double alpha, double beta, const MetricParams& mp) {
  PairResponse r;
  if (kind == MetricKind::euclidean) {
    r.value = alpha;
    r.d_alpha = 1.0;
    return r;
  }
  if (kind == MetricKind::ism_strict) {
    const bool on = alpha - beta - mp.gamma > 0.0;
    r.value = on ? alpha : 0.0;
    r.d_alpha = on ? 1.0 : 0.0;
    r.beta_rel = relative_uncertainty(alpha, beta, mp);
    return r;
  }

  const bool clamped = alpha < mp.alpha_min;
  const double a = clamped ? mp.alpha_min : alpha;
  const double br = (beta + mp.gamma) / a;
  const double e = std::exp(-br / mp.tau);
  // d(beta_rel)/d(alpha) and d(beta_rel)/d(beta)
  const double dbr_da = clamped ? 0.0 : -br / a;
  const double dbr_db = 1.0 / a;
  r.beta_rel = br;

  if (kind == MetricKind::ism_dis) {
    // rho - (rho - alpha) e
    const double rho = mp.dis_reference;
    r.value = rho - (rho - alpha) * e;
    const double dv_dbr = (rho - alpha) * e / mp.tau;
    r.d_alpha = e + dv_dbr * dbr_da;
    r.d_beta = dv_dbr * dbr_db;
    return r;
  }

  // ism, ism_sumnorm
  if (alpha == 0.0) {
    r.value = 0.0;
    r.d_alpha = e;
    return r;
  }
  r.value = alpha * e;
  const double dv_dbr = -alpha * e / mp.tau;
  r.d_alpha = e + dv_dbr * dbr_da;
  r.d_beta = dv_dbr * dbr_db;
  return r;
}

PairResponse similarity_response(MetricKind kind, double c, double alpha, double beta, const MetricParams& mp) {
  PairResponse r;
  if (kind == MetricKind::euclidean) {
    r.value = c;
    r.d_cos = 1.0;
    return r;
  }
  r.beta_rel = relative_uncertainty(alpha, beta, mp);
  if (kind == MetricKind::ism_strict) {
    const bool on = alpha - beta - mp.gamma > 0.0;
    r.value = on ? c : 1.0;
    r.d_cos = on ? 1.0 : 0.0;
    return r;
  }

  const bool clamped = alpha < mp.alpha_min;
  const double a = clamped ? mp.alpha_min : alpha;
  const double br = r.beta_rel;
  const double e = std::exp(-br / mp.tau);
  const double dbr_da = clamped ? 0.0 : -br / a;
  const double dbr_db = 1.0 / a;

  double dv_dbr = 0.0;
  if (kind == MetricKind::ism_dis) {
    r.value = c * e;
    r.d_cos = e;
    dv_dbr = -c * e / mp.tau;
  } else {
    r.value = 1.0 - (1.0 - c) * e;
    r.d_cos = e;
    dv_dbr = (1.0 - c) * e / mp.tau;
  }
  r.d_alpha = dv_dbr * dbr_da;
  r.d_beta = dv_dbr * dbr_db;
  return r;
}

}  // namespace idml

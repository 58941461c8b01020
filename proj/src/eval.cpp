#include "idml/eval.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace idml {

Matrix pairwise_distances(const RowMatrix& semantic) {
  const Index n = semantic.rows();
  Matrix d = Matrix::Zero(n, n);
  parallel_for(n, [&](Index i) {
    for (Index j = 0; j < n; ++j) {
      if (j != i) d(i, j) = (semantic.row(i) - semantic.row(j)).norm();
    }
  });
  return d;
}

Matrix pairwise_distances(const EmbeddingBatch& emb, MetricKind metric, const MetricParams& mp) {
  if (metric == MetricKind::euclidean) return pairwise_distances(emb.semantic);
  const Index n = emb.size();
  Matrix d = Matrix::Zero(n, n);
  parallel_for(n, [&](Index i) {
    const EmbeddingPair pi = emb.pair(i);
    for (Index j = 0; j < n; ++j) {
      // Same argument order for (i, j) and (j, i) keeps the table symmetric.
      if (j != i) d(i, j) = i < j ? metric_distance(metric, pi, emb.pair(j), mp) : metric_distance(metric, emb.pair(j), pi, mp);
    }
  });
  return d;
}

std::vector<Index> ranked_neighbors(const Matrix& dists, Index query) {
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(dists.cols()));
  for (Index j = 0; j < dists.cols(); ++j) {
    if (j != query) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double da = dists(query, a);
    const double db = dists(query, b);
    return da < db || (da == db && a < b);
  });
  return order;
}

double recall_at_k(const Matrix& dists, const std::vector<LabelSet>& labels, Index k) {
  const Index n = dists.rows();
  if (dists.cols() != n || static_cast<Index>(labels.size()) != n) throw ShapeError("recall_at_k: shape mismatch");
  if (k < 1 || k >= n) throw ParameterError("recall_at_k: need 1 <= k < N");
  std::vector<char> hit(static_cast<std::size_t>(n), 0);
  parallel_for(n, [&](Index q) {
    std::vector<Index> others;
    others.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j) {
      if (j != q) others.push_back(j);
    }
    auto closer = [&](Index a, Index b) {
      return dists(q, a) < dists(q, b) || (dists(q, a) == dists(q, b) && a < b);
    };
    std::partial_sort(others.begin(), others.begin() + k, others.end(), closer);
    for (Index r = 0; r < k; ++r) {
      if (labels_match(labels[static_cast<std::size_t>(q)], labels[static_cast<std::size_t>(others[static_cast<std::size_t>(r)])])) {
        hit[static_cast<std::size_t>(q)] = 1;
        break;
      }
    }
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(n);
}

double recall_at_k(const RowMatrix& semantic, const std::vector<LabelSet>& labels, Index k) {
  return recall_at_k(pairwise_distances(semantic), labels, k);
}

double nmi(const std::vector<int>& labels, const std::vector<int>& clusters) {
  if (labels.size() != clusters.size()) throw ShapeError("nmi: length mismatch");
  if (labels.empty()) throw ParameterError("nmi: empty input");
  // Dense re-indexing so the contingency table is a small matrix.
  auto reindex = [](const std::vector<int>& v, std::vector<int>& out) {
    std::map<int, int> ids;
    out.resize(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = ids.emplace(v[k], static_cast<int>(ids.size())).first->second;
    return static_cast<Index>(ids.size());
  };
  std::vector<int> l, c;
  const Index nl = reindex(labels, l);
  const Index nc = reindex(clusters, c);
  Matrix joint = Matrix::Zero(nl, nc);
  for (std::size_t k = 0; k < l.size(); ++k) joint(l[k], c[k]) += 1.0;
  joint /= static_cast<double>(labels.size());
  const Vector pl = joint.rowwise().sum();
  const Vector pc = joint.colwise().sum().transpose();
  auto entropy = [](const Vector& p) {
    double h = 0.0;
    for (Index k = 0; k < p.size(); ++k) {
      if (p(k) > 0.0) h -= p(k) * std::log(p(k));
    }
    return h;
  };
  const double hl = entropy(pl);
  const double hc = entropy(pc);
  if (hl + hc == 0.0) return 1.0;
  double mi = 0.0;
  for (Index a = 0; a < nl; ++a) {
    for (Index b = 0; b < nc; ++b) {
      if (joint(a, b) > 0.0) mi += joint(a, b) * std::log(joint(a, b) / (pl(a) * pc(b)));
    }
  }
  return std::clamp(2.0 * mi / (hl + hc), 0.0, 1.0);
}

namespace {

KMeansResult kmeans_once(const RowMatrix& x, Index k, Rng& rng, int max_iter) {
  const Index n = x.rows();
  KMeansResult res;
  res.centers.resize(k, x.cols());
  // k-means++ seeding
  res.centers.row(0) = x.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector closest = (x.rowwise() - res.centers.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = closest.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      double target = rng.next_double() * total;
      for (Index i = 0; i < n; ++i) {
        target -= closest(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    res.centers.row(c) = x.row(pick);
    closest = closest.cwiseMin((x.rowwise() - res.centers.row(c)).rowwise().squaredNorm());
  }

  res.assignment.assign(static_cast<std::size_t>(n), -1);
  Vector best_d(n);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double d = (x.row(i) - res.centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      best_d(i) = bd;
      if (res.assignment[static_cast<std::size_t>(i)] != static_cast<int>(arg)) {
        res.assignment[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        changed = true;
      }
    }
    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(res.assignment[static_cast<std::size_t>(i)]) += x.row(i);
      counts(res.assignment[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        res.centers.row(c) = sums.row(c) / counts(c);
      } else {
        // Empty cluster: move it onto the worst-served point.
        Index far = 0;
        best_d.maxCoeff(&far);
        res.centers.row(c) = x.row(far);
        best_d(far) = 0.0;
        changed = true;
      }
    }
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    res.inertia += (x.row(i) - res.centers.row(res.assignment[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return res;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& x, Index k, Rng& rng, int restarts, int max_iter) {
  if (k < 1 || k > x.rows()) throw ParameterError("kmeans: need 1 <= k <= N");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    KMeansResult res = kmeans_once(x, k, rng, max_iter);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

RankScores r_precision_and_map_at_r(const Matrix& dists, const std::vector<LabelSet>& labels) {
  const Index n = dists.rows();
  if (dists.cols() != n || static_cast<Index>(labels.size()) != n) throw ShapeError("r_precision: shape mismatch");
  Vector rp = Vector::Zero(n);
  Vector ap = Vector::Zero(n);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  parallel_for(n, [&](Index q) {
    const auto& lq = labels[static_cast<std::size_t>(q)];
    Index r = 0;
    for (Index j = 0; j < n; ++j) {
      if (j != q && labels_match(lq, labels[static_cast<std::size_t>(j)])) ++r;
    }
    if (r == 0) return;
    used[static_cast<std::size_t>(q)] = 1;
    const std::vector<Index> order = ranked_neighbors(dists, q);
    Index hits = 0;
    double precision_sum = 0.0;
    for (Index i = 0; i < r; ++i) {
      if (labels_match(lq, labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    }
    rp(q) = static_cast<double>(hits) / static_cast<double>(r);
    ap(q) = precision_sum / static_cast<double>(r);
  });
  RankScores out;
  Index count = 0;
  for (Index q = 0; q < n; ++q) {
    if (!used[static_cast<std::size_t>(q)]) {
      ++out.skipped;
      continue;
    }
    ++count;
    out.r_precision += rp(q);
    out.map_at_r += ap(q);
  }
  if (count > 0) {
    out.r_precision /= static_cast<double>(count);
    out.map_at_r /= static_cast<double>(count);
  }
  return out;
}

Vector relative_embedding(const Vector& e, const std::vector<Vector>& anchors) {
  if (anchors.empty()) throw ParameterError("relative_embedding: no anchors");
  Vector r(static_cast<Index>(anchors.size()));
  for (std::size_t k = 0; k < anchors.size(); ++k) r(static_cast<Index>(k)) = cosine_similarity(e, anchors[k]);
  return r;
}

RowMatrix relative_embeddings(const RowMatrix& x, const std::vector<Index>& anchor_rows) {
  if (anchor_rows.empty()) throw ParameterError("relative_embeddings: no anchors");
  std::vector<Vector> anchors;
  anchors.reserve(anchor_rows.size());
  for (Index a : anchor_rows) anchors.push_back(x.row(a).transpose());
  RowMatrix out(x.rows(), static_cast<Index>(anchor_rows.size()));
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = relative_embedding(x.row(i).transpose(), anchors).transpose();
  return out;
}

namespace {

// Pairwise cosine similarity; zero rows give similarity 0.
Matrix cosine_table(const RowMatrix& x) {
  const Vector norms = x.rowwise().norm();
  Matrix sim = x * x.transpose();
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.rows(); ++j) {
      const double nn = norms(i) * norms(j);
      sim(i, j) = nn > 0.0 ? sim(i, j) / nn : 0.0;
    }
  }
  return sim;
}

std::vector<Index> most_similar(const Matrix& sim, Index q) {
  std::vector<Index> order;
  for (Index j = 0; j < sim.cols(); ++j) {
    if (j != q) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return sim(q, a) > sim(q, b) || (sim(q, a) == sim(q, b) && a < b);
  });
  return order;
}

}  // namespace

Correlation correlation_stats(const RowMatrix& rel_s, const RowMatrix& rel_u, Index knn_k) {
  const Index n = rel_s.rows();
  if (rel_u.rows() != n) throw ShapeError("correlation_stats: sample counts differ");
  if (knn_k < 1 || knn_k >= n) throw ParameterError("correlation_stats: need 1 <= knn_k < N");
  const Matrix sim_s = cosine_table(rel_s);
  const Matrix sim_u = cosine_table(rel_u);
  Correlation c;
  for (Index i = 0; i < n; ++i) {
    const auto ns = most_similar(sim_s, i);
    const auto nu = most_similar(sim_u, i);
    std::vector<Index> a(ns.begin(), ns.begin() + knn_k);
    std::vector<Index> b(nu.begin(), nu.begin() + knn_k);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<Index> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    const double uni = static_cast<double>(2 * knn_k) - static_cast<double>(inter.size());
    c.jaccard += static_cast<double>(inter.size()) / uni;
    const auto pos = std::find(nu.begin(), nu.end(), ns.front()) - nu.begin();
    c.mrr += 1.0 / static_cast<double>(pos + 1);
    const double nn = rel_s.row(i).norm() * rel_u.row(i).norm();
    c.cosine += nn > 0.0 ? rel_s.row(i).dot(rel_u.row(i)) / nn : 0.0;
  }
  c.jaccard /= static_cast<double>(n);
  c.mrr /= static_cast<double>(n);
  c.cosine /= static_cast<double>(n);
  return c;
}

EvalReport evaluate_embeddings(const EmbeddingBatch& emb, const std::vector<LabelSet>& labels,
                               const std::vector<bool>& is_mixed, const EvalOptions& opts, Rng& rng) {
  const Index n = emb.size();
  if (static_cast<Index>(labels.size()) != n || static_cast<Index>(is_mixed.size()) != n) {
    throw ShapeError("evaluate_embeddings: shape mismatch");
  }
  std::vector<Index> clean;
  EvalReport r;
  Index mixed_count = 0;
  for (Index i = 0; i < n; ++i) {
    const double level = emb.uncertainty.row(i).norm();
    if (is_mixed[static_cast<std::size_t>(i)]) {
      r.mean_uncert_mixed += level;
      ++mixed_count;
    } else {
      r.mean_uncert_clean += level;
      clean.push_back(i);
    }
  }
  const auto nc = static_cast<Index>(clean.size());
  if (nc < 2) throw ParameterError("evaluate_embeddings: need at least two clean samples");
  r.mean_uncert_clean /= static_cast<double>(nc);
  if (mixed_count > 0) r.mean_uncert_mixed /= static_cast<double>(mixed_count);

  EmbeddingBatch sub;
  sub.semantic.resize(nc, emb.semantic.cols());
  sub.uncertainty.resize(nc, emb.uncertainty.cols());
  std::vector<LabelSet> sub_labels;
  std::vector<int> primary;
  for (Index k = 0; k < nc; ++k) {
    sub.semantic.row(k) = emb.semantic.row(clean[static_cast<std::size_t>(k)]);
    sub.uncertainty.row(k) = emb.uncertainty.row(clean[static_cast<std::size_t>(k)]);
    sub_labels.push_back(labels[static_cast<std::size_t>(clean[static_cast<std::size_t>(k)])]);
    primary.push_back(sub_labels.back().primary());
  }

  const Matrix dists = pairwise_distances(sub, opts.test_metric, opts.metric_params);
  for (int k : opts.recall_ks) {
    if (k < nc) r.recall_at_k[k] = recall_at_k(dists, sub_labels, k);
  }
  const RankScores rank = r_precision_and_map_at_r(dists, sub_labels);
  r.r_precision = rank.r_precision;
  r.map_at_r = rank.map_at_r;

  std::vector<int> classes = primary;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const KMeansResult km = kmeans(sub.semantic, static_cast<Index>(classes.size()), rng, opts.kmeans_restarts,
                                 opts.kmeans_iters);
  r.nmi = nmi(primary, km.assignment);

  // Cosines are undefined for zero vectors, so the diagnostic only looks at
  // rows with both parts nonzero.
  std::vector<Index> usable;
  for (Index k = 0; k < nc; ++k) {
    if (sub.semantic.row(k).norm() >= 1e-12 && sub.uncertainty.row(k).norm() >= 1e-12) usable.push_back(k);
  }
  const auto nu = static_cast<Index>(usable.size());
  if (nu < 2) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.corr = {nan, nan, nan};
    return r;
  }
  RowMatrix s_rows(nu, sub.semantic.cols()), u_rows(nu, sub.uncertainty.cols());
  for (Index k = 0; k < nu; ++k) {
    s_rows.row(k) = sub.semantic.row(usable[static_cast<std::size_t>(k)]);
    u_rows.row(k) = sub.uncertainty.row(usable[static_cast<std::size_t>(k)]);
  }
  const std::vector<Index> anchors = rng.sample_without_replacement(nu, std::min(opts.anchors, nu));
  const RowMatrix rel_s = relative_embeddings(s_rows, anchors);
  const RowMatrix rel_u = relative_embeddings(u_rows, anchors);
  r.corr = correlation_stats(rel_s, rel_u, std::min(opts.knn_k, nu - 1));
  return r;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.recall_at_k) recall[std::to_string(k)] = v;
  j["recall_at_k"] = recall;
  j["nmi"] = r.nmi;
  j["r_precision"] = r.r_precision;
  j["map_at_r"] = r.map_at_r;
  j["mean_uncert_clean"] = r.mean_uncert_clean;
  j["mean_uncert_mixed"] = r.mean_uncert_mixed;
  j["corr"] = {{"jaccard", r.corr.jaccard}, {"mrr", r.corr.mrr}, {"cosine", r.corr.cosine}};
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  for (const auto& [k, v] : j.at("recall_at_k").items()) r.recall_at_k[std::stoi(k)] = v.get<double>();
  r.nmi = j.at("nmi").get<double>();
  r.r_precision = j.at("r_precision").get<double>();
  r.map_at_r = j.at("map_at_r").get<double>();
  r.mean_uncert_clean = j.at("mean_uncert_clean").get<double>();
  r.mean_uncert_mixed = j.at("mean_uncert_mixed").get<double>();
  // Undefined correlations are written as null.
  const auto corr = [&](const char* key) {
    const auto& v = j.at("corr").at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  r.corr.jaccard = corr("jaccard");
  r.corr.mrr = corr("mrr");
  r.corr.cosine = corr("cosine");
  return r;
}

std::string eval_csv_header() {
  return "recall_at_1,recall_at_2,recall_at_4,recall_at_8,nmi,r_precision,map_at_r,mean_uncert_clean,"
         "mean_uncert_mixed,corr_jaccard,corr_mrr,corr_cosine";
}

std::string eval_csv_row(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  for (int k : {1, 2, 4, 8}) {
    const auto it = r.recall_at_k.find(k);
    if (it != r.recall_at_k.end()) os << it->second;
    os << ',';
  }
  os << r.nmi << ',' << r.r_precision << ',' << r.map_at_r << ',' << r.mean_uncert_clean << ','
     << r.mean_uncert_mixed << ',' << r.corr.jaccard << ',' << r.corr.mrr << ',' << r.corr.cosine;
  return os.str();
}

}  // namespace idml

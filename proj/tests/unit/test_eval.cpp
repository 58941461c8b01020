#include "doctest.h"

#include "idml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace idml;

namespace {

std::vector<LabelSet> singles(const std::vector<int>& ids) {
  std::vector<LabelSet> out;
  for (int id : ids) out.push_back(LabelSet::single(id));
  return out;
}

RowMatrix points(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index k = 0;
    for (double v : row) m(i, k++) = v;
    ++i;
  }
  return m;
}

// Exhaustive references: sort every other sample by (distance, index).
std::vector<Index> brute_order(const Matrix& d, Index q) {
  std::vector<std::pair<double, Index>> v;
  for (Index j = 0; j < d.cols(); ++j)
    if (j != q) v.emplace_back(d(q, j), j);
  std::sort(v.begin(), v.end());
  std::vector<Index> out;
  for (const auto& p : v) out.push_back(p.second);
  return out;
}

double brute_recall(const Matrix& d, const std::vector<LabelSet>& labels, Index k) {
  double hits = 0.0;
  for (Index q = 0; q < d.rows(); ++q) {
    const auto order = brute_order(d, q);
    bool hit = false;
    for (Index t = 0; t < k; ++t) hit = hit || labels_match(labels[std::size_t(q)], labels[std::size_t(order[std::size_t(t)])]);
    hits += hit;
  }
  return hits / static_cast<double>(d.rows());
}

std::pair<double, double> brute_rp_map(const Matrix& d, const std::vector<LabelSet>& labels) {
  double rp = 0.0, map = 0.0;
  int count = 0;
  for (Index q = 0; q < d.rows(); ++q) {
    const auto order = brute_order(d, q);
    std::vector<bool> rel;
    for (Index j : order) rel.push_back(labels_match(labels[std::size_t(q)], labels[std::size_t(j)]));
    const auto r = static_cast<Index>(std::count(rel.begin(), rel.end(), true));
    if (r == 0) continue;
    double hits = 0.0, ap = 0.0;
    for (Index i = 0; i < r; ++i) {
      if (rel[std::size_t(i)]) {
        hits += 1.0;
        ap += hits / static_cast<double>(i + 1);
      }
    }
    rp += hits / static_cast<double>(r);
    map += ap / static_cast<double>(r);
    ++count;
  }
  return {rp / count, map / count};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("pairwise distances and ranking") {
  const RowMatrix x = points({{0, 0}, {3, 4}, {0, 1}, {0, -1}});
  const Matrix d = pairwise_distances(x);
  CHECK(d(0, 1) == 5.0);
  CHECK(d(1, 0) == 5.0);
  CHECK(d.diagonal().isZero());
  // Samples 2 and 3 tie at distance 1 from 0; the lower index ranks first.
  CHECK(ranked_neighbors(d, 0) == std::vector<Index>{2, 3, 1});
}

TEST_CASE("recall examples") {
  const RowMatrix one_class = points({{0}, {1}, {5}, {9}});
  CHECK(recall_at_k(one_class, singles({7, 7, 7, 7}), 1) == 1.0);
  CHECK(recall_at_k(one_class, singles({7, 7, 7, 7}), 3) == 1.0);

  const RowMatrix sep = points({{0, 0}, {0, 0.1}, {10, 0}, {10, 0.1}});
  CHECK(recall_at_k(sep, singles({0, 0, 1, 1}), 1) == 1.0);

  // Query 1 sits next to a cross-class sample.
  const RowMatrix x = points({{0}, {2}, {2.5}, {10}});
  const auto labels = singles({0, 0, 1, 1});
  const Matrix d = pairwise_distances(x);
  CHECK(ranked_neighbors(d, 1).front() == 2);
  CHECK(recall_at_k(d, labels, 1) == doctest::Approx(0.5));  // queries 0 and 3 hit, 1 and 2 miss
  CHECK(recall_at_k(d, labels, 2) == doctest::Approx(0.75));  // query 2 still sees two class-0 points
  CHECK(recall_at_k(d, labels, 3) == 1.0);

  CHECK_THROWS_AS(recall_at_k(d, labels, 4), ParameterError);
  CHECK_THROWS_AS(recall_at_k(d, labels, 0), ParameterError);
  CHECK_THROWS_AS(recall_at_k(d, singles({0, 0}), 1), ShapeError);
}

TEST_CASE("recall agrees with exhaustive ranking and is monotone in k") {
  Rng rng(71);
  for (int t = 0; t < 50; ++t) {
    const Index n = 5 + static_cast<Index>(rng.below(30));
    RowMatrix x(n, 3);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < 3; ++k) x(i, k) = std::round(2.0 * rng.normal());  // many ties
    std::vector<int> ids;
    for (Index i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.below(4)));
    const auto labels = singles(ids);
    const Matrix d = pairwise_distances(x);
    double prev = 0.0;
    for (Index k = 1; k < n; ++k) {
      const double r = recall_at_k(d, labels, k);
      CHECK(r == doctest::Approx(brute_recall(d, labels, k)).epsilon(1e-15));
      CHECK(r >= prev);
      prev = r;
    }
  }
}

TEST_CASE("NMI examples") {
  CHECK(nmi({0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nmi({0, 0, 1, 1, 2}, {5, 5, 3, 3, 9}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nmi({0, 0, 1, 1}, {0, 0, 0, 0}) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK(nmi({4, 4, 4}, {1, 1, 1}) == 1.0);
  CHECK(nmi({0, 0, 1, 1}, {0, 0, 0, 1}) == doctest::Approx(0.34371101848545083159).epsilon(1e-14));
  CHECK_THROWS_AS(nmi({0, 1}, {0}), ShapeError);
  CHECK_THROWS_AS(nmi({}, {}), ParameterError);
}

TEST_CASE("NMI is symmetric and label-permutation invariant") {
  Rng rng(72);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> a, b;
    for (int i = 0; i < 30; ++i) {
      a.push_back(static_cast<int>(rng.below(4)));
      b.push_back(static_cast<int>(rng.below(3)));
    }
    const double v = nmi(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-15);
    CHECK(nmi(b, a) == doctest::Approx(v).epsilon(1e-14));
    std::vector<int> relabelled = b;
    for (int& c : relabelled) c = 10 - c;
    CHECK(nmi(a, relabelled) == doctest::Approx(v).epsilon(1e-14));
  }
}

TEST_CASE("k-means recovers separated clusters") {
  Rng rng(73);
  RowMatrix x(60, 2);
  std::vector<int> truth;
  for (Index i = 0; i < 60; ++i) {
    const int c = static_cast<int>(i % 3);
    truth.push_back(c);
    x(i, 0) = 20.0 * c + 0.5 * rng.normal();
    x(i, 1) = -15.0 * c + 0.5 * rng.normal();
  }
  const KMeansResult km = kmeans(x, 3, rng);
  CHECK(nmi(truth, km.assignment) == doctest::Approx(1.0).epsilon(1e-12));
  double inertia = 0.0;
  for (Index i = 0; i < 60; ++i) inertia += (x.row(i) - km.centers.row(km.assignment[std::size_t(i)])).squaredNorm();
  CHECK(km.inertia == doctest::Approx(inertia).epsilon(1e-12));
  CHECK_THROWS_AS(kmeans(x, 61, rng), ParameterError);

  Rng r1(9), r2(9);
  CHECK(kmeans(x, 4, r1).assignment == kmeans(x, 4, r2).assignment);
}

TEST_CASE("R-precision and MAP@R examples") {
  // Query 0 has two same-class partners (1, 2) and one other (3).
  const auto labels = singles({0, 0, 0, 1});
  Matrix d(4, 4);
  d << 0, 1, 3, 2,  //
      1, 0, 1, 5,   //
      3, 1, 0, 5,   //
      2, 5, 5, 0;
  const RankScores s = r_precision_and_map_at_r(d, labels);
  // Query 0 ranks (pos, neg): RP 0.5, MAP@R 0.5. Queries 1 and 2 are perfect;
  // query 3 has no partner and is skipped.
  CHECK(s.skipped == 1);
  CHECK(s.r_precision == doctest::Approx((0.5 + 1.0 + 1.0) / 3.0).epsilon(1e-15));
  CHECK(s.map_at_r == doctest::Approx((0.5 + 1.0 + 1.0) / 3.0).epsilon(1e-15));

  d(0, 3) = d(3, 0) = 0.5;  // query 0 now ranks (neg, pos)
  d(0, 2) = d(2, 0) = 1.5;
  const RankScores t = r_precision_and_map_at_r(d, labels);
  CHECK(t.r_precision == doctest::Approx((0.5 + 1.0 + 1.0) / 3.0).epsilon(1e-15));
  CHECK(t.map_at_r == doctest::Approx((0.25 + 1.0 + 1.0) / 3.0).epsilon(1e-15));

  const RowMatrix perfect = points({{0}, {0.1}, {5}, {5.1}});
  const RankScores p = r_precision_and_map_at_r(pairwise_distances(perfect), singles({0, 0, 1, 1}));
  CHECK(p.r_precision == 1.0);
  CHECK(p.map_at_r == 1.0);
}

TEST_CASE("R-precision and MAP@R agree with an exhaustive reference") {
  Rng rng(74);
  for (int t = 0; t < 50; ++t) {
    const Index n = 6 + static_cast<Index>(rng.below(25));
    RowMatrix x(n, 2);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < 2; ++k) x(i, k) = std::round(3.0 * rng.normal());
    std::vector<int> ids;
    for (Index i = 0; i < n; ++i) ids.push_back(static_cast<int>(i % 3));
    const auto labels = singles(ids);
    const Matrix d = pairwise_distances(x);
    const RankScores s = r_precision_and_map_at_r(d, labels);
    const auto [rp, map] = brute_rp_map(d, labels);
    CHECK(s.r_precision == doctest::Approx(rp).epsilon(1e-14));
    CHECK(s.map_at_r == doctest::Approx(map).epsilon(1e-14));
    CHECK(s.map_at_r <= s.r_precision + 1e-15);
  }
}

TEST_CASE("retrieval metrics are permutation invariant") {
  Rng rng(75);
  const Index n = 20;
  RowMatrix x(n, 3);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < 3; ++k) x(i, k) = rng.normal();
  std::vector<int> ids;
  for (Index i = 0; i < n; ++i) ids.push_back(static_cast<int>(i % 4));
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) std::swap(perm[std::size_t(i)], perm[rng.below(std::uint64_t(i + 1))]);
  RowMatrix y(n, 3);
  std::vector<int> pids;
  for (Index i = 0; i < n; ++i) {
    y.row(i) = x.row(perm[std::size_t(i)]);
    pids.push_back(ids[std::size_t(perm[std::size_t(i)])]);
  }
  for (Index k : {1, 2, 4}) CHECK(recall_at_k(x, singles(ids), k) == doctest::Approx(recall_at_k(y, singles(pids), k)));
  const RankScores a = r_precision_and_map_at_r(pairwise_distances(x), singles(ids));
  const RankScores b = r_precision_and_map_at_r(pairwise_distances(y), singles(pids));
  CHECK(a.r_precision == doctest::Approx(b.r_precision).epsilon(1e-14));
  CHECK(a.map_at_r == doctest::Approx(b.map_at_r).epsilon(1e-14));
}

TEST_CASE("uncertainty level") {
  EmbeddingPair p{Vector::Zero(2), Vector::Zero(2)};
  CHECK(uncertainty_level(p) == 0.0);
  p.uncertainty << 3, 4;
  CHECK(uncertainty_level(p) == 5.0);
}

TEST_CASE("relative embedding examples") {
  Vector e(2), a(2), b(2);
  e << 1, 0;
  a << 2, 0;
  b << 0, 3;
  Vector r = relative_embedding(e, {a, b});
  CHECK(r(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r(1) == 0.0);
  Vector o(3), u(3), v(3);
  o << 0, 0, 1;
  u << 1, 0, 0;
  v << 1, 1, 0;
  CHECK(relative_embedding(o, {u, v}).isZero());
  CHECK(relative_embedding(u, {u})(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(relative_embedding(e, {}), ParameterError);
  CHECK_THROWS_AS(relative_embedding(e, {Vector::Zero(2)}), DegenerateInputError);

  const RowMatrix x = points({{1, 0}, {0, 2}, {1, 1}});
  const RowMatrix rel = relative_embeddings(x, {0, 1});
  CHECK(rel(2, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(rel(2, 1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
}

TEST_CASE("correlation of identical spaces is perfect") {
  Rng rng(76);
  RowMatrix r(15, 6);
  for (Index i = 0; i < 15; ++i)
    for (Index k = 0; k < 6; ++k) r(i, k) = rng.normal();
  const Correlation c = correlation_stats(r, r, 4);
  CHECK(c.jaccard == 1.0);
  CHECK(c.mrr == 1.0);
  CHECK(c.cosine == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("correlation on a three-sample construction") {
  const RowMatrix s = points({{1, 0}, {1, 0.1}, {0, 1}});
  const RowMatrix u = points({{1, 0}, {0, 1}, {0.1, 1}});
  const Correlation c = correlation_stats(s, u, 1);
  // Semantic nearest neighbours: 0->1, 1->0, 2->1. Uncertainty rankings:
  // 0:(2,1), 1:(2,0), 2:(1,0).
  CHECK(c.jaccard == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(c.mrr == doctest::Approx((0.5 + 0.5 + 1.0) / 3.0).epsilon(1e-15));
  CHECK(c.cosine == doctest::Approx((1.0 + 0.1 / std::sqrt(1.01) + 1.0 / std::sqrt(1.01)) / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(correlation_stats(s, u, 3), ParameterError);
  CHECK_THROWS_AS(correlation_stats(s, u.topRows(2), 1), ShapeError);
}

TEST_CASE("unrelated relative spaces have near-zero cosine") {
  Rng rng(77);
  const Index n = 400, k = 50;
  RowMatrix s(n, k), u(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) {
      s(i, j) = rng.normal();
      u(i, j) = rng.normal();
    }
    // Remove the component along s so the rows are exactly orthogonal on average.
    u.row(i) -= (u.row(i).dot(s.row(i)) / s.row(i).squaredNorm()) * s.row(i);
  }
  CHECK(std::abs(correlation_stats(s, u, 10).cosine) < 1e-12);

  RowMatrix w(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) w(i, j) = rng.normal();
  CHECK(std::abs(correlation_stats(s, w, 10).cosine) < 3.0 / std::sqrt(double(k * n)));
}

TEST_CASE("evaluate_embeddings splits clean and mixed samples") {
  Rng rng(78);
  EmbeddingBatch emb;
  const Index n = 24;
  emb.semantic.resize(n, 2);
  emb.uncertainty.resize(n, 2);
  std::vector<LabelSet> labels;
  std::vector<bool> mixed;
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    const bool m = i >= 20;
    emb.semantic(i, 0) = 10.0 * c + 0.1 * rng.normal();
    emb.semantic(i, 1) = 0.1 * rng.normal();
    emb.uncertainty.row(i) << (m ? 3.0 : 0.0), (m ? 4.0 : 1.0);
    labels.push_back(m ? LabelSet{0, 1} : LabelSet::single(c));
    mixed.push_back(m);
  }
  const EvalReport r = evaluate_embeddings(emb, labels, mixed, EvalOptions{}, rng);
  CHECK(r.recall_at_k.at(1) == 1.0);
  CHECK(r.recall_at_k.size() == 4);
  CHECK(r.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.r_precision == 1.0);
  CHECK(r.map_at_r == 1.0);
  CHECK(r.mean_uncert_clean == 1.0);
  CHECK(r.mean_uncert_mixed == 5.0);

  mixed.pop_back();
  CHECK_THROWS_AS(evaluate_embeddings(emb, labels, mixed, EvalOptions{}, rng), ShapeError);
}

TEST_CASE("correlation is undefined without uncertainty") {
  Rng rng(79);
  EmbeddingBatch emb;
  emb.semantic = RowMatrix::Random(12, 3);
  emb.uncertainty = RowMatrix::Zero(12, 3);
  std::vector<LabelSet> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(LabelSet::single(i % 3));
  const EvalReport r = evaluate_embeddings(emb, labels, std::vector<bool>(12, false), EvalOptions{}, rng);
  CHECK(std::isnan(r.corr.cosine));
  CHECK(std::isnan(r.corr.jaccard));
  const std::string json = eval_report_json(r);
  CHECK(json.find("\"cosine\": null") != std::string::npos);
  CHECK(std::isnan(eval_report_from_json(json).corr.cosine));

  // One row with a nonzero uncertainty is still not enough; three are.
  emb.uncertainty.row(0) << 1, 0, 0;
  CHECK(std::isnan(evaluate_embeddings(emb, labels, std::vector<bool>(12, false), EvalOptions{}, rng).corr.mrr));
  emb.uncertainty.row(1) << 0, 1, 0;
  emb.uncertainty.row(2) << 0, 0, 1;
  CHECK(std::isfinite(evaluate_embeddings(emb, labels, std::vector<bool>(12, false), EvalOptions{}, rng).corr.cosine));
}

TEST_CASE("report JSON and CSV") {
  EvalReport r;
  r.recall_at_k = {{1, 0.5}, {2, 0.75}, {4, 0.875}, {8, 1.0}};
  r.nmi = 0.1234567890123;
  r.r_precision = 0.3;
  r.map_at_r = 0.2;
  r.mean_uncert_clean = 1.5;
  r.mean_uncert_mixed = 2.5;
  r.corr = {0.1, 0.2, -0.3};
  const EvalReport back = eval_report_from_json(eval_report_json(r));
  CHECK(back.recall_at_k == r.recall_at_k);
  CHECK(back.nmi == r.nmi);
  CHECK(back.r_precision == r.r_precision);
  CHECK(back.map_at_r == r.map_at_r);
  CHECK(back.mean_uncert_clean == r.mean_uncert_clean);
  CHECK(back.mean_uncert_mixed == r.mean_uncert_mixed);
  CHECK(back.corr.cosine == r.corr.cosine);
  CHECK(back.corr.jaccard == r.corr.jaccard);
  CHECK(back.corr.mrr == r.corr.mrr);

  const std::string header = eval_csv_header();
  const std::string row = eval_csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK_THROWS(eval_report_from_json("{}"));
}

}  // TEST_SUITE

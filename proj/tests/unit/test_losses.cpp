#include "doctest.h"

#include "idml/losses.hpp"
#include "idml/model.hpp"

#include <cmath>
#include <numbers>

using namespace idml;

namespace {

struct Fixture {
  EmbeddingBatch emb;
  std::vector<LabelSet> labels;
  ProxySet proxies;
  LossParams lp;
  MetricParams mp;
  MetricKind metric = MetricKind::euclidean;
  std::vector<bool> mixed;
  std::uint64_t seed = 1;

  LossContext ctx(bool with_proxies) const {
    LossContext c;
    c.batch = &emb;
    c.labels = &labels;
    c.is_mixed = mixed;
    c.proxies = with_proxies ? &proxies : nullptr;
    c.metric = metric;
    c.metric_params = mp;
    c.loss_params = lp;
    c.rng = Rng(seed);
    return c;
  }
  LossValue eval(LossKind k, LossGradient* g = nullptr) const { return evaluate_loss(k, ctx(uses_proxies(k)), g); }
};

RowMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index k = 0;
    for (double v : row) m(i, k++) = v;
    ++i;
  }
  return m;
}

RowMatrix unit_angles(std::initializer_list<double> degrees) {
  RowMatrix m(static_cast<Index>(degrees.size()), 2);
  Index i = 0;
  for (double d : degrees) {
    const double r = d * std::numbers::pi / 180.0;
    m(i, 0) = std::cos(r);
    m(i, 1) = std::sin(r);
    ++i;
  }
  return m;
}

// Angle whose chord on the unit circle has the given length.
double chord_degrees(double chord) { return 2.0 * std::asin(chord / 2.0) * 180.0 / std::numbers::pi; }

std::vector<LabelSet> singles(std::initializer_list<int> ids) {
  std::vector<LabelSet> out;
  for (int id : ids) out.push_back(LabelSet::single(id));
  return out;
}

Fixture random_fixture(Rng& rng, Index n, Index ds, Index du, int classes, double u_scale, bool with_mixed) {
  Fixture f;
  f.emb.semantic.resize(n, ds);
  f.emb.uncertainty.resize(n, du);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < ds; ++k) f.emb.semantic(i, k) = rng.normal();
    for (Index k = 0; k < du; ++k) f.emb.uncertainty(i, k) = u_scale * rng.normal();
    const int c = static_cast<int>(i % classes);
    if (with_mixed && i == n - 1) {
      f.labels.push_back(LabelSet{0, 1});
      f.mixed.push_back(true);
    } else {
      f.labels.push_back(LabelSet::single(c));
      f.mixed.push_back(false);
    }
  }
  f.proxies.semantic.resize(classes, ds);
  f.proxies.uncertainty.resize(classes, du);
  for (int c = 0; c < classes; ++c) {
    f.proxies.class_of.push_back(c);
    for (Index k = 0; k < ds; ++k) f.proxies.semantic(c, k) = rng.normal();
    for (Index k = 0; k < du; ++k) f.proxies.uncertainty(c, k) = u_scale * rng.normal();
  }
  f.seed = rng.next_u64();
  return f;
}

std::vector<double> terms(const LossValue& v) {
  std::vector<double> out;
  for (const auto& t : v.pair_terms) out.push_back(t.term);
  return out;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("contrastive worked examples") {
  Fixture f;
  f.emb.semantic = rows({{0.0}, {0.8}});
  f.emb.uncertainty = RowMatrix::Zero(2, 1);
  f.labels = singles({3, 3});
  CHECK(f.eval(LossKind::contrastive).value == doctest::Approx(0.8).epsilon(1e-15));
  f.labels = singles({3, 4});
  f.emb.semantic = rows({{0.0}, {1.5}});
  CHECK(f.eval(LossKind::contrastive).value == 0.0);
  f.emb.semantic = rows({{0.0}, {0.4}});
  CHECK(f.eval(LossKind::contrastive).value == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("contrastive needs a pair") {
  Fixture f;
  f.emb.semantic = rows({{0.0}});
  f.emb.uncertainty = RowMatrix::Zero(1, 1);
  f.labels = singles({0});
  CHECK_THROWS_AS(f.eval(LossKind::contrastive), ParameterError);
}

TEST_CASE("margin loss worked examples") {
  Fixture f;
  f.emb.uncertainty = RowMatrix::Zero(2, 2);
  f.labels = singles({0, 0});
  f.emb.semantic = unit_angles({0.0, chord_degrees(f.lp.margin_xi)});
  CHECK(f.eval(LossKind::margin_dw).value == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  f.emb.semantic = unit_angles({0.0, chord_degrees(f.lp.margin_xi + 0.3)});
  CHECK(f.eval(LossKind::margin_dw).value == doctest::Approx(0.3).epsilon(1e-12));

  // Anchor and positive coincide; the only negative sits at omega + 0.1.
  f.emb.semantic = unit_angles({0.0, 0.0, chord_degrees(f.lp.margin_omega + 0.1)});
  f.emb.uncertainty = RowMatrix::Zero(3, 2);
  f.labels = singles({0, 0, 1});
  const LossValue v = f.eval(LossKind::margin_dw);
  CHECK(v.value == 0.0);
  CHECK(v.pair_terms.size() == 4);  // one positive pair, one draw per anchor
}

TEST_CASE("margin loss needs a positive pair") {
  Fixture f;
  f.emb.semantic = unit_angles({0.0, 90.0});
  f.emb.uncertainty = RowMatrix::Zero(2, 2);
  f.labels = singles({0, 1});
  CHECK_THROWS_AS(f.eval(LossKind::margin_dw), ParameterError);
}

TEST_CASE("triplet loss with semi-hard mining") {
  Fixture f;
  f.emb.uncertainty = RowMatrix::Zero(3, 1);
  f.labels = singles({0, 0, 1});

  f.emb.semantic = rows({{0.0}, {0.5}, {-1.0}});  // D(a,p)=0.5, D(a,n)=1.0
  CHECK(f.eval(LossKind::triplet_sh).value == 0.0);

  // A negative closer than the positive is never mined, so it cannot
  // contribute a hinge; the anchor at the positive's side mines it instead.
  f.emb.semantic = rows({{0.0}, {1.0}, {-0.9}});
  LossValue v = f.eval(LossKind::triplet_sh);
  CHECK(v.value == 0.0);
  CHECK(v.pair_terms.size() == 1);

  f.emb.semantic = rows({{0.0}, {1.0}, {-1.1}});  // D(a,n)=1.1 mined for anchor 0
  v = f.eval(LossKind::triplet_sh);
  CHECK(v.value == doctest::Approx(0.1).epsilon(1e-12));

  // Collapsed triplet: nothing lies strictly beyond the positive.
  f.emb.semantic = rows({{0.0}, {0.0}, {0.0}});
  v = f.eval(LossKind::triplet_sh);
  CHECK(v.value == 0.0);
  CHECK(v.mining_exhausted);
}

TEST_CASE("multi-similarity mining against an explicit mask") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const Index n = 6;
    Matrix sims(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = i; j < n; ++j) sims(i, j) = sims(j, i) = i == j ? 1.0 : rng.uniform(-1.0, 1.0);
    std::vector<LabelSet> labels;
    for (Index i = 0; i < n; ++i) labels.push_back(LabelSet::single(static_cast<int>(rng.below(3))));
    const double eps = 0.1;
    const MiningMask m = ms_modified_similarity(sims, labels, eps);
    for (Index i = 0; i < n; ++i) {
      double min_pos = 2.0, max_neg = -2.0;
      bool has_pos = false, has_neg = false;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        if (labels_match(labels[std::size_t(i)], labels[std::size_t(j)])) {
          has_pos = true;
          min_pos = std::min(min_pos, sims(i, j));
        } else {
          has_neg = true;
          max_neg = std::max(max_neg, sims(i, j));
        }
      }
      for (Index j = 0; j < n; ++j) {
        if (j == i) {
          CHECK_FALSE(m.keep(i, j));
          continue;
        }
        const bool pos = labels_match(labels[std::size_t(i)], labels[std::size_t(j)]);
        const bool keep = pos ? (!has_neg || sims(i, j) < max_neg + eps) : (!has_pos || sims(i, j) > min_pos - eps);
        CHECK(m.keep(i, j) == keep);
        CHECK(m.values(i, j) == (keep ? sims(i, j) : 0.0));
      }
    }
  }
}

TEST_CASE("multi-similarity mining examples") {
  const auto labels = singles({0, 0, 1});
  Matrix sims(3, 3);
  sims << 1.0, 0.9, 0.2, 0.9, 1.0, 0.1, 0.2, 0.1, 1.0;
  const MiningMask none = ms_modified_similarity(sims, labels, 0.1);
  CHECK(none.values.topRows(2).isZero());
  CHECK(none.keep(2, 0));  // anchor 2 has no positive, so its negatives stay
  CHECK(none.keep(2, 1));

  sims(0, 2) = sims(2, 0) = 0.85;  // negative above the weakest positive
  CHECK(ms_modified_similarity(sims, labels, 0.1).keep(0, 2));

  const MiningMask all = ms_modified_similarity(sims, labels, 10.0);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(all.keep(i, j) == (i != j));
}

TEST_CASE("multi-similarity worked examples") {
  Fixture f;
  f.emb.uncertainty = RowMatrix::Zero(2, 2);
  f.labels = singles({0, 0});
  f.emb.semantic = unit_angles({10.0, 10.0});  // C = 1 = lambda
  CHECK(f.eval(LossKind::multi_similarity).value == doctest::Approx(std::log(2.0) / f.lp.ms_alpha).epsilon(1e-14));

  f.labels = singles({0, 1});
  f.emb.semantic = unit_angles({0.0, 90.0});
  f.lp.ms_lambda = 5.0;  // the lone negative stays far below the threshold
  CHECK(f.eval(LossKind::multi_similarity).value == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  f.lp = LossParams{};
  f.lp.ms_alpha = f.lp.ms_beta = 1.0;
  f.lp.ms_lambda = 0.5;
  f.emb.semantic = unit_angles({0.0, 60.0, -60.0});
  f.emb.uncertainty = RowMatrix::Zero(3, 2);
  f.labels = singles({0, 0, 1});
  const LossValue v = f.eval(LossKind::multi_similarity);
  CHECK(v.pair_terms[0].i == 0);
  CHECK(v.pair_terms[0].term * 3.0 == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("softmax proxy worked examples") {
  Fixture f;
  f.emb.semantic = rows({{1.0, 0.0}});
  f.emb.uncertainty = RowMatrix::Zero(1, 2);
  f.labels = singles({0});
  f.proxies.class_of = {0, 1};
  f.proxies.uncertainty = RowMatrix::Zero(2, 2);

  f.proxies.semantic = rows({{0.0, 1.0}, {0.0, -1.0}});
  CHECK(f.eval(LossKind::softmax_proxy).value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  f.proxies.semantic = rows({{2.0, 0.0}, {-3.0, 0.0}});
  CHECK(f.eval(LossKind::softmax_proxy).value == doctest::Approx(-2.0).epsilon(1e-15));

  f.proxies.class_of = {0, 1, 2};
  f.proxies.semantic = unit_angles({40.0, -40.0, 40.0});
  f.proxies.uncertainty = RowMatrix::Zero(3, 2);
  CHECK(f.eval(LossKind::softmax_proxy).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  f.proxies.class_of = {0};
  f.proxies.semantic = rows({{1.0, 0.0}});
  f.proxies.uncertainty = RowMatrix::Zero(1, 2);
  CHECK_THROWS_AS(f.eval(LossKind::softmax_proxy), ParameterError);
}

TEST_CASE("ProxyNCA worked examples") {
  Fixture f;
  f.emb.semantic = rows({{1.0, 0.0}});
  f.emb.uncertainty = RowMatrix::Zero(1, 2);
  f.labels = singles({0});
  f.proxies.class_of = {0, 1};
  f.proxies.uncertainty = RowMatrix::Zero(2, 2);

  f.proxies.semantic = unit_angles({30.0, -30.0});
  CHECK(f.eval(LossKind::proxy_nca).value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  f.proxies.semantic = unit_angles({0.0, 60.0});  // D = 0 and D = 1
  CHECK(f.eval(LossKind::proxy_nca).value == doctest::Approx(-1.0).epsilon(1e-14));

  f.proxies.class_of = {0, 1, 2};
  f.proxies.semantic = unit_angles({50.0, -50.0, 50.0});
  f.proxies.uncertainty = RowMatrix::Zero(3, 2);
  CHECK(f.eval(LossKind::proxy_nca).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("ProxyAnchor worked examples") {
  Fixture f;
  f.emb.semantic = unit_angles({0.0});
  f.emb.uncertainty = RowMatrix::Zero(1, 2);
  f.labels = singles({0});
  f.proxies.class_of = {0};
  f.proxies.uncertainty = RowMatrix::Zero(1, 2);
  f.proxies.semantic = unit_angles({std::acos(f.lp.pa_delta) * 180.0 / std::numbers::pi});
  CHECK(f.eval(LossKind::proxy_anchor).value == doctest::Approx(0.69314718055994530942).epsilon(1e-14));

  // A proxy with neither positives nor negatives in the batch contributes nothing.
  f.labels = singles({0});
  f.proxies.class_of = {0, 1};
  f.proxies.semantic = unit_angles({0.0, 90.0});
  f.proxies.uncertainty = RowMatrix::Zero(2, 2);
  f.mixed = {true};
  f.lp.mixed_as_anchor = false;
  CHECK(f.eval(LossKind::proxy_anchor).value == 0.0);

  f.mixed.clear();
  f.lp = LossParams{};
  f.lp.pa_alpha = 200.0;
  f.proxies.semantic = unit_angles({5.0, 180.0});
  const LossValue v = f.eval(LossKind::proxy_anchor);
  CHECK(v.pair_terms[0].term < 1e-60);

  f.proxies = ProxySet{};
  f.proxies.semantic.resize(0, 2);
  f.proxies.uncertainty.resize(0, 2);
  CHECK_THROWS_AS(f.eval(LossKind::proxy_anchor), ParameterError);
}

TEST_CASE("IDML losses reduce to their baselines without uncertainty") {
  Rng rng(41);
  for (LossKind k : all_losses()) {
    for (int t = 0; t < 10; ++t) {
      Fixture f = random_fixture(rng, 12, 4, 3, 3, 0.0, t % 2 == 1);
      f.metric = MetricKind::euclidean;
      LossGradient gb, gi;
      const LossValue base = f.eval(k, &gb);
      f.metric = MetricKind::ism;
      const LossValue idml = f.eval(k, &gi);
      CHECK(idml.value == doctest::Approx(base.value).epsilon(1e-12));
      CHECK((gi.semantic - gb.semantic).norm() <= 1e-12 * std::max(1.0, gb.semantic.norm()));
      CHECK((gi.proxy_semantic - gb.proxy_semantic).norm() <= 1e-12 * std::max(1.0, gb.proxy_semantic.norm()));
    }
  }
}

TEST_CASE("contrastive single positive pair gradient carries the H factor") {
  Rng rng(42);
  for (int t = 0; t < 200; ++t) {
    Fixture f = random_fixture(rng, 2, 3, 3, 1, 0.4, false);
    f.mp.gamma = t % 2 ? 0.5 : 0.0;
    f.metric = MetricKind::euclidean;
    LossGradient gb, gi;
    f.eval(LossKind::contrastive, &gb);
    f.metric = MetricKind::ism;
    f.eval(LossKind::contrastive, &gi);
    const double alpha = (f.emb.semantic.row(0) - f.emb.semantic.row(1)).norm();
    const double beta = (f.emb.uncertainty.row(0) + f.emb.uncertainty.row(1)).norm();
    const double h = gradient_weight(alpha, beta, f.mp);
    CHECK(h <= 1.0);
    for (Index i = 0; i < 2; ++i)
      for (Index k = 0; k < 3; ++k) CHECK(gi.semantic(i, k) == doctest::Approx(h * gb.semantic(i, k)).epsilon(1e-6));
  }
}

TEST_CASE("embedding gradients match central differences") {
  Rng rng(43);
  const MetricKind metrics[] = {MetricKind::euclidean, MetricKind::ism, MetricKind::ism_dis, MetricKind::ism_sumnorm};
  int combos = 0;
  for (LossKind k : all_losses()) {
    for (MetricKind m : metrics) {
      Fixture f = random_fixture(rng, 8, 3, 3, 3, 0.3, true);
      f.metric = m;
      LossGradient g;
      const LossValue base = f.eval(k, &g);
      if (base.kink_margin < 1e-3) continue;
      ++combos;
      const double h = 1e-6;
      auto probe = [&](RowMatrix& target, const RowMatrix& grad) {
        for (Index i = 0; i < target.rows(); ++i) {
          for (Index c = 0; c < target.cols(); ++c) {
            const double keep = target(i, c);
            target(i, c) = keep + h;
            const LossValue up = f.eval(k);
            target(i, c) = keep - h;
            const LossValue dn = f.eval(k);
            target(i, c) = keep;
            if (loss_signature(up) == loss_signature(base) && loss_signature(dn) == loss_signature(base)) {
              const double fd = (up.value - dn.value) / (2.0 * h);
              CHECK(grad(i, c) == doctest::Approx(fd).epsilon(1e-4).scale(1e-4));
            }
          }
        }
      };
      INFO(to_string(k) << " / " << to_string(m));
      probe(f.emb.semantic, g.semantic);
      probe(f.emb.uncertainty, g.uncertainty);
      if (uses_proxies(k)) {
        probe(f.proxies.semantic, g.proxy_semantic);
        probe(f.proxies.uncertainty, g.proxy_uncertainty);
      }
    }
  }
  CHECK(combos >= 20);
}

TEST_CASE("changing the metric keeps the loss structure") {
  Rng rng(44);
  for (LossKind k : all_losses()) {
    Fixture f = random_fixture(rng, 10, 4, 4, 3, 0.2, true);
    f.lp.contrastive_margin = 100.0;  // keep every hinge active
    f.lp.margin_omega = 100.0;
    f.metric = MetricKind::euclidean;
    const LossValue a = f.eval(k);
    // Mining losses pick pairs from the distances, so only the fixed-pair
    // losses are expected to keep the same enumeration.
    const bool fixed_pairs = k == LossKind::contrastive || uses_proxies(k);
    for (MetricKind m : {MetricKind::ism, MetricKind::ism_dis, MetricKind::ism_strict, MetricKind::ism_sumnorm}) {
      f.metric = m;
      const LossValue b = f.eval(k);
      if (fixed_pairs) {
        REQUIRE(a.pair_terms.size() == b.pair_terms.size());
        for (std::size_t t = 0; t < a.pair_terms.size(); ++t) {
          CHECK(a.pair_terms[t].i == b.pair_terms[t].i);
          CHECK(a.pair_terms[t].j == b.pair_terms[t].j);
        }
      }
      CHECK(std::isfinite(b.value));
    }
  }
}

TEST_CASE("hinge losses are nonnegative") {
  Rng rng(45);
  for (int t = 0; t < 50; ++t) {
    Fixture f = random_fixture(rng, 10, 3, 3, 3, 0.5, t % 2 == 0);
    f.metric = t % 3 == 0 ? MetricKind::ism : MetricKind::euclidean;
    for (LossKind k : {LossKind::contrastive, LossKind::margin_dw, LossKind::triplet_sh}) {
      for (double term : terms(f.eval(k))) CHECK(term >= 0.0);
    }
  }
}

TEST_CASE("loss value is the sum of its pair terms") {
  Rng rng(47);
  for (LossKind k : all_losses()) {
    Fixture f = random_fixture(rng, 10, 3, 3, 3, 0.3, true);
    const LossValue v = f.eval(k);
    double sum = 0.0;
    for (double t : terms(v)) sum += t;
    CHECK(v.value == sum);
  }
}

TEST_CASE("loss context validation") {
  Rng rng(46);
  Fixture f = random_fixture(rng, 6, 3, 3, 2, 0.1, false);
  f.labels.pop_back();
  CHECK_THROWS_AS(f.eval(LossKind::contrastive), ShapeError);
  f = random_fixture(rng, 6, 3, 3, 2, 0.1, false);
  f.emb.semantic(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(f.eval(LossKind::contrastive), FinitenessError);
  f = random_fixture(rng, 6, 3, 3, 2, 0.1, false);
  f.labels[0] = LabelSet::single(9);
  CHECK_THROWS_AS(f.eval(LossKind::proxy_anchor), ParameterError);
  f = random_fixture(rng, 6, 3, 3, 2, 0.1, false);
  f.lp.pa_alpha = 0.0;
  CHECK_THROWS_AS(f.eval(LossKind::proxy_anchor), ParameterError);
}

TEST_CASE("loss names round-trip") {
  for (LossKind k : all_losses()) CHECK(parse_loss(to_string(k)) == k);
  CHECK_THROWS_AS(parse_loss("arcface"), ParameterError);
}

}  // TEST_SUITE

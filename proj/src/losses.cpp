#include "idml/losses.hpp"

#include "idml/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace idml {

LossKind parse_loss(const std::string& name) {
  if (name == "contrastive") return LossKind::contrastive;
  if (name == "margin" || name == "margin_dw") return LossKind::margin_dw;
  if (name == "triplet" || name == "triplet_sh") return LossKind::triplet_sh;
  if (name == "ms" || name == "multi_similarity") return LossKind::multi_similarity;
  if (name == "softmax" || name == "softmax_proxy") return LossKind::softmax_proxy;
  if (name == "proxy_nca" || name == "proxynca") return LossKind::proxy_nca;
  if (name == "proxy_anchor" || name == "proxyanchor") return LossKind::proxy_anchor;
  throw ParameterError("unknown loss '" + name + "'");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::margin_dw: return "margin_dw";
    case LossKind::triplet_sh: return "triplet_sh";
    case LossKind::multi_similarity: return "multi_similarity";
    case LossKind::softmax_proxy: return "softmax_proxy";
    case LossKind::proxy_nca: return "proxy_nca";
    case LossKind::proxy_anchor: return "proxy_anchor";
  }
  return "?";
}

const std::vector<LossKind>& all_losses() {
  static const std::vector<LossKind> kinds = {
      LossKind::contrastive,   LossKind::margin_dw, LossKind::triplet_sh,   LossKind::multi_similarity,
      LossKind::softmax_proxy, LossKind::proxy_nca, LossKind::proxy_anchor,
  };
  return kinds;
}

bool uses_proxies(LossKind kind) {
  return kind == LossKind::softmax_proxy || kind == LossKind::proxy_nca || kind == LossKind::proxy_anchor;
}

bool normalizes_semantic(LossKind kind) {
  return kind != LossKind::contrastive && kind != LossKind::triplet_sh;
}

bool uses_similarity_form(LossKind kind) {
  return kind == LossKind::multi_similarity || kind == LossKind::softmax_proxy ||
         kind == LossKind::proxy_anchor;
}

void LossParams::validate() const {
  for (double scale : {phi, ms_alpha, ms_beta, pa_alpha}) {
    if (!(scale > 0.0)) throw ParameterError("loss scales must be positive");
  }
  for (double margin : {contrastive_margin, triplet_margin, margin_xi, margin_omega, ms_eps, pa_delta}) {
    if (!(margin >= 0.0)) throw ParameterError("loss margins must be nonnegative");
  }
}

void ProxySet::validate() const {
  if (semantic.rows() != uncertainty.rows() || semantic.rows() != static_cast<Index>(class_of.size())) {
    throw ShapeError("proxy set: row counts disagree");
  }
}

namespace {

constexpr double kNormFloor = 1e-12;

enum Side { kSample = 0, kProxy = 1 };

struct PairEval {
  Side sa = kSample;
  Index i = 0;
  Side sb = kSample;
  Index j = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double cos = 0.0;
  PairResponse r;
};

// Evaluates metric responses for sample-sample and sample-proxy pairs and
// pushes upstream derivatives back onto the embeddings.
class PairEngine {
 public:
  PairEngine(const LossContext& ctx, bool normalize, bool similarity, LossGradient* grad)
      : metric_(ctx.metric), mp_(ctx.metric_params), normalize_(normalize), similarity_(similarity), grad_(grad) {
    load(kSample, ctx.batch->semantic, ctx.batch->uncertainty);
    if (ctx.proxies) {
      load(kProxy, ctx.proxies->semantic, ctx.proxies->uncertainty);
    } else {
      load(kProxy, RowMatrix(0, ctx.batch->semantic.cols()), RowMatrix(0, ctx.batch->uncertainty.cols()));
    }
  }

  PairEval eval(Side sa, Index i, Side sb, Index j) const {
    PairEval p;
    p.sa = sa;
    p.i = i;
    p.sb = sb;
    p.j = j;
    const auto a = s_[sa].row(i);
    const auto b = s_[sb].row(j);
    p.alpha = (a - b).norm();
    if (uses_uncertainty(metric_)) {
      if (metric_ == MetricKind::ism_sumnorm) {
        p.beta = u_[sa].row(i).norm() + u_[sb].row(j).norm();
      } else {
        p.beta = (u_[sa].row(i) + u_[sb].row(j)).norm();
      }
    }
    if (similarity_) {
      p.cos = std::clamp(a.dot(b), -1.0, 1.0);
      p.r = similarity_response(metric_, p.cos, p.alpha, p.beta, mp_);
    } else {
      p.r = distance_response(metric_, p.alpha, p.beta, mp_);
    }
    return p;
  }

  void backprop(const PairEval& p, double g) {
    if (!grad_ || g == 0.0) return;
    const auto a = s_[p.sa].row(p.i);
    const auto b = s_[p.sb].row(p.j);
    if (p.r.d_alpha != 0.0 && p.alpha > 0.0) {
      const Eigen::RowVectorXd v = (g * p.r.d_alpha / p.alpha) * (a - b);
      ds_[p.sa].row(p.i) += v;
      ds_[p.sb].row(p.j) -= v;
    }
    if (similarity_ && p.r.d_cos != 0.0) {
      ds_[p.sa].row(p.i) += (g * p.r.d_cos) * b;
      ds_[p.sb].row(p.j) += (g * p.r.d_cos) * a;
    }
    if (p.r.d_beta != 0.0) {
      const auto ua = u_[p.sa].row(p.i);
      const auto ub = u_[p.sb].row(p.j);
      if (metric_ == MetricKind::ism_sumnorm) {
        const double na = ua.norm();
        const double nb = ub.norm();
        if (na > 0.0) du_[p.sa].row(p.i) += (g * p.r.d_beta / na) * ua;
        if (nb > 0.0) du_[p.sb].row(p.j) += (g * p.r.d_beta / nb) * ub;
      } else {
        const Eigen::RowVectorXd w = ua + ub;
        const double n = w.norm();
        if (n > 0.0) {
          du_[p.sa].row(p.i) += (g * p.r.d_beta / n) * w;
          du_[p.sb].row(p.j) += (g * p.r.d_beta / n) * w;
        }
      }
    }
  }

  // Routes accumulated derivatives through the normalization and hands them
  // to the caller's gradient.
  void finish() {
    if (!grad_) return;
    for (int side : {kSample, kProxy}) {
      if (!normalize_) continue;
      for (Index k = 0; k < ds_[side].rows(); ++k) {
        const auto unit = s_[side].row(k);
        const double along = unit.dot(ds_[side].row(k));
        ds_[side].row(k) = (ds_[side].row(k) - along * unit) / norm_[side](k);
      }
    }
    grad_->semantic = std::move(ds_[kSample]);
    grad_->uncertainty = std::move(du_[kSample]);
    grad_->proxy_semantic = std::move(ds_[kProxy]);
    grad_->proxy_uncertainty = std::move(du_[kProxy]);
  }

 private:
  void load(Side side, const RowMatrix& s, const RowMatrix& u) {
    s_[side] = s;
    u_[side] = u;
    if (normalize_) {
      norm_[side] = s.rowwise().norm().cwiseMax(kNormFloor);
      for (Index k = 0; k < s.rows(); ++k) s_[side].row(k) /= norm_[side](k);
    }
    if (grad_) {
      ds_[side] = RowMatrix::Zero(s.rows(), s.cols());
      du_[side] = RowMatrix::Zero(u.rows(), u.cols());
    }
  }

  MetricKind metric_;
  MetricParams mp_;
  bool normalize_;
  bool similarity_;
  LossGradient* grad_;
  RowMatrix s_[2];
  RowMatrix u_[2];
  Vector norm_[2];
  RowMatrix ds_[2];
  RowMatrix du_[2];
};

// All unordered sample pairs, evaluated once.
class PairTable {
 public:
  PairTable(const PairEngine& engine, Index n) : n_(n), values_(Matrix::Zero(n, n)) {
    evals_.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        evals_.push_back(engine.eval(kSample, i, kSample, j));
        values_(i, j) = values_(j, i) = evals_.back().r.value;
      }
    }
  }

  const PairEval& at(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    // Row-major offset into the strict upper triangle.
    const Index offset = i * n_ - i * (i + 1) / 2 + (j - i - 1);
    return evals_[static_cast<std::size_t>(offset)];
  }
  const Matrix& values() const { return values_; }

 private:
  Index n_;
  std::vector<PairEval> evals_;
  Matrix values_;
};

void check_context(const LossContext& ctx, bool needs_proxies) {
  if (!ctx.batch || !ctx.labels) throw ParameterError("loss context is missing the batch or labels");
  const auto& b = *ctx.batch;
  if (b.semantic.rows() != b.uncertainty.rows()) throw ShapeError("semantic/uncertainty row counts differ");
  if (static_cast<Index>(ctx.labels->size()) != b.size()) throw ShapeError("label count differs from batch size");
  if (!ctx.is_mixed.empty() && static_cast<Index>(ctx.is_mixed.size()) != b.size()) {
    throw ShapeError("mixed-flag count differs from batch size");
  }
  require_finite(b.semantic, "semantic embeddings");
  require_finite(b.uncertainty, "uncertainty embeddings");
  ctx.metric_params.validate();
  ctx.loss_params.validate();
  if (needs_proxies) {
    if (!ctx.proxies || ctx.proxies->size() == 0) throw ParameterError("proxy loss needs a nonempty proxy set");
    ctx.proxies->validate();
    require_same_dim(ctx.proxies->semantic.cols(), b.semantic.cols(), "proxy semantic");
    require_same_dim(ctx.proxies->uncertainty.cols(), b.uncertainty.cols(), "proxy uncertainty");
    for (const auto& labels : *ctx.labels) {
      for (int id : labels.ids()) {
        if (std::find(ctx.proxies->class_of.begin(), ctx.proxies->class_of.end(), id) ==
            ctx.proxies->class_of.end()) {
          throw ParameterError("no proxy for class " + std::to_string(id));
        }
      }
    }
  }
}

void add_term(LossValue& out, Index i, Index j, double term) {
  if (!std::isfinite(term)) {
    std::ostringstream os;
    os << "non-finite loss term at (" << i << ", " << j << "): " << term;
    throw NumericalFailure(os.str());
  }
  out.pair_terms.push_back({i, j, term});
  out.value += term;
}

bool matches(const LossContext& ctx, Index i, Index j) {
  return labels_match((*ctx.labels)[static_cast<std::size_t>(i)], (*ctx.labels)[static_cast<std::size_t>(j)]);
}

bool matches_proxy(const LossContext& ctx, Index i, Index p) {
  return (*ctx.labels)[static_cast<std::size_t>(i)].contains(ctx.proxies->class_of[static_cast<std::size_t>(p)]);
}

bool is_anchor(const LossContext& ctx, Index i) {
  return ctx.loss_params.mixed_as_anchor || ctx.is_mixed.empty() || !ctx.is_mixed[static_cast<std::size_t>(i)];
}

// log(1 + sum_k exp(x_k)); weights receive exp(x_k) / (1 + sum).
double log1p_sum_exp(const std::vector<double>& x, std::vector<double>& weights) {
  double m = 0.0;
  for (double v : x) m = std::max(m, v);
  double s = std::exp(-m);
  for (double v : x) s += std::exp(v - m);
  weights.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) weights[k] = std::exp(x[k] - m) / s;
  return m + std::log(s);
}

// log(sum_k exp(x_k)); weights receive the softmax.
double log_sum_exp(const std::vector<double>& x, std::vector<double>& weights) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  weights.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) weights[k] = std::exp(x[k] - m) / s;
  return m + std::log(s);
}

MiningMask mine_multi_similarity(const Matrix& sims, const std::vector<LabelSet>& labels, double eps,
                                 double* kink) {
  const Index n = sims.rows();
  MiningMask out;
  out.values = Matrix::Zero(n, n);
  out.keep.setConstant(n, n, false);
  for (Index i = 0; i < n; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels_match(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)])) {
        min_pos = std::min(min_pos, sims(i, j));
      } else {
        max_neg = std::max(max_neg, sims(i, j));
      }
    }
    const bool have_pos = std::isfinite(min_pos);
    const bool have_neg = std::isfinite(max_neg);
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool pos = labels_match(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
      bool keep = true;
      if (pos && have_neg) {
        const double gap = sims(i, j) - (max_neg + eps);
        keep = gap < 0.0;
        if (kink) *kink = std::min(*kink, std::abs(gap));
      } else if (!pos && have_pos) {
        const double gap = sims(i, j) - (min_pos - eps);
        keep = gap > 0.0;
        if (kink) *kink = std::min(*kink, std::abs(gap));
      }
      if (keep) {
        out.keep(i, j) = true;
        out.values(i, j) = sims(i, j);
      }
    }
  }
  return out;
}

}  // namespace

MiningMask ms_modified_similarity(const Matrix& sims, const std::vector<LabelSet>& labels, double eps) {
  if (sims.rows() != sims.cols() || sims.rows() != static_cast<Index>(labels.size())) {
    throw ShapeError("ms_modified_similarity: table must be square and match the labels");
  }
  return mine_multi_similarity(sims, labels, eps, nullptr);
}

LossValue contrastive_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, false);
  const Index n = ctx.batch->size();
  if (n < 2) throw ParameterError("contrastive loss needs at least one pair");
  PairEngine engine(ctx, false, false, grad);
  const double delta = ctx.loss_params.contrastive_margin;
  LossValue out;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const PairEval p = engine.eval(kSample, i, kSample, j);
      const double d = p.r.value;
      if (matches(ctx, i, j)) {
        add_term(out, i, j, d);
        engine.backprop(p, 1.0);
      } else {
        const double h = delta - d;
        out.kink_margin = std::min(out.kink_margin, std::abs(h));
        add_term(out, i, j, std::max(h, 0.0));
        if (h > 0.0) engine.backprop(p, -1.0);
      }
    }
  }
  engine.finish();
  return out;
}

LossValue margin_dw_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, false);
  const Index n = ctx.batch->size();
  PairEngine engine(ctx, true, false, grad);
  const PairTable table(engine, n);
  const auto& lp = ctx.loss_params;
  LossValue out;
  bool any_positive = false;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (!matches(ctx, i, j)) continue;
      any_positive = true;
      const PairEval& p = table.at(i, j);
      const double h = p.r.value - lp.margin_xi;
      out.kink_margin = std::min(out.kink_margin, std::abs(h));
      add_term(out, i, j, std::max(h, 0.0));
      if (h > 0.0) engine.backprop(p, 1.0);
    }
  }
  if (!any_positive) throw ParameterError("margin loss needs at least one positive pair");

  Rng rng = ctx.rng;
  const Index n_dim = ctx.batch->semantic.cols();
  for (Index i = 0; i < n; ++i) {
    bool has_negative = false;
    for (Index j = 0; j < n && !has_negative; ++j) has_negative = j != i && !matches(ctx, i, j);
    if (!has_negative) continue;
    const DwDraw draw = sample_negative_dw_draw(i, table.values(), *ctx.labels, n_dim, lp.phi, rng);
    const PairEval& p = table.at(i, draw.index);
    const double h = lp.margin_omega - p.r.value;
    out.kink_margin = std::min({out.kink_margin, std::abs(h), draw.boundary_margin});
    add_term(out, i, draw.index, std::max(h, 0.0));
    if (h > 0.0) engine.backprop(p, -1.0);
  }
  engine.finish();
  return out;
}

LossValue triplet_sh_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, false);
  const Index n = ctx.batch->size();
  PairEngine engine(ctx, false, false, grad);
  const PairTable table(engine, n);
  const double delta = ctx.loss_params.triplet_margin;
  LossValue out;
  Index triplets = 0;
  for (Index a = 0; a < n; ++a) {
    for (Index p = 0; p < n; ++p) {
      if (p == a || !matches(ctx, a, p)) continue;
      double mining_margin = std::numeric_limits<double>::infinity();
      const auto neg = detail::semi_hard_unchecked(a, p, table.values(), *ctx.labels, &mining_margin);
      out.kink_margin = std::min(out.kink_margin, mining_margin);
      if (!neg) continue;
      ++triplets;
      const double h = table.values()(a, p) - table.values()(a, *neg) + delta;
      out.kink_margin = std::min(out.kink_margin, std::abs(h));
      add_term(out, a, *neg, std::max(h, 0.0));
      if (h > 0.0) {
        engine.backprop(table.at(a, p), 1.0);
        engine.backprop(table.at(a, *neg), -1.0);
      }
    }
  }
  out.mining_exhausted = triplets == 0;
  engine.finish();
  return out;
}

LossValue multi_similarity_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, false);
  const Index n = ctx.batch->size();
  if (n < 1) throw ParameterError("multi-similarity loss needs at least one sample");
  PairEngine engine(ctx, true, true, grad);
  const PairTable table(engine, n);
  const auto& lp = ctx.loss_params;
  LossValue out;
  const MiningMask mask = mine_multi_similarity(table.values(), *ctx.labels, lp.ms_eps, &out.kink_margin);

  Matrix upstream = Matrix::Zero(n, n);
  std::vector<double> xp, xn, wp, wn;
  std::vector<Index> jp, jn;
  for (Index i = 0; i < n; ++i) {
    xp.clear();
    xn.clear();
    jp.clear();
    jn.clear();
    for (Index j = 0; j < n; ++j) {
      if (!mask.keep(i, j)) continue;
      const double c = mask.values(i, j);
      if (matches(ctx, i, j)) {
        xp.push_back(-lp.ms_alpha * (c - lp.ms_lambda));
        jp.push_back(j);
      } else {
        xn.push_back(lp.ms_beta * (c - lp.ms_lambda));
        jn.push_back(j);
      }
    }
    const double pos = log1p_sum_exp(xp, wp) / lp.ms_alpha;
    const double neg = log1p_sum_exp(xn, wn) / lp.ms_beta;
    add_term(out, i, -1, (pos + neg) / static_cast<double>(n));
    for (std::size_t k = 0; k < jp.size(); ++k) upstream(i, jp[k]) -= wp[k] / static_cast<double>(n);
    for (std::size_t k = 0; k < jn.size(); ++k) upstream(i, jn[k]) += wn[k] / static_cast<double>(n);
  }
  if (grad) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) engine.backprop(table.at(i, j), upstream(i, j) + upstream(j, i));
    }
  }
  engine.finish();
  return out;
}

LossValue softmax_proxy_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, true);
  const Index n = ctx.batch->size();
  const Index np = ctx.proxies->size();
  PairEngine engine(ctx, true, true, grad);
  Index anchors = 0;
  for (Index i = 0; i < n; ++i) anchors += is_anchor(ctx, i) ? 1 : 0;
  LossValue out;
  std::vector<PairEval> pos, neg;
  std::vector<double> xp, xn, wp, wn;
  for (Index i = 0; i < n; ++i) {
    if (!is_anchor(ctx, i)) continue;
    pos.clear();
    neg.clear();
    for (Index p = 0; p < np; ++p) (matches_proxy(ctx, i, p) ? pos : neg).push_back(engine.eval(kSample, i, kProxy, p));
    if (neg.empty()) throw ParameterError("softmax loss needs a negative proxy for every anchor");
    xp.clear();
    xn.clear();
    for (const auto& e : pos) xp.push_back(e.r.value);
    for (const auto& e : neg) xn.push_back(e.r.value);
    const double scale = 1.0 / static_cast<double>(anchors);
    add_term(out, i, -1, (log_sum_exp(xn, wn) - log_sum_exp(xp, wp)) * scale);
    for (std::size_t k = 0; k < pos.size(); ++k) engine.backprop(pos[k], -wp[k] * scale);
    for (std::size_t k = 0; k < neg.size(); ++k) engine.backprop(neg[k], wn[k] * scale);
  }
  engine.finish();
  return out;
}

LossValue proxy_nca_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, true);
  const Index n = ctx.batch->size();
  const Index np = ctx.proxies->size();
  PairEngine engine(ctx, true, false, grad);
  LossValue out;
  std::vector<PairEval> pos, neg;
  std::vector<double> xp, xn, wp, wn;
  for (Index i = 0; i < n; ++i) {
    if (!is_anchor(ctx, i)) continue;
    pos.clear();
    neg.clear();
    for (Index p = 0; p < np; ++p) (matches_proxy(ctx, i, p) ? pos : neg).push_back(engine.eval(kSample, i, kProxy, p));
    if (neg.empty()) throw ParameterError("ProxyNCA loss needs a negative proxy for every anchor");
    xp.clear();
    xn.clear();
    for (const auto& e : pos) xp.push_back(-e.r.value);
    for (const auto& e : neg) xn.push_back(-e.r.value);
    add_term(out, i, -1, log_sum_exp(xn, wn) - log_sum_exp(xp, wp));
    for (std::size_t k = 0; k < pos.size(); ++k) engine.backprop(pos[k], wp[k]);
    for (std::size_t k = 0; k < neg.size(); ++k) engine.backprop(neg[k], -wn[k]);
  }
  engine.finish();
  return out;
}

LossValue proxy_anchor_loss(const LossContext& ctx, LossGradient* grad) {
  check_context(ctx, true);
  const Index n = ctx.batch->size();
  const Index np = ctx.proxies->size();
  const auto& lp = ctx.loss_params;
  PairEngine engine(ctx, true, true, grad);

  Index with_pos = 0;
  for (Index p = 0; p < np; ++p) {
    for (Index i = 0; i < n; ++i) {
      if (is_anchor(ctx, i) && matches_proxy(ctx, i, p)) {
        ++with_pos;
        break;
      }
    }
  }

  LossValue out;
  std::vector<PairEval> pos, neg;
  std::vector<double> xp, xn, wp, wn;
  for (Index p = 0; p < np; ++p) {
    pos.clear();
    neg.clear();
    for (Index i = 0; i < n; ++i) {
      if (!is_anchor(ctx, i)) continue;
      (matches_proxy(ctx, i, p) ? pos : neg).push_back(engine.eval(kSample, i, kProxy, p));
    }
    double term = 0.0;
    if (!pos.empty()) {
      xp.clear();
      for (const auto& e : pos) xp.push_back(-lp.pa_alpha * (e.r.value - lp.pa_delta));
      const double scale = 1.0 / static_cast<double>(with_pos);
      term += log1p_sum_exp(xp, wp) * scale;
      for (std::size_t k = 0; k < pos.size(); ++k) engine.backprop(pos[k], -lp.pa_alpha * wp[k] * scale);
    }
    if (!neg.empty()) {
      xn.clear();
      for (const auto& e : neg) xn.push_back(lp.pa_alpha * (e.r.value + lp.pa_delta));
      const double scale = 1.0 / static_cast<double>(np);
      term += log1p_sum_exp(xn, wn) * scale;
      for (std::size_t k = 0; k < neg.size(); ++k) engine.backprop(neg[k], lp.pa_alpha * wn[k] * scale);
    }
    add_term(out, -1, p, term);
  }
  engine.finish();
  return out;
}

LossValue evaluate_loss(LossKind kind, const LossContext& ctx, LossGradient* grad) {
  switch (kind) {
    case LossKind::contrastive: return contrastive_loss(ctx, grad);
    case LossKind::margin_dw: return margin_dw_loss(ctx, grad);
    case LossKind::triplet_sh: return triplet_sh_loss(ctx, grad);
    case LossKind::multi_similarity: return multi_similarity_loss(ctx, grad);
    case LossKind::softmax_proxy: return softmax_proxy_loss(ctx, grad);
    case LossKind::proxy_nca: return proxy_nca_loss(ctx, grad);
    case LossKind::proxy_anchor: return proxy_anchor_loss(ctx, grad);
  }
  throw ParameterError("unknown loss kind");
}

}  // namespace idml

#include "idml/model.hpp"

#include "idml/detail/binary_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace idml {

void EncoderConfig::validate() const {
  if (input_dim <= 0 || semantic_dim <= 0 || uncertainty_dim <= 0) {
    throw ParameterError("encoder dimensions must be positive");
  }
  for (Index w : trunk_widths) {
    if (w <= 0) throw ParameterError("trunk widths must be positive");
  }
}

EncoderModel::EncoderModel(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Index cursor = 0;
  auto affine = [&](Index out, Index in) {
    AffineSlot s{cursor, cursor + out * in, out, in};
    cursor += out * in + out;
    return s;
  };
  Index width = cfg_.input_dim;
  for (Index w : cfg_.trunk_widths) {
    trunk_.push_back(affine(w, width));
    width = w;
  }
  head_s_ = affine(cfg_.semantic_dim, width);
  head_u_ = affine(cfg_.uncertainty_dim, width);
  const auto n_proxies = static_cast<Index>(cfg_.proxy_classes.size());
  proxy_s_ = {cursor, n_proxies * cfg_.semantic_dim};
  cursor += proxy_s_.size;
  proxy_u_ = {cursor, n_proxies * cfg_.uncertainty_dim};
  cursor += proxy_u_.size;
  params_ = Vector::Zero(cursor);
}

EncoderModel EncoderModel::random(const EncoderConfig& cfg, Rng& rng) {
  EncoderModel m(cfg);
  auto init = [&](const AffineSlot& s, double scale) {
    const double sd = scale / std::sqrt(static_cast<double>(s.in));
    for (Index k = 0; k < s.out * s.in; ++k) m.params_(s.weight + k) = sd * rng.normal();
  };
  for (const auto& s : m.trunk_) init(s, 1.0);
  init(m.head_s_, 1.0);
  init(m.head_u_, cfg.head_u_scale);
  for (Index k = 0; k < m.proxy_s_.size; ++k) m.params_(m.proxy_s_.begin + k) = rng.normal();
  for (Index k = 0; k < m.proxy_u_.size; ++k) m.params_(m.proxy_u_.begin + k) = cfg.proxy_u_scale * rng.normal();
  return m;
}

ParamRange EncoderModel::trunk_range() const {
  return {0, head_s_.weight};
}

ParamRange EncoderModel::head_s_range() const {
  return {head_s_.weight, head_s_.out * (head_s_.in + 1)};
}

ParamRange EncoderModel::head_u_range() const {
  return {head_u_.weight, head_u_.out * (head_u_.in + 1)};
}

ProxySet EncoderModel::proxies() const {
  const auto n = static_cast<Index>(cfg_.proxy_classes.size());
  ProxySet p;
  p.semantic = Eigen::Map<const RowMatrix>(params_.data() + proxy_s_.begin, n, cfg_.semantic_dim);
  p.uncertainty = Eigen::Map<const RowMatrix>(params_.data() + proxy_u_.begin, n, cfg_.uncertainty_dim);
  p.class_of = cfg_.proxy_classes;
  return p;
}

EncoderModel::Activations EncoderModel::run_trunk(const RowMatrix& x) const {
  Activations acts;
  const RowMatrix* input = &x;
  for (const auto& slot : trunk_) {
    RowMatrix z = (*input) * weight(slot).transpose();
    z.rowwise() += bias(slot).transpose();
    acts.trunk.push_back(z.array().tanh().matrix());
    input = &acts.trunk.back();
  }
  return acts;
}

EmbeddingBatch EncoderModel::forward(const RowMatrix& x) const {
  require_same_dim(x.cols(), cfg_.input_dim, "encoder input");
  const Activations acts = run_trunk(x);
  const RowMatrix& h = trunk_output(x, acts);
  EmbeddingBatch out;
  out.semantic = h * head_s_weight().transpose();
  out.semantic.rowwise() += head_s_bias().transpose();
  out.uncertainty = h * head_u_weight().transpose();
  out.uncertainty.rowwise() += head_u_bias().transpose();
  return out;
}

EmbeddingPair EncoderModel::forward(const Vector& x) const {
  const EmbeddingBatch b = forward(RowMatrix(x.transpose()));
  return b.pair(0);
}

Vector EncoderModel::backward(const RowMatrix& x, const LossGradient& upstream) const {
  require_same_dim(x.cols(), cfg_.input_dim, "encoder input");
  const Activations acts = run_trunk(x);
  const RowMatrix& h = trunk_output(x, acts);
  Vector grad = Vector::Zero(num_params());

  auto write_affine = [&](const AffineSlot& s, const RowMatrix& dz, const RowMatrix& input) {
    Eigen::Map<RowMatrix>(grad.data() + s.weight, s.out, s.in) += dz.transpose() * input;
    Eigen::Map<Vector>(grad.data() + s.bias, s.out) += dz.colwise().sum().transpose();
  };

  require_same_dim(upstream.semantic.rows(), x.rows(), "semantic gradient");
  require_same_dim(upstream.uncertainty.rows(), x.rows(), "uncertainty gradient");
  write_affine(head_s_, upstream.semantic, h);
  write_affine(head_u_, upstream.uncertainty, h);
  RowMatrix dh = upstream.semantic * head_s_weight() + upstream.uncertainty * head_u_weight();

  for (Index l = num_trunk_layers() - 1; l >= 0; --l) {
    const RowMatrix& a = acts.trunk[static_cast<std::size_t>(l)];
    const RowMatrix dz = (dh.array() * (1.0 - a.array().square())).matrix();
    const RowMatrix& input = l == 0 ? x : acts.trunk[static_cast<std::size_t>(l - 1)];
    write_affine(trunk_[static_cast<std::size_t>(l)], dz, input);
    if (l > 0) dh = dz * trunk_weight(l);
  }

  const auto n_proxies = static_cast<Index>(cfg_.proxy_classes.size());
  if (upstream.proxy_semantic.rows() == n_proxies && n_proxies > 0) {
    Eigen::Map<RowMatrix>(grad.data() + proxy_s_.begin, n_proxies, cfg_.semantic_dim) += upstream.proxy_semantic;
  }
  if (upstream.proxy_uncertainty.rows() == n_proxies && n_proxies > 0) {
    Eigen::Map<RowMatrix>(grad.data() + proxy_u_.begin, n_proxies, cfg_.uncertainty_dim) +=
        upstream.proxy_uncertainty;
  }
  return grad;
}

// ---------------------------------------------------------------------------

LossContext make_context(const EmbeddingBatch& emb, const std::vector<LabelSet>& labels, const Batch& batch,
                         const ProxySet* proxies, const Objective& obj, const Rng& rng) {
  LossContext ctx;
  ctx.batch = &emb;
  ctx.labels = &labels;
  ctx.is_mixed.reserve(batch.samples.size());
  for (const auto& s : batch.samples) ctx.is_mixed.push_back(s.is_mixed);
  ctx.proxies = uses_proxies(obj.loss) ? proxies : nullptr;
  ctx.metric = obj.metric;
  ctx.metric_params = obj.metric_params;
  ctx.loss_params = obj.loss_params;
  ctx.rng = rng;
  return ctx;
}

LossAndGrad loss_and_grad(const EncoderModel& model, const Batch& batch, const Objective& obj, const Rng& rng) {
  const RowMatrix x = batch.features();
  const std::vector<LabelSet> labels = batch.labels();
  const ProxySet proxies = model.proxies();
  LossAndGrad out;
  out.embeddings = model.forward(x);
  const LossContext ctx = make_context(out.embeddings, labels, batch, &proxies, obj, rng);
  out.loss = evaluate_loss(obj.loss, ctx, &out.embedding_grad);
  out.grad = model.backward(x, out.embedding_grad);
  if (!out.grad.allFinite()) throw NumericalFailure("non-finite parameter gradient");
  return out;
}

LossValue evaluate_objective(const EncoderModel& model, const Batch& batch, const Objective& obj, const Rng& rng) {
  const RowMatrix x = batch.features();
  const std::vector<LabelSet> labels = batch.labels();
  const ProxySet proxies = model.proxies();
  const EmbeddingBatch emb = model.forward(x);
  const LossContext ctx = make_context(emb, labels, batch, &proxies, obj, rng);
  return evaluate_loss(obj.loss, ctx, nullptr);
}

// ---------------------------------------------------------------------------

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adamw") return OptimizerKind::adamw;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ParameterError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adamw ? "adamw" : "sgd"; }

OptimState OptimState::init(const EncoderModel& model, const OptimizerConfig& cfg) {
  OptimState s;
  s.cfg = cfg;
  s.first_moment = Vector::Zero(model.num_params());
  s.second_moment = Vector::Zero(model.num_params());
  s.lr_scale = Vector::Ones(model.num_params());
  const ParamRange ps = model.proxy_semantic_range();
  const ParamRange pu = model.proxy_uncertainty_range();
  s.lr_scale.segment(ps.begin, ps.size).setConstant(cfg.proxy_lr_scale);
  s.lr_scale.segment(pu.begin, pu.size).setConstant(cfg.proxy_lr_scale);
  return s;
}

void OptimState::freeze(ParamRange range) { lr_scale.segment(range.begin, range.size).setZero(); }

void step(EncoderModel& model, const Vector& grad, OptimState& opt) {
  Vector& theta = model.params();
  require_same_dim(grad.size(), theta.size(), "optimizer gradient");
  require_same_dim(opt.first_moment.size(), theta.size(), "optimizer state");
  const auto& c = opt.cfg;
  ++opt.step_count;
  const Vector lr = c.lr * opt.lr_scale;
  if (c.kind == OptimizerKind::adamw) {
    opt.first_moment = c.beta1 * opt.first_moment + (1.0 - c.beta1) * grad;
    opt.second_moment = c.beta2 * opt.second_moment + (1.0 - c.beta2) * grad.cwiseAbs2();
    const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step_count));
    const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step_count));
    const Vector m_hat = opt.first_moment / bias1;
    const Vector v_hat = opt.second_moment / bias2;
    const Vector update = (m_hat.array() / (v_hat.array().sqrt() + c.eps)).matrix() + c.weight_decay * theta;
    theta -= lr.cwiseProduct(update);
  } else {
    opt.first_moment = c.momentum * opt.first_moment + grad;
    theta -= lr.cwiseProduct(opt.first_moment + c.weight_decay * theta);
  }
}

// ---------------------------------------------------------------------------

namespace {

using detail::get_le;
using detail::put_le;

constexpr char kMagic[4] = {'I', 'D', 'M', 'L'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const EncoderModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write checkpoint " + path);
  const auto& cfg = model.config();
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.input_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.trunk_widths.size()));
  for (Index w : cfg.trunk_widths) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(w));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.semantic_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.uncertainty_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.proxy_classes.size()));
  for (int c : cfg.proxy_classes) put_le<std::int32_t>(os, c);
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(model.num_params()));
  for (Index k = 0; k < model.num_params(); ++k) put_le<double>(os, model.params()(k));
  if (!os) throw FormatError("failed writing checkpoint " + path);
}

EncoderModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an IDML checkpoint: " + path);
  const auto version = get_le<std::uint32_t>(is, "checkpoint");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  EncoderConfig cfg;
  cfg.input_dim = get_le<std::uint32_t>(is, "checkpoint");
  cfg.trunk_widths.resize(get_le<std::uint32_t>(is, "checkpoint"));
  for (auto& w : cfg.trunk_widths) w = get_le<std::uint32_t>(is, "checkpoint");
  cfg.semantic_dim = get_le<std::uint32_t>(is, "checkpoint");
  cfg.uncertainty_dim = get_le<std::uint32_t>(is, "checkpoint");
  cfg.proxy_classes.resize(get_le<std::uint32_t>(is, "checkpoint"));
  for (auto& c : cfg.proxy_classes) c = get_le<std::int32_t>(is, "checkpoint");
  EncoderModel model(cfg);
  const auto n = get_le<std::uint64_t>(is, "checkpoint");
  if (n != static_cast<std::uint64_t>(model.num_params())) throw FormatError("checkpoint parameter count mismatch");
  for (Index k = 0; k < model.num_params(); ++k) model.params()(k) = get_le<double>(is, "checkpoint");
  return model;
}

// ---------------------------------------------------------------------------

std::vector<Index> loss_signature(const LossValue& v) {
  std::vector<Index> sig;
  sig.reserve(v.pair_terms.size() * 3 + 1);
  for (const auto& t : v.pair_terms) {
    sig.push_back(t.i);
    sig.push_back(t.j);
    sig.push_back(t.term > 0.0 ? 1 : 0);
  }
  sig.push_back(v.mining_exhausted ? 1 : 0);
  return sig;
}

ProbeResult probe_result(const LossValue& v) {
  ProbeResult r{v.value, v.kink_margin, loss_signature(v), {}};
  r.terms.reserve(v.pair_terms.size());
  for (const auto& t : v.pair_terms) r.terms.push_back(t.term);
  return r;
}

GradCheckReport compare_gradients(const Probe& f, const Vector& theta, const Vector& analytic,
                                  const GradCheckOptions& opts) {
  require_same_dim(theta.size(), analytic.size(), "compare_gradients");
  const ProbeResult base = f(theta);
  const Index n = theta.size();
  Vector rel = Vector::Zero(n);
  std::vector<char> skipped(static_cast<std::size_t>(n), 0);
  parallel_for(n, [&](Index k) {
    Vector probe = theta;
    probe(k) = theta(k) + opts.step;
    const ProbeResult plus = f(probe);
    probe(k) = theta(k) - opts.step;
    const ProbeResult minus = f(probe);
    if (plus.signature != base.signature || minus.signature != base.signature) {
      skipped[static_cast<std::size_t>(k)] = 1;
      return;
    }
    double diff = plus.value - minus.value;
    if (!plus.terms.empty() && plus.terms.size() == minus.terms.size()) {
      long double acc = 0.0L;
      for (std::size_t t = 0; t < plus.terms.size(); ++t) acc += static_cast<long double>(plus.terms[t] - minus.terms[t]);
      diff = static_cast<double>(acc);
    }
    const double numeric = diff / (2.0 * opts.step);
    const double a = analytic(k);
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.magnitude_floor});
    rel(k) = std::abs(a - numeric) / denom;
  });
  GradCheckReport report;
  for (Index k = 0; k < n; ++k) {
    if (skipped[static_cast<std::size_t>(k)]) {
      ++report.skipped;
      continue;
    }
    ++report.checked;
    if (!(rel(k) <= report.max_rel_error)) {
      report.max_rel_error = rel(k);
      report.worst_param = k;
    }
  }
  report.passed = report.max_rel_error < opts.tolerance && std::isfinite(report.max_rel_error);
  return report;
}

}  // namespace idml

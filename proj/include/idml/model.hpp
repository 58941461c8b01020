#pragma once

// Feedforward encoder with a shared tanh trunk, a semantic head, an
// uncertainty head and per-class proxies, all stored in one flat parameter
// vector so optimizers and finite-difference checks see a single array.

#include "idml/core.hpp"
#include "idml/losses.hpp"
#include "idml/metric.hpp"

#include <functional>
#include <string>
#include <vector>

namespace idml {

struct EncoderConfig {
  Index input_dim = 16;
  std::vector<Index> trunk_widths{64, 64};
  Index semantic_dim = 32;
  Index uncertainty_dim = 32;
  std::vector<int> proxy_classes;  // one proxy per listed class
  double head_u_scale = 0.1;       // init multiplier for the uncertainty head
  double proxy_u_scale = 0.01;     // init std of proxy uncertainty vectors

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Offsets of one affine layer inside the flat parameter vector. Weights are
/// row-major (out x in).
struct AffineSlot {
  Index weight = 0;
  Index bias = 0;
  Index out = 0;
  Index in = 0;
};

/// Contiguous parameter range.
struct ParamRange {
  Index begin = 0;
  Index size = 0;
};

class EncoderModel {
 public:
  using WeightMap = Eigen::Map<const RowMatrix>;
  using BiasMap = Eigen::Map<const Vector>;

  explicit EncoderModel(EncoderConfig cfg);

  /// Variance-scaled normal init; head_u and proxy u start small.
  static EncoderModel random(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  Index num_params() const { return params_.size(); }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Index num_trunk_layers() const { return static_cast<Index>(trunk_.size()); }
  WeightMap trunk_weight(Index l) const { return weight(trunk_[static_cast<std::size_t>(l)]); }
  BiasMap trunk_bias(Index l) const { return bias(trunk_[static_cast<std::size_t>(l)]); }
  WeightMap head_s_weight() const { return weight(head_s_); }
  BiasMap head_s_bias() const { return bias(head_s_); }
  WeightMap head_u_weight() const { return weight(head_u_); }
  BiasMap head_u_bias() const { return bias(head_u_); }

  const AffineSlot& trunk_slot(Index l) const { return trunk_[static_cast<std::size_t>(l)]; }
  const AffineSlot& head_s_slot() const { return head_s_; }
  const AffineSlot& head_u_slot() const { return head_u_; }
  ParamRange trunk_range() const;
  ParamRange head_s_range() const;
  ParamRange head_u_range() const;
  ParamRange proxy_semantic_range() const { return proxy_s_; }
  ParamRange proxy_uncertainty_range() const { return proxy_u_; }

  ProxySet proxies() const;

  EmbeddingPair forward(const Vector& x) const;
  EmbeddingBatch forward(const RowMatrix& x) const;

  /// Backpropagates embedding- and proxy-level derivatives into a gradient
  /// over the flat parameter vector.
  Vector backward(const RowMatrix& x, const LossGradient& upstream) const;

 private:
  WeightMap weight(const AffineSlot& s) const { return {params_.data() + s.weight, s.out, s.in}; }
  BiasMap bias(const AffineSlot& s) const { return {params_.data() + s.bias, s.out}; }

  struct Activations {
    std::vector<RowMatrix> trunk;  // post-tanh output of each trunk layer
  };
  const RowMatrix& trunk_output(const RowMatrix& x, const Activations& acts) const {
    return acts.trunk.empty() ? x : acts.trunk.back();
  }
  Activations run_trunk(const RowMatrix& x) const;

  EncoderConfig cfg_;
  std::vector<AffineSlot> trunk_;
  AffineSlot head_s_;
  AffineSlot head_u_;
  ParamRange proxy_s_;
  ParamRange proxy_u_;
  Vector params_;
};

// ---------------------------------------------------------------------------
// Objective

struct Objective {
  LossKind loss = LossKind::contrastive;
  MetricKind metric = MetricKind::ism;
  MetricParams metric_params;
  LossParams loss_params;
};

struct LossAndGrad {
  LossValue loss;
  Vector grad;                   // over EncoderModel::params()
  EmbeddingBatch embeddings;
  LossGradient embedding_grad;   // dJ/ds, dJ/du per sample and proxy
};

LossContext make_context(const EmbeddingBatch& emb, const std::vector<LabelSet>& labels, const Batch& batch,
                         const ProxySet* proxies, const Objective& obj, const Rng& rng);

/// Exact reverse-mode loss gradient. `rng` seeds the distance-weighted
/// negative sampling; the same rng state always yields the same negatives.
LossAndGrad loss_and_grad(const EncoderModel& model, const Batch& batch, const Objective& obj, const Rng& rng);

/// Loss value only.
LossValue evaluate_objective(const EncoderModel& model, const Batch& batch, const Objective& obj, const Rng& rng);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { adamw, sgd };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  double proxy_lr_scale = 10.0;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimState {
  OptimizerConfig cfg;
  Vector first_moment;
  Vector second_moment;
  Vector lr_scale;  // per-parameter learning-rate multiplier; 0 freezes
  long step_count = 0;

  static OptimState init(const EncoderModel& model, const OptimizerConfig& cfg);
  void freeze(ParamRange range);
};

/// AdamW (decoupled weight decay) or SGD with momentum.
void step(EncoderModel& model, const Vector& grad, OptimState& opt);

// ---------------------------------------------------------------------------
// Checkpoints

/// Little-endian binary layout:
///   char[4] "IDML", u32 version (1), u32 input_dim, u32 n_trunk,
///   u32 widths[n_trunk], u32 semantic_dim, u32 uncertainty_dim,
///   u32 n_proxies, i32 proxy_classes[n_proxies], u64 n_params,
///   f64 params[n_params]
void save_checkpoint(const EncoderModel& model, const std::string& path);
EncoderModel load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Finite-difference checks

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  // Components smaller than this are compared by absolute error at the same
  // tolerance scale.
  double magnitude_floor = 1e-4;
  double kink_margin = 1e-3;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  Index worst_param = -1;
  Index checked = 0;
  Index skipped = 0;  // parameters whose perturbation crossed a kink
};

/// Central differences of `f` around `theta` against `analytic`. `f` returns
/// the loss and fills `kink` with its kink margin; a perturbation whose loss
/// changes discrete structure (reported via `signature`) is skipped.
struct ProbeResult {
  double value = 0.0;
  double kink_margin = 0.0;
  std::vector<Index> signature;
  /// Additive pieces of `value` in a fixed order. When present the difference
  /// is taken piecewise, which avoids cancellation on large summed losses.
  std::vector<double> terms;
};

/// Probe result for a loss evaluation, terms included.
ProbeResult probe_result(const LossValue& v);
using Probe = std::function<ProbeResult(const Vector& theta)>;

GradCheckReport compare_gradients(const Probe& f, const Vector& theta, const Vector& analytic,
                                  const GradCheckOptions& opts);

/// Discrete structure of a loss evaluation: which pairs contributed and
/// which hinges were active.
std::vector<Index> loss_signature(const LossValue& v);

}  // namespace idml

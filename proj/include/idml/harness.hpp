#pragma once

// Experiment runner: configuration, the training loop, sweeps, gradient
// checks and post-hoc diagnostics. Every entry point is deterministic given
// the configured seed.

#include "idml/core.hpp"
#include "idml/data.hpp"
#include "idml/eval.hpp"
#include "idml/losses.hpp"
#include "idml/metric.hpp"
#include "idml/mixup.hpp"
#include "idml/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace idml {

struct RunConfig {
  SynthConfig synth;
  std::string data_path;  // CSV or IDMD file; empty means synthetic

  LossKind loss = LossKind::contrastive;
  MetricKind metric = MetricKind::ism;
  MetricParams metric_params;
  LossParams loss_params;

  bool mixup = true;
  AugmentConfig augment;

  std::vector<Index> trunk_widths{64, 64};
  Index semantic_dim = 32;
  Index uncertainty_dim = 32;
  double head_u_scale = 0.1;
  double proxy_u_scale = 0.01;
  bool freeze_uncertainty = false;  // zero and freeze the uncertainty head and proxy u

  OptimizerConfig optimizer;
  int batch_size = 32;
  int samples_per_class = 4;
  int epochs = 50;
  std::uint64_t seed = 0;

  MetricKind test_metric = MetricKind::euclidean;
  Index eval_anchors = 100;
  Index eval_knn = 10;
  double eval_mix_fraction = 0.5;  // mixed test samples added for the uncertainty diagnostics

  std::string output_dir;

  void validate() const;
  Objective objective() const;
  EncoderConfig encoder(Index input_dim, std::vector<int> proxy_classes) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Named starting points: "desk" (the defaults) and "paper" (batch 120,
/// 512-d heads).
RunConfig preset(const std::string& name);

std::string to_json(const RunConfig& cfg);
/// Missing keys keep the values from `base`; unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text, const RunConfig& base = {});
RunConfig load_run_config(const std::string& path, const RunConfig& base = {});

std::string to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& text, const SynthConfig& base = {});

// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double u_clean = 0.0;    // mean ||u|| over clean training samples
  double u_mixed = 0.0;    // mean ||u|| over mixed training samples
  double grad_norm = 0.0;  // mean ||dJ/ds|| per sample
};

struct StepFailure {
  int epoch = 0;
  int step = 0;
  std::string message;
};

struct UncertaintyRow {
  std::int64_t id = 0;
  LabelSet labels;
  bool is_mixed = false;
  double u_norm = 0.0;
};

struct RunRecord {
  RunConfig config;
  std::vector<EpochLog> epochs;
  EvalReport eval;
  std::optional<StepFailure> failure;
  double wall_seconds = 0.0;  // kept out of record.json
};

struct TrainResult {
  RunRecord record;
  EncoderModel model;
  std::vector<UncertaintyRow> uncertainty;
};

/// Loads or synthesizes the configured dataset.
Dataset load_run_dataset(const RunConfig& cfg);

/// Model after seeded initialization (and zeroing when the uncertainty path
/// is frozen).
EncoderModel init_model(const RunConfig& cfg, const Dataset& ds);

struct EvalOutcome {
  EvalReport report;
  std::vector<UncertaintyRow> uncertainty;
};

/// Semantic-space evaluation of `rows`, plus mixed samples synthesized from
/// them for the uncertainty statistics.
EvalOutcome evaluate_model(const EncoderModel& model, const Dataset& ds, const std::vector<Index>& rows,
                           const RunConfig& cfg);

/// Mini-batch training followed by evaluation on the test split. Writes the
/// output layout when cfg.output_dir is set. A numerical failure is recorded
/// and rethrown.
TrainResult train(const RunConfig& cfg);

std::string record_json(const RunRecord& r);
std::string epochs_csv(const std::vector<EpochLog>& epochs);
std::string uncertainty_csv(const std::vector<UncertaintyRow>& rows);

// ---------------------------------------------------------------------------

const std::vector<std::string>& sweep_params();

/// Copy of `base` with one sweepable parameter replaced.
RunConfig with_param(const RunConfig& base, const std::string& name, double value);

/// One run per value with the shared seed; runs go to output_dir/<name>_<value>
/// and the summary to output_dir/sweep_<name>.csv. `jobs` > 1 runs in parallel.
std::vector<RunRecord> sweep(const RunConfig& base, const std::string& name, const std::vector<double>& values,
                             int jobs = 1);
std::string sweep_csv(const std::string& name, const std::vector<double>& values,
                      const std::vector<RunRecord>& records);

// ---------------------------------------------------------------------------

struct GradCheckConfig {
  GradCheckOptions options;
  int max_attempts = 20;  // batch resamples allowed when a kink is too close
  Index max_params = 0;   // random subset of parameters; 0 checks all
  Index h_pairs = 1000;   // pairs for the attenuation-factor check
  int batch_size = 8;     // clean samples per checked batch; 0 uses the training batch size
};

struct GradCheckResult {
  GradCheckReport report;
  int resamples = 0;
  double kink_margin = 0.0;
  bool h_checked = false;
  double h_max_error = 0.0;
  bool passed = false;
};

/// Finite differences of the configured loss/metric on a training batch,
/// plus the attenuation-factor identity for the introspective metric.
/// `corrupt` perturbs the analytic gradient before comparison.
GradCheckResult gradcheck(const RunConfig& cfg, const GradCheckConfig& gc = {}, double corrupt = 0.0);

/// exp(-x)(1 + x) with x = (beta + gamma) / (alpha tau).
double attenuation_factor(double alpha, double beta, const MetricParams& mp);

std::string gradcheck_json(const GradCheckResult& r);

// ---------------------------------------------------------------------------

struct DiagnoseResult {
  EvalOutcome outcome;
};

/// Evaluates a trained model on `ds` (its test split when `test_split_only`).
DiagnoseResult diagnose(const EncoderModel& model, const Dataset& ds, const RunConfig& cfg, bool test_split_only);

}  // namespace idml

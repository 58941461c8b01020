#include "idml/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace idml {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

namespace {

// Stream keys under the run seed.
enum StreamKey : std::uint64_t {
  kInitStream = 10,
  kSamplerStream = 11,
  kAugmentStream = 12,
  kLossStream = 13,
  kEvalMixStream = 14,
  kEvalClusterStream = 15,
  kGradCheckStream = 16,
};

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

std::string fmt_short(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
  if (!os) throw FormatError("failed writing " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParameterError("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

// Reads known keys from a JSON object and rejects the rest.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParameterError(where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ParameterError(where_ + "." + key + " has the wrong type");
    }
  }

  template <typename Fn>
  void custom(const char* key, Fn&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it != j_.end()) fn(*it);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ParameterError("unknown config key '" + where_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string get_string(const json& v, const char* what) {
  if (!v.is_string()) throw ParameterError(std::string(what) + " must be a string");
  return v.get<std::string>();
}

ojson synth_to_ojson(const SynthConfig& s) {
  ojson j;
  j["n_classes"] = s.n_classes;
  j["per_class"] = s.per_class;
  j["input_dim"] = s.input_dim;
  j["signal_dim"] = s.signal_dim;
  j["class_sep"] = s.class_sep;
  j["within_sigma"] = s.within_sigma;
  j["nuisance_sigma"] = s.nuisance_sigma;
  j["ambiguous_frac"] = s.ambiguous_frac;
  j["mislabel_frac"] = s.mislabel_frac;
  j["seed"] = s.seed;
  return j;
}

void synth_from(const json& j, SynthConfig& s, const std::string& where) {
  Fields f(j, where);
  f.get("n_classes", s.n_classes);
  f.get("per_class", s.per_class);
  f.get("input_dim", s.input_dim);
  f.get("signal_dim", s.signal_dim);
  f.get("class_sep", s.class_sep);
  f.get("within_sigma", s.within_sigma);
  f.get("nuisance_sigma", s.nuisance_sigma);
  f.get("ambiguous_frac", s.ambiguous_frac);
  f.get("mislabel_frac", s.mislabel_frac);
  f.get("seed", s.seed);
  f.finish();
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (data_path.empty()) synth.validate();
  metric_params.validate();
  loss_params.validate();
  augment.validate();
  if (batch_size < 4) throw ParameterError("batch_size must be at least 4");
  if (samples_per_class < 1) throw ParameterError("samples_per_class must be positive");
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (semantic_dim < 1 || uncertainty_dim < 1) throw ParameterError("embedding dims must be positive");
  for (Index w : trunk_widths) {
    if (w < 1) throw ParameterError("trunk widths must be positive");
  }
  if (!(head_u_scale >= 0.0) || !(proxy_u_scale >= 0.0)) throw ParameterError("init scales must be nonnegative");
  if (!(optimizer.lr > 0.0)) throw ParameterError("optimizer.lr must be positive");
  if (!(optimizer.weight_decay >= 0.0)) throw ParameterError("optimizer.weight_decay must be nonnegative");
  if (!(optimizer.proxy_lr_scale >= 0.0)) throw ParameterError("optimizer.proxy_lr_scale must be nonnegative");
  if (eval_anchors < 1 || eval_knn < 1) throw ParameterError("eval_anchors and eval_knn must be positive");
  if (!(eval_mix_fraction >= 0.0 && eval_mix_fraction <= 1.0)) throw ParameterError("eval_mix_fraction must lie in [0, 1]");
}

Objective RunConfig::objective() const { return {loss, metric, metric_params, loss_params}; }

EncoderConfig RunConfig::encoder(Index input_dim, std::vector<int> proxy_classes) const {
  EncoderConfig e;
  e.input_dim = input_dim;
  e.trunk_widths = trunk_widths;
  e.semantic_dim = semantic_dim;
  e.uncertainty_dim = uncertainty_dim;
  e.proxy_classes = std::move(proxy_classes);
  e.head_u_scale = head_u_scale;
  e.proxy_u_scale = proxy_u_scale;
  return e;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.batch_size = 120;
    c.semantic_dim = 512;
    c.uncertainty_dim = 512;
    c.metric_params.tau = 5.0;
    return c;
  }
  throw ParameterError("unknown preset '" + name + "'");
}

std::string to_json(const SynthConfig& cfg) { return synth_to_ojson(cfg).dump(2); }

SynthConfig synth_config_from_json(const std::string& text, const SynthConfig& base) {
  SynthConfig s = base;
  synth_from(parse_json(text), s, "synth");
  return s;
}

std::string to_json(const RunConfig& c) {
  ojson j;
  j["synth"] = synth_to_ojson(c.synth);
  j["data_path"] = c.data_path;
  j["loss"] = to_string(c.loss);
  j["metric"] = to_string(c.metric);
  j["metric_params"] = {{"gamma", c.metric_params.gamma},
                        {"tau", c.metric_params.tau},
                        {"alpha_min", c.metric_params.alpha_min},
                        {"dis_reference", c.metric_params.dis_reference}};
  const auto& lp = c.loss_params;
  j["loss_params"] = {{"contrastive_margin", lp.contrastive_margin},
                      {"triplet_margin", lp.triplet_margin},
                      {"margin_xi", lp.margin_xi},
                      {"margin_omega", lp.margin_omega},
                      {"phi", lp.phi},
                      {"ms_eps", lp.ms_eps},
                      {"ms_alpha", lp.ms_alpha},
                      {"ms_beta", lp.ms_beta},
                      {"ms_lambda", lp.ms_lambda},
                      {"pa_alpha", lp.pa_alpha},
                      {"pa_delta", lp.pa_delta},
                      {"mixed_as_anchor", lp.mixed_as_anchor}};
  j["mixup"] = c.mixup;
  const auto& a = c.augment;
  j["augment"] = {{"mix_beta_a", a.mix_beta_a},     {"mix_fraction", a.mix_fraction},
                  {"blur_prob", a.blur_prob},       {"occl_prob", a.occl_prob},
                  {"occl_fraction", a.occl_fraction}, {"lowres_factor", a.lowres_factor},
                  {"lowres_prob", a.lowres_prob},   {"noise_sigma", a.noise_sigma}};
  j["trunk_widths"] = c.trunk_widths;
  j["semantic_dim"] = c.semantic_dim;
  j["uncertainty_dim"] = c.uncertainty_dim;
  j["head_u_scale"] = c.head_u_scale;
  j["proxy_u_scale"] = c.proxy_u_scale;
  j["freeze_uncertainty"] = c.freeze_uncertainty;
  const auto& o = c.optimizer;
  j["optimizer"] = {{"kind", to_string(o.kind)}, {"lr", o.lr},
                    {"beta1", o.beta1},          {"beta2", o.beta2},
                    {"eps", o.eps},              {"weight_decay", o.weight_decay},
                    {"momentum", o.momentum},    {"proxy_lr_scale", o.proxy_lr_scale}};
  j["batch_size"] = c.batch_size;
  j["samples_per_class"] = c.samples_per_class;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["test_metric"] = to_string(c.test_metric);
  j["eval_anchors"] = c.eval_anchors;
  j["eval_knn"] = c.eval_knn;
  j["eval_mix_fraction"] = c.eval_mix_fraction;
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text, const RunConfig& base) {
  const json j = parse_json(text);
  RunConfig c = base;
  Fields f(j, "config");
  f.custom("preset", [&](const json& v) {
    // A preset replaces the base; explicit keys still override it.
    const RunConfig p = preset(get_string(v, "preset"));
    const auto keep_out = c.output_dir;
    c = p;
    c.output_dir = keep_out;
  });
  f.custom("synth", [&](const json& v) { synth_from(v, c.synth, "synth"); });
  f.get("data_path", c.data_path);
  f.custom("loss", [&](const json& v) { c.loss = parse_loss(get_string(v, "loss")); });
  f.custom("metric", [&](const json& v) { c.metric = parse_metric(get_string(v, "metric")); });
  f.custom("metric_params", [&](const json& v) {
    Fields m(v, "metric_params");
    m.get("gamma", c.metric_params.gamma);
    m.get("tau", c.metric_params.tau);
    m.get("alpha_min", c.metric_params.alpha_min);
    m.get("dis_reference", c.metric_params.dis_reference);
    m.finish();
  });
  f.custom("loss_params", [&](const json& v) {
    auto& lp = c.loss_params;
    Fields m(v, "loss_params");
    m.get("contrastive_margin", lp.contrastive_margin);
    m.get("triplet_margin", lp.triplet_margin);
    m.get("margin_xi", lp.margin_xi);
    m.get("margin_omega", lp.margin_omega);
    m.get("phi", lp.phi);
    m.get("ms_eps", lp.ms_eps);
    m.get("ms_alpha", lp.ms_alpha);
    m.get("ms_beta", lp.ms_beta);
    m.get("ms_lambda", lp.ms_lambda);
    m.get("pa_alpha", lp.pa_alpha);
    m.get("pa_delta", lp.pa_delta);
    m.get("mixed_as_anchor", lp.mixed_as_anchor);
    m.finish();
  });
  f.get("mixup", c.mixup);
  f.custom("augment", [&](const json& v) {
    auto& a = c.augment;
    Fields m(v, "augment");
    m.get("mix_beta_a", a.mix_beta_a);
    m.get("mix_fraction", a.mix_fraction);
    m.get("blur_prob", a.blur_prob);
    m.get("occl_prob", a.occl_prob);
    m.get("occl_fraction", a.occl_fraction);
    m.get("lowres_factor", a.lowres_factor);
    m.get("lowres_prob", a.lowres_prob);
    m.get("noise_sigma", a.noise_sigma);
    m.finish();
  });
  f.get("trunk_widths", c.trunk_widths);
  f.get("semantic_dim", c.semantic_dim);
  f.get("uncertainty_dim", c.uncertainty_dim);
  f.get("head_u_scale", c.head_u_scale);
  f.get("proxy_u_scale", c.proxy_u_scale);
  f.get("freeze_uncertainty", c.freeze_uncertainty);
  f.custom("optimizer", [&](const json& v) {
    auto& o = c.optimizer;
    Fields m(v, "optimizer");
    m.custom("kind", [&](const json& k) { o.kind = parse_optimizer(get_string(k, "optimizer.kind")); });
    m.get("lr", o.lr);
    m.get("beta1", o.beta1);
    m.get("beta2", o.beta2);
    m.get("eps", o.eps);
    m.get("weight_decay", o.weight_decay);
    m.get("momentum", o.momentum);
    m.get("proxy_lr_scale", o.proxy_lr_scale);
    m.finish();
  });
  f.get("batch_size", c.batch_size);
  f.get("samples_per_class", c.samples_per_class);
  f.get("epochs", c.epochs);
  f.get("seed", c.seed);
  f.custom("test_metric", [&](const json& v) { c.test_metric = parse_metric(get_string(v, "test_metric")); });
  f.get("eval_anchors", c.eval_anchors);
  f.get("eval_knn", c.eval_knn);
  f.get("eval_mix_fraction", c.eval_mix_fraction);
  f.get("output_dir", c.output_dir);
  f.finish();
  return c;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  return run_config_from_json(read_text(path), base);
}

// ---------------------------------------------------------------------------
// Training

Dataset load_run_dataset(const RunConfig& cfg) {
  Dataset ds = cfg.data_path.empty() ? generate(cfg.synth) : load_dataset(cfg.data_path);
  ds.validate();
  return ds;
}

EncoderModel init_model(const RunConfig& cfg, const Dataset& ds) {
  const Split split = ds.split();
  Rng rng = Rng(cfg.seed).substream(kInitStream);
  EncoderModel model = EncoderModel::random(cfg.encoder(ds.dim(), split.train_classes), rng);
  if (cfg.freeze_uncertainty) {
    for (ParamRange r : {model.head_u_range(), model.proxy_uncertainty_range()}) {
      model.params().segment(r.begin, r.size).setZero();
    }
  }
  return model;
}

namespace {

// Class-balanced batches: batch_size / samples_per_class classes, rows
// spread evenly over them.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, const std::vector<Index>& rows, int batch_size, int per_class)
      : batch_size_(batch_size), per_class_(per_class) {
    for (Index r : rows) by_class_[ds.labels[static_cast<std::size_t>(r)].primary()].push_back(r);
    for (const auto& [c, members] : by_class_) classes_.push_back(c);
    if (classes_.size() < 2) throw ParameterError("training split needs at least two classes");
  }

  std::vector<Index> draw(Rng& rng) const {
    const auto n_classes = static_cast<Index>(classes_.size());
    const Index n_pick = std::clamp<Index>(batch_size_ / per_class_, 2, n_classes);
    const std::vector<Index> picked = rng.sample_without_replacement(n_classes, n_pick);
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(batch_size_));
    for (Index k = 0; k < n_pick; ++k) {
      const Index quota = batch_size_ / n_pick + (k < batch_size_ % n_pick ? 1 : 0);
      const auto& members = by_class_.at(classes_[static_cast<std::size_t>(picked[static_cast<std::size_t>(k)])]);
      const auto pool = static_cast<Index>(members.size());
      Index taken = 0;
      while (taken < quota) {
        const Index chunk = std::min(quota - taken, pool);
        for (Index m : rng.sample_without_replacement(pool, chunk)) out.push_back(members[static_cast<std::size_t>(m)]);
        taken += chunk;
      }
    }
    return out;
  }

 private:
  int batch_size_;
  int per_class_;
  std::map<int, std::vector<Index>> by_class_;
  std::vector<int> classes_;
};

void write_outputs(const RunConfig& cfg, const RunRecord& rec, const std::vector<UncertaintyRow>* uncert,
                   const EncoderModel* model) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg) + "\n");
  write_text(dir / "record.json", record_json(rec) + "\n");
  write_text(dir / "epochs.csv", epochs_csv(rec.epochs));
  ojson timing;
  timing["wall_seconds"] = rec.wall_seconds;
  write_text(dir / "timing.json", timing.dump(2) + "\n");
  if (uncert) write_text(dir / "uncertainty.csv", uncertainty_csv(*uncert));
  if (!rec.failure) write_text(dir / "eval.json", eval_report_json(rec.eval) + "\n");
  if (model) save_checkpoint(*model, (dir / "model.ckpt").string());
}

}  // namespace

EvalOutcome evaluate_model(const EncoderModel& model, const Dataset& ds, const std::vector<Index>& rows,
                           const RunConfig& cfg) {
  require_same_dim(ds.dim(), model.config().input_dim, "model input vs dataset");
  if (rows.size() < 2) throw ParameterError("evaluation needs at least two samples");
  Batch batch = ds.batch(rows);
  AugmentConfig mixing;
  mixing.mix_beta_a = cfg.augment.mix_beta_a;
  mixing.mix_fraction = cfg.eval_mix_fraction;
  Rng mix_rng = Rng(cfg.seed).substream(kEvalMixStream);
  batch = augment_batch(batch, mixing, mix_rng);

  const EmbeddingBatch emb = model.forward(batch.features());
  const std::vector<LabelSet> labels = batch.labels();
  std::vector<bool> mixed;
  for (const auto& s : batch.samples) mixed.push_back(s.is_mixed);

  EvalOptions opts;
  opts.test_metric = cfg.test_metric;
  opts.metric_params = cfg.metric_params;
  opts.anchors = cfg.eval_anchors;
  opts.knn_k = cfg.eval_knn;
  Rng cluster_rng = Rng(cfg.seed).substream(kEvalClusterStream);

  EvalOutcome out;
  out.report = evaluate_embeddings(emb, labels, mixed, opts, cluster_rng);
  std::int64_t next_id = *std::max_element(ds.ids.begin(), ds.ids.end()) + 1;
  for (std::size_t k = 0; k < batch.samples.size(); ++k) {
    const std::int64_t id = k < rows.size() ? ds.ids[static_cast<std::size_t>(rows[k])] : next_id++;
    out.uncertainty.push_back({id, labels[k], static_cast<bool>(mixed[k]), emb.uncertainty.row(static_cast<Index>(k)).norm()});
  }
  return out;
}

TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = load_run_dataset(cfg);
  const Split split = ds.split();
  TrainResult result{RunRecord{cfg, {}, {}, std::nullopt, 0.0}, init_model(cfg, ds), {}};
  EncoderModel& model = result.model;
  RunRecord& rec = result.record;

  OptimState opt = OptimState::init(model, cfg.optimizer);
  if (cfg.freeze_uncertainty) {
    opt.freeze(model.head_u_range());
    opt.freeze(model.proxy_uncertainty_range());
  }
  const Objective obj = cfg.objective();
  const BatchSampler sampler(ds, split.train, cfg.batch_size, cfg.samples_per_class);
  const Index steps = std::max<Index>(1, static_cast<Index>(split.train.size()) / cfg.batch_size);
  const Rng root(cfg.seed);
  Rng sampler_rng = root.substream(kSamplerStream);
  Rng augment_rng = root.substream(kAugmentStream);
  const Rng loss_root = root.substream(kLossStream);

  AugmentConfig aug = cfg.augment;
  if (!cfg.mixup) aug.mix_fraction = 0.0;

  std::uint64_t global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    double u_clean = 0.0, u_mixed = 0.0, grad_sum = 0.0;
    Index n_clean = 0, n_mixed = 0, n_rows = 0;
    for (Index s = 0; s < steps; ++s, ++global_step) {
      try {
        const Batch batch = augment_batch(ds.batch(sampler.draw(sampler_rng)), aug, augment_rng);
        const LossAndGrad lg = loss_and_grad(model, batch, obj, loss_root.substream(global_step));
        if (!std::isfinite(lg.loss.value)) throw NumericalFailure("non-finite loss");
        step(model, lg.grad, opt);
        if (!model.params().allFinite()) throw NumericalFailure("non-finite parameters after update");
        log.loss += lg.loss.value;
        for (Index i = 0; i < batch.size(); ++i) {
          const double un = lg.embeddings.uncertainty.row(i).norm();
          if (batch.samples[static_cast<std::size_t>(i)].is_mixed) {
            u_mixed += un;
            ++n_mixed;
          } else {
            u_clean += un;
            ++n_clean;
          }
          grad_sum += lg.embedding_grad.semantic.row(i).norm();
          ++n_rows;
        }
      } catch (const Error& e) {
        if (!dynamic_cast<const NumericalFailure*>(&e) && !dynamic_cast<const FinitenessError*>(&e)) throw;
        rec.failure = StepFailure{epoch, static_cast<int>(s), e.what()};
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!cfg.output_dir.empty()) write_outputs(cfg, rec, nullptr, nullptr);
        throw NumericalFailure("epoch " + std::to_string(epoch) + " step " + std::to_string(s) + ": " + e.what());
      }
    }
    log.loss /= static_cast<double>(steps);
    log.u_clean = n_clean ? u_clean / static_cast<double>(n_clean) : 0.0;
    log.u_mixed = n_mixed ? u_mixed / static_cast<double>(n_mixed) : 0.0;
    log.grad_norm = n_rows ? grad_sum / static_cast<double>(n_rows) : 0.0;
    rec.epochs.push_back(log);
  }

  EvalOutcome ev = evaluate_model(model, ds, split.test, cfg);
  rec.eval = ev.report;
  result.uncertainty = std::move(ev.uncertainty);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.output_dir.empty()) write_outputs(cfg, rec, &result.uncertainty, &model);
  return result;
}

std::string record_json(const RunRecord& r) {
  ojson j;
  j["config"] = ojson::parse(to_json(r.config));
  ojson epochs = ojson::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"u_clean", e.u_clean},
                      {"u_mixed", e.u_mixed},
                      {"grad_norm", e.grad_norm}});
  }
  j["epochs"] = epochs;
  j["eval"] = r.failure ? ojson(nullptr) : ojson::parse(eval_report_json(r.eval));
  if (r.failure) {
    j["failure"] = {{"epoch", r.failure->epoch}, {"step", r.failure->step}, {"message", r.failure->message}};
  } else {
    j["failure"] = nullptr;
  }
  return j.dump(2);
}

std::string epochs_csv(const std::vector<EpochLog>& epochs) {
  std::string out = "epoch,loss,u_clean,u_mixed,grad_norm\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + ',' + fmt_double(e.loss) + ',' + fmt_double(e.u_clean) + ',' +
           fmt_double(e.u_mixed) + ',' + fmt_double(e.grad_norm) + '\n';
  }
  return out;
}

std::string uncertainty_csv(const std::vector<UncertaintyRow>& rows) {
  std::string out = "id,label,is_mixed,u_norm\n";
  for (const auto& r : rows) {
    out += std::to_string(r.id) + ',' + r.labels.to_string() + ',' + (r.is_mixed ? "1" : "0") + ',' +
           fmt_double(r.u_norm) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

const std::vector<std::string>& sweep_params() {
  static const std::vector<std::string> names{"tau", "gamma", "batch_size", "semantic_dim", "uncertainty_dim"};
  return names;
}

RunConfig with_param(const RunConfig& base, const std::string& name, double value) {
  RunConfig c = base;
  auto as_int = [&]() {
    if (value != std::floor(value) || value < 1 || value > 1e9) {
      throw ParameterError(name + " must be a positive integer, got " + fmt_short(value));
    }
    return static_cast<int>(value);
  };
  if (name == "tau") {
    c.metric_params.tau = value;
  } else if (name == "gamma") {
    c.metric_params.gamma = value;
  } else if (name == "batch_size") {
    c.batch_size = as_int();
  } else if (name == "semantic_dim") {
    c.semantic_dim = as_int();
  } else if (name == "uncertainty_dim") {
    c.uncertainty_dim = as_int();
  } else {
    throw ParameterError("unknown sweep parameter '" + name + "'");
  }
  if (!base.output_dir.empty()) c.output_dir = base.output_dir + "/" + name + "_" + fmt_short(value);
  c.validate();
  return c;
}

std::vector<RunRecord> sweep(const RunConfig& base, const std::string& name, const std::vector<double>& values,
                             int jobs) {
  if (values.empty()) throw ParameterError("sweep needs at least one value");
  std::vector<RunConfig> configs;
  for (double v : values) configs.push_back(with_param(base, name, v));

  std::vector<std::optional<RunRecord>> records(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  auto run = [&](std::size_t k) {
    try {
      records[k] = train(configs[k]).record;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1) {
    for (std::size_t k = 0; k < configs.size(); ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, configs.size()); ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < configs.size(); k += workers) run(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<RunRecord> out;
  for (auto& r : records) out.push_back(std::move(*r));
  if (!base.output_dir.empty()) {
    std::filesystem::create_directories(base.output_dir);
    write_text(std::filesystem::path(base.output_dir) / ("sweep_" + name + ".csv"), sweep_csv(name, values, out));
  }
  return out;
}

std::string sweep_csv(const std::string& name, const std::vector<double>& values,
                      const std::vector<RunRecord>& records) {
  if (values.size() != records.size()) throw ShapeError("sweep_csv: values and records differ in length");
  std::string out = "param,value,final_loss," + eval_csv_header() + "\n";
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    out += name + ',' + fmt_short(values[k]) + ',' + (r.epochs.empty() ? std::string() : fmt_double(r.epochs.back().loss)) +
           ',' + eval_csv_row(r.eval) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checks

double attenuation_factor(double alpha, double beta, const MetricParams& mp) {
  const double x = (beta + mp.gamma) / (std::max(alpha, mp.alpha_min) * mp.tau);
  return std::exp(-x) * (1.0 + x);
}

GradCheckResult gradcheck(const RunConfig& cfg, const GradCheckConfig& gc, double corrupt) {
  cfg.validate();
  const Dataset ds = load_run_dataset(cfg);
  const Split split = ds.split();
  const EncoderModel model = init_model(cfg, ds);
  const Objective obj = cfg.objective();
  if (gc.batch_size != 0 && gc.batch_size < 4) throw ParameterError("gradcheck batch size must be 0 or at least 4");
  const int batch_size = gc.batch_size > 0 ? gc.batch_size : cfg.batch_size;
  const BatchSampler sampler(ds, split.train, batch_size, std::min(cfg.samples_per_class, batch_size / 2));
  AugmentConfig aug = cfg.augment;
  if (!cfg.mixup) aug.mix_fraction = 0.0;

  const Rng root = Rng(cfg.seed).substream(kGradCheckStream);
  GradCheckResult res;
  Batch batch;
  Rng loss_rng;
  LossAndGrad lg;
  double best_margin = -1.0;
  for (int attempt = 0; attempt < std::max(1, gc.max_attempts); ++attempt) {
    Rng draw = root.substream(static_cast<std::uint64_t>(attempt));
    Batch candidate = augment_batch(ds.batch(sampler.draw(draw)), aug, draw);
    const Rng candidate_rng = draw.substream(1);
    LossAndGrad candidate_lg = loss_and_grad(model, candidate, obj, candidate_rng);
    if (candidate_lg.loss.kink_margin > best_margin) {
      best_margin = candidate_lg.loss.kink_margin;
      batch = std::move(candidate);
      loss_rng = candidate_rng;
      lg = std::move(candidate_lg);
    }
    if (best_margin >= gc.options.kink_margin) break;
    ++res.resamples;
  }
  res.kink_margin = best_margin;

  std::vector<Index> subset;
  if (gc.max_params > 0 && gc.max_params < model.num_params()) {
    Rng pick = root.substream(0xfffff);
    subset = pick.sample_without_replacement(model.num_params(), gc.max_params);
    std::sort(subset.begin(), subset.end());
  } else {
    subset.resize(static_cast<std::size_t>(model.num_params()));
    std::iota(subset.begin(), subset.end(), Index{0});
  }
  Vector theta(static_cast<Index>(subset.size()));
  Vector analytic(theta.size());
  for (std::size_t k = 0; k < subset.size(); ++k) {
    theta(static_cast<Index>(k)) = model.params()(subset[k]);
    analytic(static_cast<Index>(k)) = lg.grad(subset[k]);
  }
  if (corrupt != 0.0) analytic *= 1.0 + corrupt;

  const Probe probe = [&](const Vector& t) {
    EncoderModel m = model;
    for (std::size_t k = 0; k < subset.size(); ++k) m.params()(subset[k]) = t(static_cast<Index>(k));
    const LossValue v = evaluate_objective(m, batch, obj, loss_rng);
    return probe_result(v);
  };
  res.report = compare_gradients(probe, theta, analytic, gc.options);
  res.passed = res.report.passed;

  if (cfg.metric == MetricKind::ism && gc.h_pairs > 0) {
    res.h_checked = true;
    Rng h_rng = root.substream(0xeeeee);
    for (Index k = 0; k < gc.h_pairs; ++k) {
      const double alpha = h_rng.uniform(1e-2, 4.0);
      const double beta = h_rng.uniform(0.0, 4.0);
      const PairResponse r = distance_response(MetricKind::ism, alpha, beta, cfg.metric_params);
      const double h = attenuation_factor(alpha, beta, cfg.metric_params);
      res.h_max_error = std::max(res.h_max_error, std::abs(r.d_alpha - h) / std::max(h, 1e-300));
      if (h > 1.0 + 1e-15) res.h_max_error = std::max(res.h_max_error, h - 1.0);
    }
    res.passed = res.passed && res.h_max_error < gc.options.tolerance;
  }
  return res;
}

std::string gradcheck_json(const GradCheckResult& r) {
  ojson j;
  j["passed"] = r.passed;
  j["max_rel_error"] = r.report.max_rel_error;
  j["worst_param"] = r.report.worst_param;
  j["checked"] = r.report.checked;
  j["skipped_kinks"] = r.report.skipped;
  j["resamples"] = r.resamples;
  j["kink_margin"] = r.kink_margin;
  if (r.h_checked) {
    j["h_factor_max_rel_error"] = r.h_max_error;
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------

DiagnoseResult diagnose(const EncoderModel& model, const Dataset& ds, const RunConfig& cfg, bool test_split_only) {
  require_same_dim(ds.dim(), model.config().input_dim, "checkpoint input vs dataset");
  std::vector<Index> rows;
  if (test_split_only) {
    rows = ds.split().test;
  } else {
    rows.resize(static_cast<std::size_t>(ds.size()));
    std::iota(rows.begin(), rows.end(), Index{0});
  }
  return {evaluate_model(model, ds, rows, cfg)};
}

}  // namespace idml

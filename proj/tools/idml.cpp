// Command-line front end: idml synth|train|eval|sweep|gradcheck|diagnose.

#include "idml/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitGradcheck = 4;

struct CommonFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string metric;
  std::string loss;
  std::optional<double> tau;
  std::optional<double> gamma;
  std::string test_metric;
  std::optional<int> epochs;
  std::string data;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "run configuration JSON");
  cmd->add_option("--preset", f.preset, "desk | paper");
  cmd->add_option("--seed", f.seed, "run and dataset seed");
  cmd->add_option("--output", f.output, "output directory");
  cmd->add_option("--metric", f.metric, "euclidean | ism | ism_strict | ism_dis | uncert_sumnorm");
  cmd->add_option("--loss", f.loss, "training loss");
  cmd->add_option("--tau", f.tau, "temperature");
  cmd->add_option("--gamma", f.gamma, "introspective bias");
  cmd->add_option("--test-metric", f.test_metric, "metric used at evaluation time");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--data", f.data, "dataset file (CSV or IDMD) instead of synthetic data");
}

idml::RunConfig resolve(const CommonFlags& f) {
  idml::RunConfig cfg = f.preset.empty() ? idml::RunConfig{} : idml::preset(f.preset);
  if (!f.config.empty()) cfg = idml::load_run_config(f.config, cfg);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.synth.seed = *f.seed;
  }
  if (!f.output.empty()) cfg.output_dir = f.output;
  if (!f.metric.empty()) cfg.metric = idml::parse_metric(f.metric);
  if (!f.loss.empty()) cfg.loss = idml::parse_loss(f.loss);
  if (f.tau) cfg.metric_params.tau = *f.tau;
  if (f.gamma) cfg.metric_params.gamma = *f.gamma;
  if (!f.test_metric.empty()) cfg.test_metric = idml::parse_metric(f.test_metric);
  if (f.epochs) cfg.epochs = *f.epochs;
  if (!f.data.empty()) cfg.data_path = f.data;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw idml::ParameterError("bad sweep value '" + item + "'");
    }
    if (used != item.size()) throw idml::ParameterError("bad sweep value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw idml::FormatError("cannot write " + path.string());
  os << text;
}

void print_summary(const idml::EvalReport& r) {
  for (const auto& [k, v] : r.recall_at_k) std::cout << "R@" << k << " " << v << "\n";
  std::cout << "NMI " << r.nmi << "\nRP " << r.r_precision << "\nMAP@R " << r.map_at_r << "\n"
            << "mean |u| clean " << r.mean_uncert_clean << " mixed " << r.mean_uncert_mixed << "\n"
            << "corr jaccard " << r.corr.jaccard << " mrr " << r.corr.mrr << " cosine " << r.corr.cosine
            << " (|cosine| " << std::abs(r.corr.cosine) << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Introspective deep metric learning toolkit"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, eval_f, sweep_f, grad_f, diag_f;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "synthetic-data JSON (or a run config with a synth section)");
  synth->add_option("--seed", synth_seed, "dataset seed");
  synth->add_option("--output", synth_out, "output file; .idmd selects the binary format")->required();

  auto* train = app.add_subcommand("train", "train and evaluate");
  add_common(train, train_f);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_f);
  std::string eval_ckpt;
  bool eval_all = false;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_flag("--all-rows", eval_all, "evaluate every row instead of the test split");

  auto* sw = app.add_subcommand("sweep", "one run per parameter value");
  add_common(sw, sweep_f);
  std::string sweep_param, sweep_values;
  int sweep_jobs = 1;
  sw->add_option("--param", sweep_param, "tau | gamma | batch_size | semantic_dim | uncertainty_dim")->required();
  sw->add_option("--values", sweep_values, "comma-separated values")->required();
  sw->add_option("--jobs", sweep_jobs, "parallel runs");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gc, grad_f);
  idml::GradCheckConfig gc_cfg;
  double gc_corrupt = 0.0;
  gc->add_option("--max-params", gc_cfg.max_params, "random subset of parameters to check (0 = all)");
  gc->add_option("--attempts", gc_cfg.max_attempts, "batch resamples allowed near kinks");
  gc->add_option("--batch", gc_cfg.batch_size, "clean samples per checked batch (0 = training batch size)");
  gc->add_option("--corrupt", gc_corrupt, "scale the analytic gradient by (1 + x) to exercise the detector");

  auto* diag = app.add_subcommand("diagnose", "uncertainty and correlation diagnostics for a checkpoint");
  add_common(diag, diag_f);
  std::string diag_ckpt;
  bool diag_all = false;
  diag->add_option("--checkpoint", diag_ckpt, "model checkpoint")->required();
  diag->add_flag("--all-rows", diag_all, "evaluate every row instead of the test split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) {
      idml::SynthConfig s;
      if (!synth_config.empty()) {
        std::ifstream is(synth_config);
        if (!is) throw idml::ParameterError("cannot open " + synth_config);
        std::stringstream buf;
        buf << is.rdbuf();
        const auto j = nlohmann::json::parse(buf.str(), nullptr, false);
        if (j.is_object() && j.contains("synth")) {
          s = idml::run_config_from_json(buf.str()).synth;
        } else {
          s = idml::synth_config_from_json(buf.str());
        }
      }
      if (synth_seed) s.seed = *synth_seed;
      const idml::Dataset ds = idml::generate(s);
      if (std::filesystem::path(synth_out).extension() == ".idmd") {
        idml::save_binary(ds, synth_out);
      } else {
        idml::save_csv(ds, synth_out);
      }
      std::cout << "wrote " << ds.size() << " samples to " << synth_out << "\n";
      return kExitOk;
    }

    if (train->parsed()) {
      const idml::RunConfig cfg = resolve(train_f);
      const idml::TrainResult res = idml::train(cfg);
      const auto& ep = res.record.epochs.back();
      std::cout << "epoch " << ep.epoch << " loss " << ep.loss << "\n";
      print_summary(res.record.eval);
      return kExitOk;
    }

    if (eval->parsed() || diag->parsed()) {
      const bool is_diag = diag->parsed();
      const idml::RunConfig cfg = resolve(is_diag ? diag_f : eval_f);
      const idml::EncoderModel model = idml::load_checkpoint(is_diag ? diag_ckpt : eval_ckpt);
      const idml::Dataset ds = idml::load_run_dataset(cfg);
      const idml::DiagnoseResult d = idml::diagnose(model, ds, cfg, !(is_diag ? diag_all : eval_all));
      if (!cfg.output_dir.empty()) {
        const std::filesystem::path dir(cfg.output_dir);
        write_file(dir / "eval.json", idml::eval_report_json(d.outcome.report) + "\n");
        if (is_diag) write_file(dir / "uncertainty.csv", idml::uncertainty_csv(d.outcome.uncertainty));
      }
      print_summary(d.outcome.report);
      return kExitOk;
    }

    if (sw->parsed()) {
      const idml::RunConfig cfg = resolve(sweep_f);
      const std::vector<double> values = parse_values(sweep_values);
      const auto records = idml::sweep(cfg, sweep_param, values, sweep_jobs);
      std::cout << idml::sweep_csv(sweep_param, values, records);
      return kExitOk;
    }

    if (gc->parsed()) {
      const idml::RunConfig cfg = resolve(grad_f);
      const idml::GradCheckResult r = idml::gradcheck(cfg, gc_cfg, gc_corrupt);
      const std::string report = idml::gradcheck_json(r);
      if (!cfg.output_dir.empty()) write_file(std::filesystem::path(cfg.output_dir) / "gradcheck.json", report + "\n");
      std::cout << report << "\n";
      if (!r.passed) {
        std::cerr << "gradcheck failed: max relative error " << r.report.max_rel_error << " at parameter "
                  << r.report.worst_param << "\n";
        return kExitGradcheck;
      }
      return kExitOk;
    }
  } catch (const idml::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const idml::FinitenessError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const idml::ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const idml::FormatError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const idml::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

#pragma once

// careseq command line. run() is the whole program; main() only forwards.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "careseq/config.hpp"
#include "careseq/data.hpp"
#include "careseq/errors.hpp"
#include "careseq/eval.hpp"
#include "careseq/gradsuite.hpp"
#include "careseq/model_file.hpp"
#include "careseq/pipeline.hpp"
#include "careseq/random.hpp"

namespace careseq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

inline Cohort load_cohort(const std::string& path, const ParseOptions& opts, std::ostream& err) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  ParseOptions o = opts;
  o.warnings = &err;
  return parse_cohort(in, o, path);
}

inline void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out = open_output(path);
  out << doc.dump(2) << '\n';
  finish(out, path);
}

// Flag values that override config keys, applied after the config file.
struct Overrides {
  std::string config_path;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::string data;
};

inline RunConfig effective_config(const Overrides& o, std::ostream& err) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg.merge(read_json_file(o.config_path));
  nlohmann::json flags = nlohmann::json::object();
  if (!o.model.empty()) flags["model"] = o.model;
  if (o.seed) flags["seed"] = *o.seed;
  if (!o.data.empty()) flags["data"] = o.data;
  cfg.merge(flags);
  cfg.validate();
  err << "effective config: " << cfg.to_json().dump() << '\n';
  return cfg;
}

// Training/validation split of a whole cohort for the train command.
inline void split_validation(const Cohort& cohort, double fraction, std::uint64_t seed,
                             std::vector<PatientRecord>& train_set,
                             std::vector<PatientRecord>& validation) {
  std::vector<std::size_t> order(cohort.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x76616cULL));
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_val = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(order.size())));
  if (n_val >= order.size()) n_val = order.size() - 1;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  for (std::size_t i : tr) train_set.push_back(cohort.records[i]);
  for (std::size_t i : val) validation.push_back(cohort.records[i]);
}

inline int cmd_gen_synth(std::size_t patients, std::uint64_t seed, const std::string& out_path,
                         const Overrides& o, std::ostream& err) {
  RunConfig run;
  if (!o.config_path.empty()) run.merge(read_json_file(o.config_path));
  run.validate();
  SynthConfig cfg = run.synth_config();
  cfg.patients = patients;
  cfg.seed = seed;
  cfg.validate();
  err << "effective config: " << cfg.to_json().dump() << '\n';
  const Cohort cohort = gen_synthetic(cfg);
  {
    std::ofstream out = open_output(out_path);
    write_cohort(out, cohort.records);
    finish(out, out_path);
  }
  nlohmann::json meta = {{"source", cohort.provenance.source},
                         {"seed", cohort.provenance.seed},
                         {"config_digest", cohort.provenance.config_digest},
                         {"config", cfg.to_json()},
                         {"records", cohort.records.size()}};
  write_json_file(out_path + ".meta.json", meta);
  return kExitOk;
}

inline int cmd_train(const Overrides& o, const std::string& out_path,
                     const std::string& history_path, std::ostream& err) {
  const RunConfig cfg = effective_config(o, err);
  const Cohort cohort = load_cohort(cfg.data, cfg.parse_options(), err);
  std::vector<PatientRecord> train_set, validation;
  if (cfg.model == "bow-lr") {
    train_set = cohort.records;
  } else {
    split_validation(cohort, cfg.validation_fraction, cfg.train.seed, train_set, validation);
  }
  FitOutcome fit = fit_model(cfg, cohort.vocabulary, train_set, validation, &err);
  write_envelope_file(out_path, to_envelope(fit.model, cfg));
  if (!history_path.empty()) {
    std::ofstream out = open_output(history_path);
    out << "# seed=" << cfg.train.seed << " config_digest=" << cfg.digest() << '\n';
    write_history_csv(out, fit.result);
    finish(out, history_path);
  }
  return kExitOk;
}

// Reading options saved with a model; keys the run config does not know
// are ignored here since they belong to the model.
inline RunConfig saved_run_config(const ModelEnvelope& env) {
  RunConfig cfg;
  nlohmann::json known = nlohmann::json::object();
  const nlohmann::json reference = cfg.to_json();
  for (const auto& item : env.config.items()) {
    if (reference.contains(item.key())) known[item.key()] = item.value();
  }
  cfg.merge(known);
  return cfg;
}

inline int cmd_eval(const std::string& data, const std::string& model_path,
                    const std::string& metrics_path, std::ostream& err) {
  const ModelEnvelope env = read_envelope_file(model_path);
  const RunConfig cfg = saved_run_config(env);
  err << "effective config: " << env.config.dump() << '\n';
  const Cohort cohort = load_cohort(data, cfg.parse_options(), err);
  const EvaluationReport report = evaluate(env, cohort.records);
  write_json_file(metrics_path, report.to_json());
  return kExitOk;
}

inline int cmd_cv(Overrides o, std::size_t folds, std::size_t jobs,
                  const std::string& metrics_path, std::ostream& err) {
  const RunConfig cfg = effective_config(o, err);
  const Cohort cohort = load_cohort(cfg.data, cfg.parse_options(), err);
  const MetricsReport report = cross_validate(cohort, cfg, folds, cfg.train.seed, jobs, &err);
  write_json_file(metrics_path, report.to_json());
  return kExitOk;
}

inline int cmd_trace(const std::string& model_path, const std::string& data,
                     const std::string& patient, const std::string& out_path,
                     std::ostream& err) {
  const ModelEnvelope env = read_envelope_file(model_path);
  if (env.kind != "mdmt" && env.kind != "mdmtp") {
    throw ValidationError("trace needs an mdmt or mdmtp model, got '" + env.kind + "'");
  }
  const RiskModel model = RiskModel::from_envelope(env);
  const RunConfig cfg = saved_run_config(env);
  err << "effective config: " << env.config.dump() << '\n';
  const Cohort cohort = load_cohort(data, cfg.parse_options(), err);
  for (const PatientRecord& r : cohort.records) {
    if (r.patient_id != patient) continue;
    const std::vector<TraceRow> rows = trace_states(model, r);
    std::ofstream out = open_output(out_path);
    write_trace_csv(out, rows, model.config().hidden, env.seed, env.config_digest);
    finish(out, out_path);
    return kExitOk;
  }
  throw ValidationError("patient '" + patient + "' not found in '" + data + "'");
}

inline int cmd_gradcheck(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  err << "effective config: {\"seed\":" << seed << ",\"step\":1e-05,\"tolerance\":0.0001}\n";
  const GradSuiteReport suite = run_grad_suite(seed);
  for (const GradSuiteCase& c : suite.cases) {
    out << (c.report.passed() ? "ok   " : "FAIL ") << c.label
        << " max_rel_err=" << format_double(c.report.max_relative_error)
        << " entries=" << c.report.entries_checked
        << " flagged=" << c.report.entries_flagged << '\n';
    for (const ParameterCheck& p : c.report.parameters) {
      if (p.flagged) {
        out << "     " << p.name << '[' << p.worst_index << "] analytic="
            << format_double(p.analytic) << " numeric=" << format_double(p.numeric) << '\n';
      }
    }
  }
  out << (suite.passed() ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return suite.passed() ? kExitOk : kExitFailure;
}

inline int cmd_embed_export(const std::string& model_path, const std::string& out_path,
                            std::ostream& err) {
  const ModelEnvelope env = read_envelope_file(model_path);
  err << "effective config: " << env.config.dump() << '\n';
  std::ofstream out = open_output(out_path);
  write_embeddings_csv(out, env);
  finish(out, out_path);
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"careseq: readmission risk from visit sequences", "careseq"};
  app.require_subcommand(1);

  Overrides o;
  std::string out_path, history_path, model_path, metrics_path, patient;
  std::size_t patients = 0;
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  std::size_t jobs = 1;

  auto* gen = app.add_subcommand("gen-synth", "write a planted-signal synthetic cohort");
  gen->add_option("--patients", patients, "number of records")->required()
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "generator seed")->required();
  gen->add_option("--out", out_path, "output cohort (JSON lines)")->required();
  gen->add_option("--config", o.config_path, "run config (JSON)");

  auto* train_cmd = app.add_subcommand("train", "train a model and save it");
  train_cmd->add_option("--data", o.data, "training cohort")->required();
  train_cmd->add_option("--model", o.model, "model kind")
      ->required()->check(CLI::IsMember({"mdmt", "mdmtp", "bow-lr", "deepr-mini"}));
  train_cmd->add_option("--config", o.config_path, "run config (JSON)");
  train_cmd->add_option("--out", out_path, "model file")->required();
  train_cmd->add_option("--history-out", history_path, "per-epoch CSV");

  auto* eval_cmd = app.add_subcommand("eval", "score a saved model on a cohort");
  eval_cmd->add_option("--data", o.data, "cohort")->required();
  eval_cmd->add_option("--model-file", model_path, "model file")->required();
  eval_cmd->add_option("--metrics-out", metrics_path, "metrics JSON")->required();

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  cv->add_option("--data", o.data, "cohort")->required();
  cv->add_option("--model", o.model, "model kind")
      ->required()->check(CLI::IsMember({"mdmt", "mdmtp", "bow-lr", "deepr-mini"}));
  cv->add_option("--folds", folds, "number of folds")->check(CLI::Range(2, 1000));
  auto* cv_seed = cv->add_option("--seed", seed, "fold and training seed");
  cv->add_option("--metrics-out", metrics_path, "metrics JSON")->required();
  cv->add_option("--config", o.config_path, "run config (JSON)");
  cv->add_option("--jobs", jobs, "folds run in parallel")->check(CLI::Range(1, 256));

  auto* trace = app.add_subcommand("trace", "per-visit hidden states and risk");
  trace->add_option("--model-file", model_path, "model file")->required();
  trace->add_option("--data", o.data, "cohort")->required();
  trace->add_option("--patient", patient, "patient id")->required();
  trace->add_option("--out", out_path, "trace CSV")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "full-model finite-difference check");
  gradcheck->add_option("--seed", seed, "seed for the tiny model and cohort");

  auto* embed = app.add_subcommand("embed-export", "write code embeddings as CSV");
  embed->add_option("--model-file", model_path, "model file")->required();
  embed->add_option("--out", out_path, "embedding CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(patients, seed, out_path, o, err);
    if (*train_cmd) return cmd_train(o, out_path, history_path, err);
    if (*eval_cmd) return cmd_eval(o.data, model_path, metrics_path, err);
    if (*cv) {
      if (*cv_seed) o.seed = seed;
      return cmd_cv(o, folds, jobs, metrics_path, err);
    }
    if (*trace) return cmd_trace(model_path, o.data, patient, out_path, err);
    if (*gradcheck) return cmd_gradcheck(seed, out, err);
    if (*embed) return cmd_embed_export(model_path, out_path, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace careseq::cli

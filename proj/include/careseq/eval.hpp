#pragma once

// Cross-validation, held-out scoring, state traces and embedding export.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "careseq/config.hpp"
#include "careseq/data.hpp"
#include "careseq/errors.hpp"
#include "careseq/metrics.hpp"
#include "careseq/model.hpp"
#include "careseq/model_file.hpp"
#include "careseq/pipeline.hpp"
#include "careseq/random.hpp"

namespace careseq {

// Shortest round-trip decimal form.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline nlohmann::json metric_json(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

struct HeldOutScores {
  std::vector<ScoredExample> pooled;
  std::vector<ScoredExample> final_visit;
};

inline HeldOutScores score_held_out(const AnyModel& model, std::span<const PatientRecord> records) {
  HeldOutScores out;
  for (const PatientRecord& r : records) {
    const std::vector<double> probs = predict_visits(model, r);
    for (std::size_t t = 0; t < r.visits.size(); ++t) {
      if (!r.visits[t].label) continue;
      out.pooled.push_back({probs[t], *r.visits[t].label, r.patient_id, t});
    }
    const std::size_t last = r.visits.size() - 1;
    if (r.visits[last].label) {
      out.final_visit.push_back({probs[last], *r.visits[last].label, r.patient_id, last});
    }
  }
  return out;
}

struct ScoreSummary {
  double auc = std::numeric_limits<double>::quiet_NaN();
  double auc_final = std::numeric_limits<double>::quiet_NaN();
  double nll = std::numeric_limits<double>::quiet_NaN();
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t final_positives = 0;
  std::size_t final_negatives = 0;
};

inline ScoreSummary summarize(const HeldOutScores& scores) {
  ScoreSummary s;
  for (const ScoredExample& e : scores.pooled) (e.label == 1 ? s.positives : s.negatives)++;
  for (const ScoredExample& e : scores.final_visit) {
    (e.label == 1 ? s.final_positives : s.final_negatives)++;
  }
  s.auc = auc(scores.pooled);
  s.nll = mean_nll(scores.pooled);
  if (s.final_positives > 0 && s.final_negatives > 0) s.auc_final = auc(scores.final_visit);
  return s;
}

struct FoldMetrics {
  std::size_t fold = 0;
  ScoreSummary scores;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
  std::size_t test_records = 0;
  int best_epoch = 0;

  nlohmann::json to_json() const {
    return {{"fold", fold},
            {"auc", metric_json(scores.auc)},
            {"auc_final", metric_json(scores.auc_final)},
            {"nll", metric_json(scores.nll)},
            {"positives", scores.positives},
            {"negatives", scores.negatives},
            {"final_positives", scores.final_positives},
            {"final_negatives", scores.final_negatives},
            {"train_records", train_records},
            {"validation_records", validation_records},
            {"test_records", test_records},
            {"best_epoch", best_epoch}};
  }
};

struct MeanStd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
};

// Sample standard deviation; non-finite entries are skipped.
inline MeanStd mean_std(std::span<const double> xs) {
  std::vector<double> v;
  for (double x : xs) {
    if (std::isfinite(x)) v.push_back(x);
  }
  MeanStd out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) {
    out.std = 0.0;
    return out;
  }
  double sq = 0.0;
  for (double x : v) sq += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  return out;
}

struct MetricsReport {
  std::string model;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<FoldMetrics> folds;
  double mean_auc = 0.0;
  double std_auc = 0.0;
  double mean_auc_final = std::numeric_limits<double>::quiet_NaN();
  double std_auc_final = std::numeric_limits<double>::quiet_NaN();

  nlohmann::json to_json() const {
    nlohmann::json fold_list = nlohmann::json::array();
    for (const FoldMetrics& f : folds) fold_list.push_back(f.to_json());
    return {{"model", model},
            {"k", k},
            {"seed", seed},
            {"config_digest", config_digest},
            {"folds", fold_list},
            {"mean_auc", metric_json(mean_auc)},
            {"std_auc", metric_json(std_auc)},
            {"mean_auc_final", metric_json(mean_auc_final)},
            {"std_auc_final", metric_json(std_auc_final)}};
  }
};

inline void aggregate(MetricsReport& report) {
  std::vector<double> pooled, final_only;
  for (const FoldMetrics& f : report.folds) {
    pooled.push_back(f.scores.auc);
    final_only.push_back(f.scores.auc_final);
  }
  const MeanStd p = mean_std(pooled);
  const MeanStd q = mean_std(final_only);
  report.mean_auc = p.mean;
  report.std_auc = p.std;
  report.mean_auc_final = q.mean;
  report.std_auc_final = q.std;
}

struct FoldPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Fold f tests on folds[f]; the rest is split into training and a seeded
// validation slice.
inline std::vector<FoldPlan> plan_folds(std::span<const PatientRecord> records, std::size_t k,
                                        std::uint64_t seed, double validation_fraction) {
  const auto folds = kfold_split(records, k, seed);
  std::vector<FoldPlan> plans(k);
  for (std::size_t f = 0; f < k; ++f) {
    FoldPlan& plan = plans[f];
    plan.test = folds[f];
    std::vector<std::size_t> rest;
    for (std::size_t o = 0; o < k; ++o) {
      if (o != f) rest.insert(rest.end(), folds[o].begin(), folds[o].end());
    }
    std::sort(rest.begin(), rest.end());
    Rng rng(mix_seed(mix_seed(seed, 0x76616cULL), f));
    rng.shuffle(std::span<std::size_t>(rest));
    auto n_val = static_cast<std::size_t>(
        std::ceil(validation_fraction * static_cast<double>(rest.size())));
    if (n_val >= rest.size()) n_val = rest.size() - 1;
    plan.validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    plan.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    std::sort(plan.validation.begin(), plan.validation.end());
    std::sort(plan.train.begin(), plan.train.end());
  }
  return plans;
}

inline void assert_no_leak(std::span<const PatientRecord> records, const FoldPlan& plan,
                           std::size_t fold) {
  std::set<std::string> seen;
  for (std::size_t i : plan.train) seen.insert(records[i].patient_id);
  for (std::size_t i : plan.validation) seen.insert(records[i].patient_id);
  for (std::size_t i : plan.test) {
    if (seen.count(records[i].patient_id)) {
      throw OracleViolation("fold " + std::to_string(fold) + ": patient '" +
                            records[i].patient_id + "' is in both training and test data");
    }
  }
}

inline std::vector<PatientRecord> gather(std::span<const PatientRecord> records,
                                         std::span<const std::size_t> indices) {
  std::vector<PatientRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records[i]);
  return out;
}

inline FoldMetrics run_fold(const Cohort& cohort, const RunConfig& cfg, const FoldPlan& plan,
                            std::size_t fold) {
  assert_no_leak(cohort.records, plan, fold);
  const auto train_set = gather(cohort.records, plan.train);
  const auto validation = gather(cohort.records, plan.validation);
  const auto test = gather(cohort.records, plan.test);

  HeldOutScores probe;
  for (const PatientRecord& r : test) {
    for (std::size_t t = 0; t < r.visits.size(); ++t) {
      if (r.visits[t].label) probe.pooled.push_back({0.5, *r.visits[t].label, r.patient_id, t});
    }
  }
  std::size_t pos = 0, neg = 0;
  for (const ScoredExample& e : probe.pooled) (e.label == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) {
    throw EvaluationError("fold " + std::to_string(fold) + " lacks both classes (" +
                          std::to_string(pos) + " positive, " + std::to_string(neg) +
                          " negative labeled visits)");
  }

  FitOutcome fit = fit_model(cfg, cohort.vocabulary, train_set, validation);
  FoldMetrics m;
  m.fold = fold;
  m.scores = summarize(score_held_out(fit.model, test));
  m.train_records = train_set.size();
  m.validation_records = validation.size();
  m.test_records = test.size();
  m.best_epoch = fit.result.best_epoch;
  return m;
}

// k-fold cross-validation. Folds run on up to `jobs` threads; the report
// does not depend on the thread count.
inline MetricsReport cross_validate(const Cohort& cohort, const RunConfig& cfg, std::size_t k,
                                    std::uint64_t seed, std::size_t jobs = 1,
                                    std::ostream* progress = nullptr) {
  cfg.validate();
  const auto plans = plan_folds(cohort.records, k, seed, cfg.validation_fraction);
  std::vector<std::optional<FoldMetrics>> results(k);
  std::vector<std::exception_ptr> errors(k);
  std::atomic<std::size_t> next{0};
  std::mutex log;

  auto worker = [&] {
    for (std::size_t f = next++; f < k; f = next++) {
      try {
        results[f] = run_fold(cohort, cfg, plans[f], f);
        if (progress) {
          std::lock_guard<std::mutex> lock(log);
          *progress << "fold " << f << " auc " << format_double(results[f]->scores.auc)
                    << " auc_final " << format_double(results[f]->scores.auc_final) << '\n';
        }
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, k);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MetricsReport report;
  report.model = cfg.model;
  report.k = k;
  report.seed = seed;
  report.config_digest = cfg.digest();
  for (auto& r : results) report.folds.push_back(std::move(*r));
  aggregate(report);
  return report;
}

// Held-out scoring of a saved model.
struct EvaluationReport {
  std::string model;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::size_t records = 0;
  ScoreSummary scores;

  nlohmann::json to_json() const {
    return {{"model", model},
            {"seed", seed},
            {"config_digest", config_digest},
            {"records", records},
            {"auc", metric_json(scores.auc)},
            {"auc_final", metric_json(scores.auc_final)},
            {"nll", metric_json(scores.nll)},
            {"positives", scores.positives},
            {"negatives", scores.negatives},
            {"final_positives", scores.final_positives},
            {"final_negatives", scores.final_negatives}};
  }
};

inline EvaluationReport evaluate(const ModelEnvelope& env, std::span<const PatientRecord> records) {
  const AnyModel model = from_envelope(env);
  EvaluationReport report;
  report.model = env.kind;
  report.seed = env.seed;
  report.config_digest = env.config_digest;
  report.records = records.size();
  report.scores = summarize(score_held_out(model, records));
  return report;
}

// ---------------------------------------------------------------------------
// State traces

struct TraceRow {
  std::size_t visit = 0;
  std::int64_t time = 0;
  std::vector<double> h;
  double h_norm = 0.0;
  double risk = 0.0;
};

inline std::vector<TraceRow> trace_states(const RiskModel& model, const PatientRecord& record) {
  validate_record(record);
  const EncodedRecord encoded = model.encode(record);
  GradProgram g;
  const ForwardTrace trace = model.forward(g, encoded);
  std::vector<TraceRow> rows;
  for (std::size_t t = 0; t < trace.hidden.size(); ++t) {
    TraceRow row;
    row.visit = t;
    row.time = record.visits[t].time;
    const auto h = g.value(trace.hidden[t]).data();
    row.h.assign(h.begin(), h.end());
    double sq = 0.0;
    for (double x : row.h) sq += x * x;
    row.h_norm = std::sqrt(sq);
    row.risk = risk_probability(g.scalar(trace.scores[t]));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows, std::size_t hidden,
                            std::uint64_t seed, const std::string& digest) {
  out << "# seed=" << seed << " config_digest=" << digest << '\n';
  out << "visit,time";
  for (std::size_t i = 0; i < hidden; ++i) out << ",h_" << i;
  out << ",h_norm,risk\n";
  for (const TraceRow& r : rows) {
    out << r.visit << ',' << r.time;
    for (double x : r.h) out << ',' << format_double(x);
    out << ',' << format_double(r.h_norm) << ',' << format_double(r.risk) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Embedding export

// One row per vocabulary code with its embedding.
inline void write_embeddings_csv(std::ostream& out, const ModelEnvelope& env) {
  std::string name;
  if (env.kind == "mdmt" || env.kind == "mdmtp") name = "embedding";
  else if (env.kind == "deepr-mini") name = "deepr.embedding";
  else throw ValidationError("model kind '" + env.kind + "' has no code embeddings");

  const Vocabulary& vocab = env.vocabulary;
  out << "# seed=" << env.seed << " config_digest=" << env.config_digest << '\n';
  if (vocab.size() == 0) {
    out << "namespace,code\n";
    return;
  }
  const Tensor& table = env.parameter(name);
  if (table.rank() != 2 || table.rows() < vocab.size()) {
    throw VocabularyMismatchError("embedding table does not cover the vocabulary");
  }
  out << "namespace,code";
  for (std::size_t i = 0; i < table.cols(); ++i) out << ",e_" << i;
  out << '\n';
  for (Namespace ns : {Namespace::disease, Namespace::treatment}) {
    const auto& codes = vocab.codes(ns);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      out << to_string(ns) << ',' << codes[i];
      const std::size_t r = vocab.row(ns, i);
      for (std::size_t c = 0; c < table.cols(); ++c) out << ',' << format_double(table.at(r, c));
      out << '\n';
    }
  }
}

}  // namespace careseq

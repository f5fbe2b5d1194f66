#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "careseq/eval.hpp"
#include "careseq/gradsuite.hpp"
#include "properties.hpp"

using namespace careseq;

namespace {

Cohort small_cohort(std::size_t patients, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.patients = patients;
  cfg.seed = seed;
  return gen_synthetic(cfg);
}

RunConfig quick_config(const std::string& model) {
  RunConfig cfg;
  cfg.model = model;
  cfg.net.embed_dim = 6;
  cfg.net.hidden = 6;
  cfg.net.beta = 0.05;
  cfg.train.epochs = 3;
  cfg.train.batch = 8;
  cfg.bow.iterations = 100;
  return cfg;
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 0}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.7, 0.3}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 0}), 0.0);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{}, std::vector<int>{}), UndefinedMetricError);
}

TEST(Auc, MatchesPairCountOracle) {
  const auto r = careseq::testing::auc_oracle_suite(91, 200);
  EXPECT_TRUE(r.passed()) << r.failures << " failures, first: " << r.first_failure;
}

TEST(Auc, ScoredExampleOverload) {
  const std::vector<ScoredExample> ex{{0.9, 1, "a", 0}, {0.8, 0, "a", 1}, {0.7, 1, "b", 0},
                                      {0.3, 0, "b", 1}};
  EXPECT_EQ(auc(ex), 0.75);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> xs{0.6, 0.7, 0.8};
  const MeanStd s = mean_std(xs);
  EXPECT_NEAR(s.mean, 0.7, 1e-15);
  EXPECT_NEAR(s.std, 0.1, 1e-15);
  const std::vector<double> with_nan{0.5, std::nan(""), 0.7};
  EXPECT_NEAR(mean_std(with_nan).mean, 0.6, 1e-15);
}

TEST(PlanFolds, NoLeaksAndFullCoverage) {
  const Cohort c = small_cohort(120, 3);
  const auto plans = plan_folds(c.records, 5, 7, 0.1);
  std::set<std::size_t> tested;
  for (std::size_t f = 0; f < plans.size(); ++f) {
    const FoldPlan& p = plans[f];
    EXPECT_NO_THROW(assert_no_leak(c.records, p, f));
    EXPECT_EQ(p.train.size() + p.validation.size() + p.test.size(), c.records.size());
    EXPECT_EQ(p.validation.size(), static_cast<std::size_t>(std::ceil(0.1 * (120 - p.test.size()))));
    std::set<std::size_t> all(p.train.begin(), p.train.end());
    all.insert(p.validation.begin(), p.validation.end());
    for (std::size_t i : p.test) EXPECT_FALSE(all.count(i));
    tested.insert(p.test.begin(), p.test.end());
  }
  EXPECT_EQ(tested.size(), c.records.size());
  EXPECT_EQ(plans[2].validation, plan_folds(c.records, 5, 7, 0.1)[2].validation);
}

TEST(PlanFolds, LeakIsDetected) {
  const Cohort c = small_cohort(30, 3);
  auto plans = plan_folds(c.records, 3, 1, 0.1);
  plans[1].train.push_back(plans[1].test.front());
  EXPECT_THROW(assert_no_leak(c.records, plans[1], 1), OracleViolation);
}

TEST(CrossValidate, AggregateIsMeanOfFolds) {
  const Cohort c = small_cohort(100, 5);
  const MetricsReport report = cross_validate(c, quick_config("mdmt"), 5, 11);
  ASSERT_EQ(report.folds.size(), 5u);
  double sum = 0.0;
  for (const FoldMetrics& f : report.folds) {
    EXPECT_GE(f.scores.auc, 0.0);
    EXPECT_LE(f.scores.auc, 1.0);
    EXPECT_GT(f.scores.positives, 0u);
    EXPECT_GT(f.scores.negatives, 0u);
    sum += f.scores.auc;
  }
  EXPECT_NEAR(report.mean_auc, sum / 5.0, 1e-15);
  const nlohmann::json j = report.to_json();
  EXPECT_EQ(j.at("k"), 5);
  EXPECT_EQ(j.at("seed"), 11);
  EXPECT_EQ(j.at("config_digest"), quick_config("mdmt").digest());
  EXPECT_EQ(j.at("folds").size(), 5u);
}

TEST(CrossValidate, DeterministicAndThreadInvariant) {
  const Cohort c = small_cohort(80, 6);
  for (const std::string model : {"mdmtp", "bow-lr", "deepr-mini"}) {
    const RunConfig cfg = quick_config(model);
    const std::string one = cross_validate(c, cfg, 4, 3, 1).to_json().dump();
    EXPECT_EQ(one, cross_validate(c, cfg, 4, 3, 1).to_json().dump()) << model;
    EXPECT_EQ(one, cross_validate(c, cfg, 4, 3, 4).to_json().dump()) << model;
  }
}

TEST(CrossValidate, FoldWithoutBothClassesIsNamed) {
  Cohort c = small_cohort(20, 7);
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    for (Visit& v : c.records[i].visits) v.label = i == 0 ? 1 : 0;
  }
  try {
    cross_validate(c, quick_config("bow-lr"), 4, 1);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("fold "), std::string::npos) << e.what();
  }
}

TEST(Evaluate, ReportsHeldOutAuc) {
  const Cohort c = small_cohort(60, 8);
  const RunConfig cfg = quick_config("mdmt");
  const FitOutcome fit = fit_model(cfg, c.vocabulary, c.records, {});
  const ModelEnvelope env = to_envelope(fit.model, cfg);
  const EvaluationReport report = evaluate(env, c.records);
  const nlohmann::json j = report.to_json();
  EXPECT_GE(j.at("auc").get<double>(), 0.0);
  EXPECT_LE(j.at("auc").get<double>(), 1.0);
  EXPECT_EQ(j.at("config_digest"), env.config_digest);
  EXPECT_EQ(report.records, 60u);
}

TEST(TraceStates, RowsMatchForward) {
  const Vocabulary vocab = tiny_vocabulary(8, 10);
  const auto records = tiny_cohort(vocab, 5, 6, 4);
  ModelConfig cfg;
  cfg.embed_dim = 5;
  cfg.hidden = 7;
  const RiskModel model = RiskModel::create(vocab, cfg, 2);
  for (const PatientRecord& r : records) {
    const auto rows = trace_states(model, r);
    ASSERT_EQ(rows.size(), r.visits.size());
    const auto probs = model.predict_visits(r);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      EXPECT_EQ(rows[t].visit, t);
      EXPECT_EQ(rows[t].time, r.visits[t].time);
      ASSERT_EQ(rows[t].h.size(), 7u);
      double sq = 0.0;
      for (double x : rows[t].h) {
        EXPECT_GT(x, -1.0);
        EXPECT_LT(x, 1.0);
        sq += x * x;
      }
      EXPECT_NEAR(rows[t].h_norm, std::sqrt(sq), 1e-15);
      EXPECT_EQ(rows[t].risk, probs[t]);
    }
    EXPECT_EQ(rows.back().risk, predict_risk(model, r));
  }
  PatientRecord short_record = records[0];
  short_record.visits.resize(1);
  EXPECT_THROW(trace_states(model, short_record), ValidationError);
}

TEST(TraceStates, CsvHeader) {
  const Vocabulary vocab = tiny_vocabulary(4, 4);
  const auto records = tiny_cohort(vocab, 1, 3, 4);
  ModelConfig cfg;
  cfg.embed_dim = 3;
  cfg.hidden = 3;
  const RiskModel model = RiskModel::create(vocab, cfg, 2);
  const auto rows = trace_states(model, records[0]);
  std::ostringstream out;
  write_trace_csv(out, rows, 3, 2, "abc");
  std::istringstream in(out.str());
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first, "# seed=2 config_digest=abc");
  EXPECT_EQ(header, "visit,time,h_0,h_1,h_2,h_norm,risk");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, rows.size());
}

TEST(EmbeddingExport, RowsFollowVocabulary) {
  const Vocabulary vocab = tiny_vocabulary(3, 2);
  ModelConfig cfg;
  cfg.embed_dim = 2;
  cfg.hidden = 2;
  const RiskModel model = RiskModel::create(vocab, cfg, 5);
  std::ostringstream out;
  write_embeddings_csv(out, model.to_envelope());
  std::istringstream in(out.str());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u + 5u);
  EXPECT_EQ(lines[0].rfind("# seed=5 config_digest=", 0), 0u);
  EXPECT_EQ(lines[1], "namespace,code,e_0,e_1");
  const auto row = model.embeddings().row(Namespace::treatment, 1).value.data();
  EXPECT_EQ(lines[6], "treatment," + vocab.treatment_codes()[1] + "," + format_double(row[0]) +
                          "," + format_double(row[1]));

  const BowLrModel bow(vocab, 1e-3);
  EXPECT_THROW(write_embeddings_csv(out, bow.to_envelope(nlohmann::json::object(), 1)),
               ValidationError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_double(x)), x);
}

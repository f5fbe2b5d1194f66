#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "careseq/baselines.hpp"
#include "careseq/gradsuite.hpp"

using namespace careseq;

namespace {

Visit visit(std::int64_t time, std::vector<std::string> d, std::vector<std::string> p,
            std::optional<int> label = std::nullopt) {
  Visit v;
  v.time = time;
  v.diseases = std::move(d);
  v.treatments = std::move(p);
  v.label = label;
  return v;
}

// Positives carry code A, negatives carry code B; both share C.
std::vector<PatientRecord> separable_set() {
  std::vector<PatientRecord> out;
  for (int i = 0; i < 12; ++i) {
    const bool pos = i % 2 == 0;
    PatientRecord r;
    r.patient_id = "s" + std::to_string(i);
    r.visits.push_back(visit(0, {"C"}, {}, 0));
    r.visits.push_back(visit(10, {pos ? "A" : "B"}, {"T"}, pos ? 1 : 0));
    out.push_back(r);
  }
  return out;
}

DeeprMiniModel scalar_deepr(const Vocabulary& vocab, std::vector<double> embedding) {
  DeeprConfig cfg;
  cfg.embed_dim = 1;
  cfg.filters = 1;
  cfg.width = 1;
  DeeprMiniModel model(vocab, cfg, 0);
  for (std::size_t i = 0; i < embedding.size(); ++i) model.embeddings()[i].value[0] = embedding[i];
  model.filters().value[0] = 1.0;
  return model;
}

}  // namespace

TEST(BowFeatures, CountsWholeHistory) {
  const Vocabulary vocab = Vocabulary::from_codes({"E11", "F32", "I10"}, {"P1", "P2"});
  PatientRecord r{"p", {visit(0, {"E11"}, {"P1"}), visit(5, {"E11", "F32"}, {"P1"})}};
  const auto f = bow_features(r, vocab);
  ASSERT_EQ(f.size(), vocab.size());
  EXPECT_EQ(f[vocab.row(Namespace::disease, "E11")], 2.0);
  EXPECT_EQ(f[vocab.row(Namespace::disease, "F32")], 1.0);
  EXPECT_EQ(f[vocab.row(Namespace::disease, "I10")], 0.0);
  EXPECT_EQ(f[vocab.row(Namespace::treatment, "P1")], 2.0);
  EXPECT_EQ(f[vocab.row(Namespace::treatment, "P2")], 0.0);

  PatientRecord permuted{"p", {visit(5, {"F32", "E11"}, {"P1"}), visit(0, {"E11"}, {"P1"})}};
  EXPECT_EQ(bow_features(permuted, vocab), f);

  PatientRecord unknown{"p", {visit(0, {"Z99"}, {})}};
  EXPECT_THROW(bow_features(unknown, vocab), VocabularyError);
}

TEST(BowLr, SeparableSetReachesPerfectAuc) {
  const auto records = separable_set();
  const Vocabulary vocab = build_vocab(records);
  BowConfig cfg;
  cfg.lambda = 1e-4;
  cfg.iterations = 400;
  cfg.lr = 0.1;
  const BowLrModel model = train_bow_lr(records, vocab, cfg);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const PatientRecord& r : records) {
    scores.push_back(model.predict(r));
    labels.push_back(*final_label(r));
  }
  EXPECT_EQ(auc(scores, labels), 1.0);
}

TEST(BowLr, HugeLambdaShrinksWeights) {
  const Vocabulary vocab = tiny_vocabulary(8, 8);
  const auto records = tiny_cohort(vocab, 30, 4, 5);
  BowConfig cfg;
  cfg.lambda = 1e6;
  cfg.iterations = 300;
  const BowLrModel model = train_bow_lr(records, vocab, cfg);
  for (double w : model.weights().value.data()) EXPECT_NEAR(w, 0.0, 1e-5);
  const double base = risk_probability(model.bias().value[0]);
  for (const PatientRecord& r : records) EXPECT_NEAR(model.predict(r), base, 1e-3);
}

TEST(BowLr, DescentDoesNotIncreaseObjective) {
  const Vocabulary vocab = tiny_vocabulary(8, 8);
  const auto records = tiny_cohort(vocab, 30, 4, 6);
  const BowLrModel zero(vocab, 1e-3);
  const BowLrModel trained = train_bow_lr(records, vocab, BowConfig{});
  EXPECT_LE(bow_objective(trained, records), bow_objective(zero, records));
  EXPECT_NEAR(bow_objective(zero, records), std::log(2.0), 1e-15);
}

TEST(BowLr, ConvexFromTwoStarts) {
  const Vocabulary vocab = tiny_vocabulary(6, 6);
  const auto records = tiny_cohort(vocab, 40, 4, 7);
  BowConfig cfg;
  cfg.lambda = 0.1;
  cfg.iterations = 3000;
  BowLrModel a(vocab, cfg.lambda);
  BowLrModel b(vocab, cfg.lambda);
  Rng rng(1);
  for (double& w : b.weights().value.data()) w = rng.uniform(-2.0, 2.0);
  b.bias().value[0] = 1.5;
  for (double lr : {0.05, 0.005, 0.0005, 0.00005}) {
    cfg.lr = lr;
    fit_bow_lr(a, records, cfg);
    fit_bow_lr(b, records, cfg);
  }
  EXPECT_NEAR(bow_objective(a, records), bow_objective(b, records), 1e-6);
}

TEST(BowLr, PrefixScoresEndAtFullHistory) {
  const Vocabulary vocab = tiny_vocabulary(6, 6);
  const auto records = tiny_cohort(vocab, 10, 5, 8);
  const BowLrModel model = train_bow_lr(records, vocab, BowConfig{});
  for (const PatientRecord& r : records) {
    const auto probs = model.predict_visits(r);
    ASSERT_EQ(probs.size(), r.visits.size());
    EXPECT_NEAR(probs.back(), model.predict(r), 1e-15);
  }
}

TEST(BowLr, RequiresLabels) {
  const Vocabulary vocab = tiny_vocabulary(6, 6);
  auto records = tiny_cohort(vocab, 5, 3, 9);
  for (PatientRecord& r : records) r.visits.back().label.reset();
  EXPECT_THROW(train_bow_lr(records, vocab, BowConfig{}), DegenerateBatchError);
  EXPECT_THROW(BowLrModel(vocab, -1.0), ConfigError);
}

TEST(BowLr, EnvelopeRoundTrip) {
  const Vocabulary vocab = tiny_vocabulary(6, 6);
  const auto records = tiny_cohort(vocab, 10, 4, 10);
  const BowLrModel model = train_bow_lr(records, vocab, BowConfig{});
  std::stringstream buf;
  write_envelope(buf, model.to_envelope(nlohmann::json::object(), 3));
  const BowLrModel loaded = BowLrModel::from_envelope(read_envelope(buf));
  for (const PatientRecord& r : records) EXPECT_EQ(loaded.predict_visits(r), model.predict_visits(r));
}

TEST(DeeprSequence, Contracts) {
  const Vocabulary vocab = tiny_vocabulary(12, 20);
  const auto records = tiny_cohort(vocab, 20, 5, 11);
  for (const PatientRecord& r : records) {
    std::vector<std::size_t> ends_a, ends_b;
    const auto a = deepr_sequence(r, vocab, 1, &ends_a);
    const auto b = deepr_sequence(r, vocab, 2, &ends_b);
    EXPECT_EQ(a, deepr_sequence(r, vocab, 1));
    ASSERT_EQ(ends_a, ends_b);
    std::size_t start = 0;
    for (std::size_t t = 0; t < r.visits.size(); ++t) {
      const Visit& v = r.visits[t];
      ASSERT_EQ(ends_a[t] - start, v.diseases.size() + v.treatments.size());
      std::vector<std::size_t> want;
      for (const auto& c : v.diseases) want.push_back(vocab.row(Namespace::disease, c));
      for (const auto& c : v.treatments) want.push_back(vocab.row(Namespace::treatment, c));
      std::vector<std::size_t> got_a(a.begin() + start, a.begin() + ends_a[t]);
      std::vector<std::size_t> got_b(b.begin() + start, b.begin() + ends_a[t]);
      std::sort(want.begin(), want.end());
      std::sort(got_a.begin(), got_a.end());
      std::sort(got_b.begin(), got_b.end());
      EXPECT_EQ(got_a, want);
      EXPECT_EQ(got_b, want);
      start = ends_a[t];
    }
    EXPECT_EQ(a.size(), start);
  }
}

TEST(DeeprSequence, SeedsChangeSomeOrders) {
  const Vocabulary vocab = tiny_vocabulary(12, 20);
  const auto records = tiny_cohort(vocab, 20, 5, 12);
  std::size_t differing = 0;
  for (const PatientRecord& r : records) {
    differing += deepr_sequence(r, vocab, 1) != deepr_sequence(r, vocab, 2);
  }
  EXPECT_GT(differing, 0u);
}

TEST(DeeprMini, ZeroModelIsOneHalf) {
  const Vocabulary vocab = tiny_vocabulary(4, 4);
  DeeprConfig cfg;
  cfg.embed_dim = 4;
  cfg.filters = 3;
  const DeeprMiniModel model(vocab, cfg, 0);
  const std::vector<std::size_t> tokens{0, 5, 2, 7};
  EXPECT_EQ(deepr_forward(model, tokens), 0.5);
}

TEST(DeeprMini, HandConvolution) {
  const Vocabulary vocab = Vocabulary::from_codes({"a", "b"}, {});
  DeeprMiniModel model = scalar_deepr(vocab, {2.0, -1.0, 0.0});
  GradProgram g;
  const std::vector<std::size_t> tokens{0, 1};
  EXPECT_EQ(g.value(model.pooled_features(g, tokens))[0], 2.0);
  model.output_weight().value[0] = 1.0;
  EXPECT_DOUBLE_EQ(deepr_forward(model, tokens), 1.0 / (1.0 + std::exp(-2.0)));
}

TEST(DeeprMini, MotifTranslationInvariance) {
  const Vocabulary vocab = tiny_vocabulary(5, 5);
  DeeprConfig cfg;
  cfg.embed_dim = 4;
  cfg.filters = 6;
  cfg.width = 3;
  DeeprMiniModel model = DeeprMiniModel::create(vocab, cfg, 3);
  for (double& x : model.embeddings().back().value.data()) x = 0.0;
  for (double& x : model.filter_bias().value.data()) x = 0.0;
  const std::size_t pad = model.pad_token();
  const std::vector<std::size_t> motif{1, 7, 3};
  std::vector<double> reference;
  for (std::size_t offset = 0; offset < 6; ++offset) {
    std::vector<std::size_t> seq(offset + 2, pad);
    seq.insert(seq.end(), motif.begin(), motif.end());
    seq.insert(seq.end(), 7 - offset, pad);
    GradProgram g;
    const auto f = g.value(model.pooled_features(g, seq)).data();
    const std::vector<double> features(f.begin(), f.end());
    if (offset == 0) reference = features;
    else EXPECT_EQ(features, reference) << "offset " << offset;
  }
}

TEST(DeeprMini, ShortSequencesArePadded) {
  const Vocabulary vocab = tiny_vocabulary(3, 3);
  DeeprConfig cfg;
  cfg.embed_dim = 3;
  cfg.filters = 2;
  cfg.width = 3;
  const DeeprMiniModel model = DeeprMiniModel::create(vocab, cfg, 1);
  const std::vector<std::size_t> one{2};
  const std::vector<std::size_t> padded{2, model.pad_token(), model.pad_token()};
  EXPECT_EQ(deepr_forward(model, one), deepr_forward(model, padded));
  const std::vector<std::size_t> bad{model.pad_token() + 1};
  EXPECT_THROW(deepr_forward(model, bad), VocabularyError);
}

TEST(DeeprMini, GradientCheck) {
  const Vocabulary vocab = tiny_vocabulary(6, 8);
  const auto records = tiny_cohort(vocab, 4, 4, 13);
  DeeprConfig cfg;
  cfg.embed_dim = 4;
  cfg.filters = 3;
  cfg.width = 3;
  DeeprMiniModel model = DeeprMiniModel::create(vocab, cfg, 5);
  for (double& x : model.filter_bias().value.data()) x = 0.1;
  const ParameterList params = model.parameters();
  const Objective objective = [&](GradProgram& g) {
    std::vector<const PatientRecord*> batch;
    for (const PatientRecord& r : records) batch.push_back(&r);
    return model.objective(g, batch, 7);
  };
  const GradCheckReport report = grad_check(objective, params, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed()) << report.max_relative_error;
}

TEST(DeeprMini, PrefixPredictionsAndRoundTrip) {
  const Vocabulary vocab = tiny_vocabulary(6, 8);
  const auto records = tiny_cohort(vocab, 5, 5, 14);
  DeeprConfig cfg;
  cfg.embed_dim = 4;
  const DeeprMiniModel model = DeeprMiniModel::create(vocab, cfg, 9);
  std::stringstream buf;
  write_envelope(buf, model.to_envelope(nlohmann::json::object()));
  const ModelEnvelope env = read_envelope(buf);
  EXPECT_EQ(env.parameter("deepr.embedding").shape(),
            (std::vector<std::size_t>{vocab.size() + 1, 4}));
  const DeeprMiniModel loaded = DeeprMiniModel::from_envelope(env);
  for (const PatientRecord& r : records) {
    const auto probs = model.predict_visits(r);
    ASSERT_EQ(probs.size(), r.visits.size());
    EXPECT_EQ(probs.back(), deepr_forward(model, deepr_sequence(r, vocab, 9)));
    EXPECT_EQ(loaded.predict_visits(r), probs);
  }
}

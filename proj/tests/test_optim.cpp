#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "careseq/gradsuite.hpp"
#include "careseq/optim.hpp"

using namespace careseq;

namespace {

Parameter make_param(std::vector<double> value, std::vector<double> grad) {
  Parameter p("w", Tensor::vector(std::move(value)));
  p.grad = Tensor::vector(std::move(grad));
  return p;
}

RiskModel small_model(const Vocabulary& vocab, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden = 6;
  return RiskModel::create(vocab, cfg, seed);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter p = make_param({0.5, -1.0, 2.0}, {0.0, 0.0, 0.0});
  ParameterList params{&p};
  AdamState adam(params, AdamConfig{0.1});
  for (int i = 0; i < 10; ++i) adam.step(params);
  EXPECT_EQ(p.value[0], 0.5);
  EXPECT_EQ(p.value[1], -1.0);
  EXPECT_EQ(p.value[2], 2.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p = make_param({0.0, 0.0, 0.0}, {3.0, -0.02, 1e-3});
  ParameterList params{&p};
  AdamState adam(params, AdamConfig{0.01});
  adam.step(params);
  EXPECT_NEAR(p.value[0], -0.01, 1e-10);
  EXPECT_NEAR(p.value[1], 0.01, 1e-8);
  EXPECT_NEAR(p.value[2], -0.01, 1e-7);
}

TEST(Adam, HandComputedSecondStep) {
  Parameter p = make_param({1.0}, {2.0});
  ParameterList params{&p};
  AdamState adam(params, AdamConfig{0.1});
  adam.step(params);
  p.grad[0] = -1.0;
  adam.step(params);
  const double m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0;
  const double v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
  const double m_hat = m / (1.0 - 0.81);
  const double v_hat = v / (1.0 - 0.999 * 0.999);
  const double first = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
  EXPECT_NEAR(p.value[0], first - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(Adam, ZeroLearningRateIsFrozen) {
  Parameter p = make_param({0.3, 0.4}, {1.0, -2.0});
  ParameterList params{&p};
  AdamState adam(params, AdamConfig{0.0});
  for (int i = 0; i < 5; ++i) adam.step(params);
  EXPECT_EQ(p.value[0], 0.3);
  EXPECT_EQ(p.value[1], 0.4);
}

TEST(Adam, StepBoundedAndSecondMomentNonnegative) {
  Rng rng(3);
  Parameter p = make_param(std::vector<double>(20, 0.0), std::vector<double>(20, 0.0));
  ParameterList params{&p};
  const double lr = 0.05;
  AdamState adam(params, AdamConfig{lr});
  for (int t = 1; t <= 100; ++t) {
    for (double& g : p.grad.data()) g = rng.normal(0.0, std::pow(10.0, rng.uniform(-4.0, 3.0)));
    const Tensor before = p.value;
    adam.step(params);
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_LE(std::abs(p.value[i] - before[i]), 2.0 * lr + 1e-12) << "t=" << t;
    }
    for (double v : adam.second_moments()[0].data()) EXPECT_GE(v, 0.0);
  }
}

TEST(Adam, ShapeMismatchIsRejected) {
  Parameter a = make_param({1.0, 2.0}, {0.1, 0.1});
  Parameter b = make_param({1.0}, {0.1});
  ParameterList one{&a};
  AdamState adam(one, AdamConfig{0.01});
  ParameterList two{&a, &b};
  EXPECT_THROW(adam.step(two), ShapeError);
  a.grad = Tensor::vector({0.1, 0.1, 0.1});
  EXPECT_THROW(adam.step(one), ShapeError);
  EXPECT_THROW(AdamState(one, AdamConfig{-1.0}), ConfigError);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
  Parameter a = make_param({0, 0}, {3.0, 0.0});
  Parameter b = make_param({0}, {4.0});
  ParameterList params{&a, &b};
  EXPECT_DOUBLE_EQ(clip_gradients(params, 10.0), 5.0);
  EXPECT_EQ(a.grad[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_gradients(params, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 0.6);
  EXPECT_DOUBLE_EQ(b.grad[0], 0.8);
  EXPECT_NEAR(clip_gradients(params, 1.0), 1.0, 1e-15);
}

TEST(Train, LossDecreasesOnSmallCohort) {
  const Vocabulary vocab = tiny_vocabulary(10, 12);
  const auto records = tiny_cohort(vocab, 20, 5, 8);
  RiskModel model = small_model(vocab, 1);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch = 5;
  cfg.lr = 0.02;
  const TrainResult result = train(model, records, {}, cfg);
  ASSERT_EQ(result.history.size(), 50u);
  EXPECT_LT(result.history.back().train_loss, 0.5 * result.history.front().train_loss);
  EXPECT_EQ(result.best_epoch, 50);
  EXPECT_TRUE(std::isnan(result.best_val_auc));
}

TEST(Train, IsDeterministic) {
  const Vocabulary vocab = tiny_vocabulary(10, 12);
  const auto records = tiny_cohort(vocab, 24, 5, 9);
  const std::vector<PatientRecord> train_set(records.begin(), records.begin() + 16);
  const std::vector<PatientRecord> validation(records.begin() + 16, records.end());
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch = 4;
  cfg.patience = 3;
  RiskModel a = small_model(vocab, 2);
  RiskModel b = small_model(vocab, 2);
  const TrainResult ra = train(a, train_set, validation, cfg);
  const TrainResult rb = train(b, train_set, validation, cfg);
  std::ostringstream ha, hb;
  write_history_csv(ha, ra);
  write_history_csv(hb, rb);
  EXPECT_EQ(ha.str(), hb.str());
  EXPECT_EQ(ra.best_epoch, rb.best_epoch);
  for (const PatientRecord& r : validation) EXPECT_EQ(a.predict_visits(r), b.predict_visits(r));
}

TEST(Train, RestoresBestEpochParameters) {
  const Vocabulary vocab = tiny_vocabulary(10, 12);
  const auto records = tiny_cohort(vocab, 30, 5, 10);
  const std::vector<PatientRecord> train_set(records.begin(), records.begin() + 20);
  const std::vector<PatientRecord> validation(records.begin() + 20, records.end());
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch = 4;
  cfg.patience = 2;
  cfg.lr = 0.05;
  RiskModel model = small_model(vocab, 3);
  const TrainResult result = train(model, train_set, validation, cfg);
  ASSERT_GE(result.best_epoch, 1);
  const double restored = auc(score_visits(model, std::span<const PatientRecord>(validation)));
  EXPECT_EQ(restored, result.best_val_auc);
  for (const EpochStats& e : result.history) EXPECT_LE(e.val_auc, result.best_val_auc);
  if (result.stopped_early) {
    EXPECT_EQ(static_cast<int>(result.history.size()), result.best_epoch + cfg.patience);
  }
}

TEST(Train, RejectsBadInput) {
  const Vocabulary vocab = tiny_vocabulary(10, 12);
  auto records = tiny_cohort(vocab, 6, 4, 11);
  RiskModel model = small_model(vocab, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(model, records, {}, cfg), ConfigError);
  cfg.epochs = 2;
  EXPECT_THROW(train(model, std::vector<PatientRecord>{}, {}, cfg), ValidationError);
  for (PatientRecord& r : records) {
    for (Visit& v : r.visits) v.label.reset();
  }
  EXPECT_THROW(train(model, records, {}, cfg), DegenerateBatchError);
}

TEST(Train, HistoryCsvLayout) {
  TrainResult r;
  r.history.push_back({1, 0.5, std::numeric_limits<double>::quiet_NaN()});
  r.history.push_back({2, 0.25, 0.75});
  std::ostringstream out;
  write_history_csv(out, r);
  EXPECT_EQ(out.str(), "epoch,train_loss,val_auc\n1,0.5,nan\n2,0.25,0.75\n");
}

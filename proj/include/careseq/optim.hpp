#pragma once

// Adam and the minibatch training loop shared by every gradient-trained model.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "careseq/data.hpp"
#include "careseq/diffcore.hpp"
#include "careseq/errors.hpp"
#include "careseq/metrics.hpp"
#include "careseq/random.hpp"

namespace careseq {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState(std::span<Parameter* const> params, AdamConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const Parameter* p : params) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return step_; }
  const std::vector<Tensor>& first_moments() const { return first_; }
  const std::vector<Tensor>& second_moments() const { return second_; }

  // theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected
  // moment estimates.
  void step(std::span<Parameter* const> params) {
    if (params.size() != first_.size()) {
      throw ShapeError("adam: optimizer tracks " + std::to_string(first_.size()) +
                       " parameters, got " + std::to_string(params.size()));
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double correction1 = 1.0 - std::pow(cfg_.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      if (p.grad.shape() != first_[k].shape() || p.value.shape() != first_[k].shape()) {
        throw ShapeError("adam: parameter '" + p.name + "' changed shape");
      }
      auto theta = p.value.data();
      const auto g = p.grad.data();
      auto m = first_[k].data();
      auto v = second_[k].data();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        theta[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t step_ = 0;
};

inline void adam_step(AdamState& state, std::span<Parameter* const> params) {
  state.step(params);
}

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (std::isfinite(max_norm) && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.data()) g *= factor;
    }
  }
  return norm;
}

struct TrainConfig {
  int epochs = 30;
  std::size_t batch = 16;
  std::uint64_t seed = 42;
  int patience = 5;
  double lr = 0.01;
  double clip_norm = 5.0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_auc = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;
};

inline void write_history_csv(std::ostream& out, const TrainResult& result) {
  out << "epoch,train_loss,val_auc\n";
  out.precision(17);
  for (const EpochStats& e : result.history) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (std::isnan(e.val_auc)) out << "nan";
    else out << e.val_auc;
    out << '\n';
  }
}

// What the loop needs from a model.
template <class M>
concept Trainable = requires(M& model, const M& cmodel, GradProgram& g,
                             std::span<const PatientRecord* const> batch,
                             const PatientRecord& record) {
  { model.parameters() } -> std::convertible_to<ParameterList>;
  { cmodel.objective(g, batch, std::uint64_t{}) } -> std::same_as<Var>;
  { cmodel.predict_visits(record) } -> std::convertible_to<std::vector<double>>;
};

// Scores every labeled visit of every record.
template <class M>
std::vector<ScoredExample> score_visits(const M& model, std::span<const PatientRecord> records) {
  std::vector<ScoredExample> out;
  for (const PatientRecord& r : records) {
    const std::vector<double> probs = model.predict_visits(r);
    for (std::size_t t = 0; t < r.visits.size(); ++t) {
      if (r.visits[t].label) out.push_back({probs[t], *r.visits[t].label, r.patient_id, t});
    }
  }
  return out;
}

namespace detail {

inline bool has_both_classes(std::span<const ScoredExample> examples) {
  bool pos = false, neg = false;
  for (const ScoredExample& e : examples) (e.label == 1 ? pos : neg) = true;
  return pos && neg;
}

}  // namespace detail

// Shuffled minibatch Adam with gradient clipping and early stopping on the
// pooled validation AUC. Whenever validation AUC is available the
// parameters of the best epoch are restored at the end.
template <Trainable M>
TrainResult train(M& model, std::span<const PatientRecord> train_set,
                  std::span<const PatientRecord> validation, const TrainConfig& cfg,
                  std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training cohort is empty");
  const ParameterList params = model.parameters();
  AdamState adam(params, AdamConfig{cfg.lr});
  TrainResult result;
  std::vector<Tensor> best;
  int since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
    Rng rng(epoch_seed);
    rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::vector<const PatientRecord*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&train_set[order[k]]);
      GradProgram g;
      Var loss;
      try {
        loss = model.objective(g, batch, epoch_seed);
      } catch (const DegenerateBatchError&) {
        continue;  // nothing labeled in this batch
      }
      zero_grads(params);
      g.backward(loss);
      g.deposit(params);
      clip_gradients(params, cfg.clip_norm);
      adam.step(params);
      loss_sum += g.scalar(loss);
      ++batches;
    }
    if (batches == 0) {
      throw DegenerateBatchError("no batch in the training cohort has a labeled visit");
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    const auto val_examples = score_visits(model, validation);
    if (detail::has_both_classes(val_examples)) stats.val_auc = auc(val_examples);
    result.history.push_back(stats);
    if (progress) {
      *progress << "epoch " << epoch << " loss " << stats.train_loss << " val_auc "
                << stats.val_auc << '\n';
    }

    if (std::isnan(stats.val_auc)) continue;
    if (std::isnan(result.best_val_auc) || stats.val_auc > result.best_val_auc) {
      result.best_val_auc = stats.val_auc;
      result.best_epoch = epoch;
      best.clear();
      for (const Parameter* p : params) best.push_back(p->value);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  } else {
    result.best_epoch = static_cast<int>(result.history.size());
  }
  return result;
}

}  // namespace careseq

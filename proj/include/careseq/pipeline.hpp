#pragma once

// Uniform handling of the four model kinds selected by RunConfig::model.

#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "careseq/baselines.hpp"
#include "careseq/config.hpp"
#include "careseq/model.hpp"
#include "careseq/model_file.hpp"
#include "careseq/optim.hpp"

namespace careseq {

using AnyModel = std::variant<RiskModel, BowLrModel, DeeprMiniModel>;

struct FitOutcome {
  AnyModel model;
  TrainResult result;
};

inline FitOutcome fit_model(const RunConfig& cfg, const Vocabulary& vocab,
                            std::span<const PatientRecord> train_set,
                            std::span<const PatientRecord> validation,
                            std::ostream* progress = nullptr) {
  cfg.validate();
  if (cfg.is_recurrent()) {
    RiskModel model = RiskModel::create(vocab, cfg.model_config(), cfg.train.seed);
    TrainResult result = train(model, train_set, validation, cfg.train, progress);
    return {std::move(model), std::move(result)};
  }
  if (cfg.model == "deepr-mini") {
    DeeprMiniModel model = DeeprMiniModel::create(vocab, cfg.deepr_config(), cfg.train.seed);
    TrainResult result = train(model, train_set, validation, cfg.train, progress);
    return {std::move(model), std::move(result)};
  }
  // The convex baseline uses every training record; nothing to stop early on.
  std::vector<PatientRecord> all(train_set.begin(), train_set.end());
  all.insert(all.end(), validation.begin(), validation.end());
  return {train_bow_lr(all, vocab, cfg.bow_config()), TrainResult{}};
}

inline std::vector<double> predict_visits(const AnyModel& model, const PatientRecord& record) {
  return std::visit([&](const auto& m) { return m.predict_visits(record); }, model);
}

inline const Vocabulary& model_vocabulary(const AnyModel& model) {
  return std::visit([](const auto& m) -> const Vocabulary& { return m.vocabulary(); }, model);
}

inline ModelEnvelope to_envelope(const AnyModel& model, const RunConfig& cfg) {
  const nlohmann::json run = cfg.to_json();
  return std::visit(
      [&](const auto& m) -> ModelEnvelope {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BowLrModel>) return m.to_envelope(run, cfg.train.seed);
        else return m.to_envelope(run);
      },
      model);
}

inline AnyModel from_envelope(const ModelEnvelope& env) {
  if (env.kind == "mdmt" || env.kind == "mdmtp") return RiskModel::from_envelope(env);
  if (env.kind == "bow-lr") return BowLrModel::from_envelope(env);
  if (env.kind == "deepr-mini") return DeeprMiniModel::from_envelope(env);
  throw ParseError("unknown model kind '" + env.kind + "'");
}

}  // namespace careseq

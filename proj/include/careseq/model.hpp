#pragma once

// End-to-end risk model: code bags -> visit vectors -> LSTM -> prefix
// pooling -> feedforward classifier -> per-discharge risk.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "careseq/data.hpp"
#include "careseq/diffcore.hpp"
#include "careseq/embedding.hpp"
#include "careseq/encoding.hpp"
#include "careseq/errors.hpp"
#include "careseq/model_file.hpp"
#include "careseq/random.hpp"
#include "careseq/recurrent.hpp"

namespace careseq {

enum class Variant { mdmt, mdmtp };

inline Variant parse_variant(std::string_view name) {
  if (name == "mdmt") return Variant::mdmt;
  if (name == "mdmtp") return Variant::mdmtp;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected mdmt or mdmtp)");
}

inline const char* to_string(Variant v) { return v == Variant::mdmt ? "mdmt" : "mdmtp"; }

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden = 32;
  double epsilon = kDefaultEpsilon;
  Rho rho = Rho::square_shift;
  PoolingConfig pooling;
  double beta = 0.01;  // norm-stabilizer weight, MDMTP only
  int classifier_depth = 1;
  Variant variant = Variant::mdmt;

  // MDMT carries no state penalty; MDMTP always uses the norm stabilizer.
  RegularizerConfig regularizer() const {
    if (variant == Variant::mdmt) return {RegularizerKind::none, 0.0};
    return {RegularizerKind::norm_stabilizer, beta};
  }

  void validate() const {
    if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
    if (hidden == 0) throw ConfigError("hidden must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    pooling.validate();
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
    if (variant == Variant::mdmtp && !(beta > 0.0)) {
      throw ConfigError("variant mdmtp requires beta > 0");
    }
    if (classifier_depth != 0 && classifier_depth != 1) {
      throw ConfigError("classifier_depth must be 0 or 1");
    }
  }

  nlohmann::json to_json() const {
    return {{"embed_dim", embed_dim},  {"hidden", hidden},
            {"epsilon", epsilon},      {"rho", to_string(rho)},
            {"pooling", to_string(pooling.kind)}, {"alpha", pooling.alpha},
            {"beta", beta},            {"classifier_depth", classifier_depth},
            {"variant", to_string(variant)}};
  }

  // Reads the model keys; other keys are left to the caller.
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
      cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
      cfg.hidden = j.at("hidden").get<std::size_t>();
      cfg.epsilon = j.at("epsilon").get<double>();
      cfg.rho = parse_rho(j.at("rho").get<std::string>());
      cfg.pooling.kind = parse_pooling(j.at("pooling").get<std::string>());
      cfg.pooling.alpha = j.at("alpha").get<double>();
      cfg.beta = j.at("beta").get<double>();
      cfg.classifier_depth = j.at("classifier_depth").get<int>();
      cfg.variant = parse_variant(j.at("variant").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
  }
};

// Feedforward head on the pooled state. Depth 1 adds a tanh hidden layer of
// the same width as the state.
class Classifier {
 public:
  Classifier() = default;

  Classifier(std::size_t input_dim, int depth) : depth_(depth) {
    if (depth == 1) {
      hidden_weight_ = Parameter("classifier.hidden.weight", Tensor({input_dim, input_dim}));
      hidden_bias_ = Parameter("classifier.hidden.bias", Tensor::zeros(input_dim));
    }
    output_weight_ = Parameter("classifier.output.weight", Tensor::zeros(input_dim));
    output_bias_ = Parameter("classifier.output.bias", Tensor::zeros(1));
  }

  static Classifier initialized(std::size_t input_dim, int depth, Rng& rng) {
    Classifier c(input_dim, depth);
    const double n = static_cast<double>(input_dim);
    if (depth == 1) {
      const double range = std::sqrt(6.0 / (2.0 * n));
      for (double& x : c.hidden_weight_.value.data()) x = rng.uniform(-range, range);
    }
    const double range = std::sqrt(6.0 / (n + 1.0));
    for (double& x : c.output_weight_.value.data()) x = rng.uniform(-range, range);
    return c;
  }

  int depth() const { return depth_; }

  Var score(GradProgram& g, Var x) const {
    Var features = x;
    if (depth_ == 1) {
      features = elementwise(
          g, Elementwise::tanh,
          add(g, matvec(g, g.parameter(hidden_weight_), x), g.parameter(hidden_bias_)));
    }
    return add(g, dot(g, g.parameter(output_weight_), features), g.parameter(output_bias_));
  }

  std::vector<const Parameter*> parameters() const {
    if (depth_ == 1) return {&hidden_weight_, &hidden_bias_, &output_weight_, &output_bias_};
    return {&output_weight_, &output_bias_};
  }

  void collect(ParameterList& out) {
    if (depth_ == 1) {
      out.push_back(&hidden_weight_);
      out.push_back(&hidden_bias_);
    }
    out.push_back(&output_weight_);
    out.push_back(&output_bias_);
  }

  Parameter& hidden_weight() { return hidden_weight_; }
  Parameter& hidden_bias() { return hidden_bias_; }
  Parameter& output_weight() { return output_weight_; }
  Parameter& output_bias() { return output_bias_; }

 private:
  int depth_ = 1;
  Parameter hidden_weight_;
  Parameter hidden_bias_;
  Parameter output_weight_;
  Parameter output_bias_;
};

// logistic(score) kept strictly inside (0, 1).
inline double risk_probability(double score) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(sigmoid(score), lo, hi);
}

struct ForwardTrace {
  std::vector<Var> visit_vectors;
  std::vector<LstmState> states;
  std::vector<Var> hidden;  // h_t of every visit
  std::vector<Var> scores;  // pre-logistic risk score per visit
};

// Per-visit risk for one record.
struct Prediction {
  std::vector<double> probabilities;
};

class RiskModel {
 public:
  RiskModel() = default;

  static RiskModel create(Vocabulary vocab, const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    RiskModel model;
    Rng rng(seed);
    model.vocab_ = std::move(vocab);
    model.config_ = cfg;
    model.seed_ = seed;
    model.embeddings_ = EmbeddingTable::random(model.vocab_.disease_count(),
                                               model.vocab_.treatment_count(),
                                               cfg.embed_dim, rng);
    model.lstm_ = LstmParams::initialized(cfg.embed_dim, cfg.hidden, rng);
    model.classifier_ = Classifier::initialized(cfg.hidden, cfg.classifier_depth, rng);
    return model;
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const EmbeddingTable& embeddings() const { return embeddings_; }
  EmbeddingTable& embeddings() { return embeddings_; }
  const LstmParams& lstm() const { return lstm_; }
  LstmParams& lstm() { return lstm_; }
  const Classifier& classifier() const { return classifier_; }
  Classifier& classifier() { return classifier_; }

  // MDMT <-> MDMTP switch, keeping all parameters.
  void set_variant(Variant variant, double beta) {
    ModelConfig cfg = config_;
    cfg.variant = variant;
    cfg.beta = beta;
    cfg.validate();
    config_ = cfg;
  }

  ParameterList parameters() {
    ParameterList out;
    embeddings_.collect(out);
    lstm_.collect(out);
    classifier_.collect(out);
    return out;
  }

  EncodedRecord encode(const PatientRecord& record) const {
    return careseq::encode(vocab_, record);
  }

  ForwardTrace forward(GradProgram& g, const EncodedRecord& record) const {
    if (record.visits.empty()) {
      throw ValidationError("record '" + record.patient_id + "' has no visits");
    }
    ForwardTrace trace;
    for (const EncodedVisit& v : record.visits) {
      const Var d = embed_bag(g, embeddings_, v.diseases, config_.epsilon);
      const Var p = embed_bag(g, embeddings_, v.treatments, config_.epsilon);
      trace.visit_vectors.push_back(visit_vector(g, d, p, config_.rho));
    }
    trace.states = unroll(g, lstm_, trace.visit_vectors);
    PrefixPool pooler(g, config_.pooling);
    for (const LstmState& s : trace.states) {
      trace.hidden.push_back(s.h);
      trace.scores.push_back(classifier_.score(g, pooler.push(s.h)));
    }
    return trace;
  }

  Prediction predict(const EncodedRecord& record) const {
    GradProgram g;
    const ForwardTrace trace = forward(g, record);
    Prediction out;
    for (Var s : trace.scores) out.probabilities.push_back(risk_probability(g.scalar(s)));
    return out;
  }

  Prediction predict(const PatientRecord& record) const { return predict(encode(record)); }

  // Trainer hooks.
  Var objective(GradProgram& g, std::span<const PatientRecord* const> batch,
                std::uint64_t /*epoch_seed*/) const;

  std::vector<double> predict_visits(const PatientRecord& record) const {
    return predict(record).probabilities;
  }

  ModelEnvelope to_envelope(const nlohmann::json& extra_config = nlohmann::json::object()) const;
  static RiskModel from_envelope(const ModelEnvelope& env);

 private:
  Vocabulary vocab_;
  ModelConfig config_;
  std::uint64_t seed_ = 0;
  EmbeddingTable embeddings_;
  LstmParams lstm_;
  Classifier classifier_;
};

inline Prediction forward(const RiskModel& model, const PatientRecord& record) {
  return model.predict(record);
}

// Risk at the final discharge of the record.
inline double predict_risk(const RiskModel& model, const PatientRecord& record) {
  return model.predict(record).probabilities.back();
}

// ---------------------------------------------------------------------------
// Loss

// Result of a forward pass over a batch, ready for backward().
struct LossEvaluation {
  GradProgram program;
  Var total;
  Var nll;
  Var regularizer;
  std::size_t labeled_visits = 0;
  std::size_t records = 0;

  double value() const { return program.scalar(total); }
  double nll_value() const { return program.scalar(nll); }
  double regularizer_value() const { return program.scalar(regularizer); }
};

// Mean NLL over labeled visits plus, for MDMTP, the state penalty averaged
// over records.
inline void build_loss(GradProgram& g, const RiskModel& model,
                       std::span<const EncodedRecord* const> batch, LossEvaluation& out) {
  if (batch.empty()) throw DegenerateBatchError("loss over an empty batch");
  std::vector<Var> nll_terms;
  std::vector<Var> penalties;
  const RegularizerConfig reg = model.config().regularizer();
  for (const EncodedRecord* record : batch) {
    const ForwardTrace trace = model.forward(g, *record);
    for (std::size_t t = 0; t < record->visits.size(); ++t) {
      const auto& label = record->visits[t].label;
      if (!label) continue;
      nll_terms.push_back(logistic_nll(g, trace.scores[t], static_cast<double>(*label)));
    }
    if (reg.kind != RegularizerKind::none) {
      penalties.push_back(state_regularizer(g, trace.hidden, reg));
    }
  }
  if (nll_terms.empty()) {
    throw DegenerateBatchError("batch of " + std::to_string(batch.size()) +
                               " record(s) has no labeled visits");
  }
  out.labeled_visits = nll_terms.size();
  out.records = batch.size();
  out.nll = scale(g, sum(g, nll_terms), 1.0 / static_cast<double>(nll_terms.size()));
  if (penalties.empty()) {
    out.regularizer = g.constant(Tensor::vector({0.0}));
    out.total = out.nll;
  } else {
    out.regularizer =
        scale(g, sum(g, penalties), 1.0 / static_cast<double>(penalties.size()));
    out.total = add(g, out.nll, out.regularizer);
  }
}

inline LossEvaluation evaluate_loss(const RiskModel& model,
                                    std::span<const EncodedRecord* const> batch) {
  LossEvaluation eval;
  build_loss(eval.program, model, batch, eval);
  return eval;
}

inline LossEvaluation evaluate_loss(const RiskModel& model,
                                    std::span<const PatientRecord> records) {
  std::vector<EncodedRecord> encoded;
  encoded.reserve(records.size());
  for (const PatientRecord& r : records) encoded.push_back(model.encode(r));
  std::vector<const EncodedRecord*> batch;
  for (const EncodedRecord& r : encoded) batch.push_back(&r);
  return evaluate_loss(model, batch);
}

// Accumulates d(loss)/d(theta) into every parameter of the model.
inline void backward(LossEvaluation& eval, RiskModel& model) {
  if (!eval.total.valid()) throw ProtocolError("backward called before the loss was evaluated");
  eval.program.backward(eval.total);
  const ParameterList params = model.parameters();
  eval.program.deposit(params);
}

inline Var RiskModel::objective(GradProgram& g, std::span<const PatientRecord* const> batch,
                                std::uint64_t) const {
  std::vector<EncodedRecord> encoded;
  encoded.reserve(batch.size());
  for (const PatientRecord* r : batch) encoded.push_back(encode(*r));
  std::vector<const EncodedRecord*> ptrs;
  for (const EncodedRecord& r : encoded) ptrs.push_back(&r);
  LossEvaluation parts;
  build_loss(g, *this, ptrs, parts);
  return parts.total;
}

// ---------------------------------------------------------------------------
// Persistence

inline ModelEnvelope RiskModel::to_envelope(const nlohmann::json& extra_config) const {
  ModelEnvelope env;
  env.kind = to_string(config_.variant);
  env.config = extra_config.is_object() ? extra_config : nlohmann::json::object();
  const nlohmann::json model_keys = config_.to_json();
  for (const auto& item : model_keys.items()) env.config[item.key()] = item.value();
  env.config["seed"] = seed_;
  env.vocabulary = vocab_;
  env.seed = seed_;
  // A caller-supplied run config is what produced the model, so it is the
  // digest that gets recorded.
  env.config_digest = config_digest(extra_config.is_object() && !extra_config.empty()
                                        ? extra_config
                                        : env.config);

  std::vector<double> table;
  table.reserve(embeddings_.row_count() * embeddings_.dim());
  for (const Parameter& row : embeddings_.rows()) {
    table.insert(table.end(), row.value.storage().begin(), row.value.storage().end());
  }
  if (embeddings_.row_count() > 0) {
    env.parameters.emplace("embedding", Tensor({embeddings_.row_count(), embeddings_.dim()},
                                               std::move(table)));
  }
  auto put = [&](const Parameter& p) { env.parameters.emplace(p.name, p.value); };
  for (const GateBlock* block :
       {&lstm_.candidate(), &lstm_.forget(), &lstm_.input_gate(), &lstm_.output()}) {
    put(block->input);
    put(block->recurrent);
    put(block->bias);
  }
  for (const Parameter* p : classifier_.parameters()) put(*p);
  return env;
}

inline RiskModel RiskModel::from_envelope(const ModelEnvelope& env) {
  if (env.kind != "mdmt" && env.kind != "mdmtp") {
    throw ParseError("model kind '" + env.kind + "' is not an LSTM risk model");
  }
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(env.config);
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
  if (to_string(cfg.variant) != env.kind) {
    throw ParseError("model kind '" + env.kind + "' disagrees with configured variant");
  }
  RiskModel model;
  model.vocab_ = env.vocabulary;
  model.config_ = cfg;
  model.seed_ = env.seed;
  const std::size_t rows = env.vocabulary.size();
  model.embeddings_ = EmbeddingTable(env.vocabulary.disease_count(),
                                     env.vocabulary.treatment_count(), cfg.embed_dim);
  if (rows > 0) {
    const Tensor& table = env.parameter("embedding");
    if (table.rank() != 2 || table.rows() != rows) {
      throw VocabularyMismatchError("embedding table has " + shape_string(table.shape()) +
                                    " entries but the vocabulary lists " +
                                    std::to_string(rows) + " codes");
    }
    if (table.cols() != cfg.embed_dim) {
      throw ParseError("embedding width disagrees with embed_dim");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      auto dst = model.embeddings_.rows()[r].value.data();
      for (std::size_t c = 0; c < cfg.embed_dim; ++c) dst[c] = table.at(r, c);
    }
  } else if (env.parameters.count("embedding")) {
    throw VocabularyMismatchError("embedding table present for an empty vocabulary");
  }
  model.lstm_ = LstmParams(cfg.embed_dim, cfg.hidden);
  for (GateBlock* block : model.lstm_.blocks()) {
    for (Parameter* p : {&block->input, &block->recurrent, &block->bias}) {
      p->value = env.take(p->name, p->value.shape());
    }
  }
  model.classifier_ = Classifier(cfg.hidden, cfg.classifier_depth);
  ParameterList head;
  model.classifier_.collect(head);
  for (Parameter* p : head) p->value = env.take(p->name, p->value.shape());
  return model;
}

inline void save(const RiskModel& model, const std::string& path,
                 const nlohmann::json& extra_config = nlohmann::json::object()) {
  write_envelope_file(path, model.to_envelope(extra_config));
}

inline RiskModel load_risk_model(const std::string& path) {
  return RiskModel::from_envelope(read_envelope_file(path));
}

}  // namespace careseq

#pragma once

// Comparison models: bag-of-words logistic regression and a miniature
// convolutional sequence classifier over randomly ordered visit tokens.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "careseq/data.hpp"
#include "careseq/diffcore.hpp"
#include "careseq/errors.hpp"
#include "careseq/model.hpp"
#include "careseq/model_file.hpp"
#include "careseq/optim.hpp"
#include "careseq/random.hpp"
#include "careseq/vocabulary.hpp"

namespace careseq {

// ---------------------------------------------------------------------------
// Bag of words

// Occurrence counts over the whole history, indexed by combined vocabulary
// row (diseases first, then treatments).
inline std::vector<double> bow_features(const PatientRecord& record, const Vocabulary& vocab) {
  std::vector<double> counts(vocab.size(), 0.0);
  for (const Visit& v : record.visits) {
    for (const std::string& c : v.diseases) counts[vocab.row(Namespace::disease, c)] += 1.0;
    for (const std::string& c : v.treatments) counts[vocab.row(Namespace::treatment, c)] += 1.0;
  }
  return counts;
}

struct BowConfig {
  double lambda = 1e-3;
  int iterations = 500;
  double lr = 0.01;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("bow lambda must be >= 0");
    if (iterations < 1) throw ConfigError("bow iterations must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("bow lr must be > 0");
  }
};

class BowLrModel {
 public:
  BowLrModel() = default;
  BowLrModel(Vocabulary vocab, double lambda)
      : vocab_(std::move(vocab)),
        lambda_(lambda),
        weights_("bow.weights", Tensor::zeros(std::max<std::size_t>(1, vocab_.size()))),
        bias_("bow.bias", Tensor::zeros(1)) {
    if (!(lambda >= 0.0)) throw ConfigError("bow lambda must be >= 0");
    if (vocab_.size() == 0) throw ConfigError("bag-of-words model needs a nonempty vocabulary");
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  double lambda() const { return lambda_; }
  Parameter& weights() { return weights_; }
  Parameter& bias() { return bias_; }
  const Parameter& weights() const { return weights_; }
  const Parameter& bias() const { return bias_; }
  ParameterList parameters() { return {&weights_, &bias_}; }

  double score(std::span<const double> features) const {
    double s = bias_.value[0];
    for (std::size_t i = 0; i < features.size(); ++i) s += weights_.value[i] * features[i];
    return s;
  }

  double predict(const PatientRecord& record) const {
    return risk_probability(score(bow_features(record, vocab_)));
  }

  // Risk after each discharge from the counts of the history so far.
  std::vector<double> predict_visits(const PatientRecord& record) const {
    std::vector<double> out;
    double s = bias_.value[0];
    for (const Visit& v : record.visits) {
      for (const std::string& c : v.diseases) s += weights_.value[vocab_.row(Namespace::disease, c)];
      for (const std::string& c : v.treatments) {
        s += weights_.value[vocab_.row(Namespace::treatment, c)];
      }
      out.push_back(risk_probability(s));
    }
    return out;
  }

  ModelEnvelope to_envelope(const nlohmann::json& config, std::uint64_t seed) const {
    ModelEnvelope env;
    env.kind = "bow-lr";
    env.config = config.is_object() ? config : nlohmann::json::object();
    env.config["bow_lambda"] = lambda_;
    env.vocabulary = vocab_;
    env.seed = seed;
    env.config_digest = config_digest(config.is_object() && !config.empty() ? config : env.config);
    env.parameters.emplace(weights_.name, weights_.value);
    env.parameters.emplace(bias_.name, bias_.value);
    return env;
  }

  static BowLrModel from_envelope(const ModelEnvelope& env) {
    if (env.kind != "bow-lr") throw ParseError("model kind '" + env.kind + "' is not bow-lr");
    double lambda = 0.0;
    try {
      lambda = env.config.at("bow_lambda").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bow-lr config: ") + e.what());
    }
    BowLrModel model(env.vocabulary, lambda);
    const Tensor& w = env.parameter("bow.weights");
    if (w.size() != env.vocabulary.size()) {
      throw VocabularyMismatchError("bag-of-words weights have " + std::to_string(w.size()) +
                                    " entries, vocabulary has " +
                                    std::to_string(env.vocabulary.size()));
    }
    model.weights_.value = w;
    model.bias_.value = env.take("bow.bias", {1});
    return model;
  }

 private:
  Vocabulary vocab_;
  double lambda_ = 0.0;
  Parameter weights_;
  Parameter bias_;
};

namespace detail {

struct SparseExample {
  std::vector<std::pair<std::size_t, double>> features;
  double label = 0.0;
};

inline std::vector<SparseExample> bow_examples(std::span<const PatientRecord> records,
                                               const Vocabulary& vocab) {
  std::vector<SparseExample> out;
  for (const PatientRecord& r : records) {
    const auto label = final_label(r);
    if (!label) continue;
    std::map<std::size_t, double> counts;
    for (const Visit& v : r.visits) {
      for (const std::string& c : v.diseases) counts[vocab.row(Namespace::disease, c)] += 1.0;
      for (const std::string& c : v.treatments) counts[vocab.row(Namespace::treatment, c)] += 1.0;
    }
    out.push_back({{counts.begin(), counts.end()}, static_cast<double>(*label)});
  }
  return out;
}

// Mean NLL + (lambda/2)||w||^2; fills the parameter gradients.
inline double bow_objective_and_grad(BowLrModel& model, std::span<const SparseExample> data) {
  auto w = model.weights().value.data();
  const double b = model.bias().value[0];
  auto gw = model.weights().grad.data();
  double& gb = model.bias().grad[0];
  std::fill(gw.begin(), gw.end(), 0.0);
  gb = 0.0;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double nll = 0.0;
  for (const SparseExample& ex : data) {
    double s = b;
    for (const auto& [i, x] : ex.features) s += w[i] * x;
    nll += softplus(s) - ex.label * s;
    const double residual = (sigmoid(s) - ex.label) * inv_n;
    for (const auto& [i, x] : ex.features) gw[i] += residual * x;
    gb += residual;
  }
  double penalty = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    penalty += w[i] * w[i];
    gw[i] += model.lambda() * w[i];
  }
  return nll * inv_n + 0.5 * model.lambda() * penalty;
}

}  // namespace detail

// Regularized objective on the final-visit labels of `records`.
inline double bow_objective(const BowLrModel& model, std::span<const PatientRecord> records) {
  const auto data = detail::bow_examples(records, model.vocabulary());
  if (data.empty()) throw DegenerateBatchError("no record has a final-visit label");
  BowLrModel scratch = model;
  return detail::bow_objective_and_grad(scratch, data);
}

// Continues full-batch Adam descent from the model's current weights.
inline void fit_bow_lr(BowLrModel& model, std::span<const PatientRecord> records,
                       const BowConfig& cfg) {
  cfg.validate();
  const auto data = detail::bow_examples(records, model.vocabulary());
  if (data.empty()) throw DegenerateBatchError("no record has a final-visit label");
  const ParameterList params = model.parameters();
  AdamState adam(params, AdamConfig{cfg.lr});
  for (int it = 0; it < cfg.iterations; ++it) {
    detail::bow_objective_and_grad(model, data);
    adam.step(params);
  }
}

inline BowLrModel train_bow_lr(std::span<const PatientRecord> records, const Vocabulary& vocab,
                               const BowConfig& cfg) {
  BowLrModel model(vocab, cfg.lambda);
  fit_bow_lr(model, records, cfg);
  return model;
}

// ---------------------------------------------------------------------------
// Convolutional sequence classifier

// Visits in temporal order; the codes of each visit (diseases and
// treatments together) shuffled by a generator seeded from
// (seed, patient_id, visit index). Tokens are combined vocabulary rows.
inline std::vector<std::size_t> deepr_sequence(const PatientRecord& record,
                                               const Vocabulary& vocab, std::uint64_t seed,
                                               std::vector<std::size_t>* visit_ends = nullptr) {
  std::vector<std::size_t> tokens;
  const std::uint64_t patient_seed = mix_seed(seed, fnv1a(record.patient_id));
  for (std::size_t t = 0; t < record.visits.size(); ++t) {
    const Visit& v = record.visits[t];
    std::vector<std::size_t> visit_tokens;
    for (const std::string& c : v.diseases) visit_tokens.push_back(vocab.row(Namespace::disease, c));
    for (const std::string& c : v.treatments) {
      visit_tokens.push_back(vocab.row(Namespace::treatment, c));
    }
    Rng rng(mix_seed(patient_seed, t));
    rng.shuffle(std::span<std::size_t>(visit_tokens));
    tokens.insert(tokens.end(), visit_tokens.begin(), visit_tokens.end());
    if (visit_ends) visit_ends->push_back(tokens.size());
  }
  return tokens;
}

struct DeeprConfig {
  std::size_t embed_dim = 32;
  std::size_t filters = 16;
  std::size_t width = 3;

  void validate() const {
    if (embed_dim == 0) throw ConfigError("deepr embed_dim must be positive");
    if (filters == 0) throw ConfigError("deepr filters must be >= 1");
    if (width == 0) throw ConfigError("deepr width must be >= 1");
  }
};

class DeeprMiniModel {
 public:
  DeeprMiniModel() = default;

  // Zero-valued parameters.
  DeeprMiniModel(Vocabulary vocab, const DeeprConfig& cfg, std::uint64_t sequence_seed)
      : vocab_(std::move(vocab)), cfg_(cfg), sequence_seed_(sequence_seed) {
    cfg.validate();
    for (std::size_t i = 0; i <= vocab_.size(); ++i) {
      embeddings_.emplace_back("deepr.embedding[" + std::to_string(i) + "]",
                               Tensor::zeros(cfg.embed_dim));
    }
    filters_ = Parameter("deepr.filters", Tensor({cfg.filters, cfg.width * cfg.embed_dim}));
    filter_bias_ = Parameter("deepr.filter_bias", Tensor::zeros(cfg.filters));
    output_weight_ = Parameter("deepr.output.weight", Tensor::zeros(cfg.filters));
    output_bias_ = Parameter("deepr.output.bias", Tensor::zeros(1));
  }

  static DeeprMiniModel create(Vocabulary vocab, const DeeprConfig& cfg, std::uint64_t seed) {
    DeeprMiniModel model(std::move(vocab), cfg, seed);
    Rng rng(mix_seed(seed, 0x64656570ULL));
    for (Parameter& row : model.embeddings_) {
      for (double& x : row.value.data()) x = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
    }
    const double fan_in = static_cast<double>(cfg.width * cfg.embed_dim);
    const double conv_range = std::sqrt(6.0 / (fan_in + static_cast<double>(cfg.filters)));
    for (double& x : model.filters_.value.data()) x = rng.uniform(-conv_range, conv_range);
    const double out_range = std::sqrt(6.0 / (static_cast<double>(cfg.filters) + 1.0));
    for (double& x : model.output_weight_.value.data()) x = rng.uniform(-out_range, out_range);
    return model;
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  const DeeprConfig& config() const { return cfg_; }
  std::uint64_t sequence_seed() const { return sequence_seed_; }
  std::size_t pad_token() const { return vocab_.size(); }

  std::vector<Parameter>& embeddings() { return embeddings_; }
  Parameter& filters() { return filters_; }
  Parameter& filter_bias() { return filter_bias_; }
  Parameter& output_weight() { return output_weight_; }
  Parameter& output_bias() { return output_bias_; }

  ParameterList parameters() {
    ParameterList out;
    for (Parameter& row : embeddings_) out.push_back(&row);
    out.push_back(&filters_);
    out.push_back(&filter_bias_);
    out.push_back(&output_weight_);
    out.push_back(&output_bias_);
    return out;
  }

  // Max over time of rectified valid-position convolutions. Sequences
  // shorter than the filter width are padded at the end.
  Var pooled_features(GradProgram& g, std::span<const std::size_t> tokens) const {
    std::vector<std::size_t> seq(tokens.begin(), tokens.end());
    for (std::size_t tok : seq) {
      if (tok > pad_token()) {
        throw VocabularyError("token " + std::to_string(tok) + " outside the vocabulary");
      }
    }
    while (seq.size() < cfg_.width) seq.push_back(pad_token());
    std::vector<Var> embedded;
    embedded.reserve(seq.size());
    for (std::size_t tok : seq) embedded.push_back(g.parameter(embeddings_[tok]));
    const Var filters = g.parameter(filters_);
    const Var bias = g.parameter(filter_bias_);
    std::vector<Var> activations;
    for (std::size_t pos = 0; pos + cfg_.width <= seq.size(); ++pos) {
      const std::span<const Var> window(embedded.data() + pos, cfg_.width);
      const Var x = cfg_.width == 1 ? window[0] : concat(g, window);
      activations.push_back(
          elementwise(g, Elementwise::rectifier, add(g, matvec(g, filters, x), bias)));
    }
    return activations.size() == 1 ? activations[0] : max_pool(g, activations);
  }

  Var score(GradProgram& g, std::span<const std::size_t> tokens) const {
    return add(g, dot(g, g.parameter(output_weight_), pooled_features(g, tokens)),
               g.parameter(output_bias_));
  }

  // Mean NLL of the final-visit labels, with intra-visit order drawn from
  // the epoch seed.
  Var objective(GradProgram& g, std::span<const PatientRecord* const> batch,
                std::uint64_t epoch_seed) const {
    std::vector<Var> terms;
    for (const PatientRecord* r : batch) {
      const auto label = final_label(*r);
      if (!label) continue;
      const auto tokens = deepr_sequence(*r, vocab_, epoch_seed);
      terms.push_back(logistic_nll(g, score(g, tokens), static_cast<double>(*label)));
    }
    if (terms.empty()) throw DegenerateBatchError("batch has no final-visit labels");
    return scale(g, sum(g, terms), 1.0 / static_cast<double>(terms.size()));
  }

  // Per-discharge risk from re-sequenced history prefixes. Intra-visit order
  // depends only on (seed, patient, visit), so each prefix is a prefix of
  // the full token sequence.
  std::vector<double> predict_visits(const PatientRecord& record) const {
    std::vector<std::size_t> ends;
    const auto tokens = deepr_sequence(record, vocab_, sequence_seed_, &ends);
    std::vector<double> out;
    for (std::size_t end : ends) {
      GradProgram g;
      out.push_back(risk_probability(
          g.scalar(score(g, std::span<const std::size_t>(tokens.data(), end)))));
    }
    return out;
  }

  ModelEnvelope to_envelope(const nlohmann::json& config) const {
    ModelEnvelope env;
    env.kind = "deepr-mini";
    env.config = config.is_object() ? config : nlohmann::json::object();
    env.config["deepr_embed_dim"] = cfg_.embed_dim;
    env.config["deepr_filters"] = cfg_.filters;
    env.config["deepr_width"] = cfg_.width;
    env.config["seed"] = sequence_seed_;
    env.vocabulary = vocab_;
    env.seed = sequence_seed_;
    env.config_digest = config_digest(config.is_object() && !config.empty() ? config : env.config);
    std::vector<double> table;
    for (const Parameter& row : embeddings_) {
      table.insert(table.end(), row.value.storage().begin(), row.value.storage().end());
    }
    env.parameters.emplace("deepr.embedding",
                           Tensor({embeddings_.size(), cfg_.embed_dim}, std::move(table)));
    for (const Parameter* p : {&filters_, &filter_bias_, &output_weight_, &output_bias_}) {
      env.parameters.emplace(p->name, p->value);
    }
    return env;
  }

  static DeeprMiniModel from_envelope(const ModelEnvelope& env) {
    if (env.kind != "deepr-mini") {
      throw ParseError("model kind '" + env.kind + "' is not deepr-mini");
    }
    DeeprConfig cfg;
    try {
      cfg.embed_dim = env.config.at("deepr_embed_dim").get<std::size_t>();
      cfg.filters = env.config.at("deepr_filters").get<std::size_t>();
      cfg.width = env.config.at("deepr_width").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("deepr-mini config: ") + e.what());
    }
    DeeprMiniModel model(env.vocabulary, cfg, env.seed);
    const Tensor& table = env.parameter("deepr.embedding");
    if (table.rank() != 2 || table.rows() != env.vocabulary.size() + 1) {
      throw VocabularyMismatchError("deepr embedding table does not match the vocabulary");
    }
    if (table.cols() != cfg.embed_dim) throw ParseError("deepr embedding width mismatch");
    for (std::size_t r = 0; r < model.embeddings_.size(); ++r) {
      for (std::size_t c = 0; c < cfg.embed_dim; ++c) {
        model.embeddings_[r].value[c] = table.at(r, c);
      }
    }
    for (Parameter* p : {&model.filters_, &model.filter_bias_, &model.output_weight_,
                         &model.output_bias_}) {
      p->value = env.take(p->name, p->value.shape());
    }
    return model;
  }

 private:
  Vocabulary vocab_;
  DeeprConfig cfg_;
  std::uint64_t sequence_seed_ = 0;
  std::vector<Parameter> embeddings_;  // last row is the pad token
  Parameter filters_;                  // F x (width * m)
  Parameter filter_bias_;
  Parameter output_weight_;
  Parameter output_bias_;
};

inline double deepr_forward(const DeeprMiniModel& model, std::span<const std::size_t> tokens) {
  GradProgram g;
  return risk_probability(g.scalar(model.score(g, tokens)));
}

}  // namespace careseq

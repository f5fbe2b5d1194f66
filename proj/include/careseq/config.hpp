#pragma once

// Flat run configuration read from JSON. Every artifact written by the CLI
// records the digest of the effective configuration.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include <json.hpp>

#include "careseq/baselines.hpp"
#include "careseq/data.hpp"
#include "careseq/errors.hpp"
#include "careseq/model.hpp"
#include "careseq/optim.hpp"

namespace careseq {

struct RunConfig {
  std::string model = "mdmt";  // mdmt | mdmtp | bow-lr | deepr-mini
  ModelConfig net;
  TrainConfig train;
  BowConfig bow;
  std::size_t deepr_filters = 16;
  std::size_t deepr_width = 3;
  double validation_fraction = 0.1;
  std::string data;
  std::string synth_preset = "default";
  bool truncate_icd = false;
  bool derive_labels = false;
  std::int64_t label_window = 365;
  bool strict = true;

  bool is_recurrent() const { return model == "mdmt" || model == "mdmtp"; }

  ModelConfig model_config() const {
    ModelConfig cfg = net;
    if (is_recurrent()) cfg.variant = parse_variant(model);
    return cfg;
  }

  DeeprConfig deepr_config() const { return {net.embed_dim, deepr_filters, deepr_width}; }

  BowConfig bow_config() const {
    BowConfig cfg = bow;
    cfg.lr = train.lr;
    return cfg;
  }

  ParseOptions parse_options() const {
    ParseOptions opts;
    opts.truncate_icd = truncate_icd;
    opts.strict = strict;
    opts.derive_labels = derive_labels;
    opts.label_window_days = label_window;
    return opts;
  }

  SynthConfig synth_config() const {
    if (synth_preset == "default") return SynthConfig{};
    if (synth_preset == "paper") return SynthConfig::paper_scale();
    throw ConfigError("synth_preset: unknown preset '" + synth_preset + "'");
  }

  void validate() const {
    if (model != "mdmt" && model != "mdmtp" && model != "bow-lr" && model != "deepr-mini") {
      throw ConfigError("model: unknown model '" + model +
                        "' (expected mdmt, mdmtp, bow-lr or deepr-mini)");
    }
    try {
      model_config().validate();
      train.validate();
      bow.validate();
      deepr_config().validate();
      synth_config();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("validation_fraction must lie in [0, 1)");
    }
    if (label_window < 0) throw ConfigError("label_window must be >= 0");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {
        {"model", model},
        {"embed_dim", net.embed_dim},
        {"hidden", net.hidden},
        {"epsilon", net.epsilon},
        {"rho", to_string(net.rho)},
        {"pooling", to_string(net.pooling.kind)},
        {"alpha", net.pooling.alpha},
        {"beta", net.beta},
        {"classifier_depth", net.classifier_depth},
        {"lr", train.lr},
        {"epochs", train.epochs},
        {"batch", train.batch},
        {"patience", train.patience},
        {"seed", train.seed},
        {"bow_lambda", bow.lambda},
        {"bow_iterations", bow.iterations},
        {"deepr_filters", deepr_filters},
        {"deepr_width", deepr_width},
        {"validation_fraction", validation_fraction},
        {"data", data},
        {"synth_preset", synth_preset},
        {"truncate_icd", truncate_icd},
        {"derive_labels", derive_labels},
        {"label_window", label_window},
        {"strict", strict},
    };
    j["clip_norm"] = std::isfinite(train.clip_norm) ? nlohmann::json(train.clip_norm)
                                                    : nlohmann::json(nullptr);
    return j;
  }

  std::string digest() const { return config_digest(to_json()); }

  // Applies the keys present in `j` on top of the current values. Unknown
  // keys and ill-typed values are rejected with the key name.
  void merge(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    // Echo keys written into model files are checked after everything else
    // has been applied.
    std::vector<std::string> echoes;
    for (const auto& [key, value] : j.items()) {
      if (key == "variant" || key == "deepr_embed_dim") {
        echoes.push_back(key);
        continue;
      }
      try {
        apply(key, value);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      } catch (const ConfigError& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }
    for (const std::string& key : echoes) {
      try {
        apply(key, j.at(key));
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      } catch (const ConfigError& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.merge(j);
    cfg.validate();
    return cfg;
  }

 private:
  void apply(const std::string& key, const nlohmann::json& v) {
    if (key == "model") model = v.get<std::string>();
    else if (key == "embed_dim") net.embed_dim = v.get<std::size_t>();
    else if (key == "hidden") net.hidden = v.get<std::size_t>();
    else if (key == "epsilon") net.epsilon = v.get<double>();
    else if (key == "rho") net.rho = parse_rho(v.get<std::string>());
    else if (key == "pooling") net.pooling.kind = parse_pooling(v.get<std::string>());
    else if (key == "alpha") net.pooling.alpha = v.get<double>();
    else if (key == "beta") net.beta = v.get<double>();
    else if (key == "classifier_depth") net.classifier_depth = v.get<int>();
    else if (key == "variant") {
      // Written into model files alongside "model"; must agree with it.
      if (v.get<std::string>() != model) throw ConfigError("variant disagrees with model");
    } else if (key == "lr") train.lr = v.get<double>();
    else if (key == "epochs") train.epochs = v.get<int>();
    else if (key == "batch") train.batch = v.get<std::size_t>();
    else if (key == "patience") train.patience = v.get<int>();
    else if (key == "seed") train.seed = v.get<std::uint64_t>();
    else if (key == "clip_norm") {
      train.clip_norm = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
    } else if (key == "bow_lambda") bow.lambda = v.get<double>();
    else if (key == "bow_iterations") bow.iterations = v.get<int>();
    else if (key == "deepr_filters") deepr_filters = v.get<std::size_t>();
    else if (key == "deepr_width") deepr_width = v.get<std::size_t>();
    else if (key == "deepr_embed_dim") {
      if (v.get<std::size_t>() != net.embed_dim) {
        throw ConfigError("deepr_embed_dim disagrees with embed_dim");
      }
    } else if (key == "validation_fraction") validation_fraction = v.get<double>();
    else if (key == "data") data = v.get<std::string>();
    else if (key == "synth_preset") synth_preset = v.get<std::string>();
    else if (key == "truncate_icd") truncate_icd = v.get<bool>();
    else if (key == "derive_labels") derive_labels = v.get<bool>();
    else if (key == "label_window") label_window = v.get<std::int64_t>();
    else if (key == "strict") strict = v.get<bool>();
    else throw ConfigError("unknown key");
  }
};

}  // namespace careseq

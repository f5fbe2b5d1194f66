#pragma once

// Versioned JSON envelope shared by every model kind:
//
//   {"format_version": 1, "kind": "...", "config": {...},
//    "vocabulary": {"diseases": [...], "treatments": [...]},
//    "parameters": {"name": {"shape": [...], "data": [...]}},
//    "provenance": {"seed": ..., "config_digest": "..."}}
//
// Doubles are written in shortest round-trip form, so save/load is lossless.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "careseq/diffcore.hpp"
#include "careseq/errors.hpp"
#include "careseq/vocabulary.hpp"

namespace careseq {

inline constexpr int kModelFormatVersion = 1;

struct ModelEnvelope {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  Vocabulary vocabulary;
  std::map<std::string, Tensor> parameters;
  std::uint64_t seed = 0;
  std::string config_digest;

  const Tensor& parameter(const std::string& name) const {
    auto it = parameters.find(name);
    if (it == parameters.end()) throw ParseError("model file lacks parameter '" + name + "'");
    return it->second;
  }

  // Named parameter with a required shape.
  Tensor take(const std::string& name, const std::vector<std::size_t>& shape) const {
    const Tensor& t = parameter(name);
    if (t.shape() != shape) {
      throw ParseError("parameter '" + name + "' has shape " + shape_string(t.shape()) +
                       ", expected " + shape_string(shape));
    }
    return t;
  }
};

inline nlohmann::json envelope_to_json(const ModelEnvelope& env) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, tensor] : env.parameters) {
    params[name] = {{"shape", tensor.shape()}, {"data", tensor.storage()}};
  }
  return {{"format_version", kModelFormatVersion},
          {"kind", env.kind},
          {"config", env.config},
          {"vocabulary",
           {{"diseases", env.vocabulary.disease_codes()},
            {"treatments", env.vocabulary.treatment_codes()}}},
          {"parameters", std::move(params)},
          {"provenance", {{"seed", env.seed}, {"config_digest", env.config_digest}}}};
}

inline ModelEnvelope envelope_from_json(const nlohmann::json& doc) {
  using nlohmann::json;
  if (!doc.is_object()) throw ParseError("model file must hold a JSON object");
  for (const auto& item : doc.items()) {
    static const char* known[] = {"format_version", "kind",       "config",
                                  "vocabulary",     "parameters", "provenance"};
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ParseError("model file has unknown key '" + item.key() + "'");
  }
  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
    throw ParseError("model file lacks an integer format_version");
  }
  const int version = doc["format_version"].get<int>();
  if (version != kModelFormatVersion) {
    throw VersionError("unsupported model format_version " + std::to_string(version) +
                       " (this build reads version " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  ModelEnvelope env;
  try {
    env.kind = doc.at("kind").get<std::string>();
    env.config = doc.at("config");
    if (!env.config.is_object()) throw ParseError("model config must be an object");
    const json& prov = doc.at("provenance");
    env.seed = prov.at("seed").get<std::uint64_t>();
    env.config_digest = prov.at("config_digest").get<std::string>();
    for (const auto& [name, entry] : doc.at("parameters").items()) {
      env.parameters.emplace(name, Tensor(entry.at("shape").get<std::vector<std::size_t>>(),
                                          entry.at("data").get<std::vector<double>>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("malformed parameter: ") + e.what());
  }
  try {
    const json& vocab = doc.at("vocabulary");
    env.vocabulary =
        Vocabulary::from_sorted(vocab.at("diseases").get<std::vector<std::string>>(),
                                vocab.at("treatments").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed vocabulary: ") + e.what());
  } catch (const VocabularyError& e) {
    throw VocabularyMismatchError(e.what());
  }
  return env;
}

inline void write_envelope(std::ostream& out, const ModelEnvelope& env) {
  out << envelope_to_json(env).dump() << '\n';
}

inline ModelEnvelope read_envelope(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model file is not valid JSON: ") + e.what());
  }
  return envelope_from_json(doc);
}

inline void write_envelope_file(const std::string& path, const ModelEnvelope& env) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_envelope(out, env);
  if (!out) throw Error("failed writing '" + path + "'");
}

inline ModelEnvelope read_envelope_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file '" + path + "'");
  return read_envelope(in);
}

}  // namespace careseq

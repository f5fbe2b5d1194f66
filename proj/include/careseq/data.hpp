#pragma once

// Patient records: schema, line-delimited JSON ingestion, ICD-10 truncation,
// vocabulary construction, stratified folds and the synthetic cohort
// generator.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "careseq/diffcore.hpp"
#include "careseq/errors.hpp"
#include "careseq/random.hpp"
#include "careseq/vocabulary.hpp"

namespace careseq {

using json = nlohmann::json;

struct Visit {
  std::int64_t time = 0;  // days since an arbitrary epoch
  std::vector<std::string> diseases;
  std::vector<std::string> treatments;
  bool unplanned = false;
  std::optional<int> label;  // 1: an unplanned admission follows this discharge

  friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Provenance {
  std::string source;
  std::uint64_t seed = 0;
  std::string config_digest;
};

struct Cohort {
  std::vector<PatientRecord> records;
  Vocabulary vocabulary;
  Provenance provenance;
};

inline constexpr std::size_t kMinVisits = 2;

// ---------------------------------------------------------------------------
// Validation and ICD-10 handling

// Uppercases, drops everything from the first '.', keeps at most three
// characters (chapter letter plus two-digit category).
inline std::string truncate_icd10(std::string_view code) {
  if (code.empty()) throw ValidationError("ICD-10 code must be nonempty");
  std::string out;
  for (char ch : code) {
    if (ch == '.') break;
    if (out.size() == 3) break;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  }
  if (out.empty()) {
    throw ValidationError("ICD-10 code '" + std::string(code) + "' has no category");
  }
  return out;
}

inline void validate_record(const PatientRecord& record) {
  if (record.patient_id.empty()) throw ValidationError("patient_id must be nonempty");
  if (record.visits.size() < kMinVisits) {
    throw ValidationError("patient '" + record.patient_id + "' has " +
                          std::to_string(record.visits.size()) +
                          " visit(s); each record needs at least 2 hospital visits");
  }
  for (std::size_t t = 0; t < record.visits.size(); ++t) {
    const Visit& v = record.visits[t];
    if (t > 0 && v.time < record.visits[t - 1].time) {
      throw ValidationError("patient '" + record.patient_id + "' visit " +
                            std::to_string(t) + ": times must be nondecreasing");
    }
    if (v.diseases.empty() && v.treatments.empty()) {
      throw ValidationError("patient '" + record.patient_id + "' visit " +
                            std::to_string(t) +
                            ": diseases and treatments are both empty");
    }
    if (v.label && *v.label != 0 && *v.label != 1) {
      throw ValidationError("patient '" + record.patient_id + "' visit " +
                            std::to_string(t) + ": label must be 0, 1 or null");
    }
  }
}

// Fills missing labels from the `unplanned` flags of later visits: 1 if an
// unplanned visit starts within `window_days` of discharge t, 0 if the record
// observes the whole window without one, otherwise left missing (censored).
inline void derive_labels(PatientRecord& record, std::int64_t window_days) {
  auto& visits = record.visits;
  for (std::size_t t = 0; t < visits.size(); ++t) {
    if (visits[t].label) continue;
    std::optional<int> label;
    for (std::size_t u = t + 1; u < visits.size(); ++u) {
      const std::int64_t gap = visits[u].time - visits[t].time;
      if (gap > window_days) {
        label = 0;
        break;
      }
      if (visits[u].unplanned) {
        label = 1;
        break;
      }
    }
    visits[t].label = label;
  }
}

// ---------------------------------------------------------------------------
// JSON mapping

inline json to_json(const Visit& v) {
  json out = json::object();
  out["time"] = v.time;
  out["diseases"] = v.diseases;
  out["treatments"] = v.treatments;
  out["unplanned"] = v.unplanned;
  out["label"] = v.label ? json(*v.label) : json(nullptr);
  return out;
}

inline json to_json(const PatientRecord& r) {
  json visits = json::array();
  for (const Visit& v : r.visits) visits.push_back(to_json(v));
  return json{{"patient_id", r.patient_id}, {"visits", std::move(visits)}};
}

struct ParseOptions {
  bool truncate_icd = false;
  bool strict = true;  // unknown keys are errors; otherwise warnings
  bool derive_labels = false;
  std::int64_t label_window_days = 365;
  std::ostream* warnings = nullptr;
};

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where, const ParseOptions& opts) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (known) continue;
    const std::string msg = where + ": unknown key '" + item.key() + "'";
    if (opts.strict) throw ValidationError(msg);
    if (opts.warnings) *opts.warnings << "warning: " << msg << '\n';
  }
}

inline std::vector<std::string> code_list(const json& obj, const char* key,
                                          const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  const json& arr = obj.at(key);
  if (!arr.is_array()) throw ValidationError(where + ": '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const json& item : arr) {
    if (!item.is_string() || item.get_ref<const std::string&>().empty()) {
      throw ValidationError(where + ": '" + key + "' entries must be nonempty strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline PatientRecord record_from_json(const json& obj, const ParseOptions& opts = {},
                                      const std::string& where = "record") {
  if (!obj.is_object()) throw ValidationError(where + ": expected a JSON object");
  detail::check_keys(obj, {"patient_id", "visits"}, where, opts);
  PatientRecord record;
  if (!obj.contains("patient_id") || !obj.at("patient_id").is_string()) {
    throw ValidationError(where + ": 'patient_id' must be a string");
  }
  record.patient_id = obj.at("patient_id").get<std::string>();
  if (!obj.contains("visits") || !obj.at("visits").is_array()) {
    throw ValidationError(where + ": 'visits' must be an array");
  }
  std::size_t index = 0;
  for (const json& jv : obj.at("visits")) {
    const std::string vwhere = where + " visit " + std::to_string(index++);
    if (!jv.is_object()) throw ValidationError(vwhere + ": expected a JSON object");
    detail::check_keys(jv, {"time", "diseases", "treatments", "unplanned", "label"},
                       vwhere, opts);
    Visit v;
    if (!jv.contains("time") || !jv.at("time").is_number_integer()) {
      throw ValidationError(vwhere + ": 'time' must be an integer");
    }
    v.time = jv.at("time").get<std::int64_t>();
    v.diseases = detail::code_list(jv, "diseases", vwhere);
    v.treatments = detail::code_list(jv, "treatments", vwhere);
    if (jv.contains("unplanned")) {
      if (!jv.at("unplanned").is_boolean()) {
        throw ValidationError(vwhere + ": 'unplanned' must be a boolean");
      }
      v.unplanned = jv.at("unplanned").get<bool>();
    }
    if (jv.contains("label") && !jv.at("label").is_null()) {
      const json& jl = jv.at("label");
      if (!jl.is_number_integer() || (jl.get<int>() != 0 && jl.get<int>() != 1)) {
        throw ValidationError(vwhere + ": 'label' must be 0, 1 or null");
      }
      v.label = jl.get<int>();
    }
    if (opts.truncate_icd) {
      for (std::string& code : v.diseases) code = truncate_icd10(code);
    }
    record.visits.push_back(std::move(v));
  }
  return record;
}

// Distinct codes of each namespace, sorted.
inline Vocabulary build_vocab(std::span<const PatientRecord> records) {
  std::set<std::string> diseases;
  std::set<std::string> treatments;
  for (const PatientRecord& r : records) {
    for (const Visit& v : r.visits) {
      diseases.insert(v.diseases.begin(), v.diseases.end());
      treatments.insert(v.treatments.begin(), v.treatments.end());
    }
  }
  return Vocabulary::from_codes({diseases.begin(), diseases.end()},
                                {treatments.begin(), treatments.end()});
}

// One JSON record per line. Blank lines are skipped.
inline Cohort parse_cohort(std::istream& in, const ParseOptions& opts = {},
                           std::string source = "stream") {
  Cohort cohort;
  cohort.provenance.source = std::move(source);
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": malformed JSON (" + e.what() + ")");
    }
    PatientRecord record = record_from_json(obj, opts, where);
    try {
      validate_record(record);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!seen.insert(record.patient_id).second) {
      throw ValidationError(where + ": duplicate patient_id '" + record.patient_id + "'");
    }
    if (opts.derive_labels) derive_labels(record, opts.label_window_days);
    cohort.records.push_back(std::move(record));
  }
  cohort.vocabulary = build_vocab(cohort.records);
  return cohort;
}

inline void write_cohort(std::ostream& out, std::span<const PatientRecord> records) {
  for (const PatientRecord& r : records) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Labels

inline std::optional<int> final_label(const PatientRecord& r) {
  return r.visits.empty() ? std::nullopt : r.visits.back().label;
}

inline std::size_t labeled_visit_count(const PatientRecord& r) {
  return static_cast<std::size_t>(std::count_if(
      r.visits.begin(), r.visits.end(), [](const Visit& v) { return v.label.has_value(); }));
}

// ---------------------------------------------------------------------------
// Folds

// Patient-level k-way partition, stratified on the final-visit label.
// Records are shuffled within each stratum (positives, negatives, unlabeled)
// and dealt round-robin, so fold sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_split(
    std::span<const PatientRecord> records, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k must be at least 2");
  if (records.size() < k) {
    throw ValidationError("cannot split " + std::to_string(records.size()) +
                          " records into " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> positives, negatives, unlabeled;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto label = final_label(records[i]);
    if (!label) unlabeled.push_back(i);
    else if (*label == 1) positives.push_back(i);
    else negatives.push_back(i);
  }
  Rng rng(mix_seed(seed, 0x6b666f6c64ULL));
  rng.shuffle(std::span<std::size_t>(positives));
  rng.shuffle(std::span<std::size_t>(negatives));
  rng.shuffle(std::span<std::size_t>(unlabeled));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (const auto* stratum : {&positives, &negatives, &unlabeled}) {
    for (std::size_t i : *stratum) folds[next++ % k].push_back(i);
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

// Parameters of the planted-signal generator. A latent severity drifts up
// for each untreated disease and down for each treated one; labels depend on
// the next severity. Disease counts and the mix of severity-linked codes
// expose the current severity; whether a disease's designated treatment was
// given exposes the interaction.
struct SynthConfig {
  std::size_t patients = 1000;
  std::size_t disease_vocab = 50;
  std::size_t treatment_vocab = 120;
  double extra_visits_mean = 3.0;
  int max_extra_visits = 10;
  int max_extra_diseases = 7;
  int max_distractors = 4;
  double distractor_mean = 1.0;
  double severity_linked_fraction = 0.2;
  double severity_weight = 5.0;
  double q_eff = 0.6;
  double worsen_rate = 0.15;
  double improve_rate = 0.10;
  double severity_noise = 0.05;
  double label_slope = 4.0;
  double prevalence = 0.3;
  std::int64_t min_gap_days = 20;
  std::int64_t max_gap_days = 200;
  std::uint64_t seed = 42;

  static SynthConfig paper_scale() {
    SynthConfig cfg;
    cfg.disease_vocab = 240;
    cfg.treatment_vocab = 1100;
    return cfg;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("synth config: " + msg); };
    if (patients == 0) fail("patients must be positive");
    if (disease_vocab == 0 || disease_vocab > 2600) fail("disease_vocab must be in [1, 2600]");
    if (treatment_vocab == 0 || treatment_vocab > 10000) {
      fail("treatment_vocab must be in [1, 10000]");
    }
    if (!(q_eff >= 0.0 && q_eff <= 1.0)) fail("q_eff must lie in [0, 1]");
    if (!(prevalence > 0.0 && prevalence < 1.0)) fail("prevalence must lie in (0, 1)");
    if (!(severity_linked_fraction >= 0.0 && severity_linked_fraction <= 1.0)) {
      fail("severity_linked_fraction must lie in [0, 1]");
    }
    if (extra_visits_mean < 0 || distractor_mean < 0 || severity_noise < 0) {
      fail("rates must be nonnegative");
    }
    if (max_extra_visits < 0 || max_extra_diseases < 0 || max_distractors < 0) {
      fail("caps must be nonnegative");
    }
    if (min_gap_days < 0 || max_gap_days < min_gap_days) fail("invalid visit gap range");
  }

  json to_json() const {
    return json{{"patients", patients},
                {"disease_vocab", disease_vocab},
                {"treatment_vocab", treatment_vocab},
                {"extra_visits_mean", extra_visits_mean},
                {"max_extra_visits", max_extra_visits},
                {"max_extra_diseases", max_extra_diseases},
                {"max_distractors", max_distractors},
                {"distractor_mean", distractor_mean},
                {"severity_linked_fraction", severity_linked_fraction},
                {"severity_weight", severity_weight},
                {"q_eff", q_eff},
                {"worsen_rate", worsen_rate},
                {"improve_rate", improve_rate},
                {"severity_noise", severity_noise},
                {"label_slope", label_slope},
                {"prevalence", prevalence},
                {"min_gap_days", min_gap_days},
                {"max_gap_days", max_gap_days},
                {"seed", seed}};
  }
};

inline std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

// Stable digest of a JSON document (object keys are kept sorted).
inline std::string config_digest(const json& config) {
  return digest_hex(fnv1a(config.dump()));
}

// "A00".."Z99": index order matches lexicographic order.
inline std::string synthetic_disease_code(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%02zu", static_cast<char>('A' + index / 100), index % 100);
  return buf;
}

inline std::string synthetic_treatment_code(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04zu", index);
  return buf;
}

inline Cohort gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t linked = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.severity_linked_fraction *
                                  static_cast<double>(cfg.disease_vocab)));

  struct Pending {
    PatientRecord record;
    std::vector<double> next_severity;  // one per visit
  };
  std::vector<Pending> pending(cfg.patients);

  std::vector<double> weights(cfg.disease_vocab);
  for (std::size_t p = 0; p < cfg.patients; ++p) {
    Pending& pt = pending[p];
    char id[32];
    std::snprintf(id, sizeof id, "S%06zu", p + 1);
    pt.record.patient_id = id;
    double severity = rng.uniform(0.2, 0.8);
    const int visit_count =
        2 + std::min(rng.poisson(cfg.extra_visits_mean), cfg.max_extra_visits);
    std::int64_t time = 0;
    for (int t = 0; t < visit_count; ++t) {
      if (t > 0) time += rng.range(cfg.min_gap_days, cfg.max_gap_days);
      Visit visit;
      visit.time = time;
      const std::size_t disease_count = std::min<std::size_t>(
          cfg.disease_vocab,
          1 + static_cast<std::size_t>(std::min(rng.poisson(1.0 + 3.0 * severity),
                                                cfg.max_extra_diseases)));
      // Weighted draws without replacement.
      for (std::size_t d = 0; d < cfg.disease_vocab; ++d) {
        weights[d] = d < linked ? 1.0 + cfg.severity_weight * severity : 1.0;
      }
      std::vector<std::size_t> diseases;
      for (std::size_t k = 0; k < disease_count; ++k) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = rng.uniform() * total;
        std::size_t pick = cfg.disease_vocab - 1;
        for (std::size_t d = 0; d < cfg.disease_vocab; ++d) {
          if (weights[d] == 0.0) continue;
          if (u < weights[d]) {
            pick = d;
            break;
          }
          u -= weights[d];
        }
        while (weights[pick] == 0.0) --pick;  // rounding at the tail
        weights[pick] = 0.0;
        diseases.push_back(pick);
      }
      std::size_t treated = 0;
      for (std::size_t d : diseases) {
        visit.diseases.push_back(synthetic_disease_code(d));
        if (rng.bernoulli(cfg.q_eff)) {
          ++treated;
          visit.treatments.push_back(synthetic_treatment_code(d % cfg.treatment_vocab));
        }
      }
      const int distractors = std::min(rng.poisson(cfg.distractor_mean), cfg.max_distractors);
      for (int k = 0; k < distractors; ++k) {
        visit.treatments.push_back(
            synthetic_treatment_code(static_cast<std::size_t>(rng.below(cfg.treatment_vocab))));
      }
      const double treated_fraction =
          static_cast<double>(treated) / static_cast<double>(diseases.size());
      severity = std::clamp(severity + cfg.worsen_rate * (1.0 - treated_fraction) -
                                cfg.improve_rate * treated_fraction +
                                rng.normal(0.0, cfg.severity_noise),
                            0.0, 1.0);
      pt.next_severity.push_back(severity);
      pt.record.visits.push_back(std::move(visit));
    }
  }

  // Intercept such that the mean label probability over this cohort's
  // simulated trajectories equals the target prevalence.
  auto mean_probability = [&](double intercept) {
    double total = 0.0;
    std::size_t n = 0;
    for (const Pending& pt : pending) {
      for (double s : pt.next_severity) {
        total += sigmoid(cfg.label_slope * s + intercept);
        ++n;
      }
    }
    return total / static_cast<double>(n);
  };
  double lo = -50.0, hi = 50.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (mean_probability(mid) < cfg.prevalence ? lo : hi) = mid;
  }
  const double intercept = 0.5 * (lo + hi);

  Rng label_rng(mix_seed(cfg.seed, 0x6c6162656cULL));
  Cohort cohort;
  cohort.records.reserve(cfg.patients);
  for (Pending& pt : pending) {
    auto& visits = pt.record.visits;
    for (std::size_t t = 0; t < visits.size(); ++t) {
      const int y = label_rng.bernoulli(
                        sigmoid(cfg.label_slope * pt.next_severity[t] + intercept))
                        ? 1
                        : 0;
      visits[t].label = y;
      if (t + 1 < visits.size()) visits[t + 1].unplanned = y == 1;
    }
    cohort.records.push_back(std::move(pt.record));
  }
  cohort.vocabulary = build_vocab(cohort.records);
  cohort.provenance = {"synthetic", cfg.seed, config_digest(cfg.to_json())};
  return cohort;
}

}  // namespace careseq

#pragma once

// Finite-difference check of the complete model over every configuration
// combination, on a tiny random cohort.

#include <cstdint>
#include <string>
#include <vector>

#include "careseq/data.hpp"
#include "careseq/diffcore.hpp"
#include "careseq/model.hpp"
#include "careseq/random.hpp"

namespace careseq {

struct GradSuiteCase {
  std::string label;
  GradCheckReport report;
};

struct GradSuiteReport {
  std::vector<GradSuiteCase> cases;

  bool passed() const {
    for (const GradSuiteCase& c : cases) {
      if (!c.report.passed()) return false;
    }
    return !cases.empty();
  }

  double max_relative_error() const {
    double worst = 0.0;
    for (const GradSuiteCase& c : cases) worst = std::max(worst, c.report.max_relative_error);
    return worst;
  }
};

inline Vocabulary tiny_vocabulary(std::size_t diseases = 12, std::size_t treatments = 20) {
  std::vector<std::string> d, p;
  for (std::size_t i = 0; i < diseases; ++i) d.push_back(synthetic_disease_code(i));
  for (std::size_t i = 0; i < treatments; ++i) p.push_back(synthetic_treatment_code(i));
  return Vocabulary::from_sorted(std::move(d), std::move(p));
}

// Records of 2..max_visits visits with random bags and labels. The first
// record always carries one positive and one negative label.
inline std::vector<PatientRecord> tiny_cohort(const Vocabulary& vocab, std::size_t records,
                                              std::size_t max_visits, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PatientRecord> out;
  for (std::size_t r = 0; r < records; ++r) {
    PatientRecord rec;
    rec.patient_id = "G" + std::to_string(r);
    const std::size_t visits = static_cast<std::size_t>(rng.range(2, static_cast<std::int64_t>(max_visits)));
    std::int64_t time = 0;
    for (std::size_t t = 0; t < visits; ++t) {
      Visit v;
      time += rng.range(1, 60);
      v.time = time;
      const std::size_t nd = static_cast<std::size_t>(rng.range(1, 3));
      const std::size_t np = static_cast<std::size_t>(rng.range(0, 3));
      for (std::size_t i = 0; i < nd; ++i) {
        v.diseases.push_back(vocab.disease_codes()[rng.below(vocab.disease_count())]);
      }
      for (std::size_t i = 0; i < np; ++i) {
        v.treatments.push_back(vocab.treatment_codes()[rng.below(vocab.treatment_count())]);
      }
      v.label = static_cast<int>(rng.bernoulli(0.5));
      if (r == 0 && t < 2) v.label = static_cast<int>(t);
      rec.visits.push_back(std::move(v));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline GradSuiteReport run_grad_suite(std::uint64_t seed, double step = 1e-5,
                                      double tolerance = 1e-4) {
  const Vocabulary vocab = tiny_vocabulary();
  const std::vector<PatientRecord> records = tiny_cohort(vocab, 3, 4, mix_seed(seed, 1));
  GradSuiteReport suite;
  for (Variant variant : {Variant::mdmt, Variant::mdmtp}) {
    for (Rho rho : {Rho::square_shift, Rho::tanh}) {
      for (PoolingKind pooling : {PoolingKind::last, PoolingKind::mean, PoolingKind::expsmooth}) {
        ModelConfig cfg;
        cfg.embed_dim = 8;
        cfg.hidden = 8;
        cfg.rho = rho;
        cfg.pooling.kind = pooling;
        cfg.pooling.alpha = 0.5;
        cfg.variant = variant;
        cfg.beta = variant == Variant::mdmtp ? 0.1 : 0.0;
        RiskModel model = RiskModel::create(vocab, cfg, mix_seed(seed, 2));
        const ParameterList params = model.parameters();
        const Objective objective = [&](GradProgram& g) {
          std::vector<const PatientRecord*> batch;
          for (const PatientRecord& r : records) batch.push_back(&r);
          return model.objective(g, batch, 0);
        };
        GradSuiteCase c;
        c.label = std::string(to_string(variant)) + "/" + to_string(rho) + "/" + to_string(pooling);
        c.report = grad_check(objective, params, step, tolerance);
        suite.cases.push_back(std::move(c));
      }
    }
  }
  return suite;
}

}  // namespace careseq

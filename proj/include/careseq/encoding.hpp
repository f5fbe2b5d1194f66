#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "careseq/data.hpp"
#include "careseq/embedding.hpp"
#include "careseq/vocabulary.hpp"

namespace careseq {

// A visit with its codes resolved to vocabulary indices.
struct EncodedVisit {
  std::int64_t time = 0;
  CodeBag diseases{Namespace::disease, {}};
  CodeBag treatments{Namespace::treatment, {}};
  std::optional<int> label;
};

struct EncodedRecord {
  std::string patient_id;
  std::vector<EncodedVisit> visits;

  std::size_t labeled_visits() const {
    std::size_t n = 0;
    for (const EncodedVisit& v : visits) n += v.label.has_value();
    return n;
  }
};

inline EncodedRecord encode(const Vocabulary& vocab, const PatientRecord& record) {
  EncodedRecord out;
  out.patient_id = record.patient_id;
  out.visits.reserve(record.visits.size());
  for (const Visit& v : record.visits) {
    EncodedVisit ev;
    ev.time = v.time;
    ev.label = v.label;
    for (const std::string& code : v.diseases) {
      ev.diseases.indices.push_back(vocab.index(Namespace::disease, code));
    }
    for (const std::string& code : v.treatments) {
      ev.treatments.indices.push_back(vocab.index(Namespace::treatment, code));
    }
    out.visits.push_back(std::move(ev));
  }
  return out;
}

}  // namespace careseq

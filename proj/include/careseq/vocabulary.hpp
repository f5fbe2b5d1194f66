#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "careseq/errors.hpp"

namespace careseq {

enum class Namespace { disease, treatment };

inline const char* to_string(Namespace ns) {
  return ns == Namespace::disease ? "disease" : "treatment";
}

// Disease and treatment codes, each namespace sorted lexicographically.
// Rows of an embedding table are laid out diseases first, then treatments.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Deduplicates and sorts both namespaces.
  static Vocabulary from_codes(std::vector<std::string> diseases,
                               std::vector<std::string> treatments) {
    Vocabulary v;
    v.diseases_ = sorted_unique(std::move(diseases));
    v.treatments_ = sorted_unique(std::move(treatments));
    v.reindex();
    return v;
  }

  // Accepts already-ordered code lists and rejects anything that is not
  // strictly increasing. Used when reading model files.
  static Vocabulary from_sorted(std::vector<std::string> diseases,
                                std::vector<std::string> treatments) {
    auto check = [](const std::vector<std::string>& codes, const char* what) {
      for (std::size_t i = 1; i < codes.size(); ++i) {
        if (!(codes[i - 1] < codes[i])) {
          throw VocabularyError(std::string(what) +
                                " codes are not strictly sorted at '" +
                                codes[i] + "'");
        }
      }
    };
    check(diseases, "disease");
    check(treatments, "treatment");
    Vocabulary v;
    v.diseases_ = std::move(diseases);
    v.treatments_ = std::move(treatments);
    v.reindex();
    return v;
  }

  const std::vector<std::string>& disease_codes() const { return diseases_; }
  const std::vector<std::string>& treatment_codes() const { return treatments_; }
  const std::vector<std::string>& codes(Namespace ns) const {
    return ns == Namespace::disease ? diseases_ : treatments_;
  }

  std::size_t disease_count() const { return diseases_.size(); }
  std::size_t treatment_count() const { return treatments_.size(); }
  std::size_t size() const { return diseases_.size() + treatments_.size(); }
  std::size_t count(Namespace ns) const { return codes(ns).size(); }

  bool contains(Namespace ns, std::string_view code) const {
    const auto& map = ns == Namespace::disease ? disease_index_ : treatment_index_;
    return map.find(std::string(code)) != map.end();
  }

  // Index within the namespace.
  std::size_t index(Namespace ns, std::string_view code) const {
    const auto& map = ns == Namespace::disease ? disease_index_ : treatment_index_;
    auto it = map.find(std::string(code));
    if (it == map.end()) {
      throw VocabularyError(std::string("unknown ") + to_string(ns) + " code '" +
                            std::string(code) + "'");
    }
    return it->second;
  }

  // Position in the combined disease-then-treatment layout.
  std::size_t row(Namespace ns, std::size_t index) const {
    if (index >= count(ns)) {
      throw VocabularyError(std::string(to_string(ns)) + " index " +
                            std::to_string(index) + " out of range");
    }
    return ns == Namespace::disease ? index : diseases_.size() + index;
  }

  std::size_t row(Namespace ns, std::string_view code) const {
    return row(ns, index(ns, code));
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.diseases_ == b.diseases_ && a.treatments_ == b.treatments_;
  }

 private:
  static std::vector<std::string> sorted_unique(std::vector<std::string> codes) {
    std::sort(codes.begin(), codes.end());
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    return codes;
  }

  void reindex() {
    disease_index_.clear();
    treatment_index_.clear();
    for (std::size_t i = 0; i < diseases_.size(); ++i) disease_index_[diseases_[i]] = i;
    for (std::size_t i = 0; i < treatments_.size(); ++i) treatment_index_[treatments_[i]] = i;
  }

  std::vector<std::string> diseases_;
  std::vector<std::string> treatments_;
  std::unordered_map<std::string, std::size_t> disease_index_;
  std::unordered_map<std::string, std::size_t> treatment_index_;
};

}  // namespace careseq

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "careseq/errors.hpp"

namespace careseq {

struct ScoredExample {
  double score = 0.0;
  int label = 0;
  std::string patient_id;
  std::size_t visit = 0;
};

// Mann-Whitney AUC: the probability that a random positive outscores a
// random negative, ties credited one half. Midranks over a single sort give
// O(n log n); the rank sums are half-integers and therefore exact.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores but " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw NumericError("auc: non-finite score");
    positives += labels[i] == 1;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC undefined: need at least one positive and one negative (got " +
                               std::to_string(positives) + " positive, " +
                               std::to_string(negatives) + " negative)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the midrank keeps everything integral.
  double rank_sum_x2 = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_midrank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum_x2 += twice_midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u_x2 = rank_sum_x2 - p * (p + 1.0);
  return u_x2 / (2.0 * p * static_cast<double>(negatives));
}

inline double auc(std::span<const ScoredExample> examples) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(examples.size());
  labels.reserve(examples.size());
  for (const ScoredExample& e : examples) {
    scores.push_back(e.score);
    labels.push_back(e.label);
  }
  return auc(scores, labels);
}

// Mean binary cross-entropy of probabilities in (0, 1).
inline double mean_nll(std::span<const ScoredExample> examples) {
  if (examples.empty()) throw UndefinedMetricError("NLL of an empty set");
  double total = 0.0;
  for (const ScoredExample& e : examples) {
    total -= e.label == 1 ? std::log(e.score) : std::log1p(-e.score);
  }
  return total / static_cast<double>(examples.size());
}

}  // namespace careseq

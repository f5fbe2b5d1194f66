#pragma once

// Code embeddings, the rectified soft-normalized bag function and the
// disease-minus-treatment visit interaction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "careseq/diffcore.hpp"
#include "careseq/errors.hpp"
#include "careseq/random.hpp"
#include "careseq/vocabulary.hpp"

namespace careseq {

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr double kEmbeddingInitRange = 0.1;

// Multiset of namespace-local indices. Order and duplicates are preserved.
struct CodeBag {
  Namespace ns = Namespace::disease;
  std::vector<std::size_t> indices;
};

// One trainable row per vocabulary entry; diseases and treatments share the
// same m-dimensional space.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::size_t disease_count, std::size_t treatment_count,
                 std::size_t dim)
      : dim_(dim), disease_count_(disease_count), treatment_count_(treatment_count) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
    rows_.reserve(disease_count + treatment_count);
    for (std::size_t i = 0; i < disease_count + treatment_count; ++i) {
      rows_.emplace_back("embedding[" + std::to_string(i) + "]", Tensor::zeros(dim));
    }
  }

  // Rows drawn independently from Uniform[-range, range].
  static EmbeddingTable random(std::size_t disease_count,
                               std::size_t treatment_count, std::size_t dim,
                               Rng& rng, double range = kEmbeddingInitRange) {
    EmbeddingTable table(disease_count, treatment_count, dim);
    for (Parameter& row : table.rows_) {
      for (double& x : row.value.data()) x = rng.uniform(-range, range);
    }
    return table;
  }

  std::size_t dim() const { return dim_; }
  std::size_t disease_count() const { return disease_count_; }
  std::size_t treatment_count() const { return treatment_count_; }
  std::size_t row_count() const { return rows_.size(); }

  std::size_t row_index(Namespace ns, std::size_t index) const {
    const std::size_t limit = ns == Namespace::disease ? disease_count_ : treatment_count_;
    if (index >= limit) {
      throw VocabularyError(std::string(to_string(ns)) + " index " +
                            std::to_string(index) + " out of range (" +
                            std::to_string(limit) + " codes)");
    }
    return ns == Namespace::disease ? index : disease_count_ + index;
  }

  const Parameter& row(Namespace ns, std::size_t index) const {
    return rows_[row_index(ns, index)];
  }
  Parameter& row(Namespace ns, std::size_t index) {
    return rows_[row_index(ns, index)];
  }

  std::vector<Parameter>& rows() { return rows_; }
  const std::vector<Parameter>& rows() const { return rows_; }

  void collect(ParameterList& out) {
    for (Parameter& row : rows_) out.push_back(&row);
  }

 private:
  std::size_t dim_ = 0;
  std::size_t disease_count_ = 0;
  std::size_t treatment_count_ = 0;
  std::vector<Parameter> rows_;
};

// rectifier(sum of member rows) / (epsilon + ||.||_2). Members are summed in
// sorted index order, which makes the result bit-identical under any
// permutation of the bag. An empty bag yields the zero vector.
inline Var embed_bag(GradProgram& g, const EmbeddingTable& table,
                     const CodeBag& bag, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (bag.indices.empty()) return g.constant(Tensor::zeros(table.dim()));
  std::vector<std::size_t> order = bag.indices;
  std::sort(order.begin(), order.end());
  std::vector<Var> members;
  members.reserve(order.size());
  for (std::size_t index : order) members.push_back(g.parameter(table.row(bag.ns, index)));
  const Var total = members.size() == 1 ? members[0] : sum(g, members);
  return soft_normalize(g, elementwise(g, Elementwise::rectifier, total), epsilon);
}

// Elementwise transform applied to the disease-minus-treatment residual.
enum class Rho { square_shift, identity, tanh };

inline Rho parse_rho(std::string_view name) {
  if (name == "square_shift") return Rho::square_shift;
  if (name == "identity") return Rho::identity;
  if (name == "tanh") return Rho::tanh;
  throw ConfigError("unknown rho '" + std::string(name) +
                    "' (expected square_shift, identity or tanh)");
}

inline const char* to_string(Rho rho) {
  switch (rho) {
    case Rho::square_shift: return "square_shift";
    case Rho::identity: return "identity";
    case Rho::tanh: return "tanh";
  }
  return "?";
}

inline Var visit_vector(GradProgram& g, Var diseases, Var treatments,
                        Rho rho = Rho::square_shift) {
  const Var delta = sub(g, diseases, treatments);
  switch (rho) {
    case Rho::square_shift: return elementwise(g, Elementwise::square_shift, delta);
    case Rho::tanh: return elementwise(g, Elementwise::tanh, delta);
    case Rho::identity: return delta;
  }
  return delta;
}

// Cosine of two embedding rows.
inline double code_similarity(const EmbeddingTable& table, Namespace ns_a,
                              std::size_t a, Namespace ns_b, std::size_t b) {
  const auto x = table.row(ns_a, a).value.data();
  const auto y = table.row(ns_b, b).value.data();
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) {
    throw NumericError("similarity undefined for a zero-norm embedding");
  }
  return std::clamp(xy / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

inline double code_similarity(const EmbeddingTable& table, const Vocabulary& vocab,
                              Namespace ns_a, std::string_view a,
                              Namespace ns_b, std::string_view b) {
  return code_similarity(table, ns_a, vocab.index(ns_a, a), ns_b, vocab.index(ns_b, b));
}

}  // namespace careseq

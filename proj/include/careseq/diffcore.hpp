#pragma once

// Dense tensors, trainable parameters and a recorded reverse-mode program.
//
// Every differentiable operation appends one node to a GradProgram holding
// its output value and a closure that pushes the output gradient back to the
// node's inputs. GradProgram::backward walks the nodes in exact reverse
// order. Parameters enter a program as memoized leaf nodes; their gradients
// are collected per program and deposited into Parameter::grad afterwards, so
// forward passes only need const access to a model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "careseq/errors.hpp"

namespace careseq {

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

// Row-major dense array of doubles.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + shape_string(shape_) + " needs " +
                       std::to_string(checked_size(shape_)) +
                       " values, got " + std::to_string(data_.size()));
    }
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor zeros(std::size_t n) { return Tensor(std::vector<std::size_t>{n}); }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must be nonempty");
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) {
        throw ShapeError("tensor dimensions must be positive, got " +
                         shape_string(shape));
      }
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// A named trainable tensor with an accumulating gradient of the same shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

// Handle to a node inside one GradProgram.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t index = npos;
  bool valid() const { return index != npos; }
};

class GradProgram {
 public:
  // Receives the program and the gradient flowing into the node's output.
  using Backward = std::function<void(GradProgram&, std::span<const double>)>;

  GradProgram() = default;
  GradProgram(GradProgram&&) = default;
  GradProgram& operator=(GradProgram&&) = default;
  GradProgram(const GradProgram&) = delete;
  GradProgram& operator=(const GradProgram&) = delete;

  Var constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("constant has a non-finite entry");
    return push("constant", std::move(value), nullptr, {});
  }

  Var constant(std::vector<double> values) {
    return constant(Tensor::vector(std::move(values)));
  }

  // Leaf bound to a parameter. Repeated calls for the same parameter return
  // the same node, so its gradient is gathered in one place.
  Var parameter(const Parameter& param) {
    auto it = param_nodes_.find(&param);
    if (it != param_nodes_.end()) return Var{it->second};
    Node node;
    node.op = "parameter";
    node.param = &param;
    nodes_.push_back(std::move(node));
    const std::size_t index = nodes_.size() - 1;
    param_nodes_.emplace(&param, index);
    return Var{index};
  }

  // Appends the result of a differentiable operation. Non-finite results
  // raise here instead of propagating.
  Var record(const char* op, Tensor value, Backward backward) {
    if (!value.all_finite()) {
      throw NumericError(std::string("operation '") + op +
                         "' produced a non-finite value");
    }
    return push(op, std::move(value), nullptr, std::move(backward));
  }

  const Tensor& value(Var v) const {
    const Node& node = at(v);
    return node.param ? node.param->value : node.value;
  }

  double scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) {
      throw ShapeError("expected a scalar, got shape " + shape_string(t.shape()));
    }
    return t[0];
  }

  // Gradient buffer of a node; only meaningful during or after backward().
  std::span<double> grad(Var v) {
    Node& node = at(v);
    if (node.grad.size() != value(v).size()) {
      throw ProtocolError("gradient requested outside a backward pass");
    }
    return node.grad;
  }

  std::span<const double> grad(Var v) const {
    const Node& node = at(v);
    if (node.grad.size() != value(v).size()) {
      throw ProtocolError("gradient requested outside a backward pass");
    }
    return node.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var v) const { return at(v).op; }
  bool differentiated() const { return differentiated_; }

  // Reverse pass from a scalar output, seeding d(output)/d(output) = scale.
  void backward(Var output, double scale = 1.0) {
    if (nodes_.empty()) throw ProtocolError("backward on an empty program");
    if (differentiated_) {
      throw ProtocolError("backward already ran on this program");
    }
    if (value(output).size() != 1) {
      throw ShapeError("backward needs a scalar output, got shape " +
                       shape_string(value(output).shape()));
    }
    for (std::size_t i = 0; i <= output.index; ++i) {
      nodes_[i].grad.assign(value(Var{i}).size(), 0.0);
    }
    nodes_[output.index].grad[0] = scale;
    for (std::size_t i = output.index + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward) continue;
      // Parents always precede the node, so its buffer stays untouched.
      node.backward(*this, node.grad);
    }
    differentiated_ = true;
  }

  // Adds the gradients gathered for parameter leaves into Parameter::grad.
  void deposit(std::span<Parameter* const> params) const {
    if (!differentiated_) {
      throw ProtocolError("deposit before backward");
    }
    for (Parameter* p : params) {
      auto it = param_nodes_.find(p);
      if (it == param_nodes_.end()) continue;
      const Node& node = nodes_[it->second];
      if (node.grad.empty()) continue;
      auto dst = p->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
    }
  }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    const Parameter* param = nullptr;
    std::vector<double> grad;
    Backward backward;
  };

  Var push(const char* op, Tensor value, const Parameter* param,
           Backward backward) {
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.param = param;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  Node& at(Var v) {
    if (v.index >= nodes_.size()) throw ProtocolError("variable not in program");
    return nodes_[v.index];
  }
  const Node& at(Var v) const {
    if (v.index >= nodes_.size()) throw ProtocolError("variable not in program");
    return nodes_[v.index];
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool differentiated_ = false;
};

// ---------------------------------------------------------------------------
// Operations

namespace detail {

inline void require_same_size(const GradProgram& g, Var a, Var b,
                              const char* op) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.size() != tb.size()) {
    throw ShapeError(std::string(op) + ": shapes " +
                     shape_string(ta.shape()) + " and " +
                     shape_string(tb.shape()) + " differ");
  }
}

inline void accumulate(std::span<double> dst, std::span<const double> src,
                       double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace detail

// W (m x n) times x (n) -> m.
inline Var matvec(GradProgram& g, Var w, Var x) {
  const Tensor& tw = g.value(w);
  const Tensor& tx = g.value(x);
  if (tw.rank() != 2 || tw.cols() != tx.size()) {
    throw ShapeError("matvec: matrix " + shape_string(tw.shape()) +
                     " incompatible with vector " + shape_string(tx.shape()));
  }
  const std::size_t rows = tw.rows();
  const std::size_t cols = tw.cols();
  std::vector<double> out(rows, 0.0);
  const double* wp = tw.data().data();
  const double* xp = tx.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = wp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xp[c];
    out[r] = acc;
  }
  return g.record("matvec", Tensor::vector(std::move(out)),
                  [w, x, rows, cols](GradProgram& p, std::span<const double> up) {
                    const double* wp = p.value(w).data().data();
                    const double* xp = p.value(x).data().data();
                    auto gw = p.grad(w);
                    auto gx = p.grad(x);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double u = up[r];
                      if (u == 0.0) continue;
                      double* gwr = gw.data() + r * cols;
                      const double* wr = wp + r * cols;
                      for (std::size_t c = 0; c < cols; ++c) {
                        gwr[c] += u * xp[c];
                        gx[c] += u * wr[c];
                      }
                    }
                  });
}

inline Var add(GradProgram& g, Var a, Var b) {
  detail::require_same_size(g, a, b, "add");
  const auto va = g.value(a).data();
  const auto vb = g.value(b).data();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return g.record("add", Tensor::vector(std::move(out)),
                  [a, b](GradProgram& p, std::span<const double> up) {
                    detail::accumulate(p.grad(a), up);
                    detail::accumulate(p.grad(b), up);
                  });
}

inline Var sub(GradProgram& g, Var a, Var b) {
  detail::require_same_size(g, a, b, "sub");
  const auto va = g.value(a).data();
  const auto vb = g.value(b).data();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return g.record("sub", Tensor::vector(std::move(out)),
                  [a, b](GradProgram& p, std::span<const double> up) {
                    detail::accumulate(p.grad(a), up);
                    detail::accumulate(p.grad(b), up, -1.0);
                  });
}

// Componentwise product.
inline Var mul(GradProgram& g, Var a, Var b) {
  detail::require_same_size(g, a, b, "mul");
  const auto va = g.value(a).data();
  const auto vb = g.value(b).data();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return g.record("mul", Tensor::vector(std::move(out)),
                  [a, b](GradProgram& p, std::span<const double> up) {
                    const auto va = p.value(a).data();
                    const auto vb = p.value(b).data();
                    auto ga = p.grad(a);
                    auto gb = p.grad(b);
                    for (std::size_t i = 0; i < up.size(); ++i) {
                      ga[i] += up[i] * vb[i];
                      gb[i] += up[i] * va[i];
                    }
                  });
}

inline Var scale(GradProgram& g, Var a, double factor) {
  const auto va = g.value(a).data();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * va[i];
  return g.record("scale", Tensor::vector(std::move(out)),
                  [a, factor](GradProgram& p, std::span<const double> up) {
                    detail::accumulate(p.grad(a), up, factor);
                  });
}

// Left-to-right sum of equally sized operands.
inline Var sum(GradProgram& g, std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("sum: no operands");
  std::vector<double> out(g.value(terms[0]).data().begin(),
                          g.value(terms[0]).data().end());
  for (std::size_t k = 1; k < terms.size(); ++k) {
    detail::require_same_size(g, terms[0], terms[k], "sum");
    const auto vk = g.value(terms[k]).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vk[i];
  }
  return g.record("sum", Tensor::vector(std::move(out)),
                  [vars = std::vector<Var>(terms.begin(), terms.end())](
                      GradProgram& p, std::span<const double> up) {
                    for (Var v : vars) detail::accumulate(p.grad(v), up);
                  });
}

inline Var sum(GradProgram& g, std::initializer_list<Var> terms) {
  return sum(g, std::span<const Var>(terms.begin(), terms.size()));
}

enum class Elementwise { sigmoid, tanh, rectifier, square_shift };

inline Elementwise parse_elementwise(std::string_view name) {
  if (name == "sigmoid") return Elementwise::sigmoid;
  if (name == "tanh") return Elementwise::tanh;
  if (name == "rectifier") return Elementwise::rectifier;
  if (name == "square_shift") return Elementwise::square_shift;
  throw ConfigError("unknown elementwise kind '" + std::string(name) + "'");
}

inline const char* to_string(Elementwise kind) {
  switch (kind) {
    case Elementwise::sigmoid: return "sigmoid";
    case Elementwise::tanh: return "tanh";
    case Elementwise::rectifier: return "rectifier";
    case Elementwise::square_shift: return "square_shift";
  }
  return "?";
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double apply(Elementwise kind, double x) {
  switch (kind) {
    case Elementwise::sigmoid: return sigmoid(x);
    case Elementwise::tanh: return std::tanh(x);
    case Elementwise::rectifier: return x > 0.0 ? x : 0.0;
    case Elementwise::square_shift: return (1.0 + x) * (1.0 + x);
  }
  return x;
}

// Derivative expressed through the input x and the output y = f(x).
inline double derivative(Elementwise kind, double x, double y) {
  switch (kind) {
    case Elementwise::sigmoid: return y * (1.0 - y);
    case Elementwise::tanh: return 1.0 - y * y;
    case Elementwise::rectifier: return x > 0.0 ? 1.0 : 0.0;
    case Elementwise::square_shift: return 2.0 * (1.0 + x);
  }
  return 0.0;
}

inline Var elementwise(GradProgram& g, Elementwise kind, Var x) {
  const auto vx = g.value(x).data();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(kind, vx[i]);
  return g.record(to_string(kind), Tensor::vector(std::move(out)),
                  [kind, x](GradProgram& p, std::span<const double> up) {
                    const auto vx = p.value(x).data();
                    auto gx = p.grad(x);
                    for (std::size_t i = 0; i < up.size(); ++i) {
                      gx[i] += up[i] * derivative(kind, vx[i], apply(kind, vx[i]));
                    }
                  });
}

// x / (epsilon + ||x||_2). At x = 0 the Jacobian is I / epsilon.
inline Var soft_normalize(GradProgram& g, Var x, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("soft_normalize: epsilon must be > 0");
  const auto vx = g.value(x).data();
  double sq = 0.0;
  for (double v : vx) sq += v * v;
  const double norm = std::sqrt(sq);
  const double denom = epsilon + norm;
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] / denom;
  return g.record("soft_normalize", Tensor::vector(std::move(out)),
                  [x, norm, denom](GradProgram& p, std::span<const double> up) {
                    const auto vx = p.value(x).data();
                    auto gx = p.grad(x);
                    double proj = 0.0;
                    if (norm > 0.0) {
                      for (std::size_t i = 0; i < up.size(); ++i) proj += vx[i] * up[i];
                      proj /= norm * denom * denom;
                    }
                    for (std::size_t i = 0; i < up.size(); ++i) {
                      gx[i] += up[i] / denom - vx[i] * proj;
                    }
                  });
}

inline Var dot(GradProgram& g, Var a, Var b) {
  detail::require_same_size(g, a, b, "dot");
  const auto va = g.value(a).data();
  const auto vb = g.value(b).data();
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * vb[i];
  return g.record("dot", Tensor::vector({acc}),
                  [a, b](GradProgram& p, std::span<const double> up) {
                    const auto va = p.value(a).data();
                    const auto vb = p.value(b).data();
                    auto ga = p.grad(a);
                    auto gb = p.grad(b);
                    for (std::size_t i = 0; i < va.size(); ++i) {
                      ga[i] += up[0] * vb[i];
                      gb[i] += up[0] * va[i];
                    }
                  });
}

// ||x||_2 as a scalar; the subgradient at x = 0 is taken as 0.
inline Var l2_norm(GradProgram& g, Var x) {
  const auto vx = g.value(x).data();
  double sq = 0.0;
  for (double v : vx) sq += v * v;
  const double norm = std::sqrt(sq);
  return g.record("l2_norm", Tensor::vector({norm}),
                  [x, norm](GradProgram& p, std::span<const double> up) {
                    if (norm == 0.0) return;
                    const auto vx = p.value(x).data();
                    auto gx = p.grad(x);
                    for (std::size_t i = 0; i < vx.size(); ++i) {
                      gx[i] += up[0] * vx[i] / norm;
                    }
                  });
}

inline Var squared_norm(GradProgram& g, Var x) {
  const auto vx = g.value(x).data();
  double sq = 0.0;
  for (double v : vx) sq += v * v;
  return g.record("squared_norm", Tensor::vector({sq}),
                  [x](GradProgram& p, std::span<const double> up) {
                    const auto vx = p.value(x).data();
                    auto gx = p.grad(x);
                    for (std::size_t i = 0; i < vx.size(); ++i) {
                      gx[i] += 2.0 * up[0] * vx[i];
                    }
                  });
}

inline Var concat(GradProgram& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<double> out;
  for (Var v : parts) {
    const auto vv = g.value(v).data();
    out.insert(out.end(), vv.begin(), vv.end());
  }
  return g.record("concat", Tensor::vector(std::move(out)),
                  [vars = std::vector<Var>(parts.begin(), parts.end())](
                      GradProgram& p, std::span<const double> up) {
                    std::size_t offset = 0;
                    for (Var v : vars) {
                      auto gv = p.grad(v);
                      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += up[offset + i];
                      offset += gv.size();
                    }
                  });
}

// Componentwise maximum over equally sized vectors. Ties route the gradient
// to the earliest operand.
inline Var max_pool(GradProgram& g, std::span<const Var> items) {
  if (items.empty()) throw ShapeError("max_pool: no operands");
  const std::size_t n = g.value(items[0]).size();
  std::vector<double> out(g.value(items[0]).data().begin(),
                          g.value(items[0]).data().end());
  std::vector<std::size_t> winner(n, 0);
  for (std::size_t k = 1; k < items.size(); ++k) {
    detail::require_same_size(g, items[0], items[k], "max_pool");
    const auto vk = g.value(items[k]).data();
    for (std::size_t i = 0; i < n; ++i) {
      if (vk[i] > out[i]) {
        out[i] = vk[i];
        winner[i] = k;
      }
    }
  }
  return g.record("max_pool", Tensor::vector(std::move(out)),
                  [vars = std::vector<Var>(items.begin(), items.end()),
                   winner = std::move(winner)](GradProgram& p,
                                               std::span<const double> up) {
                    for (std::size_t i = 0; i < up.size(); ++i) {
                      p.grad(vars[winner[i]])[i] += up[i];
                    }
                  });
}

// Negative log-likelihood of a binary label under logistic(score), computed
// as softplus(score) - label * score.
inline Var logistic_nll(GradProgram& g, Var score, double label) {
  const double s = g.scalar(score);
  const double value = softplus(s) - label * s;
  return g.record("logistic_nll", Tensor::vector({value}),
                  [score, s, label](GradProgram& p, std::span<const double> up) {
                    p.grad(score)[0] += up[0] * (sigmoid(s) - label);
                  });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct ParameterCheck {
  std::string name;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_relative_error = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t entries_flagged = 0;

  bool passed() const { return entries_flagged == 0; }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

using Objective = std::function<Var(GradProgram&)>;

// Compares the recorded reverse pass against central differences for every
// scalar entry of every parameter. Parameter values are restored afterwards
// and their gradients hold the analytic result.
inline GradCheckReport grad_check(const Objective& objective,
                                  std::span<Parameter* const> params,
                                  double step, double tolerance) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be > 0");
  auto evaluate = [&] {
    GradProgram program;
    return program.scalar(objective(program));
  };

  zero_grads(params);
  GradProgram program;
  const Var loss = objective(program);
  const double base = program.scalar(loss);
  program.backward(loss);
  program.deposit(params);

  const double again = evaluate();
  if (again != base) {
    throw OracleViolation("grad_check: objective is not deterministic (" +
                          std::to_string(base) + " vs " + std::to_string(again) +
                          ")");
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    ParameterCheck check;
    check.name = p->name;
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = evaluate();
      values[i] = saved - step;
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p->grad[i];
      const double err = relative_error(analytic, numeric);
      ++report.entries_checked;
      if (err > tolerance) ++report.entries_flagged;
      if (err >= check.max_relative_error) {
        check.max_relative_error = err;
        check.worst_index = i;
        check.analytic = analytic;
        check.numeric = numeric;
      }
    }
    check.flagged = check.max_relative_error > tolerance;
    report.max_relative_error =
        std::max(report.max_relative_error, check.max_relative_error);
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace careseq

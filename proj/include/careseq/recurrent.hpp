#pragma once

// Single-layer LSTM over visit vectors, prefix pooling of the state
// sequence and the two state-transition penalties.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "careseq/diffcore.hpp"
#include "careseq/errors.hpp"
#include "careseq/random.hpp"

namespace careseq {

// Affine map of (input, previous state) feeding one gate or the candidate.
struct GateBlock {
  Parameter input;      // H x m
  Parameter recurrent;  // H x H
  Parameter bias;       // H

  GateBlock() = default;
  GateBlock(const std::string& prefix, std::size_t input_dim, std::size_t hidden)
      : input(prefix + ".input", Tensor({hidden, input_dim})),
        recurrent(prefix + ".recurrent", Tensor({hidden, hidden})),
        bias(prefix + ".bias", Tensor::zeros(hidden)) {}
};

class LstmParams {
 public:
  LstmParams() = default;

  // Zero-valued parameters.
  LstmParams(std::size_t input_dim, std::size_t hidden)
      : input_dim_(input_dim),
        hidden_(hidden),
        candidate_("lstm.candidate", input_dim, hidden),
        forget_("lstm.forget", input_dim, hidden),
        input_gate_("lstm.input_gate", input_dim, hidden),
        output_("lstm.output", input_dim, hidden) {
    if (input_dim == 0 || hidden == 0) {
      throw ConfigError("LSTM dimensions must be positive");
    }
  }

  // Glorot-uniform matrices, zero biases except a forget bias of 1.
  static LstmParams initialized(std::size_t input_dim, std::size_t hidden, Rng& rng) {
    LstmParams params(input_dim, hidden);
    const double in_range = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
    const double rec_range = std::sqrt(6.0 / static_cast<double>(2 * hidden));
    for (GateBlock* block : params.blocks()) {
      for (double& x : block->input.value.data()) x = rng.uniform(-in_range, in_range);
      for (double& x : block->recurrent.value.data()) x = rng.uniform(-rec_range, rec_range);
    }
    params.forget_.bias.value.fill(1.0);
    return params;
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }

  GateBlock& candidate() { return candidate_; }
  GateBlock& forget() { return forget_; }
  GateBlock& input_gate() { return input_gate_; }
  GateBlock& output() { return output_; }
  const GateBlock& candidate() const { return candidate_; }
  const GateBlock& forget() const { return forget_; }
  const GateBlock& input_gate() const { return input_gate_; }
  const GateBlock& output() const { return output_; }

  std::vector<GateBlock*> blocks() {
    return {&candidate_, &forget_, &input_gate_, &output_};
  }

  void collect(ParameterList& out) {
    for (GateBlock* block : blocks()) {
      out.push_back(&block->input);
      out.push_back(&block->recurrent);
      out.push_back(&block->bias);
    }
  }

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  GateBlock candidate_;
  GateBlock forget_;
  GateBlock input_gate_;
  GateBlock output_;
};

// Memory c and state h of one step.
struct LstmState {
  Var c;
  Var h;
};

// Gate activations of one step, exposed for inspection.
struct LstmGates {
  Var forget;
  Var input;
  Var output;
  Var candidate;
};

inline LstmState zero_state(GradProgram& g, std::size_t hidden) {
  return {g.constant(Tensor::zeros(hidden)), g.constant(Tensor::zeros(hidden))};
}

namespace detail {

inline Var gate_preactivation(GradProgram& g, const GateBlock& block, Var v, Var h) {
  const Var wx = matvec(g, g.parameter(block.input), v);
  const Var uh = matvec(g, g.parameter(block.recurrent), h);
  return sum(g, {wx, uh, g.parameter(block.bias)});
}

}  // namespace detail

inline LstmState lstm_step(GradProgram& g, const LstmParams& params, Var v,
                           const LstmState& prev, LstmGates* gates = nullptr) {
  if (g.value(v).size() != params.input_dim()) {
    throw ShapeError("lstm_step: input has " + std::to_string(g.value(v).size()) +
                     " components, expected " + std::to_string(params.input_dim()));
  }
  if (g.value(prev.h).size() != params.hidden() ||
      g.value(prev.c).size() != params.hidden()) {
    throw ShapeError("lstm_step: previous state does not have " +
                     std::to_string(params.hidden()) + " components");
  }
  const Var f = elementwise(g, Elementwise::sigmoid,
                            detail::gate_preactivation(g, params.forget(), v, prev.h));
  const Var i = elementwise(g, Elementwise::sigmoid,
                            detail::gate_preactivation(g, params.input_gate(), v, prev.h));
  const Var o = elementwise(g, Elementwise::sigmoid,
                            detail::gate_preactivation(g, params.output(), v, prev.h));
  const Var candidate = elementwise(
      g, Elementwise::tanh, detail::gate_preactivation(g, params.candidate(), v, prev.h));
  const Var c = add(g, mul(g, f, prev.c), mul(g, i, candidate));
  const Var h = mul(g, o, elementwise(g, Elementwise::tanh, c));
  if (gates) *gates = {f, i, o, candidate};
  return {c, h};
}

inline std::vector<LstmState> unroll(GradProgram& g, const LstmParams& params,
                                     std::span<const Var> inputs,
                                     const LstmState& initial) {
  std::vector<LstmState> states;
  states.reserve(inputs.size());
  LstmState state = initial;
  for (Var v : inputs) {
    state = lstm_step(g, params, v, state);
    states.push_back(state);
  }
  return states;
}

inline std::vector<LstmState> unroll(GradProgram& g, const LstmParams& params,
                                     std::span<const Var> inputs) {
  return unroll(g, params, inputs, zero_state(g, params.hidden()));
}

// ---------------------------------------------------------------------------
// Pooling

enum class PoolingKind { mean, last, expsmooth };

inline PoolingKind parse_pooling(std::string_view name) {
  if (name == "mean") return PoolingKind::mean;
  if (name == "last") return PoolingKind::last;
  if (name == "expsmooth") return PoolingKind::expsmooth;
  throw ConfigError("unknown pooling '" + std::string(name) +
                    "' (expected mean, last or expsmooth)");
}

inline const char* to_string(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::mean: return "mean";
    case PoolingKind::last: return "last";
    case PoolingKind::expsmooth: return "expsmooth";
  }
  return "?";
}

struct PoolingConfig {
  PoolingKind kind = PoolingKind::last;
  double alpha = 0.5;  // expsmooth only

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ConfigError("pooling alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
  }
};

// Pools h_1..h_t incrementally, yielding the pooled vector for every prefix.
class PrefixPool {
 public:
  PrefixPool(GradProgram& g, PoolingConfig cfg) : g_(g), cfg_(cfg) { cfg_.validate(); }

  Var push(Var h) {
    ++count_;
    switch (cfg_.kind) {
      case PoolingKind::last:
        pooled_ = h;
        break;
      case PoolingKind::mean:
        running_ = count_ == 1 ? h : add(g_, running_, h);
        pooled_ = scale(g_, running_, 1.0 / static_cast<double>(count_));
        break;
      case PoolingKind::expsmooth:
        pooled_ = count_ == 1 ? h
                              : add(g_, scale(g_, pooled_, cfg_.alpha),
                                    scale(g_, h, 1.0 - cfg_.alpha));
        break;
    }
    return pooled_;
  }

  std::size_t count() const { return count_; }

 private:
  GradProgram& g_;
  PoolingConfig cfg_;
  std::size_t count_ = 0;
  Var running_;
  Var pooled_;
};

inline Var pool(GradProgram& g, std::span<const Var> states, const PoolingConfig& cfg) {
  if (states.empty()) throw EmptySequenceError("pool: no states to pool");
  PrefixPool pooler(g, cfg);
  Var out;
  for (Var h : states) out = pooler.push(h);
  return out;
}

// ---------------------------------------------------------------------------
// State-transition penalties

enum class RegularizerKind { none, norm_stabilizer, coherence };

inline RegularizerKind parse_regularizer(std::string_view name) {
  if (name == "none") return RegularizerKind::none;
  if (name == "norm_stabilizer") return RegularizerKind::norm_stabilizer;
  if (name == "coherence") return RegularizerKind::coherence;
  throw ConfigError("unknown regularizer '" + std::string(name) + "'");
}

inline const char* to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::norm_stabilizer: return "norm_stabilizer";
    case RegularizerKind::coherence: return "coherence";
  }
  return "?";
}

struct RegularizerConfig {
  RegularizerKind kind = RegularizerKind::none;
  double beta = 0.0;

  void validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
      throw ConfigError("regularizer beta must be >= 0, got " + std::to_string(beta));
    }
  }
};

// (beta / T) * sum_{t>=2} (||h_t|| - ||h_{t-1}||)^2
inline Var norm_stabilizer(GradProgram& g, std::span<const Var> states, double beta) {
  if (states.empty()) throw EmptySequenceError("norm_stabilizer: no states");
  if (states.size() == 1) return g.constant(Tensor::vector({0.0}));
  std::vector<Var> terms;
  Var prev = l2_norm(g, states[0]);
  for (std::size_t t = 1; t < states.size(); ++t) {
    const Var cur = l2_norm(g, states[t]);
    terms.push_back(squared_norm(g, sub(g, cur, prev)));
    prev = cur;
  }
  return scale(g, sum(g, terms), beta / static_cast<double>(states.size()));
}

// (beta / T) * sum_{t>=2} ||h_t - h_{t-1}||^2
inline Var coherence_penalty(GradProgram& g, std::span<const Var> states, double beta) {
  if (states.empty()) throw EmptySequenceError("coherence_penalty: no states");
  if (states.size() == 1) return g.constant(Tensor::vector({0.0}));
  std::vector<Var> terms;
  for (std::size_t t = 1; t < states.size(); ++t) {
    terms.push_back(squared_norm(g, sub(g, states[t], states[t - 1])));
  }
  return scale(g, sum(g, terms), beta / static_cast<double>(states.size()));
}

inline Var state_regularizer(GradProgram& g, std::span<const Var> states,
                             const RegularizerConfig& cfg) {
  switch (cfg.kind) {
    case RegularizerKind::norm_stabilizer: return norm_stabilizer(g, states, cfg.beta);
    case RegularizerKind::coherence: return coherence_penalty(g, states, cfg.beta);
    case RegularizerKind::none: break;
  }
  return g.constant(Tensor::vector({0.0}));
}

}  // namespace careseq

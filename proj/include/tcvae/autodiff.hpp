#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcvae/params.hpp"
#include "tcvae/tensor.hpp"

namespace tcvae {

// Raised when a non-finite value shows up where finiteness is promised.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Dynamic reverse-mode graph. A fresh tape is built for every loss
// evaluation; nodes are appended in topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value, std::string name = "constant");
  Var variable(Tensor value, std::string name = "variable");
  // Leaf whose gradient is accumulated into the store on backward().
  Var parameter(ParamStore& store, const std::string& name);

  Var record(std::string op, Tensor value, std::vector<std::size_t> parents,
             BackwardFn backward);

  // Reverse sweep from a scalar loss. Parameter gradients are added to the
  // owning ParamStore's grad buffers.
  void backward(Var loss);

  // Gradient of the last backward() with respect to `v` (zeros if none).
  Tensor gradient(Var v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_accumulator(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
// a: [m, n], bias: [n]
Var add_bias(Var a, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var tanh(Var a);
Var exp(Var a);
Var square(Var a);
Var softplus(Var a);
// Gradient is zero outside [lo, hi].
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
// Reduces the last axis, keeping it with size 1.
Var sum_last_axis(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);

// Elementwise diagonal-Gaussian log-density, all inputs [B, J].
Var gaussian_log_density(Var z, Var mean, Var log_variance);
// Elementwise standard-normal log-density of z.
Var standard_normal_log_density(Var z);
// out[b, m, j] = log N(z[b, j]; mean[m, j], exp(log_variance[m, j])).
Var pairwise_gaussian_log_density(Var z, Var mean, Var log_variance);
// cube: [B, M, D], log_weights: [B, M] constant.
// out[b, d] = log sum_m exp(cube[b, m, d] + log_weights[b, m]).
Var weighted_logsumexp(Var cube, const Tensor& log_weights);
// Row-wise Bernoulli log-likelihood from logits, target constant in [0, 1].
// Returns [B, 1].
Var bernoulli_log_likelihood(Var logits, const Tensor& target);

}  // namespace ad
}  // namespace tcvae

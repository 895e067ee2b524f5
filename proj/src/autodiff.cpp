#include "tcvae/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "tcvae/math.hpp"

namespace tcvae {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

ConstMapMatrix as_matrix(const Tensor& t) {
  return ConstMapMatrix(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                        static_cast<Eigen::Index>(t.dim(1)));
}

MapMatrix as_matrix(Tensor& t) {
  return MapMatrix(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                   static_cast<Eigen::Index>(t.dim(1)));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

void require_rank2(Var a, const char* op) {
  require(a.shape().size() == 2, std::string(op) + ": expected rank-2 tensor, got " +
                                     shape_string(a.shape()));
}

// Elementwise unary op with derivative expressed through (x, y).
template <typename F, typename D>
Var unary(const char* name, Var a, F f, D dfdx) {
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(name, std::move(out), {ia}, [ia, dfdx](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value, std::string name) {
  Node n;
  n.op = std::move(name);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value, std::string name) {
  Node n;
  n.op = std::move(name);
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParamStore& store, const std::string& name) {
  Parameter& p = store.get(name);
  Node n;
  n.op = "param:" + name;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, std::vector<std::size_t> parents,
                 BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [&](std::size_t p) { return nodes_[p].requires_grad; });
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("backward: loss from another tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_accumulator(loss.id_)[0] = 1.0;

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.requires_grad) continue;
    if (!n.grad.all_finite()) {
      throw NumericalError("non-finite gradient at node #" + std::to_string(i) +
                           " (" + n.op + ")");
    }
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      Tensor& g = n.param->grad;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

namespace ad {

Var matmul(Var a, Var b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  require(a.shape()[1] == b.shape()[0], "matmul: inner dimension mismatch " +
                                            shape_string(a.shape()) + " x " +
                                            shape_string(b.shape()));
  Tensor out({a.shape()[0], b.shape()[1]});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = as_matrix(t.grad(self));
    if (t.requires_grad(ia)) {
      as_matrix(t.grad_accumulator(ia)).noalias() += g * as_matrix(t.value(ib)).transpose();
    }
    if (t.requires_grad(ib)) {
      as_matrix(t.grad_accumulator(ib)).noalias() += as_matrix(t.value(ia)).transpose() * g;
    }
  });
}

Var add_bias(Var a, Var bias) {
  require_rank2(a, "add_bias");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  require(bias.value().size() == cols, "add_bias: bias length mismatch");
  Tensor out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.value()[c];
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record("add_bias", std::move(out), {ia, ib},
                         [ia, ib, rows, cols](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           if (t.requires_grad(ia)) {
                             Tensor& ga = t.grad_accumulator(ia);
                             for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
                           }
                           if (t.requires_grad(ib)) {
                             Tensor& gb = t.grad_accumulator(ib);
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                             }
                           }
                         });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t p : {ia, ib}) {
      if (!t.requires_grad(p)) continue;
      Tensor& gp = t.grad_accumulator(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_accumulator(ia);
      const Tensor& vb = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_accumulator(ib);
      const Tensor& va = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; },
               [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; },
               [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary("softplus", a, [](double x) { return tcvae::softplus(x); },
               [](double x, double) { return sigmoid(x); });
}

Var clamp(Var a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_last_axis(Var a) {
  require(a.shape().size() >= 1, "sum_last_axis: rank-0 input");
  const std::size_t inner = a.shape().back();
  const std::size_t outer = a.value().size() / std::max<std::size_t>(inner, 1);
  Shape shape = a.shape();
  shape.back() = 1;
  Tensor out(shape);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < outer; ++o) {
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += x[o * inner + k];
    out[o] = s;
  }
  const std::size_t ia = a.id();
  return a.tape().record("sum_last_axis", std::move(out), {ia},
                         [ia, inner, outer](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& ga = t.grad_accumulator(ia);
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t k = 0; k < inner; ++k) ga[o * inner + k] += g[o];
                           }
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  require(begin < end && end <= cols, "slice_cols: bad column range");
  const std::size_t width = end - begin;
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = a.value()[r * cols + begin + c];
  }
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(out), {ia},
                         [ia, rows, cols, begin, width](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& ga = t.grad_accumulator(ia);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < width; ++c) {
                               ga[r * cols + begin + c] += g[r * width + c];
                             }
                           }
                         });
}

Var gaussian_log_density(Var z, Var mean, Var log_variance) {
  require_same_shape(z, mean, "gaussian_log_density");
  require_same_shape(z, log_variance, "gaussian_log_density");
  Tensor out(z.shape());
  const Tensor& zv = z.value();
  const Tensor& mv = mean.value();
  const Tensor& lv = log_variance.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = zv[i] - mv[i];
    out[i] = -0.5 * (kLog2Pi + lv[i] + d * d * std::exp(-lv[i]));
  }
  const std::size_t iz = z.id(), im = mean.id(), il = log_variance.id();
  return z.tape().record("gaussian_log_density", std::move(out), {iz, im, il},
                         [iz, im, il](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           const Tensor& zv = t.value(iz);
                           const Tensor& mv = t.value(im);
                           const Tensor& lv = t.value(il);
                           Tensor* gz = t.requires_grad(iz) ? &t.grad_accumulator(iz) : nullptr;
                           Tensor* gm = t.requires_grad(im) ? &t.grad_accumulator(im) : nullptr;
                           Tensor* gl = t.requires_grad(il) ? &t.grad_accumulator(il) : nullptr;
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double inv_var = std::exp(-lv[i]);
                             const double d = zv[i] - mv[i];
                             if (gz) (*gz)[i] -= g[i] * d * inv_var;
                             if (gm) (*gm)[i] += g[i] * d * inv_var;
                             if (gl) (*gl)[i] += g[i] * 0.5 * (d * d * inv_var - 1.0);
                           }
                         });
}

Var standard_normal_log_density(Var z) {
  return unary("standard_normal_log_density", z,
               [](double x) { return -0.5 * (kLog2Pi + x * x); },
               [](double x, double) { return -x; });
}

Var pairwise_gaussian_log_density(Var z, Var mean, Var log_variance) {
  require_rank2(z, "pairwise_gaussian_log_density");
  require_same_shape(mean, log_variance, "pairwise_gaussian_log_density");
  require_rank2(mean, "pairwise_gaussian_log_density");
  require(z.shape()[1] == mean.shape()[1], "pairwise_gaussian_log_density: latent width mismatch");
  const std::size_t B = z.shape()[0], M = mean.shape()[0], J = z.shape()[1];
  Tensor out({B, M, J});
  const Tensor& zv = z.value();
  const Tensor& mv = mean.value();
  const Tensor& lv = log_variance.value();
  std::vector<double> inv_var(M * J);
  for (std::size_t k = 0; k < M * J; ++k) inv_var[k] = std::exp(-lv[k]);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t m = 0; m < M; ++m) {
      double* o = out.data() + (b * M + m) * J;
      for (std::size_t j = 0; j < J; ++j) {
        const double d = zv[b * J + j] - mv[m * J + j];
        o[j] = -0.5 * (kLog2Pi + lv[m * J + j] + d * d * inv_var[m * J + j]);
      }
    }
  }
  const std::size_t iz = z.id(), im = mean.id(), il = log_variance.id();
  return z.tape().record(
      "pairwise_gaussian_log_density", std::move(out), {iz, im, il},
      [iz, im, il, B, M, J](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& zv = t.value(iz);
        const Tensor& mv = t.value(im);
        const Tensor& lv = t.value(il);
        Tensor* gz = t.requires_grad(iz) ? &t.grad_accumulator(iz) : nullptr;
        Tensor* gm = t.requires_grad(im) ? &t.grad_accumulator(im) : nullptr;
        Tensor* gl = t.requires_grad(il) ? &t.grad_accumulator(il) : nullptr;
        std::vector<double> inv_var(M * J);
        for (std::size_t k = 0; k < M * J; ++k) inv_var[k] = std::exp(-lv[k]);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t m = 0; m < M; ++m) {
            const double* go = g.data() + (b * M + m) * J;
            for (std::size_t j = 0; j < J; ++j) {
              const double d = zv[b * J + j] - mv[m * J + j];
              const double s = d * inv_var[m * J + j];
              if (gz) (*gz)[b * J + j] -= go[j] * s;
              if (gm) (*gm)[m * J + j] += go[j] * s;
              if (gl) (*gl)[m * J + j] += go[j] * 0.5 * (d * s - 1.0);
            }
          }
        }
      });
}

Var weighted_logsumexp(Var cube, const Tensor& log_weights) {
  require(cube.shape().size() == 3, "weighted_logsumexp: cube must be rank 3");
  const std::size_t B = cube.shape()[0], M = cube.shape()[1], D = cube.shape()[2];
  require(log_weights.shape() == Shape{B, M}, "weighted_logsumexp: weight shape " +
                                                 shape_string(log_weights.shape()) +
                                                 " does not match cube " +
                                                 shape_string(cube.shape()));
  Tensor out({B, D});
  const Tensor& x = cube.value();
  // Normalized mixture responsibilities, kept for the backward pass.
  auto resp = std::make_shared<std::vector<double>>(B * M * D);
  std::vector<double> buf(M);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < D; ++d) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < M; ++m) {
        buf[m] = x[(b * M + m) * D + d] + log_weights[b * M + m];
        mx = std::max(mx, buf[m]);
      }
      if (!std::isfinite(mx)) {
        out[b * D + d] = mx;
        continue;
      }
      double acc = 0.0;
      for (std::size_t m = 0; m < M; ++m) acc += (buf[m] = std::exp(buf[m] - mx));
      out[b * D + d] = mx + std::log(acc);
      for (std::size_t m = 0; m < M; ++m) (*resp)[(b * M + m) * D + d] = buf[m] / acc;
    }
  }
  const std::size_t ic = cube.id();
  return cube.tape().record("weighted_logsumexp", std::move(out), {ic},
                            [ic, B, M, D, resp](Tape& t, std::size_t self) {
                              const Tensor& g = t.grad(self);
                              Tensor& gx = t.grad_accumulator(ic);
                              for (std::size_t b = 0; b < B; ++b) {
                                for (std::size_t m = 0; m < M; ++m) {
                                  for (std::size_t d = 0; d < D; ++d) {
                                    const std::size_t k = (b * M + m) * D + d;
                                    gx[k] += g[b * D + d] * (*resp)[k];
                                  }
                                }
                              }
                            });
}

Var bernoulli_log_likelihood(Var logits, const Tensor& target) {
  require_rank2(logits, "bernoulli_log_likelihood");
  require(logits.shape() == target.shape(), "bernoulli_log_likelihood: target shape " +
                                                shape_string(target.shape()) +
                                                " does not match logits " +
                                                shape_string(logits.shape()));
  const std::size_t B = logits.shape()[0], P = logits.shape()[1];
  Tensor out({B, 1});
  const Tensor& l = logits.value();
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double v = l[b * P + p];
      s += target[b * P + p] * v - tcvae::softplus(v);
    }
    out[b] = s;
  }
  const std::size_t il = logits.id();
  return logits.tape().record("bernoulli_log_likelihood", std::move(out), {il},
                              [il, B, P, target](Tape& t, std::size_t self) {
                                const Tensor& g = t.grad(self);
                                const Tensor& l = t.value(il);
                                Tensor& gl = t.grad_accumulator(il);
                                for (std::size_t b = 0; b < B; ++b) {
                                  for (std::size_t p = 0; p < P; ++p) {
                                    const std::size_t k = b * P + p;
                                    gl[k] += g[b] * (target[k] - sigmoid(l[k]));
                                  }
                                }
                              });
}

}  // namespace ad
}  // namespace tcvae

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcvae/tensor.hpp"

namespace tcvae {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

// Named parameters, kept in insertion order (the checkpoint order).
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  void zero_grad();
  std::size_t num_values() const;
  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t steps) { step_count_ = steps; }

  // Flat view of every parameter value, in insertion order.
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

 private:
  std::vector<Parameter> params_;
  std::uint64_t step_count_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update of every parameter from its gradient buffer.
void adam_step(ParamStore& store, const AdamConfig& config);

struct GradientCheckEntry {
  std::string name;
  std::size_t probes = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradientCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-4;
  // Probe at most this many coordinates per parameter (evenly strided).
  std::size_t max_probes_per_param = static_cast<std::size_t>(-1);
};

// Compares the gradients already stored in `store` against central
// differences of `loss`. `loss` must be a pure function of the store values;
// the base point is evaluated twice and std::runtime_error is thrown if the
// two values disagree.
GradientCheckReport finite_difference_check(
    ParamStore& store, const std::function<double()>& loss,
    const GradientCheckOptions& options = {});

}  // namespace tcvae

#include "tcvae/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcvae {

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor(value.shape());
  p.first_moment = Tensor(value.shape());
  p.second_moment = Tensor(value.shape());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("unknown parameter " + name);
}

const Parameter& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("unknown parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_values());
  for (const auto& p : params_) {
    flat.insert(flat.end(), p.value.storage().begin(), p.value.storage().end());
  }
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  if (flat.size() != num_values()) {
    throw std::invalid_argument("parameter count mismatch: expected " +
                                std::to_string(num_values()) + ", got " +
                                std::to_string(flat.size()));
  }
  auto it = flat.begin();
  for (auto& p : params_) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(p.value.size()),
              p.value.storage().begin());
    it += static_cast<std::ptrdiff_t>(p.value.size());
  }
}

void adam_step(ParamStore& store, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("Adam learning rate must be positive");
  }
  store.set_step_count(store.step_count() + 1);
  const double t = static_cast<double>(store.step_count());
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& p : store.params()) {
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = p.first_moment.data();
    double* v = p.second_moment.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

GradientCheckReport finite_difference_check(ParamStore& store,
                                            const std::function<double()>& loss,
                                            const GradientCheckOptions& options) {
  const double base = loss();
  const double again = loss();
  if (base != again) {
    throw std::runtime_error(
        "finite_difference_check: loss is not deterministic (" +
        std::to_string(base) + " vs " + std::to_string(again) + ")");
  }

  GradientCheckReport report;
  for (auto& p : store.params()) {
    GradientCheckEntry entry;
    entry.name = p.name;
    const std::size_t n = p.value.size();
    const std::size_t probes = std::min(n, options.max_probes_per_param);
    const std::size_t stride = probes == 0 ? 1 : std::max<std::size_t>(1, n / probes);
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = std::min(n - 1, k * stride);
      const double original = p.value[i];
      p.value[i] = original + options.step;
      const double plus = loss();
      p.value[i] = original - options.step;
      const double minus = loss();
      p.value[i] = original;

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric),
                                     options.denominator_floor});
      const double err = std::abs(analytic - numeric) / denom;
      ++entry.probes;
      if (err > entry.max_relative_error || !std::isfinite(err)) {
        entry.max_relative_error = std::isfinite(err) ? err : INFINITY;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    entry.passed = entry.max_relative_error <= options.tolerance;
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace tcvae

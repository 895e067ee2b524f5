#include "tcvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tcvae {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

// One latent coordinate's mixture sum_n w_n N(z; mu_n, sigma_n^2).
class DimMixture {
 public:
  DimMixture(std::span<const DiagonalGaussian> posteriors, std::size_t j,
             std::span<const std::size_t> indices, std::span<const double> weights) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      const auto& q = posteriors[indices[i]];
      mean_.push_back(q.mean[j]);
      inv_var_.push_back(std::exp(-q.log_variance[j]));
      offset_.push_back(std::log(weights[i]) - kHalfLog2Pi - 0.5 * q.log_variance[j]);
    }
  }

  double log_density(double z) const {
    double best = kNegInf;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double d = z - mean_[i];
      best = std::max(best, offset_[i] - 0.5 * d * d * inv_var_[i]);
    }
    if (!std::isfinite(best)) return best;
    double acc = 0.0;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double d = z - mean_[i];
      acc += std::exp(offset_[i] - 0.5 * d * d * inv_var_[i] - best);
    }
    return best + std::log(acc);
  }

 private:
  std::vector<double> mean_, inv_var_, offset_;
};

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void check_posteriors(std::span<const DiagonalGaussian> posteriors, std::size_t n) {
  if (posteriors.empty()) throw std::invalid_argument("metrics: empty posterior list");
  if (posteriors.size() != n) {
    throw std::invalid_argument("metrics: posterior count " + std::to_string(posteriors.size()) +
                                " does not match dataset size " + std::to_string(n));
  }
}

double sample_coordinate(const DiagonalGaussian& q, std::size_t j, RngStream& rng) {
  return q.mean[j] + std::exp(0.5 * q.log_variance[j]) * rng.normal();
}

// Factors whose marginal puts mass on at least two levels.
std::vector<std::size_t> informative_factors(const RenderedDataset& data) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < data.num_factors(); ++k) {
    const auto m = data.joint.marginal(k);
    if (std::count_if(m.begin(), m.end(), [](double p) { return p > 0.0; }) >= 2) out.push_back(k);
  }
  return out;
}

// Samplers for v_k ~ p(v_k) and n ~ p(n | v_k) for one factor.
struct FactorSampler {
  IndexSampler level;
  std::vector<ConditionalIndexDistribution> conditionals;
  std::vector<IndexSampler> within;

  FactorSampler(const RenderedDataset& data, std::size_t k)
      : level(data.joint.marginal(k)) {
    const auto m = data.joint.marginal(k);
    for (std::size_t v = 0; v < m.size(); ++v) {
      if (m[v] > 0.0) {
        conditionals.push_back(conditional_index_distribution_by_level(data, k, v));
      } else {
        conditionals.push_back({{0}, {1.0}});
      }
      within.emplace_back(conditionals.back().weights);
    }
  }

  std::size_t draw_level(RngStream& rng) const { return level(rng); }
  std::size_t draw_index(std::size_t v, RngStream& rng) const {
    return conditionals[v].indices[within[v](rng)];
  }
};

}  // namespace

double discrete_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double discrete_mutual_information(std::span<const double> joint, std::size_t rows,
                                   std::size_t cols) {
  if (joint.size() != rows * cols) {
    throw std::invalid_argument("discrete_mutual_information: table size mismatch");
  }
  std::vector<double> pr(rows, 0.0), pc(cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = joint[r * cols + c];
      if (p < 0.0) throw std::invalid_argument("discrete_mutual_information: negative entry");
      pr[r] += p;
      pc[c] += p;
      total += p;
    }
  }
  double mi = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = joint[r * cols + c] / total;
      if (p > 0.0) mi += p * std::log(p / (pr[r] / total * pc[c] / total));
    }
  }
  return mi;
}

std::pair<double, double> estimate_latent_entropy(std::span<const DiagonalGaussian> posteriors,
                                                  std::span<const double> index_probabilities,
                                                  std::size_t j, RngStream& rng,
                                                  std::size_t samples) {
  if (samples < 10000) {
    throw std::invalid_argument("estimate_latent_entropy: need at least 10000 samples");
  }
  if (posteriors.empty() || posteriors.size() != index_probabilities.size()) {
    throw std::invalid_argument("estimate_latent_entropy: posterior/probability size mismatch");
  }
  if (j >= posteriors.front().dim()) throw std::out_of_range("estimate_latent_entropy: bad latent");
  const auto all = iota_indices(posteriors.size());
  const DimMixture mix(posteriors, j, all, index_probabilities);
  const std::size_t support = static_cast<std::size_t>(std::count_if(
      index_probabilities.begin(), index_probabilities.end(), [](double p) { return p > 0.0; }));
  const std::size_t per = std::max<std::size_t>(2, (samples + support - 1) / support);
  double h = 0.0, var = 0.0;
  for (std::size_t n = 0; n < posteriors.size(); ++n) {
    const double pn = index_probabilities[n];
    if (pn <= 0.0) continue;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t s = 0; s < per; ++s) {
      const double v = -mix.log_density(sample_coordinate(posteriors[n], j, rng));
      s1 += v;
      s2 += v * v;
    }
    const double mean = s1 / double(per);
    const double sv = std::max(0.0, (s2 - double(per) * mean * mean) / double(per - 1));
    h += pn * mean;
    var += pn * pn * sv / double(per);
  }
  return {h, std::sqrt(var)};
}

std::vector<std::pair<double, double>> estimate_mi(std::span<const DiagonalGaussian> posteriors,
                                                   const RenderedDataset& data, std::size_t k,
                                                   RngStream& rng,
                                                   std::size_t samples_per_value) {
  check_posteriors(posteriors, data.size());
  if (k >= data.num_factors()) throw std::out_of_range("estimate_mi: factor out of range");
  if (samples_per_value < 2) throw std::invalid_argument("estimate_mi: need >= 2 samples");
  const std::size_t J = posteriors.front().dim();
  const auto& pn = data.index_probabilities();
  const auto all = iota_indices(posteriors.size());
  std::vector<DimMixture> marginal;
  for (std::size_t j = 0; j < J; ++j) marginal.emplace_back(posteriors, j, all, pn);

  const auto pv = data.joint.marginal(k);
  std::vector<double> mi(J, 0.0), var(J, 0.0);
  for (std::size_t v = 0; v < pv.size(); ++v) {
    if (pv[v] <= 0.0) continue;
    const auto cond = conditional_index_distribution_by_level(data, k, v);
    if (cond.indices.empty()) throw std::invalid_argument("estimate_mi: empty X_v");
    const IndexSampler pick(cond.weights);
    std::vector<DimMixture> conditional;
    for (std::size_t j = 0; j < J; ++j) {
      conditional.emplace_back(posteriors, j, cond.indices, cond.weights);
    }
    std::vector<double> s1(J, 0.0), s2(J, 0.0);
    for (std::size_t s = 0; s < samples_per_value; ++s) {
      const auto& q = posteriors[cond.indices[pick(rng)]];
      for (std::size_t j = 0; j < J; ++j) {
        const double z = sample_coordinate(q, j, rng);
        const double d = conditional[j].log_density(z) - marginal[j].log_density(z);
        s1[j] += d;
        s2[j] += d * d;
      }
    }
    const double S = double(samples_per_value);
    for (std::size_t j = 0; j < J; ++j) {
      const double mean = s1[j] / S;
      const double sv = std::max(0.0, (s2[j] - S * mean * mean) / (S - 1.0));
      mi[j] += pv[v] * mean;
      var[j] += pv[v] * pv[v] * sv / S;
    }
  }
  std::vector<std::pair<double, double>> out(J);
  for (std::size_t j = 0; j < J; ++j) out[j] = {mi[j], std::sqrt(var[j])};
  return out;
}

MigReport mig_from_mi_matrix(const MIEstimateMatrix& matrix,
                             std::span<const std::string> factor_names) {
  const std::size_t K = matrix.num_factors, J = matrix.num_latents;
  if (J < 2) throw std::invalid_argument("MIG needs at least two latents");
  if (K == 0) throw std::invalid_argument("MIG needs at least one factor");
  if (matrix.mi.size() != K * J || matrix.h_factors.size() != K) {
    throw std::invalid_argument("mig_from_mi_matrix: inconsistent matrix shape");
  }
  const bool have_se = matrix.mi_stderr.size() == K * J;
  MigReport r;
  r.matrix = matrix;
  double gap_sum = 0.0, var_sum = 0.0, top_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < K; ++k) {
    MigFactorEntry e;
    e.factor = k < factor_names.size() ? factor_names[k] : "v" + std::to_string(k);
    const double h = matrix.h_factors[k];
    if (!(h > 0.0)) {
      e.excluded = true;
      r.warnings.push_back("factor '" + e.factor +
                           "' has a single realized value; excluded from MIG");
      r.per_factor.push_back(e);
      continue;
    }
    std::size_t top = 0;
    for (std::size_t j = 1; j < J; ++j) {
      if (matrix.at(k, j) > matrix.at(k, top)) top = j;
    }
    for (std::size_t j = top + 1; j < J; ++j) {
      if (matrix.at(k, j) == matrix.at(k, top)) e.tie_broken = true;
    }
    std::size_t second = top == 0 ? 1 : 0;
    for (std::size_t j = 0; j < J; ++j) {
      if (j != top && matrix.at(k, j) > matrix.at(k, second)) second = j;
    }
    e.top_latent = top;
    e.runnerup_latent = second;
    e.top_mi_norm = matrix.at(k, top) / h;
    e.runnerup_mi_norm = matrix.at(k, second) / h;
    e.gap = e.top_mi_norm - e.runnerup_mi_norm;
    if (have_se) {
      e.gap_stderr = std::hypot(matrix.stderr_at(k, top), matrix.stderr_at(k, second)) / h;
    }
    if (e.tie_broken) ++r.tie_break_events;
    gap_sum += e.gap;
    var_sum += e.gap_stderr * e.gap_stderr;
    top_sum += e.top_mi_norm;
    ++used;
    r.per_factor.push_back(e);
  }
  if (used == 0) {
    throw std::invalid_argument("MIG undefined: every factor has zero entropy");
  }
  r.mig = gap_sum / double(used);
  r.mig_stderr = std::sqrt(var_sum) / double(used);
  r.avg_max_mi = top_sum / double(used);
  return r;
}

MigReport compute_mig(std::span<const DiagonalGaussian> posteriors, const RenderedDataset& data,
                      RngStream& rng, const MigOptions& options) {
  check_posteriors(posteriors, data.size());
  const std::size_t K = data.num_factors(), J = posteriors.front().dim();
  if (J < 2) throw std::invalid_argument("MIG needs at least two latents");
  const std::uint64_t base_seed = rng.next_u64();
  const RngStream base(base_seed);

  MIEstimateMatrix m;
  m.num_factors = K;
  m.num_latents = J;
  m.mi.assign(K * J, 0.0);
  m.mi_stderr.assign(K * J, 0.0);
  m.samples_per_value = options.samples_per_value;
  m.entropy_samples = options.entropy_samples;
  for (std::size_t k = 0; k < K; ++k) {
    m.h_factors.push_back(discrete_entropy(data.joint.marginal(k)));
  }
  for (std::size_t j = 0; j < J; ++j) {
    RngStream s = base.split(1000 + j);
    const auto [h, se] =
        estimate_latent_entropy(posteriors, data.index_probabilities(), j, s, options.entropy_samples);
    m.h_latents.push_back(h);
    m.h_latents_stderr.push_back(se);
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!(m.h_factors[k] > 0.0)) continue;
    RngStream s = base.split(k);
    const auto cells = estimate_mi(posteriors, data, k, s, options.samples_per_value);
    for (std::size_t j = 0; j < J; ++j) {
      m.mi[k * J + j] = cells[j].first;
      m.mi_stderr[k * J + j] = cells[j].second;
    }
  }
  std::vector<std::string> names;
  for (const auto& f : data.factors) names.push_back(f.name);
  MigReport r = mig_from_mi_matrix(m, names);
  r.seed = base_seed;
  return r;
}

MigReport compute_mig(const VaeModel& model, const RenderedDataset& data, RngStream& rng,
                      const MigOptions& options) {
  const auto posteriors = model.encode_all(data.images);
  return compute_mig(posteriors, data, rng, options);
}

nlohmann::json to_json(const MigReport& r) {
  using nlohmann::json;
  const auto& m = r.matrix;
  json mi = json::array(), se = json::array();
  for (std::size_t k = 0; k < m.num_factors; ++k) {
    json row = json::array(), srow = json::array();
    for (std::size_t j = 0; j < m.num_latents; ++j) {
      row.push_back(m.at(k, j));
      srow.push_back(m.mi_stderr.empty() ? 0.0 : m.stderr_at(k, j));
    }
    mi.push_back(row);
    se.push_back(srow);
  }
  json per = json::array();
  for (const auto& e : r.per_factor) {
    json f = {{"factor", e.factor},
              {"top_latent", e.top_latent},
              {"runnerup_latent", e.runnerup_latent},
              {"top_mi_norm", e.top_mi_norm},
              {"runnerup_mi_norm", e.runnerup_mi_norm},
              {"gap", e.gap},
              {"gap_stderr", e.gap_stderr},
              {"tie_broken", e.tie_broken},
              {"excluded", e.excluded}};
    per.push_back(f);
  }
  return json{{"mi_matrix", mi},
              {"mi_stderr", se},
              {"h_factors", m.h_factors},
              {"h_latents", m.h_latents},
              {"h_latents_stderr", m.h_latents_stderr},
              {"per_factor", per},
              {"mig", r.mig},
              {"mig_stderr", r.mig_stderr},
              {"avg_max_mi", r.avg_max_mi},
              {"sample_counts",
               {{"samples_per_value", m.samples_per_value}, {"entropy_samples", m.entropy_samples}}},
              {"tie_break_rule", "lowest latent index"},
              {"tie_break_events", r.tie_break_events},
              {"warnings", r.warnings},
              {"seed", r.seed}};
}

namespace {

struct LabeledFeatures {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
};

LabeledFeatures higgins_points(std::span<const DiagonalGaussian> posteriors,
                               const std::vector<FactorSampler>& samplers,
                               std::size_t count, std::size_t L, RngStream& rng) {
  const std::size_t J = posteriors.front().dim();
  LabeledFeatures out;
  for (std::size_t p = 0; p < count; ++p) {
    const std::size_t c = rng.below(samplers.size());
    std::vector<double> f(J, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t v = samplers[c].draw_level(rng);
      const auto& q1 = posteriors[samplers[c].draw_index(v, rng)];
      const auto& q2 = posteriors[samplers[c].draw_index(v, rng)];
      for (std::size_t j = 0; j < J; ++j) {
        f[j] += std::abs(sample_coordinate(q1, j, rng) - sample_coordinate(q2, j, rng));
      }
    }
    for (double& v : f) v /= double(L);
    out.x.push_back(std::move(f));
    out.y.push_back(c);
  }
  return out;
}

// Multinomial logistic regression trained by full-batch Adam.
class SoftmaxClassifier {
 public:
  SoftmaxClassifier(std::size_t inputs, std::size_t classes)
      : d_(inputs), c_(classes), w_((inputs + 1) * classes, 0.0) {}

  void fit(const LabeledFeatures& data, std::size_t steps, double lr) {
    const std::size_t P = w_.size();
    std::vector<double> m(P, 0.0), v(P, 0.0), g(P);
    std::vector<double> prob(c_);
    for (std::size_t t = 1; t <= steps; ++t) {
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = 0; i < data.x.size(); ++i) {
        probabilities(data.x[i], prob);
        prob[data.y[i]] -= 1.0;
        for (std::size_t c = 0; c < c_; ++c) {
          for (std::size_t j = 0; j < d_; ++j) g[c * (d_ + 1) + j] += prob[c] * data.x[i][j];
          g[c * (d_ + 1) + d_] += prob[c];
        }
      }
      const double inv = 1.0 / double(data.x.size());
      const double b1 = 1.0 - std::pow(0.9, double(t)), b2 = 1.0 - std::pow(0.999, double(t));
      for (std::size_t p = 0; p < P; ++p) {
        const double gp = g[p] * inv;
        m[p] = 0.9 * m[p] + 0.1 * gp;
        v[p] = 0.999 * v[p] + 0.001 * gp * gp;
        w_[p] -= lr * (m[p] / b1) / (std::sqrt(v[p] / b2) + 1e-8);
      }
    }
  }

  std::size_t predict(const std::vector<double>& x) const {
    std::vector<double> prob(c_);
    probabilities(x, prob);
    return static_cast<std::size_t>(std::max_element(prob.begin(), prob.end()) - prob.begin());
  }

  double accuracy(const LabeledFeatures& data) const {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.x.size(); ++i) hit += predict(data.x[i]) == data.y[i];
    return double(hit) / double(data.x.size());
  }

 private:
  void probabilities(const std::vector<double>& x, std::vector<double>& out) const {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < c_; ++c) {
      double a = w_[c * (d_ + 1) + d_];
      for (std::size_t j = 0; j < d_; ++j) a += w_[c * (d_ + 1) + j] * x[j];
      out[c] = a;
      mx = std::max(mx, a);
    }
    double z = 0.0;
    for (double& a : out) z += (a = std::exp(a - mx));
    for (double& a : out) a /= z;
  }

  std::size_t d_, c_;
  std::vector<double> w_;
};

std::vector<FactorSampler> classifier_samplers(const RenderedDataset& data, const char* who) {
  const auto ks = informative_factors(data);
  if (ks.size() < 2) {
    throw std::invalid_argument(std::string(who) +
                                ": needs at least two factors with two or more values");
  }
  std::vector<FactorSampler> out;
  for (std::size_t k : ks) out.emplace_back(data, k);
  return out;
}

}  // namespace

HigginsResult higgins_metric(std::span<const DiagonalGaussian> posteriors,
                             const RenderedDataset& data, const HigginsConfig& config,
                             RngStream& rng) {
  check_posteriors(posteriors, data.size());
  if (config.L < 1) throw std::invalid_argument("higgins_metric: L must be >= 1");
  if (config.num_train == 0 || config.num_test == 0) {
    throw std::invalid_argument("higgins_metric: empty train or test set");
  }
  const auto samplers = classifier_samplers(data, "higgins_metric");
  auto train = higgins_points(posteriors, samplers, config.num_train, config.L, rng);
  auto test = higgins_points(posteriors, samplers, config.num_test, config.L, rng);

  const std::size_t J = posteriors.front().dim();
  std::vector<double> mu(J, 0.0), sd(J, 0.0);
  for (const auto& f : train.x) {
    for (std::size_t j = 0; j < J; ++j) mu[j] += f[j];
  }
  for (double& v : mu) v /= double(train.x.size());
  for (const auto& f : train.x) {
    for (std::size_t j = 0; j < J; ++j) sd[j] += (f[j] - mu[j]) * (f[j] - mu[j]);
  }
  for (double& v : sd) {
    v = std::sqrt(v / double(train.x.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  for (auto* set : {&train, &test}) {
    for (auto& f : set->x) {
      for (std::size_t j = 0; j < J; ++j) f[j] = (f[j] - mu[j]) / sd[j];
    }
  }

  SoftmaxClassifier clf(J, samplers.size());
  clf.fit(train, config.classifier_steps, config.learning_rate);
  HigginsResult r;
  r.accuracy = clf.accuracy(test);
  r.train_accuracy = clf.accuracy(train);
  r.L = config.L;
  r.num_test = config.num_test;
  return r;
}

HigginsResult higgins_metric(const VaeModel& model, const RenderedDataset& data,
                             const HigginsConfig& config, RngStream& rng) {
  const auto posteriors = model.encode_all(data.images);
  return higgins_metric(posteriors, data, config, rng);
}

KimMnihResult kim_mnih_metric(std::span<const DiagonalGaussian> posteriors,
                              const RenderedDataset& data, const KimMnihConfig& config,
                              RngStream& rng) {
  check_posteriors(posteriors, data.size());
  if (config.batch_size < 2) throw std::invalid_argument("kim_mnih_metric: batch_size must be >= 2");
  if (config.num_train == 0 || config.num_test == 0) {
    throw std::invalid_argument("kim_mnih_metric: empty train or test set");
  }
  const auto samplers = classifier_samplers(data, "kim_mnih_metric");
  const std::size_t J = posteriors.front().dim();

  KimMnihResult r;
  {
    const IndexSampler pick(data.index_probabilities());
    std::vector<double> s1(J, 0.0), s2(J, 0.0);
    for (std::size_t s = 0; s < config.scale_samples; ++s) {
      const auto& q = posteriors[pick(rng)];
      for (std::size_t j = 0; j < J; ++j) {
        const double z = sample_coordinate(q, j, rng);
        s1[j] += z;
        s2[j] += z * z;
      }
    }
    const double S = double(config.scale_samples);
    for (std::size_t j = 0; j < J; ++j) {
      const double mean = s1[j] / S;
      r.latent_scale.push_back(std::sqrt(std::max(0.0, s2[j] / S - mean * mean)));
    }
  }
  if (std::none_of(r.latent_scale.begin(), r.latent_scale.end(),
                   [](double s) { return s > 1e-12; })) {
    throw std::invalid_argument("kim_mnih_metric: every latent is collapsed (zero variance)");
  }

  auto vote = [&](std::size_t c) {
    std::vector<double> s1(J, 0.0), s2(J, 0.0);
    const std::size_t v = samplers[c].draw_level(rng);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& q = posteriors[samplers[c].draw_index(v, rng)];
      for (std::size_t j = 0; j < J; ++j) {
        const double z = sample_coordinate(q, j, rng) / std::max(r.latent_scale[j], 1e-300);
        s1[j] += z;
        s2[j] += z * z;
      }
    }
    std::size_t best = J;
    double best_var = std::numeric_limits<double>::infinity();
    const double B = double(config.batch_size);
    for (std::size_t j = 0; j < J; ++j) {
      if (!(r.latent_scale[j] > 1e-12)) continue;
      const double mean = s1[j] / B;
      const double var = (s2[j] - B * mean * mean) / (B - 1.0);
      if (var < best_var) {
        best_var = var;
        best = j;
      }
    }
    return best;
  };

  const std::size_t C = samplers.size();
  std::vector<std::size_t> counts(J * C, 0);
  for (std::size_t p = 0; p < config.num_train; ++p) {
    const std::size_t c = rng.below(C);
    ++counts[vote(c) * C + c];
  }
  r.vote_to_factor.assign(J, 0);
  for (std::size_t j = 0; j < J; ++j) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (counts[j * C + c] > counts[j * C + best]) best = c;
    }
    r.vote_to_factor[j] = best;
  }
  std::size_t hit = 0;
  for (std::size_t p = 0; p < config.num_test; ++p) {
    const std::size_t c = rng.below(C);
    hit += r.vote_to_factor[vote(c)] == c;
  }
  r.accuracy = double(hit) / double(config.num_test);
  r.num_test = config.num_test;
  return r;
}

KimMnihResult kim_mnih_metric(const VaeModel& model, const RenderedDataset& data,
                              const KimMnihConfig& config, RngStream& rng) {
  const auto posteriors = model.encode_all(data.images);
  return kim_mnih_metric(posteriors, data, config, rng);
}

}  // namespace tcvae

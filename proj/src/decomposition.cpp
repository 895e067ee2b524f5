#include "tcvae/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "tcvae/math.hpp"

namespace tcvae {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Running mean and variance per stratum.
struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / double(n) : 0.0; }
  double variance() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (sum_sq - double(n) * m * m) / double(n - 1));
  }
};

// Equal-weight stratified combination: mean of stratum means, and its
// standard error sqrt(sum var_s / n_s) / S.
struct Stratified {
  std::vector<Accumulator> strata;
  explicit Stratified(std::size_t s) : strata(s) {}
  double mean() const {
    double m = 0.0;
    for (const auto& a : strata) m += a.mean();
    return m / double(strata.size());
  }
  double stderr_() const {
    double v = 0.0;
    for (const auto& a : strata) {
      if (a.n) v += a.variance() / double(a.n);
    }
    return std::sqrt(v) / double(strata.size());
  }
};

void check_posteriors(std::span<const DiagonalGaussian> posteriors, const char* what) {
  require(!posteriors.empty(), std::string(what) + ": empty posterior list");
  const std::size_t J = posteriors.front().dim();
  for (const auto& q : posteriors) {
    require(q.dim() == J, std::string(what) + ": posteriors have differing latent widths");
  }
}

}  // namespace

std::string to_string(Estimator e) { return e == Estimator::kMws ? "mws" : "mss"; }

Estimator parse_estimator(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "mws") return Estimator::kMws;
  if (lower == "mss") return Estimator::kMss;
  throw std::invalid_argument("unknown estimator '" + name + "' (expected mws or mss)");
}

GaussianMixture::GaussianMixture(std::span<const DiagonalGaussian> components,
                                 std::vector<double> log_weights)
    : n_(components.size()), log_weights_(std::move(log_weights)) {
  check_posteriors(components, "GaussianMixture");
  dim_ = components.front().dim();
  if (log_weights_.empty()) {
    log_weights_.assign(n_, -std::log(double(n_)));
  }
  require(log_weights_.size() == n_, "GaussianMixture: weight count mismatch");
  mean_.resize(n_ * dim_);
  inv_var_.resize(n_ * dim_);
  log_norm_.resize(n_ * dim_);
  for (std::size_t n = 0; n < n_; ++n) {
    for (std::size_t j = 0; j < dim_; ++j) {
      const double lv = components[n].log_variance[j];
      mean_[n * dim_ + j] = components[n].mean[j];
      inv_var_[n * dim_ + j] = std::exp(-lv);
      log_norm_[n * dim_ + j] = -0.5 * (kLog2Pi + lv);
    }
  }
}

void GaussianMixture::evaluate(std::span<const double> z, double& joint,
                               std::span<double> marginals) const {
  require(z.size() == dim_ && marginals.size() == dim_, "GaussianMixture: length mismatch");
  std::vector<double> joint_terms(n_);
  std::vector<double> dim_terms(n_ * dim_);
  for (std::size_t n = 0; n < n_; ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const std::size_t k = n * dim_ + j;
      const double d = z[j] - mean_[k];
      const double v = log_norm_[k] - 0.5 * d * d * inv_var_[k];
      dim_terms[j * n_ + n] = v + log_weights_[n];
      s += v;
    }
    joint_terms[n] = s + log_weights_[n];
  }
  joint = logsumexp(joint_terms);
  for (std::size_t j = 0; j < dim_; ++j) {
    marginals[j] = logsumexp(std::span<const double>(dim_terms).subspan(j * n_, n_));
  }
}

double GaussianMixture::log_density(std::span<const double> z) const {
  double joint = 0.0;
  std::vector<double> marginals(dim_);
  evaluate(z, joint, marginals);
  return joint;
}

std::vector<double> GaussianMixture::marginal_log_densities(std::span<const double> z) const {
  double joint = 0.0;
  std::vector<double> marginals(dim_);
  evaluate(z, joint, marginals);
  return marginals;
}

double exact_aggregated_posterior_logdensity(std::span<const double> z,
                                             std::span<const DiagonalGaussian> posteriors) {
  check_posteriors(posteriors, "exact_aggregated_posterior_logdensity");
  std::vector<double> terms(posteriors.size());
  for (std::size_t n = 0; n < posteriors.size(); ++n) terms[n] = log_density(z, posteriors[n]);
  return logsumexp(terms) - std::log(double(posteriors.size()));
}

nlohmann::json to_json(const DecompositionEstimate& e) {
  nlohmann::json j;
  j["method"] = e.method;
  j["index_code_mi"] = e.index_code_mi;
  j["total_correlation"] = e.total_correlation;
  j["dimension_wise_kl"] = e.dimension_wise_kl;
  j["mc_stderr"] = {{"index_code_mi", e.index_code_mi_stderr},
                    {"total_correlation", e.total_correlation_stderr},
                    {"dimension_wise_kl", e.dimension_wise_kl_stderr},
                    {"total_kl", e.total_kl_stderr},
                    {"log_qz", e.log_qz_stderr}};
  j["total_kl"] = e.total_kl;
  j["log_qz"] = e.log_qz;
  j["num_samples"] = e.num_samples;
  if (e.batch_size) j["batch_size"] = e.batch_size;
  return j;
}

DecompositionEstimate exact_decomposition(std::span<const DiagonalGaussian> posteriors,
                                          RngStream& rng, std::size_t num_mc_samples) {
  check_posteriors(posteriors, "exact_decomposition");
  const std::size_t N = posteriors.size();
  const std::size_t J = posteriors.front().dim();
  if (N > kExactOracleMaxN) {
    throw std::invalid_argument("exact_decomposition: N = " + std::to_string(N) +
                                " exceeds the exact-oracle limit " +
                                std::to_string(kExactOracleMaxN));
  }
  if (num_mc_samples < kMinMonteCarloSamples) {
    throw std::invalid_argument("exact_decomposition: need at least " +
                                std::to_string(kMinMonteCarloSamples) + " samples");
  }
  const std::size_t per_stratum = std::max<std::size_t>(2, (num_mc_samples + N - 1) / N);

  GaussianMixture mixture(posteriors);
  Stratified mi(N), tc(N), dwkl(N), total(N), lqz(N);
  std::vector<double> eps(J), z(J), marginals(J);
  for (std::size_t n = 0; n < N; ++n) {
    const DiagonalGaussian& q = posteriors[n];
    for (std::size_t s = 0; s < per_stratum; ++s) {
      fill_standard_normal(rng, eps);
      for (std::size_t j = 0; j < J; ++j) z[j] = q.mean[j] + std::exp(0.5 * q.log_variance[j]) * eps[j];
      double log_q = 0.0;
      mixture.evaluate(z, log_q, marginals);
      const double log_own = log_density(z, q);
      const double log_prod = std::accumulate(marginals.begin(), marginals.end(), 0.0);
      const double log_prior = standard_normal_log_density(z);
      mi.strata[n].add(log_own - log_q);
      tc.strata[n].add(log_q - log_prod);
      dwkl.strata[n].add(log_prod - log_prior);
      total.strata[n].add(log_own - log_prior);
      lqz.strata[n].add(log_q);
    }
  }

  DecompositionEstimate e;
  e.method = "exact";
  e.index_code_mi = mi.mean();
  e.total_correlation = tc.mean();
  e.dimension_wise_kl = dwkl.mean();
  e.index_code_mi_stderr = mi.stderr_();
  e.total_correlation_stderr = tc.stderr_();
  e.dimension_wise_kl_stderr = dwkl.stderr_();
  e.total_kl = total.mean();
  e.total_kl_stderr = total.stderr_();
  e.log_qz = lqz.mean();
  e.log_qz_stderr = lqz.stderr_();
  e.num_samples = per_stratum * N;
  return e;
}

MinibatchLatents make_minibatch_latents(const Tensor& z,
                                        std::span<const DiagonalGaussian> batch_posteriors,
                                        std::vector<std::size_t> indices,
                                        std::size_t dataset_size) {
  require(z.rank() == 2, "make_minibatch_latents: z must be [B, J]");
  const std::size_t B = z.dim(0), J = z.dim(1);
  require(batch_posteriors.size() == B && indices.size() == B,
          "make_minibatch_latents: batch size mismatch");
  require(B >= 1, "make_minibatch_latents: empty batch");
  for (const auto& q : batch_posteriors) {
    require(q.dim() == J, "make_minibatch_latents: latent width mismatch");
  }
  for (std::size_t n : indices) {
    require(n < dataset_size, "make_minibatch_latents: index outside dataset");
  }
  MinibatchLatents batch;
  batch.dataset_size = dataset_size;
  batch.indices = std::move(indices);
  batch.z = z;
  batch.log_density = Tensor({B, B});
  batch.log_density_per_dim = Tensor({B, B, J});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < B; ++k) {
      const auto per_dim = log_density_per_dimension(z.row(i), batch_posteriors[k]);
      double s = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        batch.log_density_per_dim[(i * B + k) * J + j] = per_dim[j];
        s += per_dim[j];
      }
      batch.log_density.at(i, k) = s;
    }
  }
  return batch;
}

Tensor mws_log_weights(std::size_t batch_size, std::size_t dataset_size) {
  require(batch_size >= 1, "MWS: empty batch");
  require(dataset_size >= batch_size, "MWS: dataset size N = " + std::to_string(dataset_size) +
                                          " is smaller than batch size M = " +
                                          std::to_string(batch_size));
  return Tensor({batch_size, batch_size},
                -std::log(double(dataset_size) * double(batch_size)));
}

Tensor mss_log_weights(std::size_t batch_size, std::size_t dataset_size) {
  require(batch_size >= 2, "MSS: batch needs at least two indices");
  const std::size_t M = batch_size - 1;
  require(M < dataset_size, "MSS: estimation set size M = " + std::to_string(M) +
                                " must be below N = " + std::to_string(dataset_size));
  const double N = double(dataset_size), m = double(M);
  Tensor w({batch_size, batch_size}, -std::log(m));
  const double strat = std::log((N - m) / (N * m));
  for (std::size_t i = 0; i < batch_size; ++i) {
    w.at(i, i) = -std::log(N);
    w.at(i, (i + 1) % batch_size) = strat;
  }
  return w;
}

namespace {

void check_distinct(const std::vector<std::size_t>& indices) {
  std::set<std::size_t> seen(indices.begin(), indices.end());
  require(seen.size() == indices.size(), "MSS: minibatch contains duplicate indices");
}

Tensor log_weights_for(const MinibatchLatents& batch, Estimator estimator) {
  if (estimator == Estimator::kMws) return mws_log_weights(batch.batch_size(), batch.dataset_size);
  check_distinct(batch.indices);
  return mss_log_weights(batch.batch_size(), batch.dataset_size);
}

}  // namespace

std::vector<double> estimate_log_qz(const MinibatchLatents& batch, Estimator estimator) {
  const Tensor w = log_weights_for(batch, estimator);
  const std::size_t B = batch.batch_size();
  std::vector<double> out(B), terms(B);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < B; ++k) terms[k] = batch.log_density.at(i, k) + w.at(i, k);
    out[i] = logsumexp(terms);
  }
  return out;
}

std::vector<double> mws_log_qz(const MinibatchLatents& batch) {
  return estimate_log_qz(batch, Estimator::kMws);
}

std::vector<double> mss_log_qz(const MinibatchLatents& batch) {
  return estimate_log_qz(batch, Estimator::kMss);
}

Tensor per_dimension_log_marginals(const MinibatchLatents& batch, Estimator estimator) {
  const Tensor w = log_weights_for(batch, estimator);
  const std::size_t B = batch.batch_size(), J = batch.latent_dim();
  Tensor out({B, J});
  std::vector<double> terms(B);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t k = 0; k < B; ++k) {
        terms[k] = batch.log_density_per_dim[(i * B + k) * J + j] + w.at(i, k);
      }
      out.at(i, j) = logsumexp(terms);
    }
  }
  return out;
}

double mss_log_f(double log_own, std::span<const double> log_others, std::size_t m,
                 std::size_t dataset_size) {
  const std::size_t N = dataset_size;
  require(m >= 1 && N >= 1, "mss_log_f: M and N must be positive");
  require(m <= N, "mss_log_f: M = " + std::to_string(m) + " exceeds N = " + std::to_string(N));
  const std::size_t expected = (m == N) ? N - 1 : m;
  require(log_others.size() == expected,
          "mss_log_f: expected " + std::to_string(expected) + " other indices, got " +
              std::to_string(log_others.size()));
  const double Nd = double(N), md = double(m);
  std::vector<double> terms;
  terms.reserve(m + 1);
  terms.push_back(log_own - std::log(Nd));
  const std::size_t head = std::min(m - 1, log_others.size());
  for (std::size_t k = 0; k < head; ++k) terms.push_back(log_others[k] - std::log(md));
  if (m < N) terms.push_back(log_others[m - 1] + std::log((Nd - md) / (Nd * md)));
  return logsumexp(terms);
}

namespace {

struct ForwardPass {
  VaeModel::EncoderOutput enc;
  Var z;
  Var reconstruction;  // [B, 1]
};

ForwardPass run_forward(Tape& tape, VaeModel& model, const Tensor& x_batch,
                        const Tensor& epsilon) {
  require(x_batch.rank() == 2 && x_batch.dim(1) == model.input_dim(),
          "loss: batch must be [B, " + std::to_string(model.input_dim()) + "]");
  require(epsilon.shape() == Shape{x_batch.dim(0), model.latent_dim()},
          "loss: epsilon must be [B, J]");
  for (double v : x_batch.values()) {
    require(v >= 0.0 && v <= 1.0, "loss: pixel values must lie in [0, 1]");
  }
  ForwardPass f;
  Var x = tape.constant(x_batch, "x");
  f.enc = model.encoder_forward(tape, x);
  Var eps = tape.constant(epsilon, "epsilon");
  Var std_dev = ad::exp(ad::scale(f.enc.log_variance, 0.5));
  f.z = ad::add(f.enc.mean, ad::mul(std_dev, eps));
  Var logits = model.decoder_forward(tape, f.z);
  f.reconstruction = ad::bernoulli_log_likelihood(logits, x_batch);
  return f;
}

}  // namespace

LossResult beta_tcvae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch,
                           std::span<const std::size_t> indices, std::size_t dataset_size,
                           const DecompositionWeights& weights, Estimator estimator,
                           const Tensor& epsilon) {
  const std::size_t B = x_batch.rank() == 2 ? x_batch.dim(0) : 0;
  require(B >= 2, "beta_tcvae_loss: batch size must be at least 2");
  require(indices.size() == B, "beta_tcvae_loss: index count must match batch size");
  for (double w : {weights.alpha, weights.beta, weights.gamma}) {
    require(std::isfinite(w), "beta_tcvae_loss: weights must be finite");
  }
  Tensor log_w;
  if (estimator == Estimator::kMws) {
    log_w = mws_log_weights(B, dataset_size);
  } else {
    check_distinct(std::vector<std::size_t>(indices.begin(), indices.end()));
    log_w = mss_log_weights(B, dataset_size);
  }

  ForwardPass f = run_forward(tape, model, x_batch, epsilon);
  Var log_qz_x = ad::sum_last_axis(ad::gaussian_log_density(f.z, f.enc.mean, f.enc.log_variance));
  Var log_pz = ad::sum_last_axis(ad::standard_normal_log_density(f.z));
  Var cube = ad::pairwise_gaussian_log_density(f.z, f.enc.mean, f.enc.log_variance);
  Var log_qz = ad::weighted_logsumexp(ad::sum_last_axis(cube), log_w);
  Var log_prod = ad::sum_last_axis(ad::weighted_logsumexp(cube, log_w));

  Var rec = ad::mean(f.reconstruction);
  Var m_qzx = ad::mean(log_qz_x);
  Var m_qz = ad::mean(log_qz);
  Var m_prod = ad::mean(log_prod);
  Var m_pz = ad::mean(log_pz);

  Var penalty = ad::add(
      ad::add(ad::scale(ad::sub(m_qzx, m_qz), weights.alpha),
              ad::scale(ad::sub(m_qz, m_prod), weights.beta)),
      ad::scale(ad::sub(m_prod, m_pz), weights.gamma));
  Var loss = ad::sub(penalty, rec);

  LossResult r{loss, {}};
  r.terms.loss = loss.value().item();
  r.terms.reconstruction = rec.value().item();
  r.terms.log_qz_x = m_qzx.value().item();
  r.terms.log_qz = m_qz.value().item();
  r.terms.log_prod_qzj = m_prod.value().item();
  r.terms.log_pz = m_pz.value().item();
  return r;
}

LossResult beta_tcvae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch,
                           std::span<const std::size_t> indices, std::size_t dataset_size,
                           const DecompositionWeights& weights, Estimator estimator,
                           RngStream& rng) {
  const Tensor eps = gaussian_sample(rng, {x_batch.dim(0), model.latent_dim()});
  return beta_tcvae_loss(tape, model, x_batch, indices, dataset_size, weights, estimator, eps);
}

LossResult beta_vae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch, double beta,
                         const Tensor& epsilon) {
  require(x_batch.rank() == 2 && x_batch.dim(0) >= 1, "beta_vae_loss: empty batch");
  ForwardPass f = run_forward(tape, model, x_batch, epsilon);
  // 0.5 * sum_j (mu^2 + exp(lv) - lv - 1)
  Var kl_terms = ad::add_scalar(
      ad::sub(ad::add(ad::square(f.enc.mean), ad::exp(f.enc.log_variance)), f.enc.log_variance),
      -1.0);
  Var kl = ad::scale(ad::sum_last_axis(kl_terms), 0.5);
  Var rec = ad::mean(f.reconstruction);
  Var m_kl = ad::mean(kl);
  Var loss = ad::sub(ad::scale(m_kl, beta), rec);

  LossResult r{loss, {}};
  r.terms.loss = loss.value().item();
  r.terms.reconstruction = rec.value().item();
  r.terms.kl = m_kl.value().item();
  return r;
}

LossResult beta_vae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch, double beta,
                         RngStream& rng) {
  const Tensor eps = gaussian_sample(rng, {x_batch.dim(0), model.latent_dim()});
  return beta_vae_loss(tape, model, x_batch, beta, eps);
}

std::vector<std::size_t> sample_with_replacement(RngStream& rng, std::size_t n,
                                                 std::size_t count) {
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = static_cast<std::size_t>(rng.below(n));
  return out;
}

std::vector<std::size_t> sample_without_replacement(RngStream& rng, std::size_t n,
                                                    std::size_t count) {
  require(count <= n, "sample_without_replacement: count exceeds population");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[k]);
  }
  pool.resize(count);
  return pool;
}

DecompositionEstimate minibatch_decomposition(std::span<const DiagonalGaussian> posteriors,
                                              RngStream& rng, Estimator estimator,
                                              std::size_t batch_size, std::size_t num_batches) {
  check_posteriors(posteriors, "minibatch_decomposition");
  require(num_batches >= 2, "minibatch_decomposition: need at least two batches");
  const std::size_t N = posteriors.size(), J = posteriors.front().dim();
  Accumulator mi, tc, dwkl, total, lqz;
  std::vector<double> eps(J);
  for (std::size_t b = 0; b < num_batches; ++b) {
    const auto indices = estimator == Estimator::kMws
                             ? sample_with_replacement(rng, N, batch_size)
                             : sample_without_replacement(rng, N, batch_size);
    std::vector<DiagonalGaussian> qs;
    Tensor z({batch_size, J});
    for (std::size_t i = 0; i < batch_size; ++i) {
      qs.push_back(posteriors[indices[i]]);
      fill_standard_normal(rng, eps);
      const auto s = reparameterize(qs.back(), eps, indices[i]);
      std::copy(s.z.begin(), s.z.end(), z.row(i).begin());
    }
    const auto batch = make_minibatch_latents(z, qs, indices, N);
    const auto log_qz = estimate_log_qz(batch, estimator);
    const Tensor marg = per_dimension_log_marginals(batch, estimator);
    double s_qzx = 0, s_qz = 0, s_prod = 0, s_pz = 0;
    for (std::size_t i = 0; i < batch_size; ++i) {
      s_qzx += batch.log_density.at(i, i);
      s_qz += log_qz[i];
      for (std::size_t j = 0; j < J; ++j) s_prod += marg.at(i, j);
      s_pz += standard_normal_log_density(z.row(i));
    }
    const double B = double(batch_size);
    mi.add((s_qzx - s_qz) / B);
    tc.add((s_qz - s_prod) / B);
    dwkl.add((s_prod - s_pz) / B);
    total.add((s_qzx - s_pz) / B);
    lqz.add(s_qz / B);
  }
  auto se = [&](const Accumulator& a) { return std::sqrt(a.variance() / double(a.n)); };
  DecompositionEstimate e;
  e.method = to_string(estimator);
  e.index_code_mi = mi.mean();
  e.total_correlation = tc.mean();
  e.dimension_wise_kl = dwkl.mean();
  e.index_code_mi_stderr = se(mi);
  e.total_correlation_stderr = se(tc);
  e.dimension_wise_kl_stderr = se(dwkl);
  e.total_kl = total.mean();
  e.total_kl_stderr = se(total);
  e.log_qz = lqz.mean();
  e.log_qz_stderr = se(lqz);
  e.num_samples = batch_size * num_batches;
  e.batch_size = batch_size;
  return e;
}

}  // namespace tcvae

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/autodiff.hpp"
#include "tcvae/model.hpp"
#include "tcvae/rng.hpp"

namespace tcvae {

// Largest dataset the exact (enumerating) oracle accepts.
inline constexpr std::size_t kExactOracleMaxN = 4096;
inline constexpr std::size_t kMinMonteCarloSamples = 10000;

enum class Estimator { kMws, kMss };
std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

// Weights on index-code MI, total correlation and dimension-wise KL.
struct DecompositionWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
};

// Mixture of diagonal Gaussians with fixed log mixture weights (uniform by
// default), evaluated in log space.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::span<const DiagonalGaussian> components,
                           std::vector<double> log_weights = {});

  std::size_t size() const { return n_; }
  std::size_t dim() const { return dim_; }

  double log_density(std::span<const double> z) const;
  // log sum_n w_n q(z_j | n) for every j.
  std::vector<double> marginal_log_densities(std::span<const double> z) const;
  // Joint and per-dimension log-densities in one pass.
  void evaluate(std::span<const double> z, double& joint, std::span<double> marginals) const;

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> mean_;
  std::vector<double> inv_var_;
  std::vector<double> log_norm_;
  std::vector<double> log_weights_;
};

// log (1/N) sum_n q(z|n).
double exact_aggregated_posterior_logdensity(std::span<const double> z,
                                             std::span<const DiagonalGaussian> posteriors);

struct DecompositionEstimate {
  std::string method;  // exact | mws | mss
  double index_code_mi = 0.0;
  double total_correlation = 0.0;
  double dimension_wise_kl = 0.0;
  double index_code_mi_stderr = 0.0;
  double total_correlation_stderr = 0.0;
  double dimension_wise_kl_stderr = 0.0;
  // Sum of the three terms, E[log q(z|n) - log p(z)], with its own error.
  double total_kl = 0.0;
  double total_kl_stderr = 0.0;
  // Mean of the log q(z) values used (exact mixture or estimator output).
  double log_qz = 0.0;
  double log_qz_stderr = 0.0;
  std::size_t num_samples = 0;
  std::size_t batch_size = 0;  // minibatch methods only
};

nlohmann::json to_json(const DecompositionEstimate& e);

// Monte Carlo over z with one stratum per datapoint and exact mixture
// densities. Requires N <= kExactOracleMaxN and samples >= kMinMonteCarloSamples.
DecompositionEstimate exact_decomposition(std::span<const DiagonalGaussian> posteriors,
                                          RngStream& rng, std::size_t num_mc_samples);

// Latent samples of one minibatch with all pairwise log-densities.
struct MinibatchLatents {
  std::size_t dataset_size = 0;
  std::vector<std::size_t> indices;
  Tensor z;                    // [B, J]
  Tensor log_density;          // [B, B]: log q(z_i | n_j)
  Tensor log_density_per_dim;  // [B, B, J]

  std::size_t batch_size() const { return indices.size(); }
  std::size_t latent_dim() const { return z.dim(1); }
};

// batch_posteriors[i] is q(z | n_i); z is [B, J].
MinibatchLatents make_minibatch_latents(const Tensor& z,
                                        std::span<const DiagonalGaussian> batch_posteriors,
                                        std::vector<std::size_t> indices,
                                        std::size_t dataset_size);

// [B, B] log mixture weights: MWS uses 1/(N B) everywhere.
Tensor mws_log_weights(std::size_t batch_size, std::size_t dataset_size);
// MSS over a batch of B = M + 1 distinct indices: for row i the own index
// gets 1/N, the stratum element (i + 1 mod B) gets (N - M)/(N M), the
// remaining M - 1 elements get 1/M.
Tensor mss_log_weights(std::size_t batch_size, std::size_t dataset_size);

std::vector<double> mws_log_qz(const MinibatchLatents& batch);
std::vector<double> mss_log_qz(const MinibatchLatents& batch);
std::vector<double> estimate_log_qz(const MinibatchLatents& batch, Estimator estimator);
// [B, J] estimates of log q(z_j) under the same weighting.
Tensor per_dimension_log_marginals(const MinibatchLatents& batch, Estimator estimator);

// Stratified density estimate for one z drawn from q(z|n*):
//   f = q(z|n*)/N + (1/M) sum_{m<M} q(z|n_m) + (N - M)/(N M) q(z|n_M).
// log_others holds log q(z|n_m) for the M other indices; when M == N only
// the N - 1 other points exist and the last term carries zero weight.
double mss_log_f(double log_own, std::span<const double> log_others, std::size_t m,
                 std::size_t dataset_size);

struct LossBreakdown {
  double loss = 0.0;
  double reconstruction = 0.0;  // mean log p(x|z)
  double log_qz_x = 0.0;        // mean log q(z|n)
  double log_qz = 0.0;          // mean estimated log q(z)
  double log_prod_qzj = 0.0;    // mean estimated sum_j log q(z_j)
  double log_pz = 0.0;          // mean log p(z)
  double kl = 0.0;              // mean closed-form KL (beta-VAE only)

  double index_code_mi() const { return log_qz_x - log_qz; }
  double total_correlation() const { return log_qz - log_prod_qzj; }
  double dimension_wise_kl() const { return log_prod_qzj - log_pz; }
};

struct LossResult {
  Var loss;
  LossBreakdown terms;
};

// Negative weighted objective
//   -[rec - alpha (log q(z|n) - log q(z)) - beta (log q(z) - sum_j log q(z_j))
//        - gamma (sum_j log q(z_j) - log p(z))]
// averaged over the batch, with q(z) and q(z_j) from the chosen minibatch
// estimator over the same batch that produced z. epsilon is [B, J].
LossResult beta_tcvae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch,
                           std::span<const std::size_t> indices, std::size_t dataset_size,
                           const DecompositionWeights& weights, Estimator estimator,
                           const Tensor& epsilon);
LossResult beta_tcvae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch,
                           std::span<const std::size_t> indices, std::size_t dataset_size,
                           const DecompositionWeights& weights, Estimator estimator,
                           RngStream& rng);

// -[mean log p(x|z) - beta * KL(q(z|x) || p(z))] with the closed-form KL.
LossResult beta_vae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch, double beta,
                         const Tensor& epsilon);
LossResult beta_vae_loss(Tape& tape, VaeModel& model, const Tensor& x_batch, double beta,
                         RngStream& rng);

// Averages the minibatch estimates of the three terms over `num_batches`
// batches drawn from the dataset (MWS: i.i.d. indices; MSS: without
// replacement). Standard errors are across batches.
DecompositionEstimate minibatch_decomposition(std::span<const DiagonalGaussian> posteriors,
                                              RngStream& rng, Estimator estimator,
                                              std::size_t batch_size, std::size_t num_batches);

// Index draws used by training and by minibatch_decomposition.
std::vector<std::size_t> sample_with_replacement(RngStream& rng, std::size_t n, std::size_t count);
std::vector<std::size_t> sample_without_replacement(RngStream& rng, std::size_t n,
                                                    std::size_t count);

}  // namespace tcvae

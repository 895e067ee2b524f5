#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/data.hpp"
#include "tcvae/model.hpp"
#include "tcvae/rng.hpp"

namespace tcvae {

// Entropy (nats) of a discrete distribution; zero-mass entries are skipped.
double discrete_entropy(std::span<const double> p);
// Exact MI (nats) of a rows x cols joint probability table (row-major).
double discrete_mutual_information(std::span<const double> joint, std::size_t rows,
                                   std::size_t cols);

struct MIEstimateMatrix {
  std::size_t num_factors = 0;
  std::size_t num_latents = 0;
  std::vector<double> mi;         // [K, J], nats
  std::vector<double> mi_stderr;  // [K, J]
  std::vector<double> h_factors;  // [K]
  std::vector<double> h_latents;  // [J]
  std::vector<double> h_latents_stderr;
  std::size_t samples_per_value = 0;
  std::size_t entropy_samples = 0;

  double at(std::size_t k, std::size_t j) const { return mi[k * num_latents + j]; }
  double stderr_at(std::size_t k, std::size_t j) const { return mi_stderr[k * num_latents + j]; }
};

struct MigFactorEntry {
  std::string factor;
  std::size_t top_latent = 0;
  std::size_t runnerup_latent = 0;
  double top_mi_norm = 0.0;
  double runnerup_mi_norm = 0.0;
  double gap = 0.0;
  double gap_stderr = 0.0;
  bool tie_broken = false;
  bool excluded = false;
};

struct MigReport {
  MIEstimateMatrix matrix;
  std::vector<MigFactorEntry> per_factor;
  double mig = 0.0;
  double mig_stderr = 0.0;
  double avg_max_mi = 0.0;
  std::size_t tie_break_events = 0;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const MigReport& r);

struct MigOptions {
  std::size_t samples_per_value = 10000;
  std::size_t entropy_samples = 10000;
};

// H(z_j) by stratified sampling over p(n) against the exact per-dimension
// mixture sum_n p(n) q(z_j|n). Returns {entropy, stderr}.
std::pair<double, double> estimate_latent_entropy(std::span<const DiagonalGaussian> posteriors,
                                                  std::span<const double> index_probabilities,
                                                  std::size_t j, RngStream& rng,
                                                  std::size_t samples);

// I(z_j; v_k) for every latent j at once: per factor value v, S draws of
// n ~ p(n|v), z ~ q(z|n), scored as log q(z_j|v) - log q(z_j) with exact
// mixtures. Returns one {mi, stderr} pair per latent.
std::vector<std::pair<double, double>> estimate_mi(std::span<const DiagonalGaussian> posteriors,
                                                   const RenderedDataset& data, std::size_t k,
                                                   RngStream& rng,
                                                   std::size_t samples_per_value);

// Gap per factor and the mean over factors with H(v_k) > 0. Argmax ties go
// to the lowest latent index. stderr fields are propagated when present.
MigReport mig_from_mi_matrix(const MIEstimateMatrix& matrix,
                             std::span<const std::string> factor_names);

MigReport compute_mig(std::span<const DiagonalGaussian> posteriors, const RenderedDataset& data,
                      RngStream& rng, const MigOptions& options = {});
MigReport compute_mig(const VaeModel& model, const RenderedDataset& data, RngStream& rng,
                      const MigOptions& options = {});

struct HigginsConfig {
  std::size_t L = 10;
  std::size_t num_train = 2000;
  std::size_t num_test = 1000;
  std::size_t classifier_steps = 600;
  double learning_rate = 0.05;
};

struct HigginsResult {
  double accuracy = 0.0;
  double train_accuracy = 0.0;
  std::size_t L = 0;
  std::size_t num_test = 0;
};

// Each point fixes one factor k, draws L pairs sharing v_k, and averages
// |z1 - z2|; a softmax-linear classifier then predicts k.
HigginsResult higgins_metric(std::span<const DiagonalGaussian> posteriors,
                             const RenderedDataset& data, const HigginsConfig& config,
                             RngStream& rng);
HigginsResult higgins_metric(const VaeModel& model, const RenderedDataset& data,
                             const HigginsConfig& config, RngStream& rng);

struct KimMnihConfig {
  std::size_t batch_size = 64;
  std::size_t num_train = 800;
  std::size_t num_test = 800;
  std::size_t scale_samples = 10000;
};

struct KimMnihResult {
  double accuracy = 0.0;
  std::vector<double> latent_scale;         // dataset-wide std of each z_j
  std::vector<std::size_t> vote_to_factor;  // majority-vote classifier
  std::size_t num_test = 0;
};

KimMnihResult kim_mnih_metric(std::span<const DiagonalGaussian> posteriors,
                              const RenderedDataset& data, const KimMnihConfig& config,
                              RngStream& rng);
KimMnihResult kim_mnih_metric(const VaeModel& model, const RenderedDataset& data,
                              const KimMnihConfig& config, RngStream& rng);

}  // namespace tcvae

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tcvae/autodiff.hpp"
#include "tcvae/params.hpp"
#include "tcvae/rng.hpp"
#include "tcvae/tensor.hpp"

namespace tcvae {

// Training guard applied to encoder log-variances before exponentiation.
inline constexpr double kMinLogVariance = -15.0;
inline constexpr double kMaxLogVariance = 15.0;

// Per-datapoint posterior q(z|n) with diagonal covariance.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> log_variance;

  DiagonalGaussian() = default;
  DiagonalGaussian(std::vector<double> mean, std::vector<double> log_variance);
  static DiagonalGaussian standard(std::size_t dim);

  std::size_t dim() const { return mean.size(); }
};

struct LatentSample {
  std::vector<double> z;
  std::size_t index = 0;
  std::vector<double> epsilon;
};

LatentSample reparameterize(const DiagonalGaussian& q, RngStream& rng, std::size_t index = 0);
LatentSample reparameterize(const DiagonalGaussian& q, std::span<const double> epsilon,
                            std::size_t index = 0);

double log_density(std::span<const double> z, const DiagonalGaussian& q);
std::vector<double> log_density_per_dimension(std::span<const double> z,
                                              const DiagonalGaussian& q);
double standard_normal_log_density(std::span<const double> z);
double kl_to_standard_normal(const DiagonalGaussian& q);
// Sum over pixels of x log sigmoid(l) + (1 - x) log(1 - sigmoid(l)), in the
// stable form x*l - softplus(l). Throws if any x lies outside [0, 1].
double bernoulli_log_likelihood(std::span<const double> logits, std::span<const double> x);

struct ModelConfig {
  std::size_t input_dim = 256;
  std::vector<std::size_t> hidden = {128};
  std::size_t latent_dim = 6;
  std::uint64_t seed = 0;
  // Zero the final encoder layer so every posterior starts at N(0, I).
  bool zero_init_encoder_output = false;
};

// Tanh MLP encoder/decoder pair. Encoder output is [means | log-variances];
// the decoder mirrors the encoder's hidden widths and emits pixel logits.
class VaeModel {
 public:
  explicit VaeModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  std::size_t input_dim() const { return config_.input_dim; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  DiagonalGaussian encode(std::span<const double> x) const;
  // images: [N, input_dim]
  std::vector<DiagonalGaussian> encode_all(const Tensor& images) const;
  std::vector<double> decode_logits(std::span<const double> z) const;
  double decode_log_likelihood(std::span<const double> z, std::span<const double> x) const;

  struct EncoderOutput {
    Var mean;
    Var log_variance;
  };
  EncoderOutput encoder_forward(Tape& tape, Var x);
  Var decoder_forward(Tape& tape, Var z);

  // Text header (layer dims, latent width, seed) followed by the parameter
  // values as 64-bit little-endian doubles.
  void save(const std::filesystem::path& path) const;
  static VaeModel load(const std::filesystem::path& path);

 private:
  std::vector<std::size_t> encoder_dims() const;
  std::vector<std::size_t> decoder_dims() const;
  Tensor mlp_forward(const char* prefix, const std::vector<std::size_t>& dims,
                     const Tensor& input) const;
  Var mlp_forward(Tape& tape, const char* prefix, const std::vector<std::size_t>& dims,
                  Var input);

  ModelConfig config_;
  ParamStore params_;
};

}  // namespace tcvae

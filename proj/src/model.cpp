#include "tcvae/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tcvae/math.hpp"

namespace tcvae {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                                     static_cast<Eigen::Index>(t.dim(1)));
}

void check_dims(std::size_t z, std::size_t q, const char* what) {
  if (z != q) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(z) +
                                " vs " + std::to_string(q) + ")");
  }
}

std::string layer_name(const char* prefix, const char* kind, std::size_t i) {
  return std::string(prefix) + "." + kind + std::to_string(i);
}

constexpr const char* kCheckpointMagic = "tcvae-checkpoint";

}  // namespace

DiagonalGaussian::DiagonalGaussian(std::vector<double> m, std::vector<double> lv)
    : mean(std::move(m)), log_variance(std::move(lv)) {
  if (mean.size() != log_variance.size()) {
    throw std::invalid_argument("DiagonalGaussian: mean and log-variance lengths differ");
  }
  for (double v : log_variance) {
    if (!std::isfinite(v)) throw std::invalid_argument("DiagonalGaussian: non-finite log-variance");
  }
}

DiagonalGaussian DiagonalGaussian::standard(std::size_t dim) {
  return DiagonalGaussian(std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0));
}

LatentSample reparameterize(const DiagonalGaussian& q, RngStream& rng, std::size_t index) {
  std::vector<double> eps(q.dim());
  fill_standard_normal(rng, eps);
  return reparameterize(q, eps, index);
}

LatentSample reparameterize(const DiagonalGaussian& q, std::span<const double> epsilon,
                            std::size_t index) {
  check_dims(epsilon.size(), q.dim(), "reparameterize");
  LatentSample s;
  s.index = index;
  s.epsilon.assign(epsilon.begin(), epsilon.end());
  s.z.resize(q.dim());
  for (std::size_t j = 0; j < q.dim(); ++j) {
    s.z[j] = q.mean[j] + std::exp(0.5 * q.log_variance[j]) * epsilon[j];
  }
  return s;
}

std::vector<double> log_density_per_dimension(std::span<const double> z,
                                              const DiagonalGaussian& q) {
  check_dims(z.size(), q.dim(), "log_density_per_dimension");
  std::vector<double> out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double d = z[j] - q.mean[j];
    out[j] = -0.5 * (kLog2Pi + q.log_variance[j] + d * d * std::exp(-q.log_variance[j]));
  }
  return out;
}

double log_density(std::span<const double> z, const DiagonalGaussian& q) {
  double s = 0.0;
  for (double v : log_density_per_dimension(z, q)) s += v;
  return s;
}

double standard_normal_log_density(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += -0.5 * (kLog2Pi + v * v);
  return s;
}

double kl_to_standard_normal(const DiagonalGaussian& q) {
  double s = 0.0;
  for (std::size_t j = 0; j < q.dim(); ++j) {
    const double lv = q.log_variance[j];
    s += q.mean[j] * q.mean[j] + std::exp(lv) - lv - 1.0;
  }
  return 0.5 * s;
}

double bernoulli_log_likelihood(std::span<const double> logits, std::span<const double> x) {
  check_dims(logits.size(), x.size(), "bernoulli_log_likelihood");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
      throw std::invalid_argument("bernoulli_log_likelihood: pixel " + std::to_string(i) +
                                  " outside [0, 1]");
    }
    s += x[i] * logits[i] - softplus(logits[i]);
  }
  return s;
}

VaeModel::VaeModel(ModelConfig config) : config_(std::move(config)) {
  if (config_.input_dim == 0 || config_.latent_dim == 0) {
    throw std::invalid_argument("VaeModel: input and latent widths must be positive");
  }
  RngStream rng(config_.seed, 0x5EED);
  auto add_layers = [&](const char* prefix, const std::vector<std::size_t>& dims,
                        bool zero_last) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const std::size_t fan_in = dims[i], fan_out = dims[i + 1];
      Tensor w = gaussian_sample(rng, {fan_in, fan_out});
      const double s = (zero_last && i + 2 == dims.size()) ? 0.0 : 1.0 / std::sqrt(double(fan_in));
      for (double& v : w.values()) v *= s;
      params_.add(layer_name(prefix, "W", i), std::move(w));
      params_.add(layer_name(prefix, "b", i), Tensor({fan_out}));
    }
  };
  add_layers("enc", encoder_dims(), config_.zero_init_encoder_output);
  add_layers("dec", decoder_dims(), false);
}

std::vector<std::size_t> VaeModel::encoder_dims() const {
  std::vector<std::size_t> dims{config_.input_dim};
  dims.insert(dims.end(), config_.hidden.begin(), config_.hidden.end());
  dims.push_back(2 * config_.latent_dim);
  return dims;
}

std::vector<std::size_t> VaeModel::decoder_dims() const {
  std::vector<std::size_t> dims{config_.latent_dim};
  dims.insert(dims.end(), config_.hidden.rbegin(), config_.hidden.rend());
  dims.push_back(config_.input_dim);
  return dims;
}

Tensor VaeModel::mlp_forward(const char* prefix, const std::vector<std::size_t>& dims,
                             const Tensor& input) const {
  RowMatrix h = as_matrix(input);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const Tensor& w = params_.get(layer_name(prefix, "W", i)).value;
    const Tensor& b = params_.get(layer_name(prefix, "b", i)).value;
    RowMatrix next = h * as_matrix(w);
    next.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    if (i + 2 < dims.size()) next = next.array().tanh().matrix();
    h = std::move(next);
  }
  Tensor out({static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h.cols())});
  Eigen::Map<RowMatrix>(out.data(), h.rows(), h.cols()) = h;
  return out;
}

Var VaeModel::mlp_forward(Tape& tape, const char* prefix, const std::vector<std::size_t>& dims,
                          Var input) {
  Var h = input;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Var w = tape.parameter(params_, layer_name(prefix, "W", i));
    Var b = tape.parameter(params_, layer_name(prefix, "b", i));
    h = ad::add_bias(ad::matmul(h, w), b);
    if (i + 2 < dims.size()) h = ad::tanh(h);
  }
  return h;
}

DiagonalGaussian VaeModel::encode(std::span<const double> x) const {
  check_dims(x.size(), config_.input_dim, "encode");
  Tensor input({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  return encode_all(input).front();
}

std::vector<DiagonalGaussian> VaeModel::encode_all(const Tensor& images) const {
  if (images.rank() != 2 || images.dim(1) != config_.input_dim) {
    throw std::invalid_argument("encode: expected images of shape [N, " +
                                std::to_string(config_.input_dim) + "], got " +
                                shape_string(images.shape()));
  }
  const Tensor out = mlp_forward("enc", encoder_dims(), images);
  const std::size_t J = config_.latent_dim;
  std::vector<DiagonalGaussian> result;
  result.reserve(images.dim(0));
  for (std::size_t n = 0; n < images.dim(0); ++n) {
    auto row = out.row(n);
    std::vector<double> mean(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(J));
    std::vector<double> lv(row.begin() + static_cast<std::ptrdiff_t>(J), row.end());
    for (double& v : lv) v = std::clamp(v, kMinLogVariance, kMaxLogVariance);
    result.emplace_back(std::move(mean), std::move(lv));
  }
  return result;
}

std::vector<double> VaeModel::decode_logits(std::span<const double> z) const {
  check_dims(z.size(), config_.latent_dim, "decode");
  Tensor input({1, z.size()}, std::vector<double>(z.begin(), z.end()));
  return mlp_forward("dec", decoder_dims(), input).storage();
}

double VaeModel::decode_log_likelihood(std::span<const double> z,
                                       std::span<const double> x) const {
  return bernoulli_log_likelihood(decode_logits(z), x);
}

VaeModel::EncoderOutput VaeModel::encoder_forward(Tape& tape, Var x) {
  Var out = mlp_forward(tape, "enc", encoder_dims(), x);
  const std::size_t J = config_.latent_dim;
  Var mean = ad::slice_cols(out, 0, J);
  Var log_variance = ad::clamp(ad::slice_cols(out, J, 2 * J), kMinLogVariance, kMaxLogVariance);
  return {mean, log_variance};
}

Var VaeModel::decoder_forward(Tape& tape, Var z) {
  return mlp_forward(tape, "dec", decoder_dims(), z);
}

void VaeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::vector<double> flat = params_.flatten();
  out << kCheckpointMagic << " 1\n";
  out << "input_dim " << config_.input_dim << "\n";
  out << "hidden";
  for (std::size_t h : config_.hidden) out << ' ' << h;
  out << "\n";
  out << "latent_dim " << config_.latent_dim << "\n";
  out << "seed " << config_.seed << "\n";
  out << "adam_steps " << params_.step_count() << "\n";
  out << "values " << flat.size() << "\n";
  out << "data\n";
  for (double v : flat) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

VaeModel VaeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  auto bad = [&](const std::string& why) {
    return std::runtime_error("invalid checkpoint " + path.string() + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line.rfind(kCheckpointMagic, 0) != 0) throw bad("missing header");
  ModelConfig config;
  config.hidden.clear();
  std::size_t values = 0;
  std::uint64_t adam_steps = 0;
  while (std::getline(in, line) && line != "data") {
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "input_dim") {
      fields >> config.input_dim;
    } else if (key == "hidden") {
      std::size_t h;
      while (fields >> h) config.hidden.push_back(h);
    } else if (key == "latent_dim") {
      fields >> config.latent_dim;
    } else if (key == "seed") {
      fields >> config.seed;
    } else if (key == "adam_steps") {
      fields >> adam_steps;
    } else if (key == "values") {
      fields >> values;
    } else {
      throw bad("unknown header key '" + key + "'");
    }
  }
  if (line != "data") throw bad("truncated header");
  VaeModel model(config);
  if (values != model.params_.num_values()) throw bad("parameter count does not match header dims");
  std::vector<double> flat(values);
  for (double& v : flat) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw bad("truncated parameter block");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
  model.params_.unflatten(flat);
  model.params_.set_step_count(adam_steps);
  return model;
}

}  // namespace tcvae

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/data.hpp"
#include "tcvae/decomposition.hpp"
#include "tcvae/metrics.hpp"
#include "tcvae/model.hpp"

namespace tcvae {

enum class Objective { kBetaVae, kBetaTcvae };
std::string to_string(Objective o);
Objective parse_objective(const std::string& name);

struct EvalConfig {
  std::size_t decomposition_samples = 10000;
  std::size_t elbo_samples = 4;  // z draws per datapoint for the reconstruction term
  MigOptions mig;
  HigginsConfig higgins;
  bool run_mig = true;
  bool run_higgins = true;
};

struct TrainConfig {
  Objective objective = Objective::kBetaTcvae;
  DecompositionWeights weights{1.0, 6.0, 1.0};
  Estimator estimator = Estimator::kMws;
  std::size_t batch_size = 256;
  std::size_t steps = 10000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::string dataset = "bumps";
  std::vector<std::size_t> hidden = {128};
  std::size_t latent_dim = 6;
  std::size_t trace_every = 100;
  EvalConfig eval;

  // For beta-VAE the KL weight is weights.beta.
  double beta() const { return weights.beta; }
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

struct LossTracePoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::string status = "ok";  // ok | nan_abort | failed
  std::string error;
  std::size_t steps_completed = 0;
  double final_loss = 0.0;
  double final_elbo = 0.0;
  double final_reconstruction = 0.0;
  double final_kl = 0.0;
  std::optional<DecompositionEstimate> decomposition;
  std::optional<MigReport> mig;
  std::optional<HigginsResult> higgins;
  std::vector<std::pair<std::string, std::string>> skipped;  // metric, reason
  std::vector<LossTracePoint> loss_trace;
  double wall_time_seconds = 0.0;

  bool ok() const { return status == "ok"; }
  double tc() const { return decomposition ? decomposition->total_correlation : 0.0; }
  double mig_score() const { return mig ? mig->mig : 0.0; }
};

nlohmann::json to_json(const RunRecord& r);

// Thrown when the loss or a gradient turns non-finite. Carries the failing
// step and the parameters from the last step whose loss was finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t step, std::vector<double> last_good, const std::string& what)
      : std::runtime_error(what), step_(step), last_good_(std::move(last_good)) {}
  std::size_t step() const { return step_; }
  const std::vector<double>& last_good_parameters() const { return last_good_; }

 private:
  std::size_t step_;
  std::vector<double> last_good_;
};

ModelConfig model_config_for(const TrainConfig& config, const RenderedDataset& data);

// ELBO with the closed-form KL, averaged over p(n).
struct ElboEstimate {
  double elbo = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};
ElboEstimate evaluate_elbo(const VaeModel& model, const RenderedDataset& data, RngStream& rng,
                           std::size_t samples_per_point);

struct TrainResult {
  VaeModel model;
  RunRecord record;
};

// Adam on the chosen objective; throws TrainingAborted on a non-finite loss.
// `hook`, when set, is called after every step with (step, loss).
TrainResult train_model(const TrainConfig& config, const RenderedDataset& data,
                        const std::function<void(std::size_t, double)>& hook = {});
// Fills the evaluation fields of `record` from the frozen model.
void evaluate_run(const VaeModel& model, const RenderedDataset& data, RunRecord& record);
// train_model + evaluate_run.
TrainResult train(const TrainConfig& config);
TrainResult train(const TrainConfig& config, const RenderedDataset& data);

struct SweepConfig {
  std::vector<double> betas = {1, 2, 4, 6, 8};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::size_t parallelism = 1;
  void validate() const;
};

// Every (beta, seed) pair; failures are recorded, never rethrown. The
// returned order is beta-major regardless of execution order.
std::vector<RunRecord> sweep(const SweepConfig& sweep, const TrainConfig& base,
                             const std::filesystem::path& checkpoint_dir = {});

// Runs an arbitrary list of configs on a worker pool, preserving order.
std::vector<RunRecord> run_configs(const std::vector<TrainConfig>& configs,
                                   std::size_t parallelism,
                                   const std::filesystem::path& checkpoint_dir = {});

struct Quartiles {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::size_t count = 0;
};
// Linear interpolation between order statistics.
Quartiles quartiles(std::vector<double> values);

struct BetaSummary {
  std::string objective;
  double beta = 0.0;
  Quartiles mig;
  double mean_tc = 0.0;
  double mean_mig = 0.0;
  double mean_elbo = 0.0;
  std::size_t runs = 0;
  std::size_t failed = 0;
};
// Grouped by (objective, beta), in order of first appearance.
std::vector<BetaSummary> summarize_by_beta(const std::vector<RunRecord>& records);

struct CorrelationResult {
  double pearson = 0.0;
  double spearman = 0.0;
  bool pearson_undefined = false;
  bool spearman_undefined = false;
  std::vector<std::pair<double, double>> points;  // (mean TC, mean MIG) per beta
  std::vector<double> betas;
};
// Needs at least three distinct betas among successful records of a single
// objective.
CorrelationResult tc_mig_correlation(const std::vector<RunRecord>& records);
CorrelationResult correlation_from_points(const std::vector<double>& betas,
                                          const std::vector<std::pair<double, double>>& points);
double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y,
                           bool* undefined = nullptr);
double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y,
                            bool* undefined = nullptr);
// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& v);

struct AblationPair {
  std::uint64_t seed = 0;
  RunRecord alpha_one;
  RunRecord alpha_zero;
  double mig_difference = 0.0;  // alpha=1 minus alpha=0
};
struct AblationResult {
  std::vector<AblationPair> pairs;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t ties = 0;
  double sign_test_p_value = 1.0;  // two-sided exact binomial
};
AblationResult ablate_alpha_zero(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                 std::size_t parallelism);
double sign_test_p_value(std::size_t positive, std::size_t negative);

// Sweep artifacts: runs.csv, elbo_vs_mig.csv, tc_vs_mig.csv,
// mig_boxplot.csv, summary.txt, summary.json and runs/<id>.json.
void write_sweep_outputs(const std::filesystem::path& dir, const std::vector<RunRecord>& records);
std::string run_id(const RunRecord& r);

// Reads the (beta, mean_tc, mean_mig) columns back from tc_vs_mig.csv.
CorrelationResult correlation_from_csv(const std::filesystem::path& tc_vs_mig_csv);

}  // namespace tcvae

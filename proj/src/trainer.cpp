#include "tcvae/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace tcvae {
namespace {

constexpr std::uint64_t kTrainStream = 0x7EA1;
constexpr std::uint64_t kEvalStream = 0xE7A1;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(Objective o) { return o == Objective::kBetaVae ? "beta-vae" : "beta-tcvae"; }

Objective parse_objective(const std::string& name) {
  if (name == "beta-vae" || name == "betavae" || name == "vae") return Objective::kBetaVae;
  if (name == "beta-tcvae" || name == "betatcvae" || name == "tcvae") return Objective::kBetaTcvae;
  throw std::invalid_argument("unknown objective '" + name + "' (expected beta-vae or beta-tcvae)");
}

void TrainConfig::validate() const {
  for (double w : {weights.alpha, weights.beta, weights.gamma}) {
    require(std::isfinite(w), "weights must be finite");
  }
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size >= 1, "batch_size must be at least 1");
  if (objective == Objective::kBetaTcvae) {
    require(batch_size >= 2, "batch_size must be at least 2 for beta-tcvae");
  }
  require(latent_dim >= 1, "latent_dim must be at least 1");
  require(!hidden.empty(), "hidden must list at least one layer width");
  for (std::size_t h : hidden) require(h >= 1, "hidden widths must be positive");
  require(trace_every >= 1, "trace_every must be at least 1");
  require(eval.decomposition_samples >= kMinMonteCarloSamples,
          "eval decomposition_samples must be at least " + std::to_string(kMinMonteCarloSamples));
  require(eval.elbo_samples >= 1, "elbo_samples must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"alpha", c.weights.alpha},
          {"beta", c.weights.beta},
          {"gamma", c.weights.gamma},
          {"estimator", to_string(c.estimator)},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"dataset", c.dataset},
          {"hidden", c.hidden},
          {"latent_dim", c.latent_dim},
          {"eval",
           {{"decomposition_samples", c.eval.decomposition_samples},
            {"elbo_samples", c.eval.elbo_samples},
            {"mi_samples_per_value", c.eval.mig.samples_per_value},
            {"entropy_samples", c.eval.mig.entropy_samples},
            {"higgins_L", c.eval.higgins.L}}}};
}

nlohmann::json to_json(const RunRecord& r) {
  using nlohmann::json;
  json trace = json::array();
  for (const auto& p : r.loss_trace) trace.push_back({p.step, p.loss});
  json skipped = json::object();
  for (const auto& [k, why] : r.skipped) skipped[k] = why;
  json j = {{"config", to_json(r.config)},
            {"seed", r.config.seed},
            {"beta", r.config.weights.beta},
            {"objective", to_string(r.config.objective)},
            {"status", r.status},
            {"steps_completed", r.steps_completed},
            {"final_loss", r.final_loss},
            {"final_elbo", r.final_elbo},
            {"final_reconstruction", r.final_reconstruction},
            {"final_kl", r.final_kl},
            {"decomposition", r.decomposition ? to_json(*r.decomposition) : json(nullptr)},
            {"mig", r.mig ? to_json(*r.mig) : json(nullptr)},
            {"higgins",
             r.higgins ? json{{"accuracy", r.higgins->accuracy},
                              {"train_accuracy", r.higgins->train_accuracy},
                              {"L", r.higgins->L},
                              {"num_test", r.higgins->num_test}}
                       : json(nullptr)},
            {"skipped", skipped},
            {"loss_trace", trace},
            {"timing", {{"wall_time_seconds", r.wall_time_seconds}}}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

ModelConfig model_config_for(const TrainConfig& config, const RenderedDataset& data) {
  ModelConfig m;
  m.input_dim = data.num_pixels();
  m.hidden = config.hidden;
  m.latent_dim = config.latent_dim;
  m.seed = config.seed;
  return m;
}

ElboEstimate evaluate_elbo(const VaeModel& model, const RenderedDataset& data, RngStream& rng,
                           std::size_t samples_per_point) {
  require(samples_per_point >= 1, "evaluate_elbo: need at least one sample per point");
  const auto posteriors = model.encode_all(data.images);
  const auto& pn = data.index_probabilities();
  ElboEstimate e;
  std::vector<double> eps(model.latent_dim());
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (pn[n] <= 0.0) continue;
    double rec = 0.0;
    for (std::size_t s = 0; s < samples_per_point; ++s) {
      fill_standard_normal(rng, eps);
      const auto z = reparameterize(posteriors[n], eps, n).z;
      rec += model.decode_log_likelihood(z, data.image(n));
    }
    rec /= double(samples_per_point);
    const double kl = kl_to_standard_normal(posteriors[n]);
    e.reconstruction += pn[n] * rec;
    e.kl += pn[n] * kl;
  }
  e.elbo = e.reconstruction - e.kl;
  return e;
}

TrainResult train_model(const TrainConfig& config, const RenderedDataset& data,
                        const std::function<void(std::size_t, double)>& hook) {
  config.validate();
  const std::size_t N = data.size();
  require(config.batch_size <= N, "batch_size " + std::to_string(config.batch_size) +
                                      " exceeds dataset size " + std::to_string(N));
  VaeModel model(model_config_for(config, data));
  RunRecord record;
  record.config = config;

  RngStream rng(config.seed, kTrainStream);
  const bool uniform = data.uniform();
  const IndexSampler weighted(data.index_probabilities());
  const AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8};
  std::vector<double> last_good = model.params().flatten();

  auto one_step = [&](std::size_t step, bool update) {
    std::vector<std::size_t> idx;
    if (config.objective == Objective::kBetaTcvae && config.estimator == Estimator::kMss) {
      idx = sample_without_replacement(rng, N, config.batch_size);
    } else if (uniform) {
      idx = sample_with_replacement(rng, N, config.batch_size);
    } else {
      idx.resize(config.batch_size);
      for (auto& i : idx) i = weighted(rng);
    }
    const Tensor x = data.gather(idx);
    const Tensor eps = gaussian_sample(rng, {config.batch_size, config.latent_dim});
    Tape tape;
    model.params().zero_grad();
    LossResult r = config.objective == Objective::kBetaTcvae
                       ? beta_tcvae_loss(tape, model, x, idx, N, config.weights, config.estimator, eps)
                       : beta_vae_loss(tape, model, x, config.weights.beta, eps);
    if (!std::isfinite(r.terms.loss)) {
      throw TrainingAborted(step, last_good, "non-finite loss at step " + std::to_string(step));
    }
    if (update) {
      try {
        tape.backward(r.loss);
      } catch (const NumericalError& err) {
        throw TrainingAborted(step, last_good,
                              "step " + std::to_string(step) + ": " + err.what());
      }
      adam_step(model.params(), adam);
    }
    return r.terms.loss;
  };

  const auto start = std::chrono::steady_clock::now();
  if (config.steps == 0) {
    record.final_loss = one_step(0, false);
    record.loss_trace.push_back({0, record.final_loss});
  }
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const double loss = one_step(step, true);
    record.final_loss = loss;
    record.steps_completed = step;
    if (step % config.trace_every == 0 || step == 1 || step == config.steps) {
      record.loss_trace.push_back({step, loss});
    }
    if (hook) hook(step, loss);
    const std::vector<double> current = model.params().flatten();
    if (std::any_of(current.begin(), current.end(), [](double v) { return !std::isfinite(v); })) {
      throw TrainingAborted(step, last_good, "non-finite parameters after step " + std::to_string(step));
    }
    last_good = current;
  }
  record.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(record)};
}

void evaluate_run(const VaeModel& model, const RenderedDataset& data, RunRecord& record) {
  const auto& config = record.config;
  const RngStream eval(config.seed, kEvalStream);
  const auto start = std::chrono::steady_clock::now();

  RngStream elbo_rng = eval.split(2);
  const ElboEstimate elbo = evaluate_elbo(model, data, elbo_rng, config.eval.elbo_samples);
  record.final_elbo = elbo.elbo;
  record.final_reconstruction = elbo.reconstruction;
  record.final_kl = elbo.kl;
  if (!std::isfinite(record.final_elbo)) throw NumericalError("evaluation ELBO is not finite");

  const auto posteriors = model.encode_all(data.images);
  if (data.size() <= kExactOracleMaxN) {
    RngStream r = eval.split(1);
    record.decomposition = exact_decomposition(posteriors, r, config.eval.decomposition_samples);
  } else {
    record.skipped.emplace_back("decomposition", "dataset exceeds the exact-oracle limit");
  }

  if (!config.eval.run_mig) {
    record.skipped.emplace_back("mig", "disabled by configuration");
  } else if (model.latent_dim() < 2) {
    record.skipped.emplace_back("mig", "needs at least two latents");
  } else {
    RngStream r = eval.split(3);
    record.mig = compute_mig(posteriors, data, r, config.eval.mig);
  }

  if (!config.eval.run_higgins) {
    record.skipped.emplace_back("higgins", "disabled by configuration");
  } else {
    try {
      RngStream r = eval.split(4);
      record.higgins = higgins_metric(posteriors, data, config.eval.higgins, r);
    } catch (const std::invalid_argument& e) {
      record.skipped.emplace_back("higgins", e.what());
    }
  }
  record.wall_time_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TrainResult train(const TrainConfig& config, const RenderedDataset& data) {
  TrainResult r = train_model(config, data);
  evaluate_run(r.model, data, r.record);
  return r;
}

TrainResult train(const TrainConfig& config) { return train(config, make_dataset(config.dataset)); }

void SweepConfig::validate() const {
  require(!betas.empty(), "sweep needs at least one beta");
  require(!seeds.empty(), "sweep needs at least one seed");
  std::set<double> distinct(betas.begin(), betas.end());
  require(distinct.size() == betas.size(), "sweep betas must be distinct");
}

std::string run_id(const RunRecord& r) {
  std::ostringstream os;
  os << to_string(r.config.objective) << "_beta" << r.config.weights.beta << "_alpha"
     << r.config.weights.alpha << "_seed" << r.config.seed;
  return os.str();
}

std::vector<RunRecord> run_configs(const std::vector<TrainConfig>& configs,
                                   std::size_t parallelism,
                                   const std::filesystem::path& checkpoint_dir) {
  std::vector<RunRecord> out(configs.size());
  // Datasets are immutable and shared between runs.
  std::map<std::string, RenderedDataset> datasets;
  for (const auto& c : configs) {
    if (!datasets.count(c.dataset)) {
      try {
        datasets.emplace(c.dataset, make_dataset(c.dataset));
      } catch (const std::exception&) {
      }
    }
  }
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      RunRecord& rec = out[i];
      rec.config = configs[i];
      try {
        auto it = datasets.find(configs[i].dataset);
        if (it == datasets.end()) {
          make_dataset(configs[i].dataset);  // rethrows the parse error
          throw std::invalid_argument("dataset '" + configs[i].dataset + "' unavailable");
        }
        TrainResult r = train(configs[i], it->second);
        rec = std::move(r.record);
        if (!checkpoint_dir.empty()) r.model.save(checkpoint_dir / (run_id(rec) + ".ckpt"));
      } catch (const TrainingAborted& e) {
        rec.status = "nan_abort";
        rec.error = e.what();
        rec.steps_completed = e.step() > 0 ? e.step() - 1 : 0;
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
      }
    }
  };
  if (parallelism == 0) parallelism = std::max(1u, std::thread::hardware_concurrency());
  parallelism = std::min(parallelism, std::max<std::size_t>(1, configs.size()));
  if (parallelism <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < parallelism; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<RunRecord> sweep(const SweepConfig& sweep, const TrainConfig& base,
                             const std::filesystem::path& checkpoint_dir) {
  sweep.validate();
  std::vector<TrainConfig> configs;
  for (double beta : sweep.betas) {
    for (std::uint64_t seed : sweep.seeds) {
      TrainConfig c = base;
      c.weights.beta = beta;
      c.seed = seed;
      configs.push_back(c);
    }
  }
  return run_configs(configs, sweep.parallelism, checkpoint_dir);
}

Quartiles quartiles(std::vector<double> values) {
  Quartiles q;
  q.count = values.size();
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double h = p * double(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
  };
  q.min = values.front();
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  q.max = values.back();
  return q;
}

std::vector<BetaSummary> summarize_by_beta(const std::vector<RunRecord>& records) {
  std::vector<BetaSummary> out;
  std::vector<std::vector<double>> migs;
  for (const auto& r : records) {
    const std::string obj = to_string(r.config.objective);
    auto it = std::find_if(out.begin(), out.end(), [&](const BetaSummary& s) {
      return s.objective == obj && s.beta == r.config.weights.beta;
    });
    if (it == out.end()) {
      out.push_back({});
      out.back().objective = obj;
      out.back().beta = r.config.weights.beta;
      migs.emplace_back();
      it = out.end() - 1;
    }
    const std::size_t g = static_cast<std::size_t>(it - out.begin());
    if (!r.ok() || !r.mig || !r.decomposition) {
      ++it->failed;
      continue;
    }
    ++it->runs;
    it->mean_tc += r.tc();
    it->mean_mig += r.mig_score();
    it->mean_elbo += r.final_elbo;
    migs[g].push_back(r.mig_score());
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    if (out[g].runs > 0) {
      out[g].mean_tc /= double(out[g].runs);
      out[g].mean_mig /= double(out[g].runs);
      out[g].mean_elbo /= double(out[g].runs);
    }
    out[g].mig = quartiles(migs[g]);
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y,
                           bool* undefined) {
  require(x.size() == y.size() && x.size() >= 2, "correlation needs two equal-length series");
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const bool degenerate = !(sxx > 0.0) || !(syy > 0.0);
  if (undefined) *undefined = degenerate;
  return degenerate ? 0.0 : sxy / std::sqrt(sxx * syy);
}

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y,
                            bool* undefined) {
  return pearson_correlation(average_ranks(x), average_ranks(y), undefined);
}

CorrelationResult correlation_from_points(const std::vector<double>& betas,
                                          const std::vector<std::pair<double, double>>& points) {
  require(betas.size() == points.size(), "correlation: beta/point count mismatch");
  require(std::set<double>(betas.begin(), betas.end()).size() >= 3,
          "tc_mig_correlation needs at least three distinct beta values");
  CorrelationResult c;
  c.betas = betas;
  c.points = points;
  std::vector<double> tc, mig;
  for (const auto& [t, m] : points) {
    tc.push_back(t);
    mig.push_back(m);
  }
  c.pearson = pearson_correlation(tc, mig, &c.pearson_undefined);
  c.spearman = spearman_correlation(tc, mig, &c.spearman_undefined);
  return c;
}

CorrelationResult tc_mig_correlation(const std::vector<RunRecord>& records) {
  std::set<std::string> objectives;
  for (const auto& r : records) {
    if (r.ok()) objectives.insert(to_string(r.config.objective));
  }
  require(objectives.size() <= 1, "tc_mig_correlation: records mix objectives");
  std::vector<double> betas;
  std::vector<std::pair<double, double>> points;
  for (const auto& s : summarize_by_beta(records)) {
    if (s.runs == 0) continue;
    betas.push_back(s.beta);
    points.emplace_back(s.mean_tc, s.mean_mig);
  }
  return correlation_from_points(betas, points);
}

double sign_test_p_value(std::size_t positive, std::size_t negative) {
  const std::size_t n = positive + negative;
  if (n == 0) return 1.0;
  const std::size_t k = std::min(positive, negative);
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(double(n) + 1) - std::lgamma(double(i) + 1) -
                     std::lgamma(double(n - i) + 1) - double(n) * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

AblationResult ablate_alpha_zero(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                 std::size_t parallelism) {
  require(base.objective == Objective::kBetaTcvae, "alpha ablation needs the beta-tcvae objective");
  require(!seeds.empty(), "alpha ablation needs at least one seed");
  std::vector<TrainConfig> configs;
  for (std::uint64_t s : seeds) {
    for (double alpha : {1.0, 0.0}) {
      TrainConfig c = base;
      c.weights.alpha = alpha;
      c.seed = s;
      configs.push_back(c);
    }
  }
  auto records = run_configs(configs, parallelism);
  AblationResult out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    AblationPair p{seeds[i], records[2 * i], records[2 * i + 1], 0.0};
    if (p.alpha_one.ok() && p.alpha_zero.ok() && p.alpha_one.mig && p.alpha_zero.mig) {
      p.mig_difference = p.alpha_one.mig_score() - p.alpha_zero.mig_score();
      if (p.mig_difference > 0) {
        ++out.positive;
      } else if (p.mig_difference < 0) {
        ++out.negative;
      } else {
        ++out.ties;
      }
    }
    out.pairs.push_back(std::move(p));
  }
  out.sign_test_p_value = sign_test_p_value(out.positive, out.negative);
  return out;
}

void write_sweep_outputs(const std::filesystem::path& dir, const std::vector<RunRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "runs");
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };

  {
    auto f = open("runs.csv");
    f << "objective,beta,seed,status,elbo,tc,mig,higgins,steps_completed,final_loss\n";
    for (const auto& r : records) {
      f << to_string(r.config.objective) << ',' << fmt(r.config.weights.beta) << ','
        << r.config.seed << ',' << r.status << ',' << fmt(r.final_elbo) << ',' << fmt(r.tc())
        << ',' << fmt(r.mig_score()) << ',' << fmt(r.higgins ? r.higgins->accuracy : 0.0) << ','
        << r.steps_completed << ',' << fmt(r.final_loss) << '\n';
    }
  }
  {
    auto f = open("elbo_vs_mig.csv");
    f << "objective,beta,seed,elbo,mig\n";
    for (const auto& r : records) {
      if (!r.ok() || !r.mig) continue;
      f << to_string(r.config.objective) << ',' << fmt(r.config.weights.beta) << ','
        << r.config.seed << ',' << fmt(r.final_elbo) << ',' << fmt(r.mig_score()) << '\n';
    }
  }
  const auto groups = summarize_by_beta(records);
  {
    auto f = open("tc_vs_mig.csv");
    f << "objective,beta,mean_tc,mean_mig,runs\n";
    for (const auto& g : groups) {
      if (g.runs == 0) continue;
      f << g.objective << ',' << fmt(g.beta) << ',' << fmt(g.mean_tc) << ',' << fmt(g.mean_mig)
        << ',' << g.runs << '\n';
    }
  }
  {
    auto f = open("mig_boxplot.csv");
    f << "objective,beta,count,min,q1,median,q3,max\n";
    for (const auto& g : groups) {
      f << g.objective << ',' << fmt(g.beta) << ',' << g.mig.count << ',' << fmt(g.mig.min) << ','
        << fmt(g.mig.q1) << ',' << fmt(g.mig.median) << ',' << fmt(g.mig.q3) << ','
        << fmt(g.mig.max) << '\n';
    }
  }

  nlohmann::json summary;
  summary["runs"] = records.size();
  summary["failed"] = std::count_if(records.begin(), records.end(),
                                    [](const RunRecord& r) { return !r.ok(); });
  nlohmann::json per_beta = nlohmann::json::array();
  for (const auto& g : groups) {
    per_beta.push_back({{"objective", g.objective},
                        {"beta", g.beta},
                        {"runs", g.runs},
                        {"failed", g.failed},
                        {"mean_tc", g.mean_tc},
                        {"mean_mig", g.mean_mig},
                        {"mean_elbo", g.mean_elbo},
                        {"mig_quartiles",
                         {{"min", g.mig.min},
                          {"q1", g.mig.q1},
                          {"median", g.mig.median},
                          {"q3", g.mig.q3},
                          {"max", g.mig.max}}}});
  }
  summary["per_beta"] = per_beta;
  std::string corr_text;
  try {
    const auto c = tc_mig_correlation(records);
    summary["tc_mig_correlation"] = {{"pearson", c.pearson},
                                     {"spearman", c.spearman},
                                     {"pearson_undefined", c.pearson_undefined},
                                     {"spearman_undefined", c.spearman_undefined}};
    std::ostringstream os;
    os << "TC/MIG correlation: pearson " << std::setprecision(4) << c.pearson
       << (c.pearson_undefined ? " (undefined)" : "") << ", spearman " << c.spearman
       << (c.spearman_undefined ? " (undefined)" : "") << "\n";
    corr_text = os.str();
  } catch (const std::invalid_argument& e) {
    summary["tc_mig_correlation"] = {{"error", e.what()}};
    corr_text = std::string("TC/MIG correlation: not computed (") + e.what() + ")\n";
  }
  open("summary.json") << summary.dump(2) << '\n';

  {
    auto f = open("summary.txt");
    f << std::left << std::setw(12) << "objective" << std::setw(8) << "beta" << std::setw(6)
      << "runs" << std::setw(8) << "failed" << std::setw(12) << "mean_elbo" << std::setw(10)
      << "mean_tc" << std::setw(10) << "mean_mig" << std::setw(10) << "med_mig" << std::setw(10)
      << "q1_mig" << "q3_mig\n";
    f << std::fixed;
    for (const auto& g : groups) {
      f << std::setw(12) << g.objective << std::setw(8) << std::setprecision(2) << g.beta
        << std::setw(6) << g.runs << std::setw(8) << g.failed << std::setw(12)
        << std::setprecision(3) << g.mean_elbo << std::setw(10) << std::setprecision(4)
        << g.mean_tc << std::setw(10) << g.mean_mig << std::setw(10) << g.mig.median
        << std::setw(10) << g.mig.q1 << g.mig.q3 << '\n';
    }
    f << corr_text;
  }

  for (const auto& r : records) {
    open("runs/" + run_id(r) + ".json") << to_json(r).dump(2) << '\n';
  }
}

CorrelationResult correlation_from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto header = split(line);
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument(path.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cb = col("beta"), ct = col("mean_tc"), cm = col("mean_mig"), co = col("objective");
  std::vector<double> betas;
  std::vector<std::pair<double, double>> points;
  std::set<std::string> objectives;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    objectives.insert(cells[co]);
    betas.push_back(std::stod(cells[cb]));
    points.emplace_back(std::stod(cells[ct]), std::stod(cells[cm]));
  }
  require(objectives.size() <= 1, path.string() + ": rows mix objectives");
  return correlation_from_points(betas, points);
}

}  // namespace tcvae

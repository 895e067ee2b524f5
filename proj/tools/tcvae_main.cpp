#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "tcvae/config.hpp"
#include "tcvae/data.hpp"
#include "tcvae/decomposition.hpp"
#include "tcvae/math.hpp"
#include "tcvae/metrics.hpp"
#include "tcvae/model.hpp"
#include "tcvae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tcvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ExperimentConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets,
                                     const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config_file(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    try {
      apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    } catch (const std::exception& e) {
      throw UsageError("--set " + kv.substr(0, eq) + ": " + e.what());
    }
  }
  if (seed) cfg.train.seed = *seed;
  cfg.train.validate();
  cfg.sweep.validate();
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::pair<VaeModel, RenderedDataset> load_pair(const std::string& checkpoint,
                                               const std::string& dataset) {
  VaeModel model = VaeModel::load(checkpoint);
  RenderedDataset data = make_dataset(dataset);
  if (model.input_dim() != data.num_pixels()) {
    throw UsageError("checkpoint expects " + std::to_string(model.input_dim()) +
                     " pixels but dataset '" + dataset + "' has " +
                     std::to_string(data.num_pixels()));
  }
  return {std::move(model), std::move(data)};
}

int cmd_train(const std::string& config, const std::string& out,
              const std::vector<std::string>& sets, std::optional<std::uint64_t> seed) {
  const ExperimentConfig cfg = load_with_overrides(config, sets, seed);
  fs::create_directories(out);
  const RenderedDataset data = make_dataset(cfg.train.dataset);
  try {
    TrainResult r = train(cfg.train, data);
    r.model.save(fs::path(out) / "model.ckpt");
    write_json(fs::path(out) / "run.json", to_json(r.record));
    std::cerr << "trained " << r.record.steps_completed << " steps: elbo " << r.record.final_elbo
              << ", tc " << r.record.tc() << ", mig " << r.record.mig_score() << '\n';
    return kExitOk;
  } catch (const TrainingAborted& e) {
    VaeModel last(model_config_for(cfg.train, data));
    last.params().unflatten(e.last_good_parameters());
    last.save(fs::path(out) / "last_good.ckpt");
    RunRecord rec;
    rec.config = cfg.train;
    rec.status = "nan_abort";
    rec.error = e.what();
    rec.steps_completed = e.step() > 0 ? e.step() - 1 : 0;
    write_json(fs::path(out) / "run.json", to_json(rec));
    std::cerr << "training aborted: " << e.what() << " (last good checkpoint written)\n";
    return kExitNumerical;
  }
}

int cmd_decompose(const std::string& checkpoint, const std::string& dataset,
                  const std::string& method, std::size_t samples, std::size_t batch_size,
                  std::size_t batches, std::uint64_t seed) {
  auto [model, data] = load_pair(checkpoint, dataset);
  const auto posteriors = model.encode_all(data.images);
  const RngStream base(seed, 0xDEC0);
  json out = json::object();
  auto run = [&](const std::string& m) {
    if (m == "exact") {
      RngStream r = base.split(0);
      return to_json(exact_decomposition(posteriors, r, samples));
    }
    const Estimator est = parse_estimator(m);
    RngStream r = base.split(est == Estimator::kMws ? 1 : 2);
    return to_json(minibatch_decomposition(posteriors, r, est, batch_size, batches));
  };
  if (method == "both") {
    out["mws"] = run("mws");
    out["mss"] = run("mss");
  } else if (method == "all") {
    out["exact"] = run("exact");
    out["mws"] = run("mws");
    out["mss"] = run("mss");
  } else if (method == "exact" || method == "mws" || method == "mss") {
    out = run(method);
  } else {
    throw UsageError("unknown method '" + method + "' (exact|mws|mss|both|all)");
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_metrics(const std::string& checkpoint, const std::string& dataset,
                const std::string& which, std::uint64_t seed, const std::vector<std::size_t>& Ls,
                std::size_t samples_per_value) {
  auto [model, data] = load_pair(checkpoint, dataset);
  const auto posteriors = model.encode_all(data.images);
  const RngStream base(seed, 0x3E7C);
  const bool all = which == "all";
  if (!all && which != "mig" && which != "higgins" && which != "kim-mnih") {
    throw UsageError("unknown metric '" + which + "' (mig|higgins|kim-mnih|all)");
  }
  json out = {{"seed", seed}, {"dataset", dataset}};
  if (all || which == "mig") {
    RngStream r = base.split(1);
    MigOptions opt;
    opt.samples_per_value = samples_per_value;
    const MigReport rep = compute_mig(posteriors, data, r, opt);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
    out["mig"] = to_json(rep);
  }
  if (all || which == "higgins") {
    json h = json::array();
    for (std::size_t L : Ls) {
      RngStream r = base.split(2);
      HigginsConfig hc;
      hc.L = L;
      const auto res = higgins_metric(posteriors, data, hc, r);
      h.push_back({{"L", L}, {"accuracy", res.accuracy}, {"train_accuracy", res.train_accuracy},
                   {"num_test", res.num_test}});
    }
    out["higgins"] = h;
  }
  if (all || which == "kim-mnih") {
    RngStream r = base.split(3);
    const auto res = kim_mnih_metric(posteriors, data, KimMnihConfig{}, r);
    out["kim_mnih"] = {{"accuracy", res.accuracy},
                       {"latent_scale", res.latent_scale},
                       {"num_test", res.num_test}};
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

// Tiles are decoded images laid left to right, one per traversal step.
int cmd_traverse(const std::string& checkpoint, const std::string& dataset, std::size_t latent,
                 double lo, double hi, std::size_t steps, std::size_t anchor,
                 const std::string& out) {
  if (steps < 2) throw UsageError("--steps must be at least 2");
  auto [model, data] = load_pair(checkpoint, dataset);
  if (latent >= model.latent_dim()) {
    throw UsageError("latent index " + std::to_string(latent) + " out of range (J = " +
                     std::to_string(model.latent_dim()) + ")");
  }
  if (anchor >= data.size()) throw UsageError("anchor index out of range");
  const DiagonalGaussian q = model.encode(data.image(anchor));
  const std::size_t side = kImageSide;
  std::vector<unsigned char> pixels(steps * side * side);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> z = q.mean;
    z[latent] = lo + (hi - lo) * double(t) / double(steps - 1);
    const auto logits = model.decode_logits(z);
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double p = std::clamp(sigmoid(logits[r * side + c]), 0.0, 1.0);
        pixels[r * steps * side + t * side + c] = static_cast<unsigned char>(std::lround(255.0 * p));
      }
    }
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw UsageError("cannot write " + out);
  f << "P5\n" << steps * side << ' ' << side << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
  return kExitOk;
}

int cmd_sweep(const std::string& config, const std::string& out,
              const std::vector<std::string>& sets, std::optional<std::uint64_t> seed) {
  const ExperimentConfig cfg = load_with_overrides(config, sets, seed);
  fs::create_directories(out);
  const auto records = sweep(cfg.sweep, cfg.train, fs::path(out) / "checkpoints");
  write_sweep_outputs(out, records);
  std::ifstream summary(fs::path(out) / "summary.txt");
  std::cout << summary.rdbuf();
  return kExitOk;
}

int cmd_correlate(const std::string& csv) {
  const auto c = correlation_from_csv(csv);
  json out = {{"pearson", c.pearson},
              {"spearman", c.spearman},
              {"pearson_undefined", c.pearson_undefined},
              {"spearman_undefined", c.spearman_undefined},
              {"betas", c.betas}};
  std::cout << std::setprecision(17) << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_ablate(const std::string& config, const std::vector<std::string>& sets,
               std::optional<std::uint64_t> seed) {
  const ExperimentConfig cfg = load_with_overrides(config, sets, seed);
  const auto r = ablate_alpha_zero(cfg.train, cfg.sweep.seeds, cfg.sweep.parallelism);
  json pairs = json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"seed", p.seed},
                     {"mig_alpha_one", p.alpha_one.mig_score()},
                     {"mig_alpha_zero", p.alpha_zero.mig_score()},
                     {"status_alpha_one", p.alpha_one.status},
                     {"status_alpha_zero", p.alpha_zero.status},
                     {"mig_difference", p.mig_difference}});
  }
  std::cout << json{{"pairs", pairs},
                    {"positive", r.positive},
                    {"negative", r.negative},
                    {"ties", r.ties},
                    {"sign_test_p_value", r.sign_test_p_value}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

int cmd_dataset(const std::string& spec, const std::string& out) {
  const RenderedDataset d = make_dataset(spec);
  fs::create_directories(out);
  export_images(d, fs::path(out) / "images.bin");
  export_factor_csv(d, fs::path(out) / "factors.csv");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep the per-step tensors on the heap instead of mmap/munmap churn.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  CLI::App app{"beta-TCVAE toolkit: training, ELBO decomposition and disentanglement metrics"};
  app.require_subcommand(1);
  int code = kExitOk;

  std::string config, out = "out", checkpoint, dataset = "bumps", method = "exact", which = "all";
  std::vector<std::string> sets;
  std::uint64_t seed_value = 0;
  std::optional<std::uint64_t> seed;
  std::size_t samples = 10000, batch_size = 64, batches = 200, samples_per_value = 10000;
  std::vector<std::size_t> Ls = {10};
  std::size_t latent = 0, steps = 8, anchor = 0;
  double lo = -3.0, hi = 3.0;
  std::string csv;

  auto* train = app.add_subcommand("train", "train one model and write model.ckpt + run.json");
  train->add_option("--config", config, "key=value experiment file");
  train->add_option("--out", out, "output directory");
  train->add_option("--set", sets, "override a config key (key=value)");
  train->add_option("--seed", seed_value, "random seed");

  auto* decompose = app.add_subcommand("decompose", "ELBO decomposition report (JSON)");
  decompose->add_option("--checkpoint", checkpoint)->required();
  decompose->add_option("--dataset", dataset);
  decompose->add_option("--method", method, "exact|mws|mss|both|all");
  decompose->add_option("--samples", samples, "Monte Carlo samples for the exact method");
  decompose->add_option("--batch-size", batch_size, "minibatch size for mws/mss");
  decompose->add_option("--batches", batches, "number of minibatches for mws/mss");
  decompose->add_option("--seed", seed_value);

  auto* metrics = app.add_subcommand("metrics", "disentanglement metrics (JSON)");
  metrics->add_option("--checkpoint", checkpoint)->required();
  metrics->add_option("--dataset", dataset);
  metrics->add_option("--which", which, "mig|higgins|kim-mnih|all");
  metrics->add_option("--seed", seed_value);
  metrics->add_option("--L", Ls, "Higgins aggregation sizes")->delimiter(',');
  metrics->add_option("--samples-per-value", samples_per_value);

  auto* traverse = app.add_subcommand("traverse", "latent traversal grid as a P5 PGM");
  traverse->add_option("--checkpoint", checkpoint)->required();
  traverse->add_option("--dataset", dataset);
  traverse->add_option("--latent", latent)->required();
  traverse->add_option("--lo", lo);
  traverse->add_option("--hi", hi);
  traverse->add_option("--steps", steps);
  traverse->add_option("--anchor", anchor);
  traverse->add_option("--out", out)->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "seeded sweep over beta with aggregate tables");
  sweep_cmd->add_option("--config", config);
  sweep_cmd->add_option("--out", out);
  sweep_cmd->add_option("--set", sets);
  sweep_cmd->add_option("--seed", seed_value);

  auto* correlate = app.add_subcommand("correlate", "TC/MIG correlation from tc_vs_mig.csv");
  correlate->add_option("csv", csv)->required();

  auto* ablate = app.add_subcommand("ablate", "paired alpha=1 vs alpha=0 runs with a sign test");
  ablate->add_option("--config", config);
  ablate->add_option("--set", sets);
  ablate->add_option("--seed", seed_value);

  auto* dataset_cmd = app.add_subcommand("dataset", "export a procedural dataset");
  dataset_cmd->add_option("--spec", dataset);
  dataset_cmd->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  auto seed_given = [&](CLI::App* sub) {
    if (sub->count("--seed") > 0) seed = seed_value;
  };

  try {
    if (*train) {
      seed_given(train);
      code = cmd_train(config, out, sets, seed);
    } else if (*decompose) {
      code = cmd_decompose(checkpoint, dataset, method, samples, batch_size, batches, seed_value);
    } else if (*metrics) {
      code = cmd_metrics(checkpoint, dataset, which, seed_value, Ls, samples_per_value);
    } else if (*traverse) {
      code = cmd_traverse(checkpoint, dataset, latent, lo, hi, steps, anchor, out);
    } else if (*sweep_cmd) {
      seed_given(sweep_cmd);
      code = cmd_sweep(config, out, sets, seed);
    } else if (*correlate) {
      code = cmd_correlate(csv);
    } else if (*ablate) {
      seed_given(ablate);
      code = cmd_ablate(config, sets, seed);
    } else if (*dataset_cmd) {
      code = cmd_dataset(dataset, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return code;
}

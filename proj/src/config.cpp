#include "tcvae/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tcvae {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F&& item) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(item(trim(cell)));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"objective", [](auto& c, auto& v) { c.train.objective = parse_objective(v); }},
      {"alpha", [](auto& c, auto& v) { c.train.weights.alpha = to_double(v); }},
      {"beta", [](auto& c, auto& v) { c.train.weights.beta = to_double(v); }},
      {"gamma", [](auto& c, auto& v) { c.train.weights.gamma = to_double(v); }},
      {"estimator", [](auto& c, auto& v) { c.train.estimator = parse_estimator(v); }},
      {"batch_size", [](auto& c, auto& v) { c.train.batch_size = to_uint(v); }},
      {"steps", [](auto& c, auto& v) { c.train.steps = to_uint(v); }},
      {"learning_rate", [](auto& c, auto& v) { c.train.learning_rate = to_double(v); }},
      {"seed", [](auto& c, auto& v) { c.train.seed = to_uint(v); }},
      {"dataset", [](auto& c, auto& v) {
         make_dataset(v);
         c.train.dataset = v;
       }},
      {"hidden", [](auto& c, auto& v) {
         c.train.hidden = to_list<std::size_t>(v, [](const std::string& s) { return to_uint(s); });
       }},
      {"latent_dim", [](auto& c, auto& v) { c.train.latent_dim = to_uint(v); }},
      {"trace_every", [](auto& c, auto& v) { c.train.trace_every = to_uint(v); }},
      {"decomposition_samples", [](auto& c, auto& v) { c.train.eval.decomposition_samples = to_uint(v); }},
      {"elbo_samples", [](auto& c, auto& v) { c.train.eval.elbo_samples = to_uint(v); }},
      {"mi_samples_per_value", [](auto& c, auto& v) { c.train.eval.mig.samples_per_value = to_uint(v); }},
      {"entropy_samples", [](auto& c, auto& v) { c.train.eval.mig.entropy_samples = to_uint(v); }},
      {"higgins_L", [](auto& c, auto& v) { c.train.eval.higgins.L = to_uint(v); }},
      {"higgins_train", [](auto& c, auto& v) { c.train.eval.higgins.num_train = to_uint(v); }},
      {"higgins_test", [](auto& c, auto& v) { c.train.eval.higgins.num_test = to_uint(v); }},
      {"run_mig", [](auto& c, auto& v) { c.train.eval.run_mig = to_bool(v); }},
      {"run_higgins", [](auto& c, auto& v) { c.train.eval.run_higgins = to_bool(v); }},
      {"betas", [](auto& c, auto& v) { c.sweep.betas = to_list<double>(v, to_double); }},
      {"seeds", [](auto& c, auto& v) { c.sweep.seeds = to_list<std::uint64_t>(v, to_uint); }},
      {"seed_count", [](auto& c, auto& v) {
         const auto n = to_uint(v);
         if (n == 0) throw std::invalid_argument("seed_count must be positive");
         c.sweep.seeds.clear();
         for (std::uint64_t s = 0; s < n; ++s) c.sweep.seeds.push_back(s);
       }},
      {"parallelism", [](auto& c, auto& v) { c.sweep.parallelism = to_uint(v); }},
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& key,
                         const std::string& reason)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " +
                         (key.empty() ? "" : "'" + key + "': ") + reason),
      line_(line),
      key_(key) {}

void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown key");
  if (value.empty()) throw std::invalid_argument("missing value");
  it->second(config, value);
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "", "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, lineno, "", "empty key");
    if (auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(source, lineno, key,
                        "duplicate key (first set on line " + std::to_string(prev->second) + ")");
    }
    seen[key] = lineno;
    try {
      apply_config_value(config, key, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, lineno, key, e.what());
    }
  }
  try {
    config.train.validate();
    config.sweep.validate();
  } catch (const std::exception& e) {
    // Point at the line that set the first key the message mentions.
    const std::string msg = e.what();
    std::size_t best = std::string::npos;
    std::string key;
    for (const auto& [k, ln] : seen) {
      for (auto pos = msg.find(k); pos != std::string::npos; pos = msg.find(k, pos + 1)) {
        const bool left = pos == 0 || !(std::isalnum(static_cast<unsigned char>(msg[pos - 1])) || msg[pos - 1] == '_');
        const std::size_t end = pos + k.size();
        const bool right = end == msg.size() || !(std::isalnum(static_cast<unsigned char>(msg[end])) || msg[end] == '_');
        if (left && right && pos < best) {
          best = pos;
          key = k;
        }
      }
    }
    if (!key.empty()) throw ConfigError(source, seen[key], key, msg);
    throw ConfigError(source, lineno, "", msg);
  }
  return config;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

}  // namespace tcvae

#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "tcvae/trainer.hpp"

namespace tcvae {

// Bad experiment file; message carries "<source>:<line>: <key>: <reason>".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& key,
              const std::string& reason);
  std::size_t line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::size_t line_;
  std::string key_;
};

struct ExperimentConfig {
  TrainConfig train;
  SweepConfig sweep;
};

// Flat key=value lines, '#' starts a comment, blank lines ignored. Unknown
// keys and malformed values are rejected with the offending line number.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Applies one key=value pair; throws std::invalid_argument on bad input.
void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

}  // namespace tcvae

#pragma once

#include "qrsub/experiment.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qrsub::cli {

// Raised for malformed lines, unknown keys and bad values; maps to the usage exit code.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Flat `key = value` lines; '#' starts a comment; blank lines ignored. Later keys win.
std::map<std::string, std::string> parse_config_text(std::string_view text);
std::map<std::string, std::string> read_config_file(const std::string& path);

// Applies entries onto defaults. Returns true when base_seed was given.
bool apply_config(const std::map<std::string, std::string>& entries, ExperimentConfig& config,
                  bool* sweep = nullptr);

}  // namespace qrsub::cli

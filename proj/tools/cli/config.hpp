#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "part/dataset.hpp"
#include "part/discovery.hpp"
#include "part/model.hpp"
#include "part/train.hpp"

namespace part::cli {

/// Unknown key or unparsable value; key() names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::string command;
  std::filesystem::path config_path;
  std::vector<std::string> overrides;
  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 0;

  ModelConfig model;
  TrainConfig train;
  DiscoveryConfig parts;
  SynthSpec data;
  /// When set, samples are read from this directory instead of generated.
  std::filesystem::path data_dir;
  /// Checkpoint path; empty means <out>/model.ckpt.
  std::filesystem::path checkpoint;

  std::size_t sample = 0;  // test-set index used by discover and cam
  bool write_masks = true;
  int cam_class = -1;  // -1: predicted class
  CamSource cam_source = CamSource::part;

  std::size_t equiv_size = 8;
  std::size_t equiv_channels = 4;
  std::size_t equiv_kernel = 3;
  std::vector<double> equiv_alphas{1.0, 10.0, 100.0};
  double equiv_c = 0.0;

  std::filesystem::path checkpoint_path() const {
    return checkpoint.empty() ? out_dir / "model.ckpt" : checkpoint;
  }
};

/// Sets one key. Throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies `key = value` lines; `#` starts a comment, blank lines are skipped.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);

/// Parses one `key=value` override.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Defaults, then the file (if any), then overrides, in that order.
RunConfig parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

/// Every recognized key, sorted.
std::vector<std::string> known_keys();

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace part::cli

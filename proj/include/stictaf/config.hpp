#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "stictaf/targets.hpp"
#include "stictaf/vi_engine.hpp"
#include "stictaf/wind.hpp"

namespace stictaf {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses the TOML subset used by run configs: [dotted.table] headers,
// `key = value` with bare or quoted keys, strings, integers, floats
// (including inf), booleans, single-line arrays and # comments.
json parse_toml(std::string_view text, const std::string& source = "<config>");

// Reads a .toml or .json config file.
json load_config_file(const std::filesystem::path& path);

struct TargetSpec {
  std::string name = "nig";
  int dim = 2;                  // std_normal only
  double continuation = 0.05;   // nig: tangent continuation point used during training
  std::string csv;              // wind: path to the station,season,day,speed CSV
  ThresholdConfig thresholds;   // wind only
};

struct RunConfig {
  TargetSpec target;
  TrainConfig train;
  std::size_t output_samples = 10000;
  std::string output_dir;  // empty: runs root / config name
};

// Fills defaults, rejects unknown keys and validates values.
RunConfig run_config_from_json(const json& j);
json to_json(const RunConfig& cfg);

// Config text as written to config.json (two-space indent, trailing newline).
std::string resolved_config_text(const RunConfig& cfg);

// 16 hex digits of the FNV-1a hash of `text`.
std::string config_hash(std::string_view text);

struct RunTargets {
  std::unique_ptr<TargetDensity> train;  // density optimized in the ELBO
  std::unique_ptr<TargetDensity> exact;  // density used for tail probing and evaluation
};

// Relative wind CSV paths resolve against `base_dir`.
RunTargets make_run_targets(const TargetSpec& spec, const std::filesystem::path& base_dir = {});

std::string station_season_key(int station, int season);  // 0-based in, "station1_season1" out

}  // namespace stictaf

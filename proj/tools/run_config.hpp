#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmarket/sim.hpp"

namespace specmarket::cli {

enum class EvalPolicy { agent, hold };

/// Everything a subcommand needs. Loaded from a flat JSON object whose keys
/// match the long flag names (dashes become underscores).
struct RunConfig {
  SimConfig sim;
  DatasetSpec data;

  std::filesystem::path out = ".";
  std::optional<std::filesystem::path> target_csv;
  std::optional<std::filesystem::path> counterparty_csv;
  /// Granularity for traffic CSVs that lack the metadata line.
  std::optional<std::int64_t> csv_granularity_s;

  std::optional<std::filesystem::path> input;
  std::optional<std::size_t> backtest_start;

  std::optional<std::filesystem::path> checkpoint;
  std::int64_t eval_granularity_s = 3600;
  EvalPolicy policy = EvalPolicy::agent;

  std::vector<std::uint64_t> seeds;
};

/// Key groups; each subcommand exposes the union of some of them as flags.
enum class KeyGroup { global, generator, data_files, forecaster, forecast, sim, eval, sweep };

struct KeyDef {
  std::string name;
  std::string help;
  KeyGroup group;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
  /// Converts flag text into the JSON value `set` accepts.
  std::function<nlohmann::json(const std::string&)> parse_flag;
};

const std::vector<KeyDef>& config_keys();
const KeyDef* find_key(const std::string& name);

/// Applies every member of a flat JSON object; unknown keys and
/// ill-typed values throw ValidationError.
void apply_json(RunConfig& cfg, const nlohmann::json& object);

/// Parses a config file into a JSON object without applying it.
nlohmann::json read_config_json(const std::filesystem::path& path);
RunConfig load_config_file(const std::filesystem::path& path);

/// Flat JSON object with every key; load_config_file accepts it back.
nlohmann::json echo(const RunConfig& cfg);

std::string flag_name(const std::string& key);

} // namespace specmarket::cli

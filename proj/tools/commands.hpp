#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace specmarket::cli {

/// Writes `<out>/<target_id>.csv` and `<out>/<counterparty_id>.csv`.
void cmd_gen_traffic(const RunConfig& cfg, std::ostream& log);

/// Backtests one traffic CSV: `<out>/forecast.csv`, `<out>/forecast_metrics.json`.
void cmd_forecast(const RunConfig& cfg, std::ostream& log);

/// `<out>/agent.net`, `<out>/agent.json`, `<out>/reward_trace.csv`,
/// `<out>/train_summary.json`. With `seeds`, one `seed_<n>` directory each.
void cmd_train(const RunConfig& cfg, std::ostream& log);

/// `<out>/results_<granularity>.csv` and `<out>/summary_<granularity>.json`.
void cmd_eval(const RunConfig& cfg, std::ostream& log);

/// Inner join of results CSVs on timestamp: `<out>/report.csv`, `<out>/report.json`.
void cmd_report(const std::vector<std::filesystem::path>& inputs, const RunConfig& cfg, std::ostream& log);

/// Market data named by the config: both CSVs when given, else generated.
MarketData load_market_data(const RunConfig& cfg);

/// Parses arguments and runs one subcommand. Returns 0 on success, 1 on a
/// validation error, 2 on divergence or any other runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace specmarket::cli

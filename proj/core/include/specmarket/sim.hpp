#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specmarket/agent.hpp"
#include "specmarket/forecast.hpp"
#include "specmarket/market.hpp"
#include "specmarket/traffic.hpp"

namespace specmarket {

/// 2023-01-22T00:00:00Z, the first sample of the default dataset.
inline constexpr UnixSeconds kDefaultStartTime = 1674345600;

/// Parameters of the built-in two-operator dataset. The counterparty series
/// reuses the target's period, scaled by `counterparty_scale` and shifted by
/// `counterparty_phase_steps`.
struct DatasetSpec {
  std::size_t days = 31;
  std::int64_t granularity_s = 3600;
  double mean_level = 25.0;
  double daily_amplitude = 5.0;
  double noise_sigma = 1.0;
  double trend_per_day = 0.0;
  double counterparty_scale = 0.9;
  double counterparty_phase_steps = 6.0;
  std::uint64_t seed = 7;
  UnixSeconds start_time = kDefaultStartTime;
  std::string target_id = "lte";
  std::string counterparty_id = "nr";

  SynthSpec target_spec() const;
  SynthSpec counterparty_spec() const;
};

/// Demand of the learning (target) operator and its trading counterparty on
/// a common time grid.
struct MarketData {
  TrafficSeries target;
  TrafficSeries counterparty;

  std::size_t size() const { return target.size(); }
  std::int64_t granularity_s() const { return target.granularity_s; }
  void validate() const;
};

MarketData generate_dataset(const DatasetSpec& spec);

/// Resamples both series; upsampling noise is `noise_fraction` of each
/// series' mean.
MarketData resample_dataset(const MarketData& data, std::int64_t granularity_s, double noise_fraction,
                            std::uint64_t seed);

struct SimConfig {
  double threshold = 24.0;
  std::size_t train_days = 15;
  std::size_t total_days = 31;
  /// First evaluation day; must not precede train_days.
  std::optional<std::size_t> eval_start_day;
  RewardParams reward;
  std::size_t episodes = 60;
  std::uint64_t seed = 1;
  /// Currency per served SRU per step.
  double service_revenue_rate = 0.3;
  double price_coefficient = 0.1;
  QuoteRule quote_rule = QuoteRule::counterparty_demand;
  /// season_period == 0 means one day at the run's granularity.
  ForecasterConfig forecaster{.season_period = 0};
  double alloc_min = 0.0;
  double alloc_max = 48.0;
  /// Hidden sizes, replay, optimizer, discount, tau, epsilon, ma_window.
  /// threshold and seed are taken from this struct.
  AgentConfig agent;
  double resample_noise_fraction = 0.02;

  std::size_t steps_per_day(std::int64_t granularity_s) const;
  std::size_t eval_day() const { return eval_start_day.value_or(train_days); }
  AgentConfig agent_config() const;
  ForecasterConfig forecaster_config(std::int64_t granularity_s) const;
  void validate() const;
};

struct MarketEpochResult {
  std::size_t step = 0;
  UnixSeconds timestamp = 0;
  double demand = 0.0;
  double forecast = 0.0;
  double alloc_before = 0.0;
  double alloc_after = 0.0;
  /// Requested and executed allocation change (differ when a trade is void).
  double requested_delta = 0.0;
  double action_delta = 0.0;
  double buy_price = 0.0;
  double sell_price = 0.0;
  double deficit = 0.0;
  double surplus = 0.0;
  double monetary_cost = 0.0;
  double reward = 0.0;
  double profit_dynamic = 0.0;
  double profit_static = 0.0;

  /// Price of the side actually traded, or the buy quote when holding.
  double price() const { return action_delta < 0.0 ? sell_price : buy_price; }
};

struct ProfitStep {
  double dynamic = 0.0;
  double static_baseline = 0.0;
};

/// dynamic = rate * min(demand, allocation) - buy_price * bought
///           + sell_price * sold - fee (when anything traded)
/// static  = rate * min(demand, threshold)
ProfitStep profit_step(double demand, double allocation, double bought_qty, double sold_qty, double buy_price,
                       double sell_price, const SimConfig& cfg);

struct StepOutcome {
  AgentState next_state;
  double reward = 0.0;
  bool done = false;
  MarketEpochResult result;
};

/// One operator trading against a non-learning counterparty over the step
/// range [begin, end) of a dataset. Each step: quote, order, match and settle
/// (trade executes before demand is observed), then deficit, surplus,
/// reward and profit against the post-trade allocation.
class MarketEnv {
public:
  MarketEnv(const SimConfig& cfg, const MarketData& data, const Forecaster& forecaster, std::size_t begin,
            std::size_t end);

  /// Resets allocation to the threshold and the ledger to opening balances.
  AgentState reset();

  const AgentState& state() const { return state_; }
  ActionMask mask() const;
  bool finished() const { return t_ >= end_; }
  std::size_t current_step() const { return t_; }
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }
  double allocation() const { return allocation_; }
  const Ledger& ledger() const { return ledger_; }

  StepOutcome step(const Action& action);

  /// Forecast the env uses for step t (all t >= window length).
  double forecast_at(std::size_t t) const { return forecasts_.at(t); }

private:
  AgentState build_state_at(std::size_t t) const;
  void open_ledger();

  SimConfig cfg_;
  const MarketData* data_;
  std::size_t begin_;
  std::size_t end_;
  std::size_t first_forecast_;
  std::vector<double> forecasts_;
  std::vector<double> errors_;
  EpochTag epoch_;

  std::size_t t_ = 0;
  double allocation_ = 0.0;
  AgentState state_;
  Ledger ledger_;
  std::uint64_t next_order_id_ = 1;
  std::uint64_t next_match_id_ = 1;
};

struct EpisodeStats {
  std::size_t episode = 0;
  double total_reward = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  DdqnAgent agent;
  std::vector<EpisodeStats> episodes;
};

/// Step range [begin, end) covered by training episodes at the data's
/// granularity.
std::pair<std::size_t, std::size_t> training_span(const SimConfig& cfg, const MarketData& data);
std::pair<std::size_t, std::size_t> evaluation_span(const SimConfig& cfg, const MarketData& data);

/// Runs cfg.episodes passes over the training span. Throws DivergenceError
/// on a non-finite loss.
TrainResult train(const SimConfig& cfg, const MarketData& data,
                  const std::function<void(const EpisodeStats&)>& on_episode = {});

using Policy = std::function<Action(const AgentState&, const ActionMask&)>;

Policy greedy_policy(const DdqnAgent& agent);
Policy hold_policy();

struct EvalSummary {
  std::int64_t granularity_s = 0;
  std::size_t steps = 0;
  double cumulative_dynamic = 0.0;
  double cumulative_static = 0.0;
  /// cumulative_dynamic / cumulative_static.
  double profit_ratio = 0.0;
  double cumulative_reward = 0.0;
  double total_deficit = 0.0;
  double total_surplus = 0.0;
  std::size_t trades = 0;
};

struct EvalResult {
  std::vector<MarketEpochResult> results;
  EvalSummary summary;
};

/// Greedy rollout of `policy` over the evaluation span. When granularity_s
/// differs from the data's, both series are resampled first (noise seeded by
/// cfg.seed).
EvalResult evaluate(const Policy& policy, const SimConfig& cfg, const MarketData& data, std::int64_t granularity_s);

EvalSummary summarize(std::span<const MarketEpochResult> results, std::int64_t granularity_s);

/// `step,timestamp,demand,forecast,alloc_before,action_delta,price,deficit,surplus,reward,profit_dyn,profit_static`
void write_results_csv(std::span<const MarketEpochResult> results, const std::filesystem::path& path);

/// `episode,total_reward,mean_loss,epsilon,steps`
void write_trace_csv(std::span<const EpisodeStats> episodes, const std::filesystem::path& path);

} // namespace specmarket

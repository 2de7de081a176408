#include "specmarket/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "specmarket/errors.hpp"

namespace specmarket {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

// Spectrum attributes shared by every order in the two-operator experiment.
constexpr FreqRange kSharedBand{3.55e9, 3.70e9};
constexpr Region kSharedRegion{{0.0, 0.0, 0.0}, {1000.0, 1000.0, 100.0}};

} // namespace

SynthSpec DatasetSpec::target_spec() const
{
  SynthSpec s;
  s.operator_id = target_id;
  s.mean_level = mean_level;
  s.daily_amplitude = daily_amplitude;
  if (granularity_s <= 0 || kSecondsPerDay % granularity_s != 0)
    throw ValidationError("granularity must divide one day");
  s.period = static_cast<std::size_t>(kSecondsPerDay / granularity_s);
  s.noise_sigma = noise_sigma;
  s.trend_per_day = trend_per_day;
  s.seed = seed;
  s.length = days * s.period;
  s.granularity_s = granularity_s;
  s.start_time = start_time;
  return s;
}

SynthSpec DatasetSpec::counterparty_spec() const
{
  SynthSpec s = target_spec();
  s.operator_id = counterparty_id;
  s.mean_level = mean_level * counterparty_scale;
  s.daily_amplitude = daily_amplitude * counterparty_scale;
  s.noise_sigma = noise_sigma * counterparty_scale;
  s.trend_per_day = trend_per_day * counterparty_scale;
  s.phase_steps = counterparty_phase_steps;
  s.seed = seed + 1;
  return s;
}

void MarketData::validate() const
{
  target.validate();
  counterparty.validate();
  if (target.size() != counterparty.size() || target.granularity_s != counterparty.granularity_s
      || target.start_time != counterparty.start_time)
    throw ValidationError("target and counterparty series must share length, start time and granularity");
  if (target.operator_id == counterparty.operator_id)
    throw ValidationError("target and counterparty need distinct operator ids");
}

MarketData generate_dataset(const DatasetSpec& spec)
{
  if (spec.days == 0)
    throw ValidationError("dataset needs at least one day");
  return {generate(spec.target_spec()), generate(spec.counterparty_spec())};
}

MarketData resample_dataset(const MarketData& data, std::int64_t granularity_s, double noise_fraction,
                            std::uint64_t seed)
{
  data.validate();
  return {resample(data.target, granularity_s, noise_fraction * data.target.mean(), seed),
          resample(data.counterparty, granularity_s, noise_fraction * data.counterparty.mean(), seed + 1)};
}

std::size_t SimConfig::steps_per_day(std::int64_t granularity_s) const
{
  if (granularity_s <= 0 || kSecondsPerDay % granularity_s != 0)
    throw ValidationError("granularity " + std::to_string(granularity_s) + " s does not divide one day");
  return static_cast<std::size_t>(kSecondsPerDay / granularity_s);
}

AgentConfig SimConfig::agent_config() const
{
  AgentConfig a = agent;
  a.threshold = threshold;
  a.seed = seed;
  return a;
}

ForecasterConfig SimConfig::forecaster_config(std::int64_t granularity_s) const
{
  ForecasterConfig f = forecaster;
  if (f.season_period == 0)
    f.season_period = steps_per_day(granularity_s);
  return f;
}

void SimConfig::validate() const
{
  if (!(threshold > 0.0))
    throw ValidationError("threshold must be positive");
  if (train_days == 0 || train_days >= total_days)
    throw ValidationError("train_days must lie in [1, total_days)");
  if (eval_day() < train_days)
    throw ValidationError("evaluation span overlaps the training days");
  if (eval_day() >= total_days)
    throw ValidationError("evaluation span is empty");
  if (!(alloc_min >= 0.0 && alloc_min <= threshold && threshold <= alloc_max))
    throw ValidationError("allocation bounds must satisfy 0 <= alloc_min <= threshold <= alloc_max");
  if (!(service_revenue_rate >= 0.0) || !(price_coefficient >= 0.0))
    throw ValidationError("revenue rate and price coefficient must be >= 0");
  if (!(resample_noise_fraction >= 0.0))
    throw ValidationError("resample noise fraction must be >= 0");
  reward.validate();
  agent_config().validate();
}

ProfitStep profit_step(double demand, double allocation, double bought_qty, double sold_qty, double buy_price,
                       double sell_price, const SimConfig& cfg)
{
  if (bought_qty < 0.0 || sold_qty < 0.0)
    throw ValidationError("profit_step: traded quantities must be >= 0");
  const double fee = (bought_qty > 0.0 || sold_qty > 0.0) ? cfg.reward.transaction_cost : 0.0;
  ProfitStep p;
  p.dynamic = cfg.service_revenue_rate * std::min(demand, allocation) - buy_price * bought_qty
              + sell_price * sold_qty - fee;
  p.static_baseline = cfg.service_revenue_rate * std::min(demand, cfg.threshold);
  return p;
}

MarketEnv::MarketEnv(const SimConfig& cfg, const MarketData& data, const Forecaster& forecaster, std::size_t begin,
                     std::size_t end)
    : cfg_(cfg), data_(&data), begin_(begin), end_(end), first_forecast_(forecaster.window_length())
{
  cfg_.validate();
  data.validate();
  if (end_ > data.size() || begin_ >= end_)
    throw ValidationError("environment span [" + std::to_string(begin_) + ", " + std::to_string(end_)
                          + ") is empty or exceeds the data");
  if (begin_ < first_forecast_ + 1)
    throw ValidationError("environment must start after " + std::to_string(first_forecast_)
                          + " warm-up steps of forecast history");

  const auto& demand = data.target.values;
  forecasts_.assign(demand.size(), std::numeric_limits<double>::quiet_NaN());
  errors_.assign(demand.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = first_forecast_; t < demand.size(); ++t) {
    forecasts_[t] = forecaster.predict_next(std::span<const double>(demand).subspan(t - first_forecast_, first_forecast_));
    errors_[t] = std::abs(forecasts_[t] - demand[t]);
  }
  epoch_ = epoch_for_interval(static_cast<double>(data.granularity_s()));
  reset();
}

void MarketEnv::open_ledger()
{
  ledger_ = Ledger{};
  ledger_.open_account(data_->target.operator_id, cfg_.threshold);
  ledger_.open_account(data_->counterparty.operator_id, cfg_.alloc_max - cfg_.threshold);
}

AgentState MarketEnv::reset()
{
  t_ = begin_;
  allocation_ = cfg_.threshold;
  next_order_id_ = 1;
  next_match_id_ = 1;
  open_ledger();
  state_ = build_state_at(t_);
  return state_;
}

AgentState MarketEnv::build_state_at(std::size_t t) const
{
  const std::size_t n = cfg_.agent.ma_window;
  const auto& demand = data_->target.values;
  const std::size_t err_begin = std::max(first_forecast_, t > n ? t - n : 0);
  const std::size_t dem_begin = t > n ? t - n : 0;
  const double forecast = t < forecasts_.size() ? forecasts_[t] : forecasts_.back();
  return build_state(allocation_, forecast, std::span<const double>(errors_).subspan(err_begin, t - err_begin),
                     std::span<const double>(demand).subspan(dem_begin, t - dem_begin), n, cfg_.threshold);
}

ActionMask MarketEnv::mask() const
{
  return feasible_actions(allocation_, cfg_.alloc_min, cfg_.alloc_max);
}

StepOutcome MarketEnv::step(const Action& action)
{
  if (finished())
    throw ValidationError("step on a finished environment");
  if (action.index >= kActionCount || !mask()[action.index])
    throw ValidationError("action " + std::to_string(action.index) + " is masked at allocation "
                          + std::to_string(allocation_));

  const std::size_t t = t_;
  const double demand = data_->target.values[t];
  const double other = data_->counterparty.values[t];
  const double forecast = forecasts_[t];
  const UnixSeconds now = data_->target.timestamp_at(t);

  MarketEpochResult r;
  r.step = t;
  r.timestamp = now;
  r.demand = demand;
  r.forecast = forecast;
  r.alloc_before = allocation_;
  r.requested_delta = action.delta_srus;
  r.buy_price = quote_for(Side::bid, other, forecast, cfg_.price_coefficient, cfg_.quote_rule);
  r.sell_price = quote_for(Side::ask, other, forecast, cfg_.price_coefficient, cfg_.quote_rule);

  double executed = 0.0;
  if (action.delta_srus != 0.0) {
    const bool buying = action.is_buy();
    Order own;
    own.order_id = next_order_id_++;
    own.operator_id = data_->target.operator_id;
    own.side = buying ? Side::bid : Side::ask;
    own.quantity = std::abs(action.delta_srus);
    own.price = buying ? r.buy_price : r.sell_price;
    own.freq_range = kSharedBand;
    own.region = kSharedRegion;
    own.time_window = {now, now + data_->granularity_s()};
    own.epoch_tag = epoch_;
    own.initiator = true;

    // The counterparty accepts at the posted price.
    Order reply = own;
    reply.order_id = next_order_id_++;
    reply.operator_id = data_->counterparty.operator_id;
    reply.side = buying ? Side::ask : Side::bid;
    reply.initiator = false;

    const Order& bid = buying ? own : reply;
    const Order& ask = buying ? reply : own;
    const auto matches = match_epoch(std::span<const Order>(&bid, 1), std::span<const Order>(&ask, 1),
                                     {.first_match_id = next_match_id_, .timestamp = now});
    next_match_id_ += matches.size();
    const auto settled = ledger_.settle(matches, cfg_.reward.transaction_cost);
    if (!settled.applied.empty())
      executed = action.delta_srus;
  }

  const double alloc = allocation_ + executed;
  r.alloc_after = alloc;
  r.action_delta = executed;
  r.deficit = std::max(0.0, demand - alloc);
  r.surplus = std::max(0.0, alloc - demand);
  const double bought = executed > 0.0 ? executed : 0.0;
  const double sold = executed < 0.0 ? -executed : 0.0;
  r.monetary_cost = r.buy_price * bought - r.sell_price * sold;
  r.reward = compute_reward(r.deficit, r.surplus, r.monetary_cost, executed != 0.0, cfg_.reward);
  const auto profit = profit_step(demand, alloc, bought, sold, r.buy_price, r.sell_price, cfg_);
  r.profit_dynamic = profit.dynamic;
  r.profit_static = profit.static_baseline;

  allocation_ = alloc;
  ++t_;
  state_ = build_state_at(t_);

  return {state_, r.reward, finished(), r};
}

std::pair<std::size_t, std::size_t> training_span(const SimConfig& cfg, const MarketData& data)
{
  const std::size_t spd = cfg.steps_per_day(data.granularity_s());
  const std::size_t window = required_window(cfg.forecaster_config(data.granularity_s()));
  const std::size_t end = cfg.train_days * spd;
  if (end > data.size())
    throw ValidationError("dataset shorter than the training span");
  return {window + 1, end};
}

std::pair<std::size_t, std::size_t> evaluation_span(const SimConfig& cfg, const MarketData& data)
{
  cfg.validate();
  const std::size_t spd = cfg.steps_per_day(data.granularity_s());
  const std::size_t begin = cfg.eval_day() * spd;
  const std::size_t end = cfg.total_days * spd;
  if (begin < cfg.train_days * spd)
    throw ValidationError("evaluation span overlaps the training span");
  if (end > data.size())
    throw ValidationError("dataset holds " + std::to_string(data.size()) + " steps; evaluation needs "
                          + std::to_string(end));
  return {begin, end};
}

TrainResult train(const SimConfig& cfg, const MarketData& data,
                  const std::function<void(const EpisodeStats&)>& on_episode)
{
  cfg.validate();
  data.validate();
  const auto g = data.granularity_s();
  const auto [begin, end] = training_span(cfg, data);

  // The forecaster only sees the training days.
  TrafficSeries history = data.target;
  history.values.resize(end);
  const Forecaster forecaster = Forecaster::fit(cfg.forecaster_config(g), history);

  TrainResult out{DdqnAgent(cfg.agent_config()), {}};
  if (cfg.episodes == 0)
    return out;

  MarketEnv env(cfg, data, forecaster, begin, end);
  auto& agent = out.agent;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    EpisodeStats stats;
    stats.episode = ep;
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    AgentState s = env.reset();
    while (!env.finished()) {
      const Action a = agent.explore(s, env.mask());
      const StepOutcome o = env.step(a);
      const auto loss = agent.observe({s.normalized(), a.index, o.reward, o.next_state.normalized(), o.done});
      if (loss) {
        loss_sum += *loss;
        ++loss_n;
      }
      stats.total_reward += o.reward;
      ++stats.steps;
      s = o.next_state;
    }
    if (!agent.online().all_finite())
      throw DivergenceError("online network has non-finite parameters after episode " + std::to_string(ep));
    stats.mean_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    stats.epsilon = epsilon_at(agent.exploration_step(), agent.config().epsilon);
    out.episodes.push_back(stats);
    if (on_episode)
      on_episode(stats);
  }
  return out;
}

Policy greedy_policy(const DdqnAgent& agent)
{
  return [&agent](const AgentState& s, const ActionMask& m) { return agent.greedy(s, m); };
}

Policy hold_policy()
{
  return [](const AgentState&, const ActionMask&) { return Action::hold(); };
}

EvalSummary summarize(std::span<const MarketEpochResult> results, std::int64_t granularity_s)
{
  EvalSummary s;
  s.granularity_s = granularity_s;
  s.steps = results.size();
  for (const auto& r : results) {
    s.cumulative_dynamic += r.profit_dynamic;
    s.cumulative_static += r.profit_static;
    s.cumulative_reward += r.reward;
    s.total_deficit += r.deficit;
    s.total_surplus += r.surplus;
    if (r.action_delta != 0.0)
      ++s.trades;
  }
  s.profit_ratio = s.cumulative_static != 0.0 ? s.cumulative_dynamic / s.cumulative_static
                                               : std::numeric_limits<double>::quiet_NaN();
  return s;
}

EvalResult evaluate(const Policy& policy, const SimConfig& cfg, const MarketData& data, std::int64_t granularity_s)
{
  cfg.validate();
  data.validate();
  const MarketData run_data = granularity_s == data.granularity_s()
                                  ? data
                                  : resample_dataset(data, granularity_s, cfg.resample_noise_fraction, cfg.seed);
  const auto [begin, end] = evaluation_span(cfg, run_data);

  TrafficSeries history = run_data.target;
  history.values.resize(cfg.train_days * cfg.steps_per_day(granularity_s));
  const Forecaster forecaster = Forecaster::fit(cfg.forecaster_config(granularity_s), history);

  MarketEnv env(cfg, run_data, forecaster, begin, end);
  EvalResult out;
  out.results.reserve(end - begin);
  AgentState s = env.reset();
  while (!env.finished()) {
    const StepOutcome o = env.step(policy(s, env.mask()));
    out.results.push_back(o.result);
    s = o.next_state;
  }
  out.summary = summarize(out.results, granularity_s);
  return out;
}

void write_results_csv(std::span<const MarketEpochResult> results, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write results: " + path.string());
  out << "step,timestamp,demand,forecast,alloc_before,action_delta,price,deficit,surplus,reward,profit_dyn,"
         "profit_static\n";
  char buf[512];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                  format_iso8601(r.timestamp).c_str(), r.demand, r.forecast, r.alloc_before, r.action_delta,
                  r.price(), r.deficit, r.surplus, r.reward, r.profit_dynamic, r.profit_static);
    out << buf;
  }
  if (!out)
    throw std::runtime_error("failed writing results: " + path.string());
}

void write_trace_csv(std::span<const EpisodeStats> episodes, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write reward trace: " + path.string());
  out << "episode,total_reward,mean_loss,epsilon,steps\n";
  char buf[160];
  for (const auto& e : episodes) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu\n", e.episode, e.total_reward, e.mean_loss, e.epsilon,
                  e.steps);
    out << buf;
  }
}

} // namespace specmarket

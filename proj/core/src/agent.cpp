#include "specmarket/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "specmarket/errors.hpp"

namespace specmarket {

namespace {

double tail_mean(std::span<const double> window, std::size_t n)
{
  const std::size_t k = std::min(n, window.size());
  const auto tail = window.subspan(window.size() - k);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(k);
}

Eigen::MatrixXd stack_states(std::span<const Transition> batch, bool next)
{
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kStateSize), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = next ? batch[b].next_state : batch[b].state;
    for (std::size_t i = 0; i < kStateSize; ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = s[i];
  }
  return m;
}

void check_pair(const DenseNet& online, const DenseNet& target)
{
  if (!online.same_architecture(target))
    throw ValidationError("online and target networks differ in architecture");
  if (online.input_size() != kStateSize || online.output_size() != kActionCount)
    throw ValidationError("Q-network must map " + std::to_string(kStateSize) + " inputs to "
                          + std::to_string(kActionCount) + " outputs");
}

std::filesystem::path sidecar_path(const std::filesystem::path& net_path)
{
  auto p = net_path;
  p.replace_extension(".json");
  return p;
}

} // namespace

Action Action::from_index(std::size_t index)
{
  if (index >= kActionCount)
    throw ValidationError("action index out of range: " + std::to_string(index));
  return Action{index, kActionDeltas[index]};
}

ActionMask feasible_actions(double allocation, double lo, double hi)
{
  ActionMask mask{};
  for (std::size_t i = 0; i < kActionCount; ++i) {
    const double next = allocation + kActionDeltas[i];
    mask[i] = i == kHoldAction || (next >= lo && next <= hi);
  }
  return mask;
}

StateVector AgentState::normalized() const
{
  return {current_allocation / threshold, next_forecast / threshold, forecast_error_ma / threshold,
          demand_ma / threshold};
}

AgentState build_state(double allocation, double forecast, std::span<const double> error_window,
                       std::span<const double> demand_window, std::size_t n, double threshold)
{
  if (error_window.empty() || demand_window.empty())
    throw ValidationError("build_state: empty moving-average window");
  if (!(threshold > 0.0))
    throw ValidationError("build_state: threshold must be positive");
  if (n == 0)
    throw ValidationError("build_state: moving-average length must be positive");
  AgentState s;
  s.current_allocation = allocation;
  s.next_forecast = forecast;
  s.forecast_error_ma = tail_mean(error_window, n);
  s.demand_ma = tail_mean(demand_window, n);
  s.threshold = threshold;
  return s;
}

double epsilon_at(std::int64_t step, const EpsilonSchedule& schedule)
{
  if (step < 0)
    throw ValidationError("epsilon_at: negative step");
  return std::max(schedule.floor, schedule.start * std::pow(schedule.decay, static_cast<double>(step)));
}

std::size_t greedy_index(std::span<const double> q_values, const ActionMask& mask)
{
  if (q_values.size() != kActionCount)
    throw ValidationError("expected " + std::to_string(kActionCount) + " Q-values");
  std::size_t best = kActionCount;
  for (std::size_t i = 0; i < kActionCount; ++i) {
    if (mask[i] && (best == kActionCount || q_values[i] > q_values[best]))
      best = i;
  }
  return best == kActionCount ? kHoldAction : best;
}

Action select_action(const DenseNet& net, const AgentState& state, double epsilon, const ActionMask& mask, Rng& rng)
{
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::array<std::size_t, kActionCount> allowed{};
      std::size_t n = 0;
      for (std::size_t i = 0; i < kActionCount; ++i) {
        if (mask[i])
          allowed[n++] = i;
      }
      if (n == 0)
        return Action::hold();
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      return Action::from_index(allowed[pick(rng)]);
    }
  }
  const auto s = state.normalized();
  const auto q = net.forward(std::span<const double>(s));
  return Action::from_index(greedy_index(q, mask));
}

void RewardParams::validate() const
{
  if (alpha < 0.0 || beta < 0.0 || gamma_cost < 0.0 || transaction_cost < 0.0)
    throw ValidationError("reward weights and transaction cost must be >= 0");
}

double compute_reward(double deficit, double surplus, double monetary_cost, bool transacted,
                      const RewardParams& params)
{
  if (deficit < 0.0 || surplus < 0.0)
    throw ValidationError("deficit and surplus must be >= 0");
  if (deficit > 0.0 && surplus > 0.0)
    throw ValidationError("deficit and surplus cannot both be positive");
  const double fee = transacted ? params.transaction_cost : 0.0;
  return -(params.alpha * deficit + params.beta * surplus + params.gamma_cost * monetary_cost + fee);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed)
{
  if (capacity == 0)
    throw ValidationError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t)
{
  if (items_.size() == capacity_)
    items_.pop_front();
  items_.push_back(t);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size)
{
  if (batch_size == 0 || items_.empty())
    throw ValidationError("cannot sample " + std::to_string(batch_size) + " transitions from a buffer of "
                          + std::to_string(items_.size()));
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx)
    i = pick(rng_);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size)
{
  const auto idx = sample_indices(batch_size);
  std::vector<Transition> out;
  out.reserve(idx.size());
  for (auto i : idx)
    out.push_back(items_[i]);
  return out;
}

std::vector<double> ddqn_targets(const DenseNet& online, const DenseNet& target, std::span<const Transition> batch,
                                 double discount)
{
  check_pair(online, target);
  const Eigen::MatrixXd next = stack_states(batch, true);
  const Eigen::MatrixXd q_online = online.forward_batch(next);
  const Eigen::MatrixXd q_target = target.forward_batch(next);

  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].done) {
      y[b] = batch[b].reward;
      continue;
    }
    const auto col = static_cast<Eigen::Index>(b);
    std::array<double, kActionCount> q{};
    for (std::size_t a = 0; a < kActionCount; ++a)
      q[a] = q_online(static_cast<Eigen::Index>(a), col);
    const auto best = greedy_index(q, kAllActions);
    y[b] = batch[b].reward + discount * q_target(static_cast<Eigen::Index>(best), col);
  }
  return y;
}

double ddqn_update(DenseNet& online, const DenseNet& target, std::span<const Transition> batch, double discount,
                   AdamOptimizer& adam)
{
  if (batch.empty())
    throw ValidationError("ddqn_update: empty batch");
  const auto y = ddqn_targets(online, target, batch, discount);

  const ForwardTrace tr = online.trace(stack_states(batch, false));
  const auto& q = tr.output();
  const auto n = static_cast<double>(batch.size());
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].action >= kActionCount)
      throw ValidationError("ddqn_update: action index out of range");
    const auto row = static_cast<Eigen::Index>(batch[b].action);
    const auto col = static_cast<Eigen::Index>(b);
    const double diff = q(row, col) - y[b];
    loss += diff * diff;
    grad(row, col) = 2.0 * diff / n;
  }
  loss /= n;
  if (!std::isfinite(loss))
    throw DivergenceError("ddqn_update: non-finite loss");
  adam.step(online, online.backward(tr, grad));
  return loss;
}

std::vector<std::size_t> AgentConfig::layer_sizes() const
{
  std::vector<std::size_t> sizes{kStateSize};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(kActionCount);
  return sizes;
}

void AgentConfig::validate() const
{
  if (batch_size == 0 || buffer_capacity < batch_size)
    throw ValidationError("replay capacity must be at least one batch");
  if (!(discount >= 0.0 && discount <= 1.0))
    throw ValidationError("discount must lie in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ValidationError("tau must lie in [0, 1]");
  if (!(learning_rate > 0.0))
    throw ValidationError("learning rate must be positive");
  if (!(threshold > 0.0))
    throw ValidationError("threshold must be positive");
  if (ma_window == 0)
    throw ValidationError("ma_window must be positive");
}

DdqnAgent::DdqnAgent(AgentConfig config)
    : config_((config.validate(), std::move(config))),
      online_(config_.layer_sizes(), config_.seed),
      target_(online_),
      adam_(online_, AdamConfig{.learning_rate = config_.learning_rate}),
      buffer_(config_.buffer_capacity, config_.seed + 1),
      rng_(config_.seed + 2)
{
}

Action DdqnAgent::explore(const AgentState& state, const ActionMask& mask)
{
  const double eps = epsilon_at(explore_step_, config_.epsilon);
  ++explore_step_;
  return select_action(online_, state, eps, mask, rng_);
}

Action DdqnAgent::greedy(const AgentState& state, const ActionMask& mask) const
{
  const auto s = state.normalized();
  return Action::from_index(greedy_index(online_.forward(std::span<const double>(s)), mask));
}

std::optional<double> DdqnAgent::observe(const Transition& t)
{
  buffer_.push(t);
  if (buffer_.size() < config_.batch_size)
    return std::nullopt;
  const auto batch = buffer_.sample(config_.batch_size);
  const double loss = ddqn_update(online_, target_, batch, config_.discount, adam_);
  soft_update(target_, online_, config_.tau);
  ++updates_;
  return loss;
}

void DdqnAgent::save(const std::filesystem::path& net_path) const
{
  if (net_path.extension() != ".net")
    throw ValidationError("agent checkpoint path must end in .net: " + net_path.string());
  save_checkpoint(online_, net_path);

  nlohmann::ordered_json j;
  j["format"] = "specmarket-agent";
  j["version"] = 1;
  j["network"] = net_path.filename().string();
  j["layer_sizes"] = online_.layer_sizes();
  j["epsilon_step"] = explore_step_;
  j["updates"] = updates_;
  j["replay_buffer"] = "skipped";
  j["action_table"] = kActionDeltas;
  j["hyperparameters"] = {
      {"hidden_layers", config_.hidden_layers},
      {"buffer_capacity", config_.buffer_capacity},
      {"batch_size", config_.batch_size},
      {"learning_rate", config_.learning_rate},
      {"tau", config_.tau},
      {"discount", config_.discount},
      {"epsilon_start", config_.epsilon.start},
      {"epsilon_floor", config_.epsilon.floor},
      {"epsilon_decay", config_.epsilon.decay},
      {"threshold", config_.threshold},
      {"ma_window", config_.ma_window},
      {"seed", config_.seed},
  };
  std::ofstream out(sidecar_path(net_path));
  if (!out)
    throw std::runtime_error("cannot write agent sidecar next to " + net_path.string());
  out << j.dump(2) << '\n';
}

DdqnAgent DdqnAgent::load(const std::filesystem::path& net_path)
{
  std::ifstream in(sidecar_path(net_path));
  if (!in)
    throw ValidationError("missing agent sidecar: " + sidecar_path(net_path).string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad agent sidecar: ") + e.what());
  }
  if (j.value("format", "") != "specmarket-agent")
    throw ValidationError("not an agent sidecar: " + sidecar_path(net_path).string());

  try {
    const auto table = j.at("action_table").get<std::vector<double>>();
    if (table != std::vector<double>(kActionDeltas.begin(), kActionDeltas.end()))
      throw ValidationError("checkpoint action table differs from this build's action set");

    const auto& h = j.at("hyperparameters");
    AgentConfig cfg;
    cfg.hidden_layers = h.at("hidden_layers").get<std::vector<std::size_t>>();
    cfg.buffer_capacity = h.at("buffer_capacity").get<std::size_t>();
    cfg.batch_size = h.at("batch_size").get<std::size_t>();
    cfg.learning_rate = h.at("learning_rate").get<double>();
    cfg.tau = h.at("tau").get<double>();
    cfg.discount = h.at("discount").get<double>();
    cfg.epsilon.start = h.at("epsilon_start").get<double>();
    cfg.epsilon.floor = h.at("epsilon_floor").get<double>();
    cfg.epsilon.decay = h.at("epsilon_decay").get<double>();
    cfg.threshold = h.at("threshold").get<double>();
    cfg.ma_window = h.at("ma_window").get<std::size_t>();
    cfg.seed = h.at("seed").get<std::uint64_t>();

    DenseNet net = load_checkpoint(net_path);
    if (net.layer_sizes() != cfg.layer_sizes() || net.layer_sizes() != j.at("layer_sizes").get<std::vector<std::size_t>>())
      throw ValidationError("checkpoint architecture does not match its sidecar");

    DdqnAgent agent(cfg);
    agent.online_ = net;
    agent.target_ = std::move(net);
    agent.adam_ = AdamOptimizer(agent.online_, AdamConfig{.learning_rate = cfg.learning_rate});
    agent.explore_step_ = j.at("epsilon_step").get<std::int64_t>();
    agent.updates_ = j.value("updates", std::size_t{0});
    return agent;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad agent sidecar: ") + e.what());
  }
}

} // namespace specmarket

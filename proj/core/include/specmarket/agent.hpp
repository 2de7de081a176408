#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "specmarket/neural.hpp"

namespace specmarket {

using Rng = std::mt19937_64;

inline constexpr std::size_t kStateSize = 4;
inline constexpr std::size_t kActionCount = 5;

/// SRU change per action index. Negative deltas become ask orders, positive
/// deltas bid orders.
inline constexpr std::array<double, kActionCount> kActionDeltas{-3.0, -1.5, 0.0, 1.5, 3.0};
inline constexpr std::size_t kHoldAction = 2;

struct Action {
  std::size_t index = kHoldAction;
  double delta_srus = 0.0;

  static Action from_index(std::size_t index);
  static Action hold() { return from_index(kHoldAction); }
  bool is_buy() const { return delta_srus > 0.0; }
  bool is_sell() const { return delta_srus < 0.0; }
};

/// true = action allowed.
using ActionMask = std::array<bool, kActionCount>;

inline constexpr ActionMask kAllActions{true, true, true, true, true};

/// Masks every action that would move `allocation` outside [lo, hi]. Hold is
/// always allowed.
ActionMask feasible_actions(double allocation, double lo, double hi);

using StateVector = std::array<double, kStateSize>;

struct AgentState {
  double current_allocation = 0.0;
  double next_forecast = 0.0;
  double forecast_error_ma = 0.0;
  double demand_ma = 0.0;
  double threshold = 24.0;

  /// Every component divided by the threshold.
  StateVector normalized() const;
};

/// Moving averages use the min(n, size) most recent window entries.
AgentState build_state(double allocation, double forecast, std::span<const double> error_window,
                       std::span<const double> demand_window, std::size_t n, double threshold);

struct EpsilonSchedule {
  double start = 1.0;
  double floor = 0.01;
  double decay = 0.995;
};

/// max(floor, start * decay^step).
double epsilon_at(std::int64_t step, const EpsilonSchedule& schedule = {});

/// Highest-Q allowed action; ties go to the lowest index.
std::size_t greedy_index(std::span<const double> q_values, const ActionMask& mask);

/// Epsilon-greedy: with probability epsilon a uniform draw over allowed
/// actions, otherwise greedy_index over the network's Q-values. The random
/// draw is consumed only when epsilon > 0.
Action select_action(const DenseNet& net, const AgentState& state, double epsilon, const ActionMask& mask, Rng& rng);

struct RewardParams {
  double alpha = 8.0;
  double beta = 2.0;
  /// Weight of the monetary term. Not the discount factor.
  double gamma_cost = 0.5;
  double transaction_cost = 0.05;

  void validate() const;
};

/// -(alpha D + beta S + gamma_cost P + T), T = transaction_cost when a trade
/// executed. P is signed: positive when buying, negative when selling.
double compute_reward(double deficit, double surplus, double monetary_cost, bool transacted,
                      const RewardParams& params);

struct Transition {
  StateVector state{};
  std::size_t action = kHoldAction;
  double reward = 0.0;
  StateVector next_state{};
  bool done = false;
};

/// Bounded FIFO store sampled uniformly with replacement.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity = 100000, std::uint64_t seed = 0);

  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  /// Throws ValidationError when fewer than batch_size items are stored.
  std::vector<std::size_t> sample_indices(std::size_t batch_size);
  std::vector<Transition> sample(std::size_t batch_size);

private:
  std::size_t capacity_;
  std::deque<Transition> items_;
  Rng rng_;
};

/// Double-Q regression step: y = r for terminal transitions, otherwise
/// r + discount * Q_target(s', argmax_a Q_online(s', a)); MSE on the taken
/// action's Q-value; one optimizer step on `online`. Returns the loss before
/// the step. `target` is never modified.
double ddqn_update(DenseNet& online, const DenseNet& target, std::span<const Transition> batch, double discount,
                   AdamOptimizer& adam);

/// The regression targets ddqn_update would use, exposed for inspection.
std::vector<double> ddqn_targets(const DenseNet& online, const DenseNet& target, std::span<const Transition> batch,
                                 double discount);

struct AgentConfig {
  std::vector<std::size_t> hidden_layers{128, 128};
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double tau = 0.005;
  double discount = 0.99;
  EpsilonSchedule epsilon;
  /// Normalizer for state components (SRUs).
  double threshold = 24.0;
  /// Moving-average window for error and demand features (steps).
  std::size_t ma_window = 24;
  std::uint64_t seed = 1;

  std::vector<std::size_t> layer_sizes() const;
  void validate() const;
};

/// Online and target networks, optimizer, replay buffer and exploration
/// counter. Single-writer.
class DdqnAgent {
public:
  explicit DdqnAgent(AgentConfig config = {});

  /// Epsilon-greedy at the current exploration step; advances the step.
  Action explore(const AgentState& state, const ActionMask& mask);
  Action greedy(const AgentState& state, const ActionMask& mask) const;

  /// Stores the transition. Once the buffer holds a batch, runs one
  /// ddqn_update followed by one soft target update and returns the loss.
  std::optional<double> observe(const Transition& t);

  const AgentConfig& config() const { return config_; }
  const DenseNet& online() const { return online_; }
  const DenseNet& target() const { return target_; }
  DenseNet& online() { return online_; }
  std::int64_t exploration_step() const { return explore_step_; }
  std::size_t updates() const { return updates_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  /// Writes `<stem>.net` (online network checkpoint) and `<stem>.json`
  /// (sidecar: exploration step, hyperparameters, action table). The replay
  /// buffer is not persisted. `net_path` must end in `.net`.
  void save(const std::filesystem::path& net_path) const;

  /// Restores the online network (target = copy) and hyperparameters.
  /// Throws ValidationError if the sidecar and network disagree on
  /// architecture or the action table differs.
  static DdqnAgent load(const std::filesystem::path& net_path);

private:
  AgentConfig config_;
  DenseNet online_;
  DenseNet target_;
  AdamOptimizer adam_;
  ReplayBuffer buffer_;
  Rng rng_;
  std::int64_t explore_step_ = 0;
  std::size_t updates_ = 0;
};

} // namespace specmarket

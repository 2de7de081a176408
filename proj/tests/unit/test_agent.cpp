#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "specmarket/agent.hpp"
#include "specmarket/errors.hpp"
#include "support/oracles.hpp"

using namespace specmarket;

namespace {

// A [4,5] net with zero weights whose biases are the Q-values.
DenseNet constant_q(const std::array<double, 5>& q)
{
  auto net = DenseNet::zeros({4, 5});
  for (std::size_t i = 0; i < 5; ++i)
    net.layers()[0].biases(static_cast<Eigen::Index>(i)) = q[i];
  return net;
}

AgentState some_state()
{
  return {24.0, 26.0, 1.5, 25.0, 24.0};
}

} // namespace

TEST(Actions, TableIsAscendingAndRoundTrips)
{
  for (std::size_t i = 0; i < kActionCount; ++i) {
    EXPECT_EQ(Action::from_index(i).index, i);
    EXPECT_EQ(Action::from_index(i).delta_srus, kActionDeltas[i]);
    if (i > 0)
      EXPECT_LT(kActionDeltas[i - 1], kActionDeltas[i]);
  }
  EXPECT_EQ(Action::hold().delta_srus, 0.0);
  EXPECT_THROW(Action::from_index(5), ValidationError);
}

TEST(BuildState, NormalizesByThreshold)
{
  const std::vector<double> err{1.5};
  const std::vector<double> dem{25.0};
  const auto s = build_state(24.0, 26.0, err, dem, 24, 24.0);
  const auto v = s.normalized();
  EXPECT_NEAR(v[0], 1.0, 1e-5);
  EXPECT_NEAR(v[1], 1.08333, 1e-5);
  EXPECT_NEAR(v[2], 0.0625, 1e-5);
  EXPECT_NEAR(v[3], 1.04167, 1e-5);
}

TEST(BuildState, AllAtThresholdGivesOnes)
{
  const std::vector<double> w{24.0, 24.0};
  const auto v = build_state(24.0, 24.0, w, w, 2, 24.0).normalized();
  for (double x : v)
    EXPECT_EQ(x, 1.0);
}

TEST(BuildState, MovingAverageUsesRecentEntries)
{
  const std::vector<double> err{9.0, 1.0, 2.0};
  const std::vector<double> dem{100.0, 20.0, 30.0};
  auto s = build_state(1.0, 1.0, err, dem, 1, 24.0);
  EXPECT_EQ(s.forecast_error_ma, 2.0);
  EXPECT_EQ(s.demand_ma, 30.0);
  s = build_state(1.0, 1.0, err, dem, 2, 24.0);
  EXPECT_EQ(s.forecast_error_ma, 1.5);
  EXPECT_EQ(s.demand_ma, 25.0);
  s = build_state(1.0, 1.0, err, dem, 10, 24.0);
  EXPECT_EQ(s.forecast_error_ma, 4.0);
  EXPECT_THROW(build_state(1.0, 1.0, {}, dem, 2, 24.0), ValidationError);
  EXPECT_THROW(build_state(1.0, 1.0, err, dem, 2, 0.0), ValidationError);
}

TEST(SelectAction, GreedyArgmax)
{
  Rng rng(1);
  EXPECT_EQ(select_action(constant_q({1, 2, 9, 0, 3}), some_state(), 0.0, kAllActions, rng).index, 2u);
}

TEST(SelectAction, TiesGoToLowestIndex)
{
  Rng rng(1);
  EXPECT_EQ(select_action(constant_q({5, 5, 0, 0, 0}), some_state(), 0.0, kAllActions, rng).index, 0u);
}

TEST(SelectAction, MaskedActionsNeverChosen)
{
  const auto mask = feasible_actions(1.0, 0.0, 48.0);
  EXPECT_FALSE(mask[0]);
  EXPECT_FALSE(mask[1]);
  EXPECT_TRUE(mask[2]);
  Rng rng(123);
  const auto net = constant_q({100, 90, 0, 0, 0});
  std::array<int, 5> seen{};
  for (int i = 0; i < 10000; ++i)
    ++seen[select_action(net, some_state(), 0.5, mask, rng).index];
  EXPECT_EQ(seen[0], 0);
  EXPECT_EQ(seen[1], 0);
  EXPECT_GT(seen[3], 0);
  EXPECT_GT(seen[4], 0);
}

TEST(SelectAction, GreedyIsPureFunction)
{
  const DenseNet net({4, 16, 5}, 8);
  Rng a(1), b(999);
  const auto mask = feasible_actions(47.0, 0.0, 48.0);
  for (double alloc : {0.0, 12.0, 24.0, 47.0}) {
    AgentState s{alloc, 20.0, 1.0, 21.0, 24.0};
    EXPECT_EQ(select_action(net, s, 0.0, mask, a).index, select_action(net, s, 0.0, mask, b).index);
  }
}

TEST(FeasibleActions, UpperBound)
{
  const auto mask = feasible_actions(46.5, 0.0, 48.0);
  EXPECT_TRUE(mask[3]);
  EXPECT_FALSE(mask[4]);
}

TEST(Epsilon, Schedule)
{
  EXPECT_EQ(epsilon_at(0), 1.0);
  EXPECT_NEAR(epsilon_at(100), 0.60577, 1e-4);
  EXPECT_GT(epsilon_at(918), 0.01);
  EXPECT_EQ(epsilon_at(919), 0.01);
  double prev = 1.0;
  for (std::int64_t k = 0; k < 3000; k += 7) {
    const double e = epsilon_at(k);
    EXPECT_LE(e, prev);
    EXPECT_GE(e, 0.01);
    EXPECT_LE(e, 1.0);
    prev = e;
  }
  EXPECT_THROW(epsilon_at(-1), ValidationError);
}

TEST(Reward, HandEvaluatedCases)
{
  const RewardParams p;
  EXPECT_EQ(compute_reward(0, 0, 0, false, p), 0.0);
  EXPECT_DOUBLE_EQ(compute_reward(2, 0, 4.8, true, p), -18.45);
  EXPECT_DOUBLE_EQ(compute_reward(0, 4, -3.6, true, p), -6.25);
  EXPECT_THROW(compute_reward(1, 1, 0, false, p), ValidationError);
}

TEST(Reward, LinearInEachTerm)
{
  const RewardParams p{.transaction_cost = 0.0};
  for (double k : {0.5, 2.0, 3.0}) {
    EXPECT_NEAR(compute_reward(1.3 * k, 0, 0, false, p), k * compute_reward(1.3, 0, 0, false, p), 1e-12);
    EXPECT_NEAR(compute_reward(0, 2.1 * k, 0, false, p), k * compute_reward(0, 2.1, 0, false, p), 1e-12);
    EXPECT_NEAR(compute_reward(0, 0, -4.4 * k, false, p), k * compute_reward(0, 0, -4.4, false, p), 1e-12);
  }
}

TEST(Replay, FifoEviction)
{
  ReplayBuffer buf(3, 1);
  for (int i = 0; i < 4; ++i)
    buf.push({.reward = static_cast<double>(i)});
  EXPECT_EQ(buf.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NE(buf.at(i).reward, 0.0);
  EXPECT_EQ(buf.at(0).reward, 1.0);
}

TEST(Replay, EmptySampleThrows)
{
  ReplayBuffer buf(10, 1);
  EXPECT_THROW(buf.sample(2), ValidationError);
  buf.push({});
  EXPECT_EQ(buf.sample(3).size(), 3u);
  EXPECT_THROW(buf.sample(0), ValidationError);
}

TEST(Replay, SamplingIsUniform)
{
  ReplayBuffer buf(10, 42);
  for (int i = 0; i < 10; ++i)
    buf.push({.action = static_cast<std::size_t>(i % 5), .reward = static_cast<double>(i)});
  std::array<std::size_t, 10> counts{};
  for (int k = 0; k < 1000; ++k)
    for (auto i : buf.sample_indices(100))
      ++counts[i];
  const double n = 1e5;
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (auto c : counts)
    EXPECT_LT(std::abs(static_cast<double>(c) - n * 0.1), 3 * sigma);
  EXPECT_LT(oracle::chi_square_uniform(counts), oracle::kChiSquare9At001);
}

TEST(Replay, SameSeedSameIndices)
{
  ReplayBuffer a(10, 5), b(10, 5);
  for (int i = 0; i < 10; ++i) {
    a.push({});
    b.push({});
  }
  EXPECT_EQ(a.sample_indices(64), b.sample_indices(64));
}

TEST(Ddqn, TerminalTargetIsReward)
{
  const DenseNet online({4, 8, 5}, 1);
  const DenseNet target({4, 8, 5}, 2);
  Transition t{{0.3, 0.1, 0.9, 0.2}, 1, -5.0, {9.0, -3.0, 4.0, 2.0}, true};
  EXPECT_EQ(ddqn_targets(online, target, std::span(&t, 1), 0.99)[0], -5.0);
}

TEST(Ddqn, OnlineSelectsTargetEvaluates)
{
  // Online prefers action 3 everywhere; target values action 3 at 2.0 and
  // action 0 (its own argmax) at 50.
  const auto online = constant_q({0, 0, 0, 7, 0});
  const auto target = constant_q({50, 0, 0, 2.0, 0});
  Transition t{{}, 0, -1.0, {}, false};
  EXPECT_NEAR(ddqn_targets(online, target, std::span(&t, 1), 0.99)[0], 0.98, 1e-12);
}

TEST(Ddqn, FixedPointHasZeroLoss)
{
  auto online = constant_q({1, 2, 3, 4, 5});
  const DenseNet target = online;
  // done transitions with reward equal to the current Q of the taken action.
  std::vector<Transition> batch;
  for (std::size_t a = 0; a < 5; ++a)
    batch.push_back({{0.5, 0.5, 0.5, 0.5}, a, static_cast<double>(a + 1), {}, true});
  AdamOptimizer adam(online);
  const DenseNet before = online;
  EXPECT_EQ(ddqn_update(online, target, batch, 0.99, adam), 0.0);
  EXPECT_TRUE(online == before);
}

TEST(Ddqn, UpdateReducesLossAndLeavesTargetUnchanged)
{
  DenseNet online({4, 16, 5}, 1);
  const DenseNet target({4, 16, 5}, 2);
  const DenseNet target_copy = target;
  std::vector<Transition> batch;
  for (int i = 0; i < 16; ++i)
    batch.push_back({{0.1 * i, 1.0, 0.05, 0.9}, static_cast<std::size_t>(i % 5), -1.0 - 0.1 * i, {1, 1, 0, 1}, true});
  AdamOptimizer adam(online, {.learning_rate = 1e-2});
  const double first = ddqn_update(online, target, batch, 0.99, adam);
  double last = first;
  for (int k = 0; k < 50; ++k)
    last = ddqn_update(online, target, batch, 0.99, adam);
  EXPECT_LT(last, first);
  EXPECT_TRUE(target == target_copy);
}

TEST(Ddqn, RejectsMismatchedNets)
{
  DenseNet online({4, 16, 5}, 1);
  const DenseNet target({4, 8, 5}, 2);
  AdamOptimizer adam(online);
  Transition t{};
  EXPECT_THROW(ddqn_update(online, target, std::span(&t, 1), 0.99, adam), ValidationError);
  EXPECT_THROW(ddqn_update(online, online, {}, 0.99, adam), ValidationError);
}

TEST(Agent, ObserveStartsUpdatingAtBatchSize)
{
  DdqnAgent agent({.hidden_layers = {8}, .buffer_capacity = 100, .batch_size = 4});
  for (int i = 0; i < 3; ++i)
    EXPECT_FALSE(agent.observe({}).has_value());
  EXPECT_TRUE(agent.observe({}).has_value());
  EXPECT_EQ(agent.updates(), 1u);
}

TEST(Agent, ExploreAdvancesEpsilonStep)
{
  DdqnAgent agent({.hidden_layers = {8}});
  for (int i = 0; i < 5; ++i)
    agent.explore(some_state(), kAllActions);
  EXPECT_EQ(agent.exploration_step(), 5);
}

TEST(Agent, CheckpointRoundTrip)
{
  DdqnAgent agent({.hidden_layers = {16, 16}, .discount = 0.95, .seed = 4});
  for (int i = 0; i < 70; ++i) {
    agent.explore(some_state(), kAllActions);
    agent.observe({{0.1, 0.2, 0.3, 0.4}, static_cast<std::size_t>(i % 5), -1.0, {0.2, 0.2, 0.2, 0.2}, false});
  }
  const auto dir = std::filesystem::temp_directory_path() / "specmarket_agent_ckpt";
  std::filesystem::create_directories(dir);
  agent.save(dir / "agent.net");
  const auto back = DdqnAgent::load(dir / "agent.net");
  EXPECT_TRUE(back.online() == agent.online());
  EXPECT_EQ(back.exploration_step(), agent.exploration_step());
  EXPECT_EQ(back.config().discount, 0.95);
  EXPECT_EQ(back.config().hidden_layers, agent.config().hidden_layers);
  for (double alloc : {3.0, 24.0, 40.0}) {
    const AgentState s{alloc, 25.0, 1.0, 24.0, 24.0};
    EXPECT_EQ(back.greedy(s, kAllActions).index, agent.greedy(s, kAllActions).index);
  }

  // A network whose shape disagrees with the sidecar is rejected.
  save_checkpoint(DenseNet({4, 8, 5}, 1), dir / "agent.net");
  EXPECT_THROW(DdqnAgent::load(dir / "agent.net"), ValidationError);
  std::filesystem::remove_all(dir);
}

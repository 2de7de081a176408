#include <benchmark/benchmark.h>

#include <random>

#include "specmarket/agent.hpp"
#include "specmarket/market.hpp"
#include "specmarket/neural.hpp"
#include "specmarket/sim.hpp"

using namespace specmarket;

namespace {

void BM_QNetworkForward(benchmark::State& state)
{
  const DenseNet net({4, 128, 128, 5}, 1);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.5);
  for (auto _ : state)
    benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_QNetworkForward);

void BM_QNetworkForwardBatch(benchmark::State& state)
{
  const DenseNet net({4, 128, 128, 5}, 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(net.forward_batch(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QNetworkForwardBatch)->Arg(64)->Arg(256);

void BM_DdqnUpdate(benchmark::State& state)
{
  DenseNet online({4, 128, 128, 5}, 1);
  const DenseNet target({4, 128, 128, 5}, 2);
  AdamOptimizer adam(online);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<Transition> batch(64);
  for (auto& t : batch) {
    for (auto& v : t.state)
      v = u(rng);
    for (auto& v : t.next_state)
      v = u(rng);
    t.action = static_cast<std::size_t>(u(rng) * 2.4);
    t.reward = -u(rng);
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(ddqn_update(online, target, batch, 0.99, adam));
}
BENCHMARK(BM_DdqnUpdate);

Order order(std::uint64_t id, Side side, double price)
{
  Order o;
  o.order_id = id;
  o.operator_id = (side == Side::bid ? "b" : "a") + std::to_string(id);
  o.side = side;
  o.quantity = 3.0;
  o.price = price;
  o.freq_range = {3.55e9, 3.70e9};
  o.region = {{0, 0, 0}, {100, 100, 10}};
  o.time_window = {0, 3600};
  return o;
}

void BM_MatchEpoch(benchmark::State& state)
{
  const auto n = static_cast<std::uint64_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> price(1.0, 3.0);
  std::vector<Order> bids, asks;
  for (std::uint64_t i = 0; i < n; ++i) {
    bids.push_back(order(i + 1, Side::bid, price(rng)));
    asks.push_back(order(n + i + 1, Side::ask, price(rng)));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(match_epoch(bids, asks));
}
BENCHMARK(BM_MatchEpoch)->Arg(1)->Arg(4)->Arg(32);

void BM_EnvStep(benchmark::State& state)
{
  const auto data = generate_dataset({});
  SimConfig cfg;
  const auto forecaster = Forecaster::fit(cfg.forecaster_config(data.granularity_s()), data.target);
  const auto [begin, end] = training_span(cfg, data);
  MarketEnv env(cfg, data, forecaster, begin, end);
  for (auto _ : state) {
    if (env.finished()) {
      state.PauseTiming();
      env.reset();
      state.ResumeTiming();
    }
    benchmark::DoNotOptimize(env.step(Action::hold()));
  }
}
BENCHMARK(BM_EnvStep);

} // namespace

BENCHMARK_MAIN();

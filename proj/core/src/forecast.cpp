#include "specmarket/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "specmarket/errors.hpp"

namespace specmarket {

std::string_view to_string(ForecasterKind kind)
{
  switch (kind) {
  case ForecasterKind::persistence:
    return "persistence";
  case ForecasterKind::seasonal_naive:
    return "seasonal_naive";
  case ForecasterKind::window_mlp:
    return "window_mlp";
  }
  return "unknown";
}

ForecasterKind forecaster_kind_from_string(std::string_view name)
{
  if (name == "persistence")
    return ForecasterKind::persistence;
  if (name == "seasonal_naive")
    return ForecasterKind::seasonal_naive;
  if (name == "window_mlp")
    return ForecasterKind::window_mlp;
  throw ValidationError("unknown forecaster kind '" + std::string(name) + "'");
}

void ForecasterConfig::validate() const
{
  if (lookback < 1)
    throw ValidationError("lookback must be >= 1");
  if (kind == ForecasterKind::seasonal_naive && season_period < 1)
    throw ValidationError("season_period must be >= 1");
  if (kind == ForecasterKind::window_mlp) {
    if (mlp_hidden < 1 || mlp_batch < 1)
      throw ValidationError("window_mlp needs positive hidden size and batch size");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
      throw ValidationError("train_fraction must lie in (0, 1]");
  }
}

std::size_t required_window(const ForecasterConfig& config)
{
  if (config.kind == ForecasterKind::seasonal_naive)
    return std::max(config.lookback, config.season_period);
  return config.lookback;
}

Forecaster Forecaster::fit(const ForecasterConfig& config, const TrafficSeries& history)
{
  config.validate();
  Forecaster f;
  f.config_ = config;
  if (history.size() < f.window_length())
    throw ValidationError("insufficient history: need " + std::to_string(f.window_length()) + " samples, have "
                          + std::to_string(history.size()));
  if (config.kind != ForecasterKind::window_mlp)
    return f;

  const std::size_t lookback = config.lookback;
  const auto n_train = std::max<std::size_t>(
      lookback + 1, static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(history.size()))));
  if (n_train > history.size())
    throw ValidationError("insufficient history: window_mlp needs at least lookback + 1 samples");

  const std::span<const double> train(history.values.data(), n_train);
  const double mean = std::accumulate(train.begin(), train.end(), 0.0) / static_cast<double>(n_train);
  f.scale_ = mean > 0.0 ? mean : 1.0;

  const std::size_t samples = n_train - lookback;
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(lookback), static_cast<Eigen::Index>(samples));
  Eigen::RowVectorXd targets(static_cast<Eigen::Index>(samples));
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < lookback; ++j)
      inputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(s)) = train[s + j] / f.scale_;
    targets(static_cast<Eigen::Index>(s)) = train[s + lookback] / f.scale_;
  }

  f.net_ = DenseNet({lookback, config.mlp_hidden, 1}, config.seed);
  AdamOptimizer adam(f.net_, AdamConfig{.learning_rate = config.mlp_learning_rate});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);

  auto full_loss = [&]() {
    const Eigen::RowVectorXd pred = f.net_.forward_batch(inputs);
    return (pred - targets).squaredNorm() / static_cast<double>(samples);
  };

  f.losses_.reserve(config.mlp_epochs);
  for (std::size_t epoch = 0; epoch < config.mlp_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < samples; begin += config.mlp_batch) {
      const std::size_t end = std::min(samples, begin + config.mlp_batch);
      const auto b = static_cast<Eigen::Index>(end - begin);
      Eigen::MatrixXd x(inputs.rows(), b);
      Eigen::RowVectorXd y(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const auto idx = static_cast<Eigen::Index>(order[begin + static_cast<std::size_t>(k)]);
        x.col(k) = inputs.col(idx);
        y(k) = targets(idx);
      }
      const ForwardTrace tr = f.net_.trace(x);
      const Eigen::MatrixXd grad = 2.0 * (tr.output() - y) / static_cast<double>(b);
      adam.step(f.net_, f.net_.backward(tr, grad));
    }
    const double loss = full_loss();
    if (!std::isfinite(loss))
      throw DivergenceError("window_mlp training diverged at epoch " + std::to_string(epoch));
    f.losses_.push_back(loss);
  }
  return f;
}

double Forecaster::predict_next(std::span<const double> window) const
{
  switch (config_.kind) {
  case ForecasterKind::persistence:
    if (window.empty())
      throw ValidationError("persistence forecaster needs a non-empty window");
    return std::max(0.0, window.back());
  case ForecasterKind::seasonal_naive:
    if (window.size() < config_.season_period)
      throw ValidationError("seasonal_naive window shorter than season_period");
    return std::max(0.0, window[window.size() - config_.season_period]);
  case ForecasterKind::window_mlp: {
    if (window.size() != config_.lookback)
      throw ValidationError("window_mlp expects a window of exactly " + std::to_string(config_.lookback) + " samples");
    Eigen::VectorXd x(static_cast<Eigen::Index>(window.size()));
    for (std::size_t j = 0; j < window.size(); ++j)
      x(static_cast<Eigen::Index>(j)) = window[j] / scale_;
    return std::max(0.0, net_.forward(x)(0) * scale_);
  }
  }
  return 0.0;
}

ForecastMetrics compute_metrics(std::span<const ForecastResult> results)
{
  ForecastMetrics m;
  m.count = results.size();
  if (results.empty())
    return m;
  double abs_sum = 0.0;
  double pct_sum = 0.0;
  std::size_t pct_n = 0;
  for (const auto& r : results) {
    abs_sum += r.abs_error;
    if (r.actual > 0.0) {
      pct_sum += r.abs_error / r.actual;
      ++pct_n;
    }
  }
  m.mae = abs_sum / static_cast<double>(results.size());
  m.mape = pct_n ? 100.0 * pct_sum / static_cast<double>(pct_n) : 0.0;
  return m;
}

BacktestResult backtest(const Forecaster& forecaster, const TrafficSeries& series, std::size_t start)
{
  const std::size_t w = forecaster.window_length();
  if (start < w || start > series.size())
    throw ValidationError("backtest start " + std::to_string(start) + " out of range [" + std::to_string(w) + ", "
                          + std::to_string(series.size()) + "]");
  BacktestResult out;
  out.results.reserve(series.size() - start);
  for (std::size_t t = start; t < series.size(); ++t) {
    ForecastResult r;
    r.target_index = t;
    r.timestamp = series.timestamp_at(t);
    r.predicted = forecaster.predict_next(std::span<const double>(series.values).subspan(t - w, w));
    r.actual = series.values[t];
    r.abs_error = std::abs(r.predicted - r.actual);
    out.results.push_back(r);
  }
  out.metrics = compute_metrics(out.results);
  return out;
}

void write_forecast_csv(std::span<const ForecastResult> results, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write forecast file: " + path.string());
  out << "step,timestamp,actual,predicted,abs_error\n";
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g\n", r.target_index, format_iso8601(r.timestamp).c_str(),
                  r.actual, r.predicted, r.abs_error);
    out << buf;
  }
}

std::vector<ForecastResult> read_forecast_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open forecast file: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,timestamp,actual,predicted,abs_error")
    throw ValidationError("unexpected forecast header in " + path.string());
  std::vector<ForecastResult> rows;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty())
      continue;
    std::istringstream ss(line);
    std::string step, ts, actual, predicted, err;
    if (!std::getline(ss, step, ',') || !std::getline(ss, ts, ',') || !std::getline(ss, actual, ',')
        || !std::getline(ss, predicted, ',') || !std::getline(ss, err))
      throw ValidationError("malformed forecast row at line " + std::to_string(line_no));
    ForecastResult r;
    r.target_index = std::stoull(step);
    r.timestamp = parse_iso8601(ts);
    r.actual = std::strtod(actual.c_str(), nullptr);
    r.predicted = std::strtod(predicted.c_str(), nullptr);
    r.abs_error = std::strtod(err.c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

} // namespace specmarket

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specmarket/neural.hpp"
#include "specmarket/traffic.hpp"

namespace specmarket {

enum class ForecasterKind { persistence, seasonal_naive, window_mlp };

std::string_view to_string(ForecasterKind kind);
ForecasterKind forecaster_kind_from_string(std::string_view name);

struct ForecasterConfig {
  ForecasterKind kind = ForecasterKind::seasonal_naive;
  std::size_t lookback = 72;
  std::size_t season_period = 24;
  std::size_t mlp_hidden = 32;
  double train_fraction = 1.0;
  std::size_t mlp_epochs = 60;
  std::size_t mlp_batch = 32;
  double mlp_learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

/// History window a forecaster built from `config` consumes: lookback for
/// persistence and window_mlp, max(lookback, season_period) for
/// seasonal_naive.
std::size_t required_window(const ForecasterConfig& config);

/// One-step-ahead demand predictor. Immutable after fit().
class Forecaster {
public:
  /// persistence and seasonal_naive learn nothing; window_mlp trains a
  /// [lookback, hidden, 1] network on the first train_fraction of history,
  /// with inputs and targets scaled by the training mean.
  static Forecaster fit(const ForecasterConfig& config, const TrafficSeries& history);

  std::size_t window_length() const { return required_window(config_); }

  /// persistence: last value. seasonal_naive: window[len - season_period].
  /// window_mlp: max(0, net output); window length must equal lookback.
  double predict_next(std::span<const double> window) const;

  const ForecasterConfig& config() const { return config_; }
  std::size_t parameter_count() const { return kind() == ForecasterKind::window_mlp ? net_.parameter_count() : 0; }
  ForecasterKind kind() const { return config_.kind; }

  /// Mean training loss after each epoch (window_mlp only).
  const std::vector<double>& training_losses() const { return losses_; }

private:
  ForecasterConfig config_;
  DenseNet net_;
  double scale_ = 1.0;
  std::vector<double> losses_;
};

struct ForecastResult {
  std::size_t target_index = 0;
  UnixSeconds timestamp = 0;
  double predicted = 0.0;
  double actual = 0.0;
  double abs_error = 0.0;
};

struct ForecastMetrics {
  /// Mean of |err| / actual over rows with actual > 0, in percent.
  double mape = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

ForecastMetrics compute_metrics(std::span<const ForecastResult> results);

struct BacktestResult {
  std::vector<ForecastResult> results;
  ForecastMetrics metrics;
};

/// Rolling one-step forecasts for every index in [start, series.size()).
BacktestResult backtest(const Forecaster& forecaster, const TrafficSeries& series, std::size_t start);

/// `step,timestamp,actual,predicted,abs_error`
void write_forecast_csv(std::span<const ForecastResult> results, const std::filesystem::path& path);

/// Reads rows back in the layout write_forecast_csv produces.
std::vector<ForecastResult> read_forecast_csv(const std::filesystem::path& path);

} // namespace specmarket

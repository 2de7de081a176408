#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specmarket/timeutil.hpp"

namespace specmarket {

/// Demand of one operator in spectrum resource units (SRUs), sampled at a
/// fixed step. Sample i covers [timestamp_at(i), timestamp_at(i + 1)).
struct TrafficSeries {
  std::string operator_id;
  std::int64_t granularity_s = 3600;
  UnixSeconds start_time = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  UnixSeconds timestamp_at(std::size_t i) const
  {
    return start_time + static_cast<std::int64_t>(i) * granularity_s;
  }
  double mean() const;

  /// Throws ValidationError if values are empty, negative or non-finite, or
  /// the granularity is not positive.
  void validate() const;
};

/// Periodic synthetic demand:
///   max(0, mean + amplitude * sin(2 pi (i + phase) / period)
///          + trend_per_day * i / period + N(0, noise_sigma))
struct SynthSpec {
  std::string operator_id = "synthetic";
  double mean_level = 24.0;
  double daily_amplitude = 0.0;
  std::size_t period = 24;
  double noise_sigma = 0.0;
  double trend_per_day = 0.0;
  /// Phase shift in steps; lets two operators share a period but peak at
  /// different hours.
  double phase_steps = 0.0;
  std::uint64_t seed = 0;
  std::size_t length = 24;
  std::int64_t granularity_s = 3600;
  UnixSeconds start_time = 0;

  void validate() const;
};

/// Reads a `timestamp,demand_srus` CSV. A `# granularity_seconds=N` comment
/// supplies the step; otherwise `granularity_s` must be given. Timestamps
/// must advance by exactly one step per row.
TrafficSeries load_csv(const std::filesystem::path& path, std::optional<std::int64_t> granularity_s = std::nullopt,
                       std::string operator_id = {});

/// Writes the format load_csv reads, including the granularity comment.
void write_csv(const TrafficSeries& series, const std::filesystem::path& path);

TrafficSeries generate(const SynthSpec& spec);

/// Changes the sampling step. Upsampling by k interpolates linearly between
/// sample i (at fine index i*k) and sample i+1, holds the final sample for its
/// own window, adds N(0, noise_sigma) and clips at zero; output length is
/// size * k. Downsampling by k averages each complete window of k samples;
/// a trailing partial window is dropped. Noise applies to upsampling only.
TrafficSeries resample(const TrafficSeries& series, std::int64_t target_granularity_s, double noise_sigma = 0.0,
                       std::uint64_t seed = 0);

} // namespace specmarket

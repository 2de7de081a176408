#include "specmarket/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "specmarket/errors.hpp"

namespace specmarket {

namespace {

std::string trim(std::string s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string at_line(std::size_t n)
{
  return " at line " + std::to_string(n);
}

} // namespace

double TrafficSeries::mean() const
{
  if (values.empty())
    return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void TrafficSeries::validate() const
{
  if (granularity_s <= 0)
    throw ValidationError("granularity must be positive");
  if (values.empty())
    throw ValidationError("traffic series is empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0)
      throw ValidationError("invalid demand " + std::to_string(values[i]) + " at index " + std::to_string(i));
  }
}

void SynthSpec::validate() const
{
  if (!(mean_level >= 0.0))
    throw ValidationError("mean_level must be >= 0");
  if (period < 2)
    throw ValidationError("period must be >= 2");
  if (!(noise_sigma >= 0.0))
    throw ValidationError("noise_sigma must be >= 0");
  if (length < 1)
    throw ValidationError("length must be >= 1");
  if (granularity_s <= 0)
    throw ValidationError("granularity must be positive");
}

TrafficSeries load_csv(const std::filesystem::path& path, std::optional<std::int64_t> granularity_s,
                       std::string operator_id)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open traffic file: " + path.string());

  std::optional<std::int64_t> meta_granularity;
  std::vector<UnixSeconds> stamps;
  std::vector<double> values;
  std::vector<std::size_t> line_numbers;
  bool seen_header = false;

  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = trim(raw);
    if (line.empty())
      continue;
    if (line.front() == '#') {
      const auto key = line.find("granularity_seconds=");
      if (key != std::string::npos) {
        try {
          meta_granularity = std::stoll(line.substr(key + 20));
        } catch (const std::exception&) {
          throw ValidationError("bad granularity metadata" + at_line(line_no));
        }
      }
      continue;
    }
    if (!seen_header) {
      if (line != "timestamp,demand_srus")
        throw ValidationError("expected header 'timestamp,demand_srus'" + at_line(line_no));
      seen_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ValidationError("malformed row" + at_line(line_no));

    UnixSeconds t = 0;
    try {
      t = parse_iso8601(trim(line.substr(0, comma)));
    } catch (const std::invalid_argument&) {
      throw ValidationError("malformed timestamp" + at_line(line_no));
    }
    const std::string field = trim(line.substr(comma + 1));
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v))
      throw ValidationError("malformed demand" + at_line(line_no));
    if (v < 0.0)
      throw ValidationError("negative demand" + at_line(line_no));
    if (!stamps.empty() && t <= stamps.back())
      throw ValidationError("non-monotonic timestamp" + at_line(line_no));

    stamps.push_back(t);
    values.push_back(v);
    line_numbers.push_back(line_no);
  }
  if (!seen_header)
    throw ValidationError("missing header in " + path.string());
  if (values.empty())
    throw ValidationError("no data rows in " + path.string());

  const auto step = granularity_s ? granularity_s : meta_granularity;
  if (!step)
    throw ValidationError("granularity unknown: add '# granularity_seconds=N' or pass --granularity");
  if (*step <= 0)
    throw ValidationError("granularity must be positive");
  for (std::size_t i = 1; i < stamps.size(); ++i) {
    if (stamps[i] - stamps[i - 1] != *step)
      throw ValidationError("timestamp gap does not match granularity" + at_line(line_numbers[i]));
  }

  TrafficSeries s;
  s.operator_id = operator_id.empty() ? path.stem().string() : std::move(operator_id);
  s.granularity_s = *step;
  s.start_time = stamps.front();
  s.values = std::move(values);
  return s;
}

void write_csv(const TrafficSeries& series, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write traffic file: " + path.string());
  out << "# granularity_seconds=" << series.granularity_s << '\n' << "timestamp,demand_srus\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", series.values[i]);
    out << format_iso8601(series.timestamp_at(i)) << ',' << buf << '\n';
  }
  if (!out)
    throw std::runtime_error("failed writing traffic file: " + path.string());
}

TrafficSeries generate(const SynthSpec& spec)
{
  spec.validate();
  TrafficSeries s;
  s.operator_id = spec.operator_id;
  s.granularity_s = spec.granularity_s;
  s.start_time = spec.start_time;
  s.values.resize(spec.length);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  const double period = static_cast<double>(spec.period);
  for (std::size_t i = 0; i < spec.length; ++i) {
    const double x = static_cast<double>(i);
    const double phase = std::fmod(x + spec.phase_steps, period);
    double v = spec.mean_level + spec.daily_amplitude * std::sin(2.0 * std::numbers::pi * phase / period)
               + spec.trend_per_day * x / period;
    if (spec.noise_sigma > 0.0)
      v += noise(rng);
    s.values[i] = std::max(0.0, v);
  }
  return s;
}

TrafficSeries resample(const TrafficSeries& series, std::int64_t target_granularity_s, double noise_sigma,
                       std::uint64_t seed)
{
  series.validate();
  if (target_granularity_s <= 0)
    throw ValidationError("target granularity must be positive");
  if (!(noise_sigma >= 0.0))
    throw ValidationError("noise_sigma must be >= 0");

  const auto src = series.granularity_s;
  TrafficSeries out;
  out.operator_id = series.operator_id;
  out.start_time = series.start_time;
  out.granularity_s = target_granularity_s;

  if (target_granularity_s == src) {
    out.values = series.values;
    return out;
  }

  if (src % target_granularity_s == 0) {
    const auto k = static_cast<std::size_t>(src / target_granularity_s);
    const std::size_t n = series.size();
    out.values.resize(n * k);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = series.values[i];
      const double b = i + 1 < n ? series.values[i + 1] : a;
      for (std::size_t r = 0; r < k; ++r) {
        double v = a + (b - a) * static_cast<double>(r) / static_cast<double>(k);
        if (noise_sigma > 0.0)
          v += noise(rng);
        out.values[i * k + r] = std::max(0.0, v);
      }
    }
    return out;
  }

  if (target_granularity_s % src == 0) {
    const auto k = static_cast<std::size_t>(target_granularity_s / src);
    const std::size_t windows = series.size() / k;
    if (windows == 0)
      throw ValidationError("series shorter than one downsampling window");
    out.values.resize(windows);
    for (std::size_t w = 0; w < windows; ++w) {
      double sum = 0.0;
      for (std::size_t r = 0; r < k; ++r)
        sum += series.values[w * k + r];
      out.values[w] = sum / static_cast<double>(k);
    }
    return out;
  }

  throw ValidationError("incompatible granularities: " + std::to_string(src) + " s and "
                        + std::to_string(target_granularity_s) + " s");
}

} // namespace specmarket

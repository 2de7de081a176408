#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "specmarket/errors.hpp"

namespace specmarket::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& expected)
{
  throw ValidationError("config key '" + key + "': expected " + expected);
}

template <class T>
struct Codec;

template <>
struct Codec<double> {
  static double decode(const json& v, const std::string& key)
  {
    if (!v.is_number())
      bad_value(key, "a number");
    return v.get<double>();
  }
  static json encode(double x) { return x; }
  static json parse(const std::string& s, const std::string& key)
  {
    double x = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size())
      bad_value(key, "a number, got '" + s + "'");
    return x;
  }
};

template <class Int>
  requires std::is_integral_v<Int>
struct Codec<Int> {
  static Int decode(const json& v, const std::string& key)
  {
    if (!v.is_number_integer())
      bad_value(key, "an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned())
        return v.get<Int>();
      bad_value(key, "a non-negative integer");
    }
    return v.get<Int>();
  }
  static json encode(Int x) { return x; }
  static json parse(const std::string& s, const std::string& key)
  {
    Int x{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size())
      bad_value(key, std::string(std::is_unsigned_v<Int> ? "a non-negative integer" : "an integer") + ", got '" + s
                         + "'");
    return x;
  }
};

template <>
struct Codec<std::string> {
  static std::string decode(const json& v, const std::string& key)
  {
    if (!v.is_string())
      bad_value(key, "a string");
    return v.get<std::string>();
  }
  static json encode(const std::string& x) { return x; }
  static json parse(const std::string& s, const std::string&) { return s; }
};

template <>
struct Codec<std::filesystem::path> {
  static std::filesystem::path decode(const json& v, const std::string& key)
  {
    return Codec<std::string>::decode(v, key);
  }
  static json encode(const std::filesystem::path& x) { return x.string(); }
  static json parse(const std::string& s, const std::string&) { return s; }
};

template <class T>
struct Codec<std::vector<T>> {
  static std::vector<T> decode(const json& v, const std::string& key)
  {
    if (!v.is_array())
      bad_value(key, "an array");
    std::vector<T> out;
    for (const auto& e : v)
      out.push_back(Codec<T>::decode(e, key));
    return out;
  }
  static json encode(const std::vector<T>& x)
  {
    json a = json::array();
    for (const auto& e : x)
      a.push_back(Codec<T>::encode(e));
    return a;
  }
  // Comma-separated.
  static json parse(const std::string& s, const std::string& key)
  {
    json a = json::array();
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
      a.push_back(Codec<T>::parse(item, key));
    return a;
  }
};

template <class T>
struct Codec<std::optional<T>> {
  static std::optional<T> decode(const json& v, const std::string& key)
  {
    if (v.is_null())
      return std::nullopt;
    return Codec<T>::decode(v, key);
  }
  static json encode(const std::optional<T>& x) { return x ? Codec<T>::encode(*x) : json(nullptr); }
  static json parse(const std::string& s, const std::string& key) { return Codec<T>::parse(s, key); }
};

template <class T, class Access>
KeyDef field(std::string name, KeyGroup group, std::string help, Access access)
{
  KeyDef k;
  k.name = name;
  k.help = std::move(help);
  k.group = group;
  k.set = [access, name](RunConfig& c, const json& v) { access(c) = Codec<T>::decode(v, name); };
  k.get = [access](const RunConfig& c) { return Codec<T>::encode(access(c)); };
  k.parse_flag = [name](const std::string& s) { return Codec<T>::parse(s, name); };
  return k;
}

template <class E, class Access, class ToString, class FromString>
KeyDef enum_field(std::string name, KeyGroup group, std::string help, Access access, ToString to_str,
                  FromString from_str)
{
  KeyDef k;
  k.name = name;
  k.help = std::move(help);
  k.group = group;
  k.set = [=](RunConfig& c, const json& v) {
    const auto s = Codec<std::string>::decode(v, name);
    try {
      access(c) = from_str(s);
    } catch (const ValidationError& e) {
      throw ValidationError("config key '" + name + "': " + e.what());
    }
  };
  k.get = [=](const RunConfig& c) { return json(std::string(to_str(access(c)))); };
  k.parse_flag = [](const std::string& s) { return json(s); };
  return k;
}

#define ACCESS(expr) [](auto& c) -> auto& { return c.expr; }

std::string_view granularity_name(std::int64_t g)
{
  return g == 60 ? "minute" : "hour";
}

std::int64_t granularity_from_name(std::string_view s)
{
  if (s == "hour")
    return 3600;
  if (s == "minute")
    return 60;
  throw ValidationError("unknown granularity '" + std::string(s) + "' (hour|minute)");
}

std::string_view policy_name(EvalPolicy p)
{
  return p == EvalPolicy::hold ? "hold" : "agent";
}

EvalPolicy policy_from_name(std::string_view s)
{
  if (s == "agent")
    return EvalPolicy::agent;
  if (s == "hold")
    return EvalPolicy::hold;
  throw ValidationError("unknown policy '" + std::string(s) + "' (agent|hold)");
}

std::vector<KeyDef> build_keys()
{
  using G = KeyGroup;
  using P = std::filesystem::path;
  std::vector<KeyDef> k;

  k.push_back(field<std::uint64_t>("seed", G::global, "Run seed", ACCESS(sim.seed)));
  k.push_back(field<P>("out", G::global, "Output directory", ACCESS(out)));

  k.push_back(field<std::size_t>("days", G::generator, "Days of synthetic traffic", ACCESS(data.days)));
  k.push_back(field<std::uint64_t>("data_seed", G::generator, "Synthetic traffic seed", ACCESS(data.seed)));
  k.push_back(field<double>("mean", G::generator, "Mean demand (SRUs)", ACCESS(data.mean_level)));
  k.push_back(field<double>("amplitude", G::generator, "Daily amplitude (SRUs)", ACCESS(data.daily_amplitude)));
  k.push_back(field<double>("noise", G::generator, "Noise sigma (SRUs)", ACCESS(data.noise_sigma)));
  k.push_back(field<double>("trend", G::generator, "Trend (SRUs per day)", ACCESS(data.trend_per_day)));
  k.push_back(field<double>("nr_phase", G::generator, "Counterparty phase shift (steps)",
                            ACCESS(data.counterparty_phase_steps)));
  k.push_back(field<double>("nr_scale", G::generator, "Counterparty demand scale", ACCESS(data.counterparty_scale)));

  k.push_back(field<std::optional<P>>("target_csv", G::data_files, "Target operator traffic CSV",
                                      ACCESS(target_csv)));
  k.push_back(field<std::optional<P>>("counterparty_csv", G::data_files, "Counterparty traffic CSV",
                                      ACCESS(counterparty_csv)));
  k.push_back(field<std::optional<std::int64_t>>("granularity_seconds", G::data_files,
                                                 "Granularity of CSVs without metadata", ACCESS(csv_granularity_s)));

  k.push_back(enum_field<ForecasterKind>("forecaster", G::forecaster, "persistence|seasonal_naive|window_mlp",
                                         ACCESS(sim.forecaster.kind),
                                         [](ForecasterKind x) { return to_string(x); },
                                         [](std::string_view s) { return forecaster_kind_from_string(s); }));
  k.push_back(field<std::size_t>("lookback", G::forecaster, "Forecaster lookback (steps)",
                                 ACCESS(sim.forecaster.lookback)));
  k.push_back(field<std::size_t>("season_period", G::forecaster, "Season period in steps (0: one day)",
                                 ACCESS(sim.forecaster.season_period)));
  k.push_back(field<std::size_t>("mlp_hidden", G::forecaster, "window_mlp hidden width",
                                 ACCESS(sim.forecaster.mlp_hidden)));
  k.push_back(field<std::size_t>("mlp_epochs", G::forecaster, "window_mlp epochs", ACCESS(sim.forecaster.mlp_epochs)));
  k.push_back(field<double>("train_fraction", G::forecaster, "Share of history used to fit",
                            ACCESS(sim.forecaster.train_fraction)));

  k.push_back(field<std::optional<P>>("input", G::forecast, "Traffic CSV to backtest", ACCESS(input)));
  k.push_back(field<std::optional<std::size_t>>("backtest_start", G::forecast, "First forecast index",
                                                ACCESS(backtest_start)));

  k.push_back(field<std::size_t>("episodes", G::sim, "Training episodes", ACCESS(sim.episodes)));
  k.push_back(field<double>("threshold", G::sim, "Static allocation (SRUs)", ACCESS(sim.threshold)));
  k.push_back(field<std::size_t>("train_days", G::sim, "Training days", ACCESS(sim.train_days)));
  k.push_back(field<std::optional<std::size_t>>("eval_start_day", G::sim, "First evaluation day",
                                                ACCESS(sim.eval_start_day)));
  k.push_back(field<double>("alpha", G::sim, "Deficit weight", ACCESS(sim.reward.alpha)));
  k.push_back(field<double>("beta", G::sim, "Surplus weight", ACCESS(sim.reward.beta)));
  k.push_back(field<double>("gamma", G::sim, "Monetary cost weight", ACCESS(sim.reward.gamma_cost)));
  k.push_back(field<double>("transaction_cost", G::sim, "Per-trade fee", ACCESS(sim.reward.transaction_cost)));
  k.push_back(field<double>("revenue_rate", G::sim, "Revenue per served SRU per step",
                            ACCESS(sim.service_revenue_rate)));
  k.push_back(field<double>("price_coefficient", G::sim, "Price per SRU of demand", ACCESS(sim.price_coefficient)));
  k.push_back(enum_field<QuoteRule>("quote_rule", G::sim, "counterparty_demand|seller_demand",
                                    ACCESS(sim.quote_rule), [](QuoteRule x) { return to_string(x); },
                                    [](std::string_view s) { return quote_rule_from_string(s); }));
  k.push_back(field<double>("alloc_min", G::sim, "Lowest allocation (SRUs)", ACCESS(sim.alloc_min)));
  k.push_back(field<double>("alloc_max", G::sim, "Highest allocation (SRUs)", ACCESS(sim.alloc_max)));
  k.push_back(field<double>("resample_noise", G::sim, "Upsampling noise as a fraction of the mean",
                            ACCESS(sim.resample_noise_fraction)));
  k.push_back(field<std::vector<std::size_t>>("hidden_layers", G::sim, "Q-network hidden sizes",
                                              ACCESS(sim.agent.hidden_layers)));
  k.push_back(field<std::size_t>("buffer_capacity", G::sim, "Replay capacity", ACCESS(sim.agent.buffer_capacity)));
  k.push_back(field<std::size_t>("batch_size", G::sim, "Replay batch size", ACCESS(sim.agent.batch_size)));
  k.push_back(field<double>("learning_rate", G::sim, "Adam learning rate", ACCESS(sim.agent.learning_rate)));
  k.push_back(field<double>("tau", G::sim, "Target soft-update rate", ACCESS(sim.agent.tau)));
  k.push_back(field<double>("discount", G::sim, "Discount factor", ACCESS(sim.agent.discount)));
  k.push_back(field<double>("epsilon_decay", G::sim, "Per-step epsilon decay", ACCESS(sim.agent.epsilon.decay)));
  k.push_back(field<double>("epsilon_floor", G::sim, "Lowest epsilon", ACCESS(sim.agent.epsilon.floor)));
  k.push_back(field<std::size_t>("ma_window", G::sim, "Moving-average window (steps)", ACCESS(sim.agent.ma_window)));

  k.push_back(field<std::optional<P>>("checkpoint", G::eval, "Agent checkpoint (.net)", ACCESS(checkpoint)));
  k.push_back(enum_field<std::int64_t>("granularity", G::eval, "hour|minute", ACCESS(eval_granularity_s),
                                       granularity_name, granularity_from_name));
  k.push_back(enum_field<EvalPolicy>("policy", G::eval, "agent|hold", ACCESS(policy), policy_name, policy_from_name));

  k.push_back(field<std::vector<std::uint64_t>>("seeds", G::sweep, "Comma-separated seed sweep", ACCESS(seeds)));
  return k;
}

#undef ACCESS

} // namespace

const std::vector<KeyDef>& config_keys()
{
  static const std::vector<KeyDef> keys = build_keys();
  return keys;
}

const KeyDef* find_key(const std::string& name)
{
  for (const auto& k : config_keys())
    if (k.name == name)
      return &k;
  return nullptr;
}

void apply_json(RunConfig& cfg, const json& object)
{
  if (!object.is_object())
    throw ValidationError("config must be a JSON object");
  for (const auto& [name, value] : object.items()) {
    const KeyDef* k = find_key(name);
    if (!k)
      throw ValidationError("unknown config key '" + name + "'");
    k->set(cfg, value);
  }
}

json read_config_json(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open config file: " + path.string());
  json object;
  try {
    object = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return object;
}

RunConfig load_config_file(const std::filesystem::path& path)
{
  RunConfig cfg;
  apply_json(cfg, read_config_json(path));
  return cfg;
}

json echo(const RunConfig& cfg)
{
  json object = json::object();
  for (const auto& k : config_keys())
    object[k.name] = k.get(cfg);
  return object;
}

std::string flag_name(const std::string& key)
{
  std::string s = "--" + key;
  for (auto& ch : s)
    if (ch == '_')
      ch = '-';
  return s;
}

} // namespace specmarket::cli

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "specmarket/errors.hpp"

namespace specmarket::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const json& j, const fs::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_out(const RunConfig& cfg)
{
  fs::create_directories(cfg.out);
  return cfg.out;
}

std::string fmt(double x, int precision = 4)
{
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << x;
  return s.str();
}

json series_stats(const TrafficSeries& s)
{
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  return {{"operator", s.operator_id}, {"rows", s.size()}, {"granularity_seconds", s.granularity_s},
          {"mean", s.mean()},          {"min", *lo},        {"max", *hi}};
}

std::string granularity_label(std::int64_t g)
{
  return g == 60 ? "minute" : "hour";
}

SimConfig effective_sim(const RunConfig& cfg, const MarketData& data)
{
  SimConfig sim = cfg.sim;
  const std::size_t spd = sim.steps_per_day(data.granularity_s());
  sim.total_days = data.size() / spd;
  sim.validate();
  return sim;
}

json summary_json(const EvalSummary& s)
{
  return {{"granularity_seconds", s.granularity_s},
          {"steps", s.steps},
          {"cumulative_dynamic", s.cumulative_dynamic},
          {"cumulative_static", s.cumulative_static},
          {"profit_ratio", s.profit_ratio},
          {"cumulative_reward", s.cumulative_reward},
          {"total_deficit", s.total_deficit},
          {"total_surplus", s.total_surplus},
          {"trades", s.trades}};
}

template <class Fn>
void for_each_seed(const RunConfig& cfg, Fn&& body)
{
  if (cfg.seeds.empty()) {
    body(cfg);
    return;
  }
  for (auto seed : cfg.seeds) {
    RunConfig one = cfg;
    one.seeds.clear();
    one.sim.seed = seed;
    one.out = cfg.out / ("seed_" + std::to_string(seed));
    if (cfg.checkpoint)
      one.checkpoint = cfg.checkpoint;
    body(one);
  }
}

json train_one(const RunConfig& cfg, std::ostream& log)
{
  const auto data = load_market_data(cfg);
  const SimConfig sim = effective_sim(cfg, data);
  const fs::path out = prepare_out(cfg);

  const std::size_t every = std::max<std::size_t>(1, sim.episodes / 10);
  auto result = train(sim, data, [&](const EpisodeStats& e) {
    if ((e.episode + 1) % every == 0 || e.episode + 1 == sim.episodes)
      log << "seed " << sim.seed << " episode " << e.episode + 1 << "/" << sim.episodes << " reward "
          << fmt(e.total_reward, 2) << " epsilon " << fmt(e.epsilon) << '\n';
  });

  result.agent.save(out / "agent.net");
  write_trace_csv(result.episodes, out / "reward_trace.csv");

  const std::size_t tenth = std::max<std::size_t>(1, result.episodes.size() / 10);
  auto mean_reward = [&](std::size_t first, std::size_t last) {
    double sum = 0.0;
    for (std::size_t i = first; i < last; ++i)
      sum += result.episodes[i].total_reward;
    return sum / static_cast<double>(last - first);
  };
  json summary = {{"seed", sim.seed},
                  {"episodes", result.episodes.size()},
                  {"updates", result.agent.updates()},
                  {"first_tenth_mean_reward", mean_reward(0, tenth)},
                  {"last_tenth_mean_reward", mean_reward(result.episodes.size() - tenth, result.episodes.size())},
                  {"checkpoint", (out / "agent.net").string()},
                  {"config", echo(cfg)}};
  write_json(summary, out / "train_summary.json");
  return summary;
}

json eval_one(const RunConfig& cfg, std::ostream& log)
{
  const auto data = load_market_data(cfg);
  SimConfig sim = effective_sim(cfg, data);
  const fs::path out = prepare_out(cfg);

  Policy policy = hold_policy();
  std::optional<DdqnAgent> agent;
  std::optional<fs::path> checkpoint;
  if (cfg.policy == EvalPolicy::agent) {
    checkpoint = cfg.checkpoint.value_or(cfg.out / "agent.net");
    agent = DdqnAgent::load(*checkpoint);
    if (agent->config().threshold != sim.threshold)
      throw ValidationError("checkpoint threshold " + fmt(agent->config().threshold, 2) + " differs from config "
                            + fmt(sim.threshold, 2));
    sim.agent = agent->config();
    policy = greedy_policy(*agent);
  }

  const auto result = evaluate(policy, sim, data, cfg.eval_granularity_s);
  const std::string label = granularity_label(cfg.eval_granularity_s);
  write_results_csv(result.results, out / ("results_" + label + ".csv"));

  json summary = summary_json(result.summary);
  summary["seed"] = sim.seed;
  summary["granularity"] = label;
  summary["policy"] = cfg.policy == EvalPolicy::agent ? "agent" : "hold";
  summary["checkpoint"] = checkpoint ? json(checkpoint->string()) : json(nullptr);
  summary["config"] = echo(cfg);
  write_json(summary, out / ("summary_" + label + ".json"));

  log << "seed " << sim.seed << " " << label << " steps " << result.summary.steps << " dynamic "
      << fmt(result.summary.cumulative_dynamic, 3) << " static " << fmt(result.summary.cumulative_static, 3)
      << " ratio " << fmt(result.summary.profit_ratio, 6) << '\n';
  return summary;
}

struct Table {
  fs::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ','))
    out.push_back(cell);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

Table read_table(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open results file: " + path.string());
  Table t{path, {}, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#')
      continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ValidationError(path.string() + ": expected " + std::to_string(t.header.size()) + " fields at line "
                            + std::to_string(line_no));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty())
    throw ValidationError(path.string() + ": empty results file");
  return t;
}

const std::vector<std::string> kResultColumns = {"step",    "timestamp", "demand",  "forecast",
                                                 "alloc_before", "action_delta", "price", "deficit",
                                                 "surplus", "reward",    "profit_dyn", "profit_static"};

std::size_t column_index(const Table& t, const std::string& name)
{
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end())
    throw ValidationError("missing column '" + name + "' in " + t.path.string());
  return static_cast<std::size_t>(it - t.header.begin());
}

double cell_number(const std::string& s, const Table& t)
{
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size())
      return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(t.path.string() + ": not a number '" + s + "'");
}

json table_summary(const Table& t)
{
  const auto dyn = column_index(t, "profit_dyn");
  const auto stat = column_index(t, "profit_static");
  const auto delta = column_index(t, "action_delta");
  double cum_dyn = 0.0, cum_stat = 0.0;
  std::size_t trades = 0;
  for (const auto& r : t.rows) {
    cum_dyn += cell_number(r[dyn], t);
    cum_stat += cell_number(r[stat], t);
    if (cell_number(r[delta], t) != 0.0)
      ++trades;
  }
  return {{"rows", t.rows.size()},
          {"cumulative_dynamic", cum_dyn},
          {"cumulative_static", cum_stat},
          {"profit_ratio", cum_stat != 0.0 ? json(cum_dyn / cum_stat) : json(nullptr)},
          {"trades", trades}};
}

std::vector<std::string> input_suffixes(const std::vector<fs::path>& inputs)
{
  std::vector<std::string> names;
  for (const auto& p : inputs)
    names.push_back(p.stem().string());
  const std::set<std::string> distinct(names.begin(), names.end());
  if (distinct.size() != names.size())
    for (std::size_t i = 0; i < inputs.size(); ++i)
      names[i] = inputs[i].parent_path().filename().string() + "_" + names[i];
  if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
    throw ValidationError("report inputs have indistinguishable names");
  return names;
}

} // namespace

MarketData load_market_data(const RunConfig& cfg)
{
  if (cfg.target_csv.has_value() != cfg.counterparty_csv.has_value())
    throw ValidationError("target_csv and counterparty_csv must be given together");
  MarketData data;
  if (cfg.target_csv) {
    data.target = load_csv(*cfg.target_csv, cfg.csv_granularity_s, cfg.data.target_id);
    data.counterparty = load_csv(*cfg.counterparty_csv, cfg.csv_granularity_s, cfg.data.counterparty_id);
  } else {
    data = generate_dataset(cfg.data);
  }
  data.validate();
  return data;
}

void cmd_gen_traffic(const RunConfig& cfg, std::ostream& log)
{
  const auto data = generate_dataset(cfg.data);
  const fs::path out = prepare_out(cfg);
  for (const auto* s : {&data.target, &data.counterparty}) {
    const fs::path path = out / (s->operator_id + ".csv");
    write_csv(*s, path);
    const auto st = series_stats(*s);
    log << path.string() << ": " << s->size() << " rows, mean " << fmt(st["mean"].get<double>()) << ", min "
        << fmt(st["min"].get<double>()) << ", max " << fmt(st["max"].get<double>()) << '\n';
  }
}

void cmd_forecast(const RunConfig& cfg, std::ostream& log)
{
  if (!cfg.input)
    throw ValidationError("forecast requires --input");
  const auto series = load_csv(*cfg.input, cfg.csv_granularity_s, cfg.input->stem().string());
  ForecasterConfig fc = cfg.sim.forecaster_config(series.granularity_s);
  fc.seed = cfg.sim.seed;
  const auto forecaster = Forecaster::fit(fc, series);
  const std::size_t start = cfg.backtest_start.value_or(forecaster.window_length());
  const auto bt = backtest(forecaster, series, start);

  const fs::path out = prepare_out(cfg);
  write_forecast_csv(bt.results, out / "forecast.csv");
  const json metrics = {{"mape", bt.metrics.mape},
                        {"mae", bt.metrics.mae},
                        {"count", bt.metrics.count},
                        {"forecaster", std::string(to_string(fc.kind))},
                        {"season_period", fc.season_period},
                        {"parameter_count", forecaster.parameter_count()},
                        {"input", series_stats(series)},
                        {"config", echo(cfg)}};
  write_json(metrics, out / "forecast_metrics.json");
  log << to_string(fc.kind) << " on " << cfg.input->string() << ": " << bt.metrics.count << " forecasts, mape "
      << fmt(bt.metrics.mape) << "%, mae " << fmt(bt.metrics.mae) << '\n';
}

void cmd_train(const RunConfig& cfg, std::ostream& log)
{
  if (cfg.sim.episodes == 0)
    throw ValidationError("episodes must be ≥ 1");
  json runs = json::array();
  for_each_seed(cfg, [&](const RunConfig& one) { runs.push_back(train_one(one, log)); });
  if (!cfg.seeds.empty())
    write_json({{"runs", runs}, {"config", echo(cfg)}}, prepare_out(cfg) / "sweep_train.json");
}

void cmd_eval(const RunConfig& cfg, std::ostream& log)
{
  json runs = json::array();
  for_each_seed(cfg, [&](const RunConfig& one) { runs.push_back(eval_one(one, log)); });
  if (cfg.seeds.empty())
    return;
  std::size_t above = 0;
  for (const auto& r : runs)
    above += r["profit_ratio"].get<double>() > 1.0 ? 1 : 0;
  for (auto& r : runs)
    r.erase("config");
  write_json({{"runs", runs}, {"seeds_above_static", above}, {"config", echo(cfg)}},
             prepare_out(cfg) / ("sweep_" + granularity_label(cfg.eval_granularity_s) + ".json"));
  log << above << " of " << runs.size() << " seeds above static\n";
}

void cmd_report(const std::vector<fs::path>& inputs, const RunConfig& cfg, std::ostream& log)
{
  if (inputs.empty())
    throw ValidationError("report needs at least one results file");
  std::vector<Table> tables;
  for (const auto& p : inputs) {
    tables.push_back(read_table(p));
    for (const auto& c : kResultColumns)
      column_index(tables.back(), c);
  }
  const auto suffixes = input_suffixes(inputs);

  // Row lookup by timestamp for every table after the first.
  std::vector<std::map<std::string, std::size_t>> by_time(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto ts = column_index(tables[i], "timestamp");
    for (std::size_t r = 0; r < tables[i].rows.size(); ++r)
      by_time[i].emplace(tables[i].rows[r][ts], r);
  }

  const fs::path out = prepare_out(cfg);
  std::ofstream csv(out / "report.csv");
  if (!csv)
    throw std::runtime_error("cannot write " + (out / "report.csv").string());

  std::size_t aligned = 0;
  if (tables.size() == 1) {
    const auto& t = tables[0];
    for (std::size_t c = 0; c < t.header.size(); ++c)
      csv << (c ? "," : "") << t.header[c];
    csv << '\n';
    for (const auto& r : t.rows) {
      for (std::size_t c = 0; c < r.size(); ++c)
        csv << (c ? "," : "") << r[c];
      csv << '\n';
    }
    aligned = t.rows.size();
  } else {
    csv << "timestamp";
    for (std::size_t i = 0; i < tables.size(); ++i)
      for (const auto& h : tables[i].header)
        if (h != "timestamp")
          csv << ',' << h << '_' << suffixes[i];
    csv << '\n';
    const auto ts0 = column_index(tables[0], "timestamp");
    for (const auto& row0 : tables[0].rows) {
      const std::string& ts = row0[ts0];
      std::vector<const std::vector<std::string>*> hits;
      for (std::size_t i = 0; i < tables.size(); ++i) {
        const auto it = by_time[i].find(ts);
        if (it == by_time[i].end())
          break;
        hits.push_back(&tables[i].rows[it->second]);
      }
      if (hits.size() != tables.size())
        continue;
      csv << ts;
      for (std::size_t i = 0; i < tables.size(); ++i)
        for (std::size_t c = 0; c < tables[i].header.size(); ++c)
          if (tables[i].header[c] != "timestamp")
            csv << ',' << (*hits[i])[c];
      csv << '\n';
      ++aligned;
    }
  }

  json summary = {{"aligned_rows", aligned}, {"inputs", json::array()}};
  for (std::size_t i = 0; i < tables.size(); ++i) {
    json s = table_summary(tables[i]);
    s["path"] = inputs[i].string();
    s["suffix"] = suffixes[i];
    summary["inputs"].push_back(s);
  }
  write_json(summary, out / "report.json");
  log << "report: " << aligned << " aligned rows from " << tables.size() << " file(s)\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Spectrum sharing market simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its keys");

  std::map<std::string, std::string> raw;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  auto add_keys = [&](CLI::App* target, std::initializer_list<KeyGroup> groups) {
    for (const auto& k : config_keys())
      if (std::find(groups.begin(), groups.end(), k.group) != groups.end())
        flags.emplace_back(k.name, target->add_option(flag_name(k.name), raw[k.name], k.help));
  };
  add_keys(&app, {KeyGroup::global});

  using G = KeyGroup;
  auto* gen = app.add_subcommand("gen-traffic", "Write synthetic traffic CSVs for both operators");
  add_keys(gen, {G::generator});
  auto* fc = app.add_subcommand("forecast", "Backtest a forecaster on a traffic CSV");
  add_keys(fc, {G::forecaster, G::forecast, G::data_files});
  auto* tr = app.add_subcommand("train", "Train the trading agent");
  add_keys(tr, {G::generator, G::data_files, G::forecaster, G::sim, G::sweep});
  auto* ev = app.add_subcommand("eval", "Evaluate a policy on the held-out days");
  add_keys(ev, {G::generator, G::data_files, G::forecaster, G::sim, G::eval, G::sweep});
  auto* rep = app.add_subcommand("report", "Join results CSVs on timestamp");
  std::vector<std::string> report_inputs;
  rep->add_option("inputs", report_inputs, "Results CSVs")->required();

  std::vector<std::string> argv_storage = args;
  std::vector<char*> argv;
  for (auto& a : argv_storage)
    argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    json specified = config_path.empty() ? json::object() : read_config_json(config_path);
    if (!specified.is_object())
      throw ValidationError("config must be a JSON object");
    for (const auto& [name, opt] : flags)
      if (opt->count() > 0)
        specified[name] = find_key(name)->parse_flag(raw[name]);

    RunConfig cfg;
    apply_json(cfg, specified);

    if (gen->parsed()) {
      // The run seed doubles as the traffic seed here.
      if (specified.contains("seed") && !specified.contains("data_seed"))
        cfg.data.seed = cfg.sim.seed;
      cmd_gen_traffic(cfg, out);
    } else if (fc->parsed()) {
      cmd_forecast(cfg, out);
    } else if (tr->parsed()) {
      cmd_train(cfg, out);
    } else if (ev->parsed()) {
      cmd_eval(cfg, out);
    } else if (rep->parsed()) {
      cmd_report(std::vector<fs::path>(report_inputs.begin(), report_inputs.end()), cfg, out);
    }
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

} // namespace specmarket::cli

#include "specmarket/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "specmarket/errors.hpp"

namespace specmarket {

std::string_view to_string(Side side)
{
  return side == Side::bid ? "bid" : "ask";
}

std::string_view to_string(EpochTag tag)
{
  switch (tag) {
  case EpochTag::rt:
    return "rt";
  case EpochTag::near_rt:
    return "near_rt";
  case EpochTag::non_rt:
    return "non_rt";
  }
  return "unknown";
}

Side side_from_string(std::string_view s)
{
  if (s == "bid")
    return Side::bid;
  if (s == "ask")
    return Side::ask;
  throw ValidationError("unknown order side '" + std::string(s) + "'");
}

EpochTag epoch_from_string(std::string_view s)
{
  if (s == "rt")
    return EpochTag::rt;
  if (s == "near_rt")
    return EpochTag::near_rt;
  if (s == "non_rt")
    return EpochTag::non_rt;
  throw ValidationError("unknown epoch tag '" + std::string(s) + "'");
}

EpochTag epoch_for_interval(double seconds)
{
  if (seconds < 0.010)
    return EpochTag::rt;
  if (seconds <= 1.0)
    return EpochTag::near_rt;
  return EpochTag::non_rt;
}

std::string_view to_string(QuoteRule rule)
{
  return rule == QuoteRule::counterparty_demand ? "counterparty_demand" : "seller_demand";
}

QuoteRule quote_rule_from_string(std::string_view s)
{
  if (s == "counterparty_demand")
    return QuoteRule::counterparty_demand;
  if (s == "seller_demand")
    return QuoteRule::seller_demand;
  throw ValidationError("unknown quote rule '" + std::string(s) + "'");
}

bool Region::contains(const Region& inner) const
{
  for (std::size_t i = 0; i < 3; ++i) {
    if (inner.min[i] < min[i] || inner.max[i] > max[i])
      return false;
  }
  return true;
}

void Order::validate() const
{
  const std::string id = "order " + std::to_string(order_id) + ": ";
  if (!(quantity > 0.0) || !std::isfinite(quantity))
    throw ValidationError(id + "quantity must be positive");
  if (!(price >= 0.0) || !std::isfinite(price))
    throw ValidationError(id + "price must be >= 0");
  if (!(freq_range.low_hz < freq_range.high_hz))
    throw ValidationError(id + "frequency range must have low < high");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(region.max[i] >= region.min[i]))
      throw ValidationError(id + "region extents must be >= 0");
  }
  if (time_window.start > time_window.end)
    throw ValidationError(id + "time window start after end");
}

double price_of(double demand, double coefficient)
{
  if (!(demand >= 0.0))
    throw ValidationError("price_of: negative demand");
  return coefficient * demand;
}

double quote_for(Side target_side, double counterparty_demand, double own_demand, double coefficient, QuoteRule rule)
{
  if (!(counterparty_demand >= 0.0) || !(own_demand >= 0.0))
    throw ValidationError("quote_for: demands must be >= 0");
  if (rule == QuoteRule::seller_demand && target_side == Side::ask)
    return price_of(own_demand, coefficient);
  return price_of(counterparty_demand, coefficient);
}

bool compatible(const Order& bid, const Order& ask)
{
  return bid.price >= ask.price && ask.freq_range.contains(bid.freq_range) && ask.region.contains(bid.region)
         && bid.time_window.overlaps(ask.time_window) && bid.epoch_tag == ask.epoch_tag;
}

std::vector<Match> match_epoch(std::span<const Order> bids, std::span<const Order> asks, MatchOptions options)
{
  std::optional<EpochTag> epoch;
  auto check = [&](const Order& o, Side expected) {
    if (o.side != expected)
      throw ValidationError("order " + std::to_string(o.order_id) + " is on the wrong side of the book");
    o.validate();
    if (epoch && *epoch != o.epoch_tag)
      throw ValidationError("match_epoch: orders from mixed epochs");
    epoch = o.epoch_tag;
  };
  for (const auto& b : bids)
    check(b, Side::bid);
  for (const auto& a : asks)
    check(a, Side::ask);

  std::vector<std::size_t> bid_order(bids.size());
  std::iota(bid_order.begin(), bid_order.end(), 0);
  std::stable_sort(bid_order.begin(), bid_order.end(), [&](std::size_t x, std::size_t y) {
    if (bids[x].price != bids[y].price)
      return bids[x].price > bids[y].price;
    return bids[x].order_id < bids[y].order_id;
  });
  std::vector<std::size_t> ask_order(asks.size());
  std::iota(ask_order.begin(), ask_order.end(), 0);
  std::stable_sort(ask_order.begin(), ask_order.end(), [&](std::size_t x, std::size_t y) {
    if (asks[x].price != asks[y].price)
      return asks[x].price < asks[y].price;
    return asks[x].order_id < asks[y].order_id;
  });

  // Candidate asks per bid, in ask preference order.
  std::vector<std::vector<std::size_t>> candidates(bids.size());
  for (std::size_t b = 0; b < bids.size(); ++b) {
    for (auto a : ask_order) {
      if (compatible(bids[b], asks[a]))
        candidates[b].push_back(a);
    }
  }

  constexpr auto kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> ask_of(bids.size(), kFree);
  std::vector<std::size_t> bid_of(asks.size(), kFree);

  for (auto b : bid_order) {
    for (auto a : candidates[b]) {
      if (bid_of[a] == kFree) {
        ask_of[b] = a;
        bid_of[a] = b;
        break;
      }
    }
  }

  std::vector<char> visited(asks.size());
  std::function<bool(std::size_t)> augment = [&](std::size_t b) {
    for (auto a : candidates[b]) {
      if (visited[a])
        continue;
      visited[a] = 1;
      if (bid_of[a] == kFree || augment(bid_of[a])) {
        ask_of[b] = a;
        bid_of[a] = b;
        return true;
      }
    }
    return false;
  };
  for (auto b : bid_order) {
    if (ask_of[b] != kFree)
      continue;
    std::fill(visited.begin(), visited.end(), 0);
    augment(b);
  }

  std::vector<Match> matches;
  std::uint64_t next_id = options.first_match_id;
  for (auto b : bid_order) {
    if (ask_of[b] == kFree)
      continue;
    const Order& bid = bids[b];
    const Order& ask = asks[ask_of[b]];
    Match m;
    m.match_id = next_id++;
    m.bid_id = bid.order_id;
    m.ask_id = ask.order_id;
    m.bid_operator = bid.operator_id;
    m.ask_operator = ask.operator_id;
    m.quantity = std::min(bid.quantity, ask.quantity);
    m.execution_price = ask.price;
    m.epoch = bid.epoch_tag;
    m.timestamp = options.timestamp;
    if (bid.initiator)
      m.fee_payer = bid.operator_id;
    else if (ask.initiator)
      m.fee_payer = ask.operator_id;
    matches.push_back(std::move(m));
  }
  return matches;
}

Micros to_micros(double units)
{
  return static_cast<Micros>(std::llround(units * kMicrosPerUnit));
}

double from_micros(Micros m)
{
  return static_cast<double>(m) / kMicrosPerUnit;
}

void Ledger::open_account(const std::string& operator_id, double holdings_srus, double balance)
{
  if (accounts_.contains(operator_id))
    throw ValidationError("account already open: " + operator_id);
  if (!(holdings_srus >= 0.0))
    throw ValidationError("opening holdings must be >= 0");
  const Account acc{to_micros(holdings_srus), to_micros(balance)};
  accounts_[operator_id] = acc;
  opening_[operator_id] = acc;
}

Ledger::Account& Ledger::account(const std::string& operator_id)
{
  const auto it = accounts_.find(operator_id);
  if (it == accounts_.end())
    throw ValidationError("unknown operator: " + operator_id);
  return it->second;
}

const Ledger::Account& Ledger::account(const std::string& operator_id) const
{
  const auto it = accounts_.find(operator_id);
  if (it == accounts_.end())
    throw ValidationError("unknown operator: " + operator_id);
  return it->second;
}

double Ledger::holdings(const std::string& operator_id) const
{
  return from_micros(account(operator_id).holdings);
}

double Ledger::balance(const std::string& operator_id) const
{
  return from_micros(account(operator_id).balance);
}

Micros Ledger::holdings_micros(const std::string& operator_id) const
{
  return account(operator_id).holdings;
}

Micros Ledger::balance_micros(const std::string& operator_id) const
{
  return account(operator_id).balance;
}

Micros Ledger::total_holdings_micros() const
{
  Micros total = 0;
  for (const auto& [id, acc] : accounts_)
    total += acc.holdings;
  return total;
}

SettleResult Ledger::settle(std::span<const Match> matches, double transaction_cost)
{
  SettleResult result;
  const Micros fee = to_micros(transaction_cost);
  for (const auto& m : matches) {
    const auto buyer = accounts_.find(m.bid_operator);
    const auto seller = accounts_.find(m.ask_operator);
    const Micros qty = to_micros(m.quantity);
    const bool known = buyer != accounts_.end() && seller != accounts_.end() && m.bid_operator != m.ask_operator
                       && (m.fee_payer.empty() || accounts_.contains(m.fee_payer));
    if (!known || qty <= 0 || seller->second.holdings < qty) {
      result.rejected.push_back(m);
      continue;
    }
    const Micros amount = to_micros(m.quantity * m.execution_price);
    seller->second.holdings -= qty;
    buyer->second.holdings += qty;
    buyer->second.balance -= amount;
    seller->second.balance += amount;
    if (!m.fee_payer.empty() && fee != 0) {
      accounts_[m.fee_payer].balance -= fee;
      payments_.push_back({m.match_id, m.fee_payer, -fee});
    }
    entries_.push_back(m);
    result.applied.push_back(m);
  }
  return result;
}

std::map<std::string, Ledger::Account> Ledger::replay() const
{
  auto accs = opening_;
  for (const auto& m : entries_) {
    const Micros qty = to_micros(m.quantity);
    const Micros amount = to_micros(m.quantity * m.execution_price);
    accs.at(m.ask_operator).holdings -= qty;
    accs.at(m.bid_operator).holdings += qty;
    accs.at(m.bid_operator).balance -= amount;
    accs.at(m.ask_operator).balance += amount;
  }
  for (const auto& p : payments_)
    accs.at(p.operator_id).balance += p.amount;
  return accs;
}

void Ledger::export_csv(const std::filesystem::path& path) const
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write ledger: " + path.string());
  out << "match_id,epoch,bid_op,ask_op,qty,price,timestamp\n";
  char buf[96];
  for (const auto& m : entries_) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", m.quantity, m.execution_price);
    out << m.match_id << ',' << to_string(m.epoch) << ',' << m.bid_operator << ',' << m.ask_operator << ',' << buf
        << ',' << format_iso8601(m.timestamp) << '\n';
  }
}

namespace {

UnixSeconds time_field(const nlohmann::json& v)
{
  if (v.is_string())
    return parse_iso8601(v.get<std::string>());
  return v.get<UnixSeconds>();
}

} // namespace

std::vector<Order> load_orders_json(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open orders file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("orders file is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_array())
    throw ValidationError("orders file must hold a JSON array");

  std::vector<Order> orders;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    try {
      Order o;
      o.order_id = j.at("order_id").get<std::uint64_t>();
      o.operator_id = j.at("operator_id").get<std::string>();
      o.side = side_from_string(j.at("side").get<std::string>());
      o.quantity = j.at("quantity").get<double>();
      o.price = j.at("price").get<double>();
      o.freq_range.low_hz = j.at("freq_range").at("low_hz").get<double>();
      o.freq_range.high_hz = j.at("freq_range").at("high_hz").get<double>();
      o.region.min = j.at("region").at("min").get<std::array<double, 3>>();
      o.region.max = j.at("region").at("max").get<std::array<double, 3>>();
      o.time_window.start = time_field(j.at("time_window").at("start"));
      o.time_window.end = time_field(j.at("time_window").at("end"));
      o.epoch_tag = epoch_from_string(j.at("epoch_tag").get<std::string>());
      if (j.contains("power_dbm"))
        o.power_dbm = j["power_dbm"].get<double>();
      if (j.contains("interference_dbm"))
        o.interference_dbm = j["interference_dbm"].get<double>();
      o.initiator = j.value("initiator", false);
      o.validate();
      orders.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("order #" + std::to_string(i) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ValidationError("order #" + std::to_string(i) + ": " + e.what());
    }
  }
  return orders;
}

void save_orders_json(std::span<const Order> orders, const std::filesystem::path& path)
{
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& o : orders) {
    nlohmann::ordered_json j;
    j["order_id"] = o.order_id;
    j["operator_id"] = o.operator_id;
    j["side"] = to_string(o.side);
    j["quantity"] = o.quantity;
    j["price"] = o.price;
    j["freq_range"] = {{"low_hz", o.freq_range.low_hz}, {"high_hz", o.freq_range.high_hz}};
    j["region"] = {{"min", o.region.min}, {"max", o.region.max}};
    j["time_window"] = {{"start", format_iso8601(o.time_window.start)}, {"end", format_iso8601(o.time_window.end)}};
    j["epoch_tag"] = to_string(o.epoch_tag);
    if (o.power_dbm)
      j["power_dbm"] = *o.power_dbm;
    if (o.interference_dbm)
      j["interference_dbm"] = *o.interference_dbm;
    j["initiator"] = o.initiator;
    doc.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write orders file: " + path.string());
  out << doc.dump(2) << '\n';
}

} // namespace specmarket

#pragma once

// Order book primitives, the broker's matching rule, posted-price quoting and
// the agreement ledger.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specmarket/timeutil.hpp"

namespace specmarket {

enum class Side { bid, ask };

/// Market timescale: rt (< 10 ms), near_rt (10 ms - 1 s), non_rt (> 1 s).
enum class EpochTag { rt, near_rt, non_rt };

std::string_view to_string(Side side);
std::string_view to_string(EpochTag tag);
Side side_from_string(std::string_view s);
EpochTag epoch_from_string(std::string_view s);

/// Classifies a market step length (seconds) into its timescale.
EpochTag epoch_for_interval(double seconds);

struct FreqRange {
  double low_hz = 0.0;
  double high_hz = 0.0;

  bool contains(const FreqRange& inner) const { return low_hz <= inner.low_hz && inner.high_hz <= high_hz; }
};

/// Axis-aligned box in meters.
struct Region {
  std::array<double, 3> min{};
  std::array<double, 3> max{};

  bool contains(const Region& inner) const;
};

struct TimeWindow {
  UnixSeconds start = 0;
  UnixSeconds end = 0;

  bool overlaps(const TimeWindow& other) const { return start <= other.end && other.start <= end; }
};

struct Order {
  std::uint64_t order_id = 0;
  std::string operator_id;
  Side side = Side::bid;
  double quantity = 0.0;
  /// Currency per SRU.
  double price = 0.0;
  FreqRange freq_range;
  Region region;
  TimeWindow time_window;
  EpochTag epoch_tag = EpochTag::non_rt;
  /// Carried for record-keeping; not used by compatible().
  std::optional<double> power_dbm;
  std::optional<double> interference_dbm;
  /// The side that initiated the trade pays the transaction fee.
  bool initiator = false;

  void validate() const;
};

struct Match {
  std::uint64_t match_id = 0;
  std::uint64_t bid_id = 0;
  std::uint64_t ask_id = 0;
  std::string bid_operator;
  std::string ask_operator;
  double quantity = 0.0;
  double execution_price = 0.0;
  EpochTag epoch = EpochTag::non_rt;
  UnixSeconds timestamp = 0;
  /// Operator charged the transaction fee; empty when neither side initiated.
  std::string fee_payer;
};

/// P = c * demand.
double price_of(double demand, double coefficient);

/// Which operator's demand sets a posted price.
enum class QuoteRule {
  /// Both buy and sell quotes follow the counterparty's demand.
  counterparty_demand,
  /// The selling operator's demand sets the price.
  seller_demand,
};

std::string_view to_string(QuoteRule rule);
QuoteRule quote_rule_from_string(std::string_view s);

/// Posted price for the target operator placing an order on `target_side`.
double quote_for(Side target_side, double counterparty_demand, double own_demand, double coefficient,
                 QuoteRule rule = QuoteRule::counterparty_demand);

/// bid.price >= ask.price, the ask's frequency range and region contain the
/// bid's, time windows overlap and epoch tags agree.
bool compatible(const Order& bid, const Order& ask);

struct MatchOptions {
  std::uint64_t first_match_id = 1;
  UnixSeconds timestamp = 0;
};

/// Pairs bids with asks one-to-one, maximizing the number of pairs under
/// compatible(). Bids are visited in price-time priority (higher price, then
/// lower order_id) and each takes the cheapest compatible free ask (lower
/// order_id on ties); an augmenting-path pass then extends the greedy result
/// to a maximum matching. Each pair trades min(quantities) at the ask price.
/// Throws ValidationError on mixed epoch tags or orders on the wrong side.
std::vector<Match> match_epoch(std::span<const Order> bids, std::span<const Order> asks, MatchOptions options = {});

/// Fixed-point amount: 1e-6 SRU or 1e-6 currency units. Ledger arithmetic is
/// integral so conservation holds exactly.
using Micros = std::int64_t;
inline constexpr double kMicrosPerUnit = 1e6;
Micros to_micros(double units);
double from_micros(Micros m);

/// A balance change not caused by a trade (transaction fees).
struct ExternalPayment {
  std::uint64_t match_id = 0;
  std::string operator_id;
  Micros amount = 0;
};

struct SettleResult {
  std::vector<Match> applied;
  std::vector<Match> rejected;
};

/// Per-operator SRU holdings and currency balances plus the append-only
/// record of settled matches and fees.
class Ledger {
public:
  void open_account(const std::string& operator_id, double holdings_srus, double balance = 0.0);
  bool has_account(const std::string& operator_id) const { return accounts_.contains(operator_id); }

  double holdings(const std::string& operator_id) const;
  double balance(const std::string& operator_id) const;
  Micros holdings_micros(const std::string& operator_id) const;
  Micros balance_micros(const std::string& operator_id) const;
  Micros total_holdings_micros() const;

  /// Moves SRUs ask -> bid and quantity * price currency bid -> ask. A match
  /// whose seller lacks the SRUs (or whose operators are unknown) is rejected
  /// without touching any account. Each applied match with a fee payer is
  /// charged `transaction_cost` as an ExternalPayment.
  SettleResult settle(std::span<const Match> matches, double transaction_cost = 0.0);

  const std::vector<Match>& entries() const { return entries_; }
  const std::vector<ExternalPayment>& payments() const { return payments_; }

  struct Account {
    Micros holdings = 0;
    Micros balance = 0;
  };
  const std::map<std::string, Account>& accounts() const { return accounts_; }
  const std::map<std::string, Account>& opening() const { return opening_; }

  /// Recomputes every account from the opening balances, the entries and the
  /// payments.
  std::map<std::string, Account> replay() const;

  /// `match_id,epoch,bid_op,ask_op,qty,price,timestamp`
  void export_csv(const std::filesystem::path& path) const;

private:
  Account& account(const std::string& operator_id);
  const Account& account(const std::string& operator_id) const;

  std::map<std::string, Account> accounts_;
  std::map<std::string, Account> opening_;
  std::vector<Match> entries_;
  std::vector<ExternalPayment> payments_;
};

/// Orders file: a JSON array of objects with the Order field names.
std::vector<Order> load_orders_json(const std::filesystem::path& path);
void save_orders_json(std::span<const Order> orders, const std::filesystem::path& path);

} // namespace specmarket

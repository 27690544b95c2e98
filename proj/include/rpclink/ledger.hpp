#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rpclink/pmf.hpp"

namespace rpclink {

/// Index of a pseudonym within its ledger's user table.
struct PseudonymId {
  std::uint32_t value = 0;
  friend auto operator<=>(PseudonymId, PseudonymId) = default;
};

struct Transaction {
  PseudonymId initiator;
  double confirm_time = 0.0;
  std::uint64_t block_height = 0;
};

struct Block {
  std::uint64_t height = 0;
  double timestamp = 0.0;
  std::vector<Transaction> transactions;
};

/// Immutable, validated sequence of blocks plus the pseudonym table.
///
/// Heights are consecutive starting at the first block's height, timestamps
/// strictly increase, and every transaction's confirm time equals its
/// block's timestamp.
class Ledger {
 public:
  Ledger(std::vector<Block> blocks, double block_time, std::vector<std::string> users);

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const std::vector<std::string>& users() const noexcept { return users_; }
  double block_time() const noexcept { return block_time_; }
  std::size_t transaction_count() const noexcept { return tx_count_; }

  /// Covered time: one block interval per block.
  double duration() const noexcept { return block_time_ * static_cast<double>(blocks_.size()); }
  double first_timestamp() const { return blocks_.front().timestamp; }
  double last_timestamp() const { return blocks_.back().timestamp; }

  const std::string& name(PseudonymId id) const;
  std::optional<PseudonymId> find(std::string_view name) const;

  /// Index of the last block with timestamp <= t, if any.
  std::optional<std::size_t> last_block_at_or_before(double t) const;
  /// Index of the first block with timestamp > t, if any.
  std::optional<std::size_t> first_block_after(double t) const;

 private:
  std::vector<Block> blocks_;
  double block_time_ = 0.0;
  std::vector<std::string> users_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t tx_count_ = 0;
};

struct ActivityDistribution {
  enum class Kind { Uniform, Zipf, Empirical };
  Kind kind = Kind::Zipf;
  double zipf_exponent = 1.1;
  std::vector<double> weights;  // Empirical only; one per user, sums to 1

  static ActivityDistribution uniform() { return {Kind::Uniform, 0.0, {}}; }
  static ActivityDistribution zipf(double exponent) { return {Kind::Zipf, exponent, {}}; }
  static ActivityDistribution empirical(std::vector<double> w) {
    return {Kind::Empirical, 0.0, std::move(w)};
  }
};

struct LedgerConfig {
  std::uint32_t num_users = 2;
  double rate = 1.0;        // global transactions per second
  double block_time = 12.0; // seconds
  double duration = 3600.0; // seconds
  ActivityDistribution activity = ActivityDistribution::zipf(1.1);
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthesizes floor(duration / block_time) blocks stamped height * T; each
/// block carries Poisson(rate * T) transactions whose initiators follow the
/// activity distribution.
Ledger synth_ledger(const LedgerConfig& config);

/// Reads the JSONL block dump format, one block per line:
/// {"height": int, "timestamp": float, "txs": [{"initiator": string}]}.
Ledger ingest_ledger(std::istream& in);
Ledger ingest_ledger_file(const std::string& path);
void write_ledger_jsonl(std::ostream& out, const Ledger& ledger);

/// Per-pseudonym activity shares and rates plus window statistics.
struct ActivityStats {
  std::vector<std::string> users;
  std::vector<std::uint64_t> counts;  // l_i
  std::uint64_t total = 0;            // L
  std::vector<double> p;              // l_i / L
  double lambda_total = 0.0;          // tx per second over the ledger span
  std::vector<double> lambda;         // lambda_total * p_i
  Pmf pdf_x;                          // transactions per k-block window
  Pmf pdf_n;                          // distinct pseudonyms per k-block window
  int window_k = 0;
  double duration = 0.0;
  double block_time = 0.0;

  double rate_of(PseudonymId id) const;

  nlohmann::json to_json() const;
  static ActivityStats from_json(const nlohmann::json& j);
};

ActivityStats measure_activity(const Ledger& ledger, int k);

/// Rate at which a Poisson user transacts at least once within k blocks with
/// probability q: -ln(1 - q) / (k * T).
double transacting_threshold(int k, double block_time, double q);

/// P(X >= 1) = 1 - exp(-rate * k * T).
double window_transacting_probability(double rate, int k, double block_time);

enum class UserClass { Normal, Active };

/// Active iff rate >= threshold.
UserClass classify_user(double rate, double threshold);

}  // namespace rpclink

#include "rpclink/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "rpclink/error.hpp"

namespace rpclink {

Ledger::Ledger(std::vector<Block> blocks, double block_time, std::vector<std::string> users)
    : blocks_(std::move(blocks)), block_time_(block_time), users_(std::move(users)) {
  if (blocks_.empty()) throw Error(ErrorKind::Validation, "ledger: no blocks");
  if (!(block_time_ > 0.0)) throw Error(ErrorKind::Validation, "ledger: block time must be positive");
  index_.reserve(users_.size());
  for (std::size_t i = 0; i < users_.size(); ++i) {
    if (!index_.emplace(users_[i], static_cast<std::uint32_t>(i)).second)
      throw Error(ErrorKind::Validation, "ledger: duplicate pseudonym '" + users_[i] + "'");
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& block = blocks_[b];
    if (b > 0) {
      if (block.height != blocks_[b - 1].height + 1)
        throw Error(ErrorKind::Validation, "ledger: heights not consecutive at " + std::to_string(block.height));
      if (!(block.timestamp > blocks_[b - 1].timestamp))
        throw Error(ErrorKind::Validation, "ledger: timestamps not increasing at height " + std::to_string(block.height));
    }
    for (const Transaction& tx : block.transactions) {
      if (tx.initiator.value >= users_.size())
        throw Error(ErrorKind::Validation, "ledger: transaction initiator outside user table");
      if (tx.block_height != block.height || tx.confirm_time != block.timestamp)
        throw Error(ErrorKind::Validation, "ledger: transaction not stamped with its block");
    }
    tx_count_ += block.transactions.size();
  }
}

const std::string& Ledger::name(PseudonymId id) const {
  if (id.value >= users_.size()) throw Error(ErrorKind::UnknownPseudonym, "ledger: unknown pseudonym id");
  return users_[id.value];
}

std::optional<PseudonymId> Ledger::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return PseudonymId{it->second};
}

std::optional<std::size_t> Ledger::last_block_at_or_before(double t) const {
  auto it = std::upper_bound(blocks_.begin(), blocks_.end(), t,
                             [](double v, const Block& b) { return v < b.timestamp; });
  if (it == blocks_.begin()) return std::nullopt;
  return static_cast<std::size_t>(it - blocks_.begin()) - 1;
}

std::optional<std::size_t> Ledger::first_block_after(double t) const {
  auto it = std::upper_bound(blocks_.begin(), blocks_.end(), t,
                             [](double v, const Block& b) { return v < b.timestamp; });
  if (it == blocks_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - blocks_.begin());
}

void LedgerConfig::validate() const {
  if (num_users < 2) throw Error(ErrorKind::InvalidConfig, "ledger config: num_users must be >= 2");
  if (!(rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "ledger config: rate must be > 0");
  if (!(block_time > 0.0)) throw Error(ErrorKind::InvalidConfig, "ledger config: block_time must be > 0");
  if (!(duration > 0.0)) throw Error(ErrorKind::InvalidConfig, "ledger config: duration must be > 0");
  switch (activity.kind) {
    case ActivityDistribution::Kind::Uniform: break;
    case ActivityDistribution::Kind::Zipf:
      if (!(activity.zipf_exponent > 0.0))
        throw Error(ErrorKind::InvalidConfig, "ledger config: zipf exponent must be > 0");
      break;
    case ActivityDistribution::Kind::Empirical: {
      if (activity.weights.size() != num_users)
        throw Error(ErrorKind::InvalidConfig, "ledger config: need one empirical weight per user");
      double sum = 0.0;
      for (double w : activity.weights) {
        if (!(w >= 0.0)) throw Error(ErrorKind::InvalidConfig, "ledger config: negative empirical weight");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::InvalidConfig, "ledger config: empirical weights must sum to 1");
      break;
    }
  }
}

namespace {

std::vector<double> activity_weights(const LedgerConfig& config) {
  std::vector<double> w(config.num_users, 1.0);
  if (config.activity.kind == ActivityDistribution::Kind::Zipf) {
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = std::pow(static_cast<double>(i + 1), -config.activity.zipf_exponent);
  } else if (config.activity.kind == ActivityDistribution::Kind::Empirical) {
    w = config.activity.weights;
  }
  return w;
}

std::vector<std::string> user_names(std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string digits = std::to_string(i);
    names.push_back("u" + std::string(width - digits.size(), '0') + digits);
  }
  return names;
}

}  // namespace

Ledger synth_ledger(const LedgerConfig& config) {
  config.validate();
  if (config.duration < config.block_time)
    throw Error(ErrorKind::InvalidConfig, "synth_ledger: duration shorter than one block");
  const auto height_count = static_cast<std::uint64_t>(std::floor(config.duration / config.block_time + 1e-9));

  Rng rng(config.seed);
  std::poisson_distribution<std::uint64_t> tx_count(config.rate * config.block_time);
  const std::vector<double> weights = activity_weights(config);
  std::discrete_distribution<std::uint32_t> who(weights.begin(), weights.end());

  std::vector<Block> blocks(height_count);
  for (std::uint64_t h = 0; h < height_count; ++h) {
    Block& block = blocks[h];
    block.height = h;
    block.timestamp = static_cast<double>(h) * config.block_time;
    const std::uint64_t count = tx_count(rng);
    block.transactions.reserve(count);
    for (std::uint64_t t = 0; t < count; ++t)
      block.transactions.push_back({PseudonymId{who(rng)}, block.timestamp, h});
  }
  return Ledger(std::move(blocks), config.block_time, user_names(config.num_users));
}

Ledger ingest_ledger(std::istream& in) {
  struct RawBlock {
    std::int64_t height;
    double timestamp;
    std::vector<std::uint32_t> initiators;
  };
  std::vector<RawBlock> raw;
  std::vector<std::string> users;
  std::unordered_map<std::string, std::uint32_t> index;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "ingest: line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::Malformed, where + "invalid JSON");
    }
    if (!j.is_object() || !j.contains("height") || !j.contains("timestamp") || !j.contains("txs"))
      throw Error(ErrorKind::Malformed, where + "expected object with height, timestamp, txs");
    if (!j["height"].is_number_integer() || j["height"].get<std::int64_t>() < 0)
      throw Error(ErrorKind::Malformed, where + "height must be a non-negative integer");
    if (!j["timestamp"].is_number()) throw Error(ErrorKind::Malformed, where + "timestamp must be a number");
    if (!j["txs"].is_array()) throw Error(ErrorKind::Malformed, where + "txs must be an array");
    RawBlock block{j["height"].get<std::int64_t>(), j["timestamp"].get<double>(), {}};
    if (!std::isfinite(block.timestamp)) throw Error(ErrorKind::Malformed, where + "timestamp must be finite");
    for (const auto& tx : j["txs"]) {
      if (!tx.is_object() || !tx.contains("initiator") || !tx["initiator"].is_string())
        throw Error(ErrorKind::Malformed, where + "transaction without string initiator");
      const std::string who = tx["initiator"].get<std::string>();
      auto [it, inserted] = index.emplace(who, static_cast<std::uint32_t>(users.size()));
      if (inserted) users.push_back(who);
      block.initiators.push_back(it->second);
    }
    raw.push_back(std::move(block));
  }
  if (raw.size() < 2) throw Error(ErrorKind::InsufficientData, "ingest: need at least two blocks to infer block time");

  std::stable_sort(raw.begin(), raw.end(), [](const RawBlock& a, const RawBlock& b) { return a.height < b.height; });
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (raw[i].height == raw[i - 1].height)
      throw Error(ErrorKind::Validation, "ingest: duplicate height " + std::to_string(raw[i].height));
    if (raw[i].height != raw[i - 1].height + 1)
      throw Error(ErrorKind::Validation, "ingest: missing height " + std::to_string(raw[i - 1].height + 1));
    if (!(raw[i].timestamp > raw[i - 1].timestamp))
      throw Error(ErrorKind::Validation, "ingest: non-monotonic timestamp at height " + std::to_string(raw[i].height));
  }

  std::vector<Block> blocks;
  blocks.reserve(raw.size());
  for (const RawBlock& r : raw) {
    Block b;
    b.height = static_cast<std::uint64_t>(r.height);
    b.timestamp = r.timestamp;
    b.transactions.reserve(r.initiators.size());
    for (std::uint32_t who : r.initiators) b.transactions.push_back({PseudonymId{who}, r.timestamp, b.height});
    blocks.push_back(std::move(b));
  }
  const double block_time = (raw.back().timestamp - raw.front().timestamp) / static_cast<double>(raw.size() - 1);
  return Ledger(std::move(blocks), block_time, std::move(users));
}

Ledger ingest_ledger_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open ledger dump '" + path + "'");
  return ingest_ledger(in);
}

void write_ledger_jsonl(std::ostream& out, const Ledger& ledger) {
  for (const Block& block : ledger.blocks()) {
    nlohmann::json txs = nlohmann::json::array();
    for (const Transaction& tx : block.transactions) txs.push_back({{"initiator", ledger.name(tx.initiator)}});
    out << nlohmann::json{{"height", block.height}, {"timestamp", block.timestamp}, {"txs", std::move(txs)}}.dump()
        << '\n';
  }
}

double ActivityStats::rate_of(PseudonymId id) const {
  if (id.value >= lambda.size()) throw Error(ErrorKind::UnknownPseudonym, "activity stats: unknown pseudonym id");
  return lambda[id.value];
}

nlohmann::json ActivityStats::to_json() const {
  nlohmann::json p_map = nlohmann::json::object();
  nlohmann::json lambda_map = nlohmann::json::object();
  nlohmann::json count_map = nlohmann::json::object();
  for (std::size_t i = 0; i < users.size(); ++i) {
    p_map[users[i]] = p[i];
    lambda_map[users[i]] = lambda[i];
    count_map[users[i]] = counts[i];
  }
  return {{"p", std::move(p_map)},
          {"lambda_total", lambda_total},
          {"lambda_i", std::move(lambda_map)},
          {"counts", std::move(count_map)},
          {"total_transactions", total},
          {"duration", duration},
          {"pdf_x", pdf_x.to_json()},
          {"pdf_n", pdf_n.to_json()},
          {"window_k", window_k},
          {"block_time", block_time}};
}

ActivityStats ActivityStats::from_json(const nlohmann::json& j) {
  ActivityStats s;
  try {
    s.lambda_total = j.at("lambda_total").get<double>();
    s.total = j.at("total_transactions").get<std::uint64_t>();
    s.duration = j.at("duration").get<double>();
    s.window_k = j.at("window_k").get<int>();
    s.block_time = j.at("block_time").get<double>();
    s.pdf_x = Pmf::from_json(j.at("pdf_x"));
    s.pdf_n = Pmf::from_json(j.at("pdf_n"));
    const auto& p_map = j.at("p");
    const auto& counts = j.at("counts");
    for (auto it = p_map.begin(); it != p_map.end(); ++it) {
      s.users.push_back(it.key());
      s.p.push_back(it.value().get<double>());
      s.counts.push_back(counts.at(it.key()).get<std::uint64_t>());
      s.lambda.push_back(s.lambda_total * s.p.back());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("activity stats: ") + e.what());
  }
  return s;
}

ActivityStats measure_activity(const Ledger& ledger, int k) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "measure_activity: k must be positive");
  const auto& blocks = ledger.blocks();
  if (static_cast<std::size_t>(k) > blocks.size())
    throw Error(ErrorKind::InsufficientData, "measure_activity: k exceeds block count");
  if (ledger.transaction_count() == 0)
    throw Error(ErrorKind::InsufficientData, "measure_activity: ledger holds no transactions");

  ActivityStats s;
  s.users = ledger.users();
  s.counts.assign(s.users.size(), 0);
  for (const Block& b : blocks)
    for (const Transaction& tx : b.transactions) ++s.counts[tx.initiator.value];
  s.total = ledger.transaction_count();
  s.duration = ledger.duration();
  s.block_time = ledger.block_time();
  s.lambda_total = static_cast<double>(s.total) / s.duration;
  s.p.resize(s.users.size());
  s.lambda.resize(s.users.size());
  for (std::size_t i = 0; i < s.users.size(); ++i) {
    s.p[i] = static_cast<double>(s.counts[i]) / static_cast<double>(s.total);
    s.lambda[i] = s.lambda_total * s.p[i];
  }

  const std::size_t windows = blocks.size() - static_cast<std::size_t>(k) + 1;
  std::vector<double> xs(windows), ns(windows);
  std::vector<std::uint32_t> seen(s.users.size(), std::numeric_limits<std::uint32_t>::max());
  for (std::size_t w = 0; w < windows; ++w) {
    std::size_t x = 0, n = 0;
    for (std::size_t b = w; b < w + static_cast<std::size_t>(k); ++b) {
      x += blocks[b].transactions.size();
      for (const Transaction& tx : blocks[b].transactions) {
        if (seen[tx.initiator.value] != w) {
          seen[tx.initiator.value] = static_cast<std::uint32_t>(w);
          ++n;
        }
      }
    }
    xs[w] = static_cast<double>(x);
    ns[w] = static_cast<double>(n);
  }
  s.pdf_x = Pmf::from_samples(xs);
  s.pdf_n = Pmf::from_samples(ns);
  s.window_k = k;
  return s;
}

double transacting_threshold(int k, double block_time, double q) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "transacting_threshold: k must be positive");
  if (!(block_time > 0.0)) throw Error(ErrorKind::InvalidArgument, "transacting_threshold: block time must be positive");
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidArgument, "transacting_threshold: q must lie in (0, 1)");
  return -std::log1p(-q) / (static_cast<double>(k) * block_time);
}

double window_transacting_probability(double rate, int k, double block_time) {
  return -std::expm1(-rate * static_cast<double>(k) * block_time);
}

UserClass classify_user(double rate, double threshold) {
  if (rate < 0.0) throw Error(ErrorKind::InvalidArgument, "classify_user: negative rate");
  return rate >= threshold ? UserClass::Active : UserClass::Normal;
}

}  // namespace rpclink

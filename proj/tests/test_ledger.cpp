#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rpclink/error.hpp"
#include "rpclink/ledger.hpp"

using namespace rpclink;

namespace {

Ledger tiny(const std::vector<std::vector<std::string>>& per_block, double T = 12.0) {
  std::vector<std::string> users;
  std::map<std::string, std::uint32_t> idx;
  std::vector<Block> blocks;
  for (std::size_t h = 0; h < per_block.size(); ++h) {
    Block b{h, static_cast<double>(h) * T, {}};
    for (const auto& who : per_block[h]) {
      auto [it, fresh] = idx.emplace(who, static_cast<std::uint32_t>(users.size()));
      if (fresh) users.push_back(who);
      b.transactions.push_back({PseudonymId{it->second}, b.timestamp, b.height});
    }
    blocks.push_back(std::move(b));
  }
  return Ledger(std::move(blocks), T, users);
}

LedgerConfig ethereum_like(std::uint64_t seed) {
  LedgerConfig c;
  c.num_users = 5000;
  c.rate = 12.68;
  c.block_time = 12.0;
  c.duration = 6 * 3600.0;
  c.activity = ActivityDistribution::zipf(1.1);
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("single block config yields one block at height zero") {
  LedgerConfig c;
  c.num_users = 2;
  c.rate = 1.0;
  c.block_time = 10.0;
  c.duration = 10.0;
  c.activity = ActivityDistribution::uniform();
  c.seed = 3;
  const Ledger l = synth_ledger(c);
  REQUIRE(l.blocks().size() == 1);
  CHECK(l.blocks()[0].height == 0);
  CHECK(l.blocks()[0].timestamp == 0.0);
  CHECK(l.users().size() == 2);
}

TEST_CASE("block transaction count is Poisson(rate * T)") {
  LedgerConfig c;
  c.num_users = 10;
  c.rate = 1.0;
  c.block_time = 10.0;
  c.duration = 10.0 * 4000;
  c.seed = 11;
  const Ledger l = synth_ledger(c);
  double sum = 0, sq = 0;
  for (const Block& b : l.blocks()) {
    const double n = static_cast<double>(b.transactions.size());
    sum += n;
    sq += n * n;
  }
  const double n = static_cast<double>(l.blocks().size());
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == doctest::Approx(10.0).epsilon(0.03));
  CHECK(var == doctest::Approx(10.0).epsilon(0.1));
}

TEST_CASE("synthesis is deterministic per seed") {
  std::ostringstream a, b, c;
  write_ledger_jsonl(a, synth_ledger(ethereum_like(5)));
  write_ledger_jsonl(b, synth_ledger(ethereum_like(5)));
  write_ledger_jsonl(c, synth_ledger(ethereum_like(6)));
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("ethereum-like ledger: 3-block window mean against direct enumeration") {
  const Ledger l = synth_ledger(ethereum_like(1));
  const ActivityStats s = measure_activity(l, 3);
  double sum = 0;
  std::size_t windows = 0;
  for (std::size_t i = 0; i + 3 <= l.blocks().size(); ++i, ++windows)
    for (std::size_t b = i; b < i + 3; ++b) sum += static_cast<double>(l.blocks()[b].transactions.size());
  const double oracle = sum / static_cast<double>(windows);
  CHECK(s.pdf_x.mean() == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(oracle == doctest::Approx(36.0 * 12.68).epsilon(0.02));
  CHECK(s.window_k == 3);
}

TEST_CASE("distinct pseudonym window counts match a set-based recount") {
  const Ledger l = synth_ledger(ethereum_like(2));
  const ActivityStats s = measure_activity(l, 2);
  double sum = 0;
  std::size_t windows = 0;
  for (std::size_t i = 0; i + 2 <= l.blocks().size(); ++i, ++windows) {
    std::set<std::uint32_t> seen;
    for (std::size_t b = i; b < i + 2; ++b)
      for (const Transaction& tx : l.blocks()[b].transactions) seen.insert(tx.initiator.value);
    sum += static_cast<double>(seen.size());
  }
  CHECK(s.pdf_n.mean() == doctest::Approx(sum / static_cast<double>(windows)).epsilon(1e-9));
}

TEST_CASE("ingest two lines") {
  std::istringstream in(R"({"height":0,"timestamp":100.0,"txs":[{"initiator":"a"}]}
{"height":1,"timestamp":112.0,"txs":[{"initiator":"b"},{"initiator":"a"}]}
)");
  const Ledger l = ingest_ledger(in);
  CHECK(l.blocks().size() == 2);
  CHECK(l.transaction_count() == 3);
  CHECK(l.block_time() == 12.0);
  CHECK(l.users() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("ingest heights may start above zero") {
  std::istringstream in(R"({"height":500,"timestamp":1.0,"txs":[]}
{"height":501,"timestamp":13.0,"txs":[]}
)");
  const Ledger l = ingest_ledger(in);
  CHECK(l.blocks().front().height == 500);
}

TEST_CASE("ingest rejects malformed dumps") {
  auto kind_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      ingest_ledger(in);
    } catch (const Error& e) {
      return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
  };
  CHECK(kind_of("{\"height\":0,\"timestamp\":0,\"txs\":[]}\n{\"height\":0,\"timestamp\":12,\"txs\":[]}\n") ==
        ErrorKind::Validation);
  CHECK(kind_of("{\"height\":0,\"timestamp\":0,\"txs\":[]}\n{\"height\":2,\"timestamp\":12,\"txs\":[]}\n") ==
        ErrorKind::Validation);
  CHECK(kind_of("{\"height\":0,\"timestamp\":5,\"txs\":[]}\n{\"height\":1,\"timestamp\":5,\"txs\":[]}\n") ==
        ErrorKind::Validation);
  CHECK(kind_of("not json\n") == ErrorKind::Malformed);
  CHECK(kind_of("{\"height\":0,\"timestamp\":0}\n") == ErrorKind::Malformed);
  CHECK(kind_of("{\"height\":0,\"timestamp\":0,\"txs\":[{\"initiator\":5}]}\n") == ErrorKind::Malformed);
}

TEST_CASE("ingested 1000-block dump: rate equals a direct count over the file") {
  LedgerConfig c = ethereum_like(9);
  c.duration = 1000 * 12.0;
  std::ostringstream dump;
  write_ledger_jsonl(dump, synth_ledger(c));

  std::istringstream lines(dump.str());
  std::string line;
  double count = 0, first = 0, last = 0;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    count += static_cast<double>(j["txs"].size());
    if (n == 0) first = j["timestamp"].get<double>();
    last = j["timestamp"].get<double>();
    ++n;
  }
  REQUIRE(n == 1000);
  const double oracle = count / ((last - first) / static_cast<double>(n - 1) * static_cast<double>(n));

  std::istringstream in(dump.str());
  const ActivityStats s = measure_activity(ingest_ledger(in), 3);
  CHECK(s.lambda_total == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("activity shares") {
  const Ledger l = tiny({{"A", "B"}, {"A"}, {"A"}});
  const ActivityStats s = measure_activity(l, 1);
  CHECK(s.p[l.find("A")->value] == 0.75);
  CHECK(s.p[l.find("B")->value] == 0.25);
  CHECK(s.total == 4);

  const Ledger solo = tiny({{"s"}, {"s", "s"}});
  const ActivityStats one = measure_activity(solo, 1);
  CHECK(one.p[0] == 1.0);
  CHECK(one.lambda[0] == one.lambda_total);
}

TEST_CASE("measure_activity rejects bad windows") {
  const Ledger l = tiny({{"A"}, {"B"}});
  CHECK_THROWS_AS(measure_activity(l, 0), Error);
  CHECK_THROWS_AS(measure_activity(l, 3), Error);
  CHECK_THROWS_AS(measure_activity(tiny({{}, {}}), 1), Error);
}

TEST_CASE("stats json round trip") {
  const ActivityStats s = measure_activity(tiny({{"A", "B"}, {"A"}, {"C"}}), 2);
  const ActivityStats back = ActivityStats::from_json(s.to_json());
  CHECK(back.total == s.total);
  CHECK(back.lambda_total == s.lambda_total);
  CHECK(back.block_time == s.block_time);
  CHECK(back.window_k == 2);
  CHECK(back.pdf_x.mean() == s.pdf_x.mean());
  for (std::size_t i = 0; i < back.users.size(); ++i) {
    const auto at = std::find(s.users.begin(), s.users.end(), back.users[i]) - s.users.begin();
    CHECK(back.p[i] == s.p[static_cast<std::size_t>(at)]);
  }
}

TEST_CASE("transacting threshold") {
  CHECK(transacting_threshold(3, 12, 0.01) == doctest::Approx(2.792e-4).epsilon(1e-3));
  CHECK(transacting_threshold(1, 1, 1 - std::exp(-1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  const double th = transacting_threshold(2, 120, 0.01);
  CHECK(std::abs(window_transacting_probability(th, 2, 120) - 0.01) < 1e-12);
  CHECK_THROWS_AS(transacting_threshold(0, 12, 0.01), Error);
  CHECK_THROWS_AS(transacting_threshold(3, 12, 1.0), Error);
}

TEST_CASE("user classification") {
  const double th = transacting_threshold(3, 12, 0.01);
  CHECK(classify_user(0.0, th) == UserClass::Normal);
  CHECK(classify_user(th, th) == UserClass::Active);
  CHECK(classify_user(std::nextafter(th, 0.0), th) == UserClass::Normal);
}

TEST_CASE("active fraction against a recount from raw counts") {
  const Ledger l = synth_ledger(ethereum_like(4));
  const ActivityStats s = measure_activity(l, 3);
  const double th = transacting_threshold(3, l.block_time(), 0.01);
  std::map<std::uint32_t, double> counts;
  for (const Block& b : l.blocks())
    for (const Transaction& tx : b.transactions) counts[tx.initiator.value] += 1;
  std::size_t active = 0, oracle = 0;
  for (std::size_t i = 0; i < s.users.size(); ++i) active += classify_user(s.lambda[i], th) == UserClass::Active;
  for (const auto& [id, n] : counts) oracle += n / (l.block_time() * static_cast<double>(l.blocks().size())) >= th;
  CHECK(active == oracle);
  CHECK(active > 0);
}

TEST_CASE("property: shares sum to one and the rate converges") {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    LedgerConfig c = ethereum_like(seed);
    c.num_users = 300;
    c.rate = 0.5 + static_cast<double>(seed % 4);
    c.duration = 12.0 * 3000;
    const Ledger l = synth_ledger(c);
    const ActivityStats s = measure_activity(l, 3);
    CHECK(std::accumulate(s.p.begin(), s.p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    const double se = std::sqrt(c.rate / l.duration());
    CHECK(std::abs(s.lambda_total - c.rate) < 3 * se);
  }
}

TEST_CASE("ledger invariants are enforced") {
  std::vector<Block> blocks{{0, 0.0, {}}, {2, 12.0, {}}};
  CHECK_THROWS_AS(Ledger(blocks, 12.0, {}), Error);
  std::vector<Block> bad_tx{{0, 0.0, {{PseudonymId{0}, 1.0, 0}}}};
  CHECK_THROWS_AS(Ledger(bad_tx, 12.0, {"a"}), Error);
  CHECK_THROWS_AS(Ledger({{0, 0.0, {}}}, 12.0, {"a", "a"}), Error);
}

TEST_CASE("zipf activity skews shares; empirical weights are honoured") {
  LedgerConfig c;
  c.num_users = 3;
  c.rate = 5.0;
  c.block_time = 1.0;
  c.duration = 20000;
  c.activity = ActivityDistribution::empirical({0.5, 0.3, 0.2});
  c.seed = 8;
  const ActivityStats s = measure_activity(synth_ledger(c), 1);
  CHECK(s.p[0] == doctest::Approx(0.5).epsilon(0.02));
  CHECK(s.p[1] == doctest::Approx(0.3).epsilon(0.03));
  CHECK(s.p[2] == doctest::Approx(0.2).epsilon(0.04));

  c.activity = ActivityDistribution::empirical({0.5, 0.5});
  CHECK_THROWS_AS(synth_ledger(c), Error);
}

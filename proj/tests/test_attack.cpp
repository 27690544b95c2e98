#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rpclink/attack.hpp"
#include "rpclink/catalog.hpp"
#include "rpclink/error.hpp"
#include "rpclink/ledger.hpp"
#include "rpclink/random.hpp"

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

PseudonymSet ids(std::initializer_list<std::uint32_t> v) {
  PseudonymSet out;
  for (auto x : v) out.push_back(PseudonymId{x});
  return out;
}

ActivityStats stats_with_rates(std::vector<double> rates) {
  ActivityStats s;
  for (std::size_t i = 0; i < rates.size(); ++i) s.users.push_back("u" + std::to_string(i));
  s.lambda = std::move(rates);
  return s;
}

std::set<std::string> names(const Ledger& l, const PseudonymSet& s) {
  std::set<std::string> out;
  for (auto id : s) out.insert(l.name(id));
  return out;
}

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

const WalletProfile& profile(const std::string& name) {
  static const auto all = builtin_profiles();
  return find_profile(all, name);
}

}  // namespace

TEST_CASE("k per wallet") {
  const std::map<std::string, std::pair<int, int>> expected = {
      {"MetaMask", {2, 3}}, {"Enkrypt", {1, 3}}, {"Taho", {1, 3}},     {"Electrum", {1, 2}}, {"Green", {1, 2}},
      {"Sparrow", {1, 2}},  {"Torus", {26, 60}}, {"Phantom", {3, 60}}, {"Solflare", {4, 60}}};
  for (const auto& [name, k] : expected) {
    const IntervalEstimate e = estimate_k(profile(name));
    CHECK_MESSAGE(e.theoretical_k == k.first, name);
    CHECK_MESSAGE(e.k == k.second, name);
    CHECK(e.safety_margin == e.k - e.theoretical_k);
    const WalletProfile& p = profile(name);
    const double ratio = p.method == QueryMethod::Periodic ? (p.cycle + p.rtt) / p.block_time
                                                           : 2.0 * p.rtt / p.block_time;
    CHECK(e.theoretical_k >= ratio - 1e-9);
    CHECK(e.theoretical_k < std::max(ratio, 1.0) + 1.0);
  }
  WalletProfile slow = profile("Torus");
  slow.cycle = 20.0;
  CHECK(estimate_k(slow).theoretical_k == 51);
}

TEST_CASE("candidate window covers the k highest blocks at or before t_q") {
  const Ledger l = tiny({{"A"}, {"B"}, {"C", "A"}, {"D"}, {"E"}});
  const CandidateSet c = candidate_set(l, 36.0, 2, 3);
  CHECK(names(l, c.pseudonyms) == std::set<std::string>{"C", "A", "D"});
  CHECK(c.first_height == 2);
  CHECK(c.k == 2);
  CHECK(c.round == 3);
  // a block stamped exactly at t_q is inside the window
  CHECK(names(l, candidate_set(l, 24.0, 1).pseudonyms) == std::set<std::string>{"C", "A"});
  CHECK(names(l, candidate_set(l, 23.999, 1).pseudonyms) == std::set<std::string>{"B"});
  CHECK(std::is_sorted(c.pseudonyms.begin(), c.pseudonyms.end()));
}

TEST_CASE("candidate window errors") {
  const Ledger l = tiny({{"A"}, {}, {"B"}});
  CHECK_THROWS_AS(candidate_set(l, 12.0, 3), Error);
  CHECK_THROWS_AS(candidate_set(l, -1.0, 1), Error);
  CHECK_THROWS_AS(candidate_set(l, 24.0, 0), Error);
  try {
    candidate_set(l, 12.0, 3);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
  CHECK(candidate_set(l, 12.0, 1).pseudonyms.empty());
}

TEST_CASE("intersection") {
  CHECK(intersect(std::vector<PseudonymSet>{ids({1, 2}), ids({2, 3})}) == ids({2}));
  CHECK(intersect(std::vector<PseudonymSet>{ids({1, 5, 9})}) == ids({1, 5, 9}));
  CHECK(intersect(std::vector<PseudonymSet>{ids({1}), ids({2}), ids({1})}).empty());
  CHECK_THROWS_AS(intersect(std::vector<PseudonymSet>{}), Error);
}

TEST_CASE("identification variants") {
  const ActivityStats s = stats_with_rates({0.001, 0.5, 0.002, 0.9});
  const double cut = 0.1;

  AttackOutcome o = identify(ids({0, 1, 3}), s, cut, 3);
  CHECK(o.variant == AttackOutcome::Variant::Unique);
  CHECK(o.code() == "unique");
  CHECK(o.identifies(PseudonymId{0}));
  CHECK_FALSE(o.identifies(PseudonymId{1}));

  o = identify(ids({1, 3}), s, cut, 3);
  CHECK(o.variant == AttackOutcome::Variant::ActiveTarget);
  CHECK(o.code() == "active_target");
  CHECK(o.candidates == ids({1, 3}));

  o = identify(ids({0, 1, 2}), s, cut, 3);
  CHECK(o.variant == AttackOutcome::Variant::AmbiguousNormal);
  CHECK(o.code() == "ambiguous_normal");
  CHECK(o.candidates == ids({0, 2}));

  o = identify({}, s, cut, 3);
  CHECK(o.variant == AttackOutcome::Variant::AmbiguousNormal);
  CHECK(o.code() == "empty_intersection");
  CHECK(o.candidates.empty());

  // the threshold itself counts as active
  CHECK(identify(ids({0, 1}), s, 0.5, 1).candidates == ids({0}));
  CHECK_THROWS_AS(identify(ids({7}), s, cut, 1), Error);
}

TEST_CASE("outcome json") {
  const Ledger l = tiny({{"alice"}, {"bob", "alice"}, {"alice"}});
  std::vector<CandidateSet> w = {candidate_set(l, 12.0, 2, 1), candidate_set(l, 24.0, 1, 2)};
  const PseudonymSet inter = intersect(w);
  ActivityStats s = stats_with_rates({0.001, 0.001});
  const auto j = outcome_to_json(identify(inter, s, 0.1, 2), w, l.users());
  CHECK(j["variant"] == "Unique");
  CHECK(j["code"] == "unique");
  CHECK(j["candidates"] == nlohmann::json::array({"alice"}));
  CHECK(j["rounds"] == 2);
  CHECK(j["windows"].size() == 2);
  CHECK(j["windows"][0]["candidates"] == 2);
  CHECK(j["windows"][1]["first_height"] == 2);
}

TEST_CASE("property: a confirmed initiator is always in its window") {
  LedgerConfig c;
  c.num_users = 300;
  c.rate = 2.0;
  c.block_time = 12.0;
  c.duration = 3 * 3600.0;
  c.seed = 99;
  const Ledger l = synth_ledger(c);
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 1 + static_cast<int>(pick(rng, 4));
    const std::size_t b = pick(rng, l.blocks().size() - static_cast<std::size_t>(k));
    if (l.blocks()[b].transactions.empty()) continue;
    const Transaction& tx = l.blocks()[b].transactions[pick(rng, l.blocks()[b].transactions.size())];
    // any T_q less than k blocks after confirmation
    const double t_q = l.blocks()[b].timestamp + uniform_real(rng, 0.0, 0.999 * k * c.block_time);
    if (!l.last_block_at_or_before(t_q) || *l.last_block_at_or_before(t_q) + 1 < static_cast<std::size_t>(k))
      continue;
    const CandidateSet set = candidate_set(l, t_q, k);
    CHECK(std::binary_search(set.pseudonyms.begin(), set.pseudonyms.end(), tx.initiator));
  }
}

TEST_CASE("property: intersection only shrinks and ignores round order") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PseudonymSet> rounds;
    for (int r = 0; r < 4; ++r) {
      std::set<std::uint32_t> s;
      for (int i = 0; i < 30; ++i) s.insert(static_cast<std::uint32_t>(pick(rng, 40)));
      PseudonymSet v;
      for (auto x : s) v.push_back(PseudonymId{x});
      rounds.push_back(v);
    }
    PseudonymSet prev = rounds[0];
    for (std::size_t m = 2; m <= rounds.size(); ++m) {
      const PseudonymSet cur = intersect(std::vector<PseudonymSet>(rounds.begin(), rounds.begin() + m));
      CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      for (auto id : cur)
        for (std::size_t r = 0; r < m; ++r) CHECK(std::binary_search(rounds[r].begin(), rounds[r].end(), id));
      prev = cur;
    }
    std::vector<PseudonymSet> reversed(rounds.rbegin(), rounds.rend());
    CHECK(intersect(reversed) == intersect(rounds));
  }
}

TEST_CASE("property: identification never keeps an active pseudonym unless all are active") {
  Rng rng(9);
  std::vector<double> rates(50);
  for (double& r : rates) r = std::exp(uniform_real(rng, std::log(1e-6), std::log(1e-2)));
  const ActivityStats s = stats_with_rates(rates);
  const double cut = 2.8e-4;
  for (int trial = 0; trial < 300; ++trial) {
    std::set<std::uint32_t> chosen;
    const std::size_t n = pick(rng, 6);
    for (std::size_t i = 0; i < n; ++i) chosen.insert(static_cast<std::uint32_t>(pick(rng, 50)));
    PseudonymSet in;
    for (auto x : chosen) in.push_back(PseudonymId{x});
    const AttackOutcome o = identify(in, s, cut, 2);
    CHECK(std::includes(in.begin(), in.end(), o.candidates.begin(), o.candidates.end()));
    if (o.variant == AttackOutcome::Variant::ActiveTarget) {
      for (auto id : o.candidates) CHECK(s.rate_of(id) >= cut);
    } else {
      for (auto id : o.candidates) CHECK(s.rate_of(id) < cut);
    }
    CHECK(o.unique() == (o.candidates.size() == 1 && o.variant == AttackOutcome::Variant::Unique));
  }
}

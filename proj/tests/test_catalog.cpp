#include <doctest.h>

#include <algorithm>
#include <set>

#include "rpclink/catalog.hpp"
#include "rpclink/error.hpp"

using namespace rpclink;

namespace {

const WalletProfile& profile(const std::string& name) {
  static const auto all = builtin_profiles();
  return find_profile(all, name);
}

std::set<std::string> names_of(const std::vector<ApiSpec>& apis) {
  std::set<std::string> out;
  for (const auto& a : apis) out.insert(a.name);
  return out;
}

// Independent overlap test on closed/half-open ranges.
bool overlap(const SizeRange& a, const SizeRange& b) {
  const double a_hi = a.max ? *a.max : 1e18;
  const double b_hi = b.max ? *b.max : 1e18;
  return a.min <= b_hi && b.min <= a_hi;
}

std::size_t brute_overlaps(const WalletProfile& p) {
  const ApiSpec& t = p.target();
  std::size_t n = 0;
  for (const auto& a : p.catalog)
    if (a.name != t.name && overlap(a.request_json, t.request_json) && overlap(a.response_json, t.response_json)) ++n;
  return n;
}

}  // namespace

TEST_CASE("packet size adds the overhead") {
  CHECK(packet_size(100, {0, 0}) == 100);
  CHECK(packet_size(150, {24, 9}) == 183);
  const SizeRange r = packet_range(SizeRange::at_least(500), {22, 9});
  CHECK(r.min == 531);
  CHECK_FALSE(r.bounded());
}

TEST_CASE("MetaMask target request packets fall in [193, 194]") {
  const WalletProfile& mm = profile("MetaMask");
  const SizeRange r = packet_range(mm.target().wallet_request, mm.overhead);
  CHECK(r == SizeRange::closed(193, 194));
}

TEST_CASE("size range algebra") {
  const SizeRange a = SizeRange::closed(10, 20);
  CHECK(a.contains(10));
  CHECK(a.contains(20));
  CHECK_FALSE(a.contains(20.5));
  CHECK(a.intersects(SizeRange::closed(20, 30)));
  CHECK_FALSE(a.intersects(SizeRange::closed(21, 30)));
  CHECK(a.intersects(SizeRange::at_least(15)));
  CHECK(SizeRange::closed(12, 14).subset_of(a));
  CHECK_FALSE(SizeRange::at_least(12).subset_of(a));
  CHECK(SizeRange::closed(12, 14).subset_of(SizeRange::at_least(5)));
  CHECK(a.shifted(5) == SizeRange::closed(15, 25));
}

TEST_CASE("theoretical overlap counts per chain") {
  CHECK(overlapping_apis(profile("MetaMask").catalog, profile("MetaMask").target(), false).size() == 9);
  CHECK(overlapping_apis(profile("Electrum").catalog, profile("Electrum").target(), false).size() == 4);
  CHECK(overlapping_apis(profile("Torus").catalog, profile("Torus").target(), false).size() == 13);
  for (const auto& p : builtin_profiles())
    CHECK(overlapping_apis(p.catalog, p.target(), false).size() == brute_overlaps(p));
}

TEST_CASE("MetaMask practical overlap is only eth_getBlockByHash") {
  const WalletProfile& mm = profile("MetaMask");
  CHECK(names_of(overlapping_apis(mm.catalog, mm.target(), true)) == std::set<std::string>{"eth_getBlockByHash"});
}

TEST_CASE("practical overlaps are a subset of theoretical ones and skip unused apis") {
  for (const auto& p : builtin_profiles()) {
    const auto theory = names_of(overlapping_apis(p.catalog, p.target(), false));
    for (const auto& a : overlapping_apis(p.catalog, p.target(), true)) {
      CHECK(theory.count(a.name) == 1);
      CHECK(a.role != ApiRole::Unused);
    }
  }
}

TEST_CASE("disjoint toy catalog has no overlap") {
  ApiSpec t{"t", SizeRange::closed(100, 110), SizeRange::closed(100, 110), ApiRole::Target,
            SizeRange::closed(100, 110), SizeRange::closed(100, 110)};
  ApiSpec o{"o", SizeRange::closed(10, 20), SizeRange::closed(100, 110), ApiRole::Other,
            SizeRange::closed(10, 20), SizeRange::closed(100, 110)};
  CHECK(overlapping_apis({t, o}, t, false).empty());
  CHECK(overlapping_apis({t, o}, t, true).empty());
}

TEST_CASE("builtin profile parameters") {
  const WalletProfile& mm = profile("metamask");
  CHECK(mm.method == QueryMethod::Periodic);
  CHECK(mm.cycle == 20.0);
  CHECK(mm.block_time == 12.0);
  const WalletProfile& el = profile("Electrum");
  CHECK(el.method == QueryMethod::Subscription);
  CHECK(el.block_time == 120.0);
  const WalletProfile& torus = profile("Torus");
  CHECK(torus.method == QueryMethod::Periodic);
  CHECK(torus.cycle == 10.0);
  CHECK(profile("Enkrypt").cycle == 10.0);
  CHECK(profile("Taho").cycle == 2.0);
  CHECK(profile("Phantom").cycle == 0.5);
  CHECK(profile("Solflare").cycle == 1.0);
  for (const char* n : {"Green", "Sparrow"}) CHECK(profile(n).method == QueryMethod::Subscription);
  CHECK(builtin_profiles().size() == 9);
  CHECK_THROWS_AS(find_profile(builtin_profiles(), "nope"), Error);
}

TEST_CASE("every builtin profile validates and round-trips through json") {
  for (const auto& p : builtin_profiles()) {
    CHECK_NOTHROW(p.validate());
    const WalletProfile back = WalletProfile::from_json(p.to_json());
    CHECK(back.to_json() == p.to_json());
  }
}

TEST_CASE("dedup window") {
  CHECK(profile("MetaMask").dedup_window() == 20.0);
  CHECK(profile("Electrum").dedup_window() == 60.0);
}

TEST_CASE("profile validation catches inconsistencies") {
  WalletProfile p = profile("MetaMask");
  p.calls.poll.push_back("eth_doesNotExist");
  CHECK_THROWS_AS(p.validate(), Error);

  p = profile("MetaMask");
  p.catalog[0].wallet_request = SizeRange::closed(10, 20);
  CHECK_THROWS_AS(p.validate(), Error);

  p = profile("MetaMask");
  p.catalog.push_back(p.catalog[1]);
  CHECK_THROWS_AS(p.validate(), Error);

  p = profile("MetaMask");
  p.cycle = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("merging profile documents") {
  nlohmann::json doc = {{"profiles", nlohmann::json::array({profile("Torus").to_json()})}};
  doc["profiles"][0]["cycle"] = 20.0;
  auto merged = merge_profiles(builtin_profiles(), doc);
  CHECK(merged.size() == 9);
  CHECK(find_profile(merged, "Torus").cycle == 20.0);

  nlohmann::json fresh = profile("MetaMask").to_json();
  fresh["name"] = "Custom";
  merged = merge_profiles(builtin_profiles(), nlohmann::json::array({fresh}));
  CHECK(merged.size() == 10);
  CHECK(find_profile(merged, "custom").cycle == 20.0);
}

TEST_CASE("role names round-trip") {
  for (ApiRole r : {ApiRole::Target, ApiRole::Noise, ApiRole::Other, ApiRole::Unused})
    CHECK(api_role_from_string(to_string(r)) == r);
  CHECK_THROWS_AS(api_role_from_string("bogus"), Error);
}

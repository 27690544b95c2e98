#include "rpclink/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "rpclink/error.hpp"

namespace rpclink {

bool SizeRange::contains(double size) const noexcept {
  if (size < static_cast<double>(min)) return false;
  return !max || size <= static_cast<double>(*max);
}

bool SizeRange::intersects(const SizeRange& other) const noexcept {
  if (max && other.min > *max) return false;
  if (other.max && min > *other.max) return false;
  return true;
}

bool SizeRange::subset_of(const SizeRange& other) const noexcept {
  if (min < other.min) return false;
  if (!other.max) return true;
  return max && *max <= *other.max;
}

SizeRange SizeRange::shifted(std::uint32_t bytes) const {
  SizeRange r{min + bytes, std::nullopt};
  if (max) r.max = *max + bytes;
  return r;
}

std::string_view to_string(ApiRole role) noexcept {
  switch (role) {
    case ApiRole::Target: return "target";
    case ApiRole::Noise: return "noise";
    case ApiRole::Other: return "other";
    case ApiRole::Unused: return "unused";
  }
  return "other";
}

ApiRole api_role_from_string(std::string_view s) {
  if (s == "target") return ApiRole::Target;
  if (s == "noise") return ApiRole::Noise;
  if (s == "other") return ApiRole::Other;
  if (s == "unused") return ApiRole::Unused;
  throw Error(ErrorKind::Malformed, "unknown api role '" + std::string(s) + "'");
}

std::string_view to_string(QueryMethod method) noexcept {
  return method == QueryMethod::Periodic ? "periodic" : "subscription";
}

namespace {

void check_range(const SizeRange& r, const std::string& what) {
  if (r.max && *r.max < r.min) throw Error(ErrorKind::InvalidConfig, what + ": max below min");
}

}  // namespace

void ApiSpec::validate() const {
  if (name.empty()) throw Error(ErrorKind::InvalidConfig, "api with empty name");
  check_range(request_json, name + " request range");
  check_range(response_json, name + " response range");
  check_range(wallet_request, name + " wallet request range");
  check_range(wallet_response, name + " wallet response range");
  if (!wallet_request.subset_of(request_json) || !wallet_response.subset_of(response_json))
    throw Error(ErrorKind::InvalidConfig, name + ": wallet ranges must lie inside the theoretical ranges");
}

std::uint32_t packet_size(std::uint32_t json_bytes, const OverheadModel& overhead) {
  if (json_bytes == 0) throw Error(ErrorKind::InvalidArgument, "packet_size: json size must be positive");
  return json_bytes + overhead.total();
}

SizeRange packet_range(const SizeRange& json, const OverheadModel& overhead) {
  return json.shifted(overhead.total());
}

std::vector<ApiSpec> overlapping_apis(const std::vector<ApiSpec>& catalog, const ApiSpec& target,
                                      bool practical) {
  const bool present = std::any_of(catalog.begin(), catalog.end(),
                                   [&](const ApiSpec& a) { return a.name == target.name; });
  if (!present) throw Error(ErrorKind::InvalidArgument, "overlapping_apis: target not in catalog");
  const SizeRange& treq = practical ? target.wallet_request : target.request_json;
  const SizeRange& tresp = practical ? target.wallet_response : target.response_json;
  std::vector<ApiSpec> out;
  for (const ApiSpec& api : catalog) {
    if (api.name == target.name) continue;
    if (practical && api.role == ApiRole::Unused) continue;
    const SizeRange& req = practical ? api.wallet_request : api.request_json;
    const SizeRange& resp = practical ? api.wallet_response : api.response_json;
    if (req.intersects(treq) && resp.intersects(tresp)) out.push_back(api);
  }
  return out;
}

void WalletProfile::validate() const {
  if (name.empty()) throw Error(ErrorKind::InvalidConfig, "profile with empty name");
  const std::string who = "profile " + name;
  if (!(block_time > 0.0)) throw Error(ErrorKind::InvalidConfig, who + ": block time must be > 0");
  if (method == QueryMethod::Periodic && !(cycle > 0.0))
    throw Error(ErrorKind::InvalidConfig, who + ": periodic cycle must be > 0");
  if (!(rtt >= 0.0)) throw Error(ErrorKind::InvalidConfig, who + ": rtt must be >= 0");
  if (min_window_blocks < 1) throw Error(ErrorKind::InvalidConfig, who + ": min_window_blocks must be >= 1");
  if (vendor_poll_period < 0.0) throw Error(ErrorKind::InvalidConfig, who + ": vendor poll period must be >= 0");
  check_range(nil_response, who + " nil response");
  std::set<std::string> names;
  int targets = 0;
  for (const ApiSpec& api : catalog) {
    api.validate();
    if (!names.insert(api.name).second) throw Error(ErrorKind::InvalidConfig, who + ": duplicate api " + api.name);
    if (api.role == ApiRole::Target) ++targets;
  }
  if (targets != 1) throw Error(ErrorKind::InvalidConfig, who + ": catalog needs exactly one target api");

  auto known = [&](const std::string& api_name) {
    if (!names.count(api_name)) throw Error(ErrorKind::InvalidConfig, who + ": call sequence names unknown api " + api_name);
  };
  for (const auto* list : {&calls.send, &calls.after_send, &calls.poll, &calls.pre_status, &calls.post_status,
                           &calls.on_new_block})
    for (const std::string& a : *list) known(a);
  if (calls.send.empty()) throw Error(ErrorKind::InvalidConfig, who + ": send sequence is empty");
  known(calls.status_query);
  if (calls.status_query != target().name)
    throw Error(ErrorKind::InvalidConfig, who + ": status query must be the target api");
  if (method == QueryMethod::Periodic && calls.poll.empty())
    throw Error(ErrorKind::InvalidConfig, who + ": periodic profile needs a poll call");
  if (method == QueryMethod::Subscription) known(calls.notification);
  for (const BackgroundTask& task : background) {
    known(task.api);
    if (!(task.period > 0.0)) throw Error(ErrorKind::InvalidConfig, who + ": background period must be > 0");
  }
  if (nil_response.max && target().wallet_response.shifted(overhead.total()).min <= *nil_response.max)
    throw Error(ErrorKind::InvalidConfig, who + ": nil responses must be smaller than target responses");
}

const ApiSpec* WalletProfile::find_api(std::string_view api_name) const {
  for (const ApiSpec& api : catalog)
    if (api.name == api_name) return &api;
  return nullptr;
}

const ApiSpec& WalletProfile::api(std::string_view api_name) const {
  const ApiSpec* a = find_api(api_name);
  if (!a) throw Error(ErrorKind::InvalidArgument, "profile " + name + " has no api " + std::string(api_name));
  return *a;
}

const ApiSpec& WalletProfile::target() const {
  for (const ApiSpec& api : catalog)
    if (api.role == ApiRole::Target) return api;
  throw Error(ErrorKind::InvalidConfig, "profile " + name + " has no target api");
}

double WalletProfile::dedup_window() const {
  if (method == QueryMethod::Periodic) return cycle;
  return block_time / 2.0;
}

nlohmann::json to_json(const SizeRange& r) {
  nlohmann::json j{{"min", r.min}};
  j["max"] = r.max ? nlohmann::json(*r.max) : nlohmann::json(nullptr);
  return j;
}

SizeRange size_range_from_json(const nlohmann::json& j) {
  SizeRange r;
  if (j.is_array()) {
    if (j.size() != 2) throw Error(ErrorKind::Malformed, "size range array must have two entries");
    r.min = j[0].get<std::uint32_t>();
    if (!j[1].is_null()) r.max = j[1].get<std::uint32_t>();
    return r;
  }
  r.min = j.at("min").get<std::uint32_t>();
  if (j.contains("max") && !j["max"].is_null()) r.max = j["max"].get<std::uint32_t>();
  return r;
}

nlohmann::json WalletProfile::to_json() const {
  nlohmann::json cat = nlohmann::json::array();
  for (const ApiSpec& a : catalog) {
    cat.push_back({{"name", a.name},
                   {"role", std::string(rpclink::to_string(a.role))},
                   {"request_json", rpclink::to_json(a.request_json)},
                   {"response_json", rpclink::to_json(a.response_json)},
                   {"wallet_request", rpclink::to_json(a.wallet_request)},
                   {"wallet_response", rpclink::to_json(a.wallet_response)}});
  }
  nlohmann::json bg = nlohmann::json::array();
  for (const BackgroundTask& t : background) bg.push_back({{"api", t.api}, {"period", t.period}});
  return {{"name", name},
          {"blockchain", blockchain},
          {"block_time", block_time},
          {"method", std::string(rpclink::to_string(method))},
          {"cycle", cycle},
          {"rtt", rtt},
          {"min_window_blocks", min_window_blocks},
          {"overhead", {{"tls_header", overhead.tls_header}, {"app_header", overhead.app_header}}},
          {"catalog", std::move(cat)},
          {"calls",
           {{"send", calls.send},
            {"after_send", calls.after_send},
            {"poll", calls.poll},
            {"status_query", calls.status_query},
            {"pre_status", calls.pre_status},
            {"post_status", calls.post_status},
            {"on_new_block", calls.on_new_block},
            {"notification", calls.notification}}},
          {"background", std::move(bg)},
          {"nil_response", rpclink::to_json(nil_response)},
          {"vendor_poll_period", vendor_poll_period}};
}

WalletProfile WalletProfile::from_json(const nlohmann::json& j) {
  WalletProfile p;
  try {
    p.name = j.at("name").get<std::string>();
    p.blockchain = j.value("blockchain", std::string());
    p.block_time = j.at("block_time").get<double>();
    const std::string method = j.value("method", std::string("periodic"));
    if (method == "periodic") p.method = QueryMethod::Periodic;
    else if (method == "subscription") p.method = QueryMethod::Subscription;
    else throw Error(ErrorKind::Malformed, "unknown query method '" + method + "'");
    p.cycle = j.value("cycle", 0.0);
    p.rtt = j.value("rtt", 0.4);
    p.min_window_blocks = j.value("min_window_blocks", 1);
    if (j.contains("overhead")) {
      p.overhead.tls_header = j["overhead"].value("tls_header", 0u);
      p.overhead.app_header = j["overhead"].value("app_header", 0u);
    }
    for (const auto& a : j.at("catalog")) {
      ApiSpec api;
      api.name = a.at("name").get<std::string>();
      api.role = api_role_from_string(a.value("role", std::string("other")));
      api.request_json = size_range_from_json(a.at("request_json"));
      api.response_json = size_range_from_json(a.at("response_json"));
      api.wallet_request = a.contains("wallet_request") ? size_range_from_json(a["wallet_request"]) : api.request_json;
      api.wallet_response =
          a.contains("wallet_response") ? size_range_from_json(a["wallet_response"]) : api.response_json;
      p.catalog.push_back(std::move(api));
    }
    const auto& c = j.at("calls");
    auto list = [&](const char* key) {
      return c.contains(key) ? c[key].get<std::vector<std::string>>() : std::vector<std::string>{};
    };
    p.calls.send = list("send");
    p.calls.after_send = list("after_send");
    p.calls.poll = list("poll");
    p.calls.status_query = c.at("status_query").get<std::string>();
    p.calls.pre_status = list("pre_status");
    p.calls.post_status = list("post_status");
    p.calls.on_new_block = list("on_new_block");
    p.calls.notification = c.value("notification", std::string());
    if (j.contains("background"))
      for (const auto& t : j["background"]) p.background.push_back({t.at("api").get<std::string>(), t.at("period").get<double>()});
    if (j.contains("nil_response")) p.nil_response = size_range_from_json(j["nil_response"]);
    p.vendor_poll_period = j.value("vendor_poll_period", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("profile: ") + e.what());
  }
  p.validate();
  return p;
}

namespace {

constexpr auto kOpen = std::nullopt;

ApiSpec api(std::string name, ApiRole role, SizeRange req, SizeRange resp, SizeRange wreq, SizeRange wresp) {
  return {std::move(name), req, resp, role, wreq, wresp};
}

ApiSpec unused(std::string name, SizeRange req, SizeRange resp) {
  return {std::move(name), req, resp, ApiRole::Unused, req, resp};
}

SizeRange R(std::uint32_t lo, std::uint32_t hi) { return SizeRange::closed(lo, hi); }
SizeRange Ge(std::uint32_t lo) { return SizeRange{lo, kOpen}; }

// JSON body sizes. Wallet ranges are bounded so traffic can be sampled.
std::vector<ApiSpec> ethereum_catalog() {
  using enum ApiRole;
  return {
      api("eth_getTransactionReceipt", Target, R(150, 175), Ge(500), R(162, 163), R(1030, 2400)),
      api("eth_getBlockByHash", Noise, R(155, 180), Ge(540), R(161, 162), R(1406, 3400)),
      api("eth_getTransactionByBlockHash", Other, R(160, 200), Ge(500), R(185, 190), R(700, 900)),
      api("eth_getTransactionByHash", Other, R(140, 175), Ge(450), R(146, 147), R(600, 1200)),
      api("eth_getUncleByBlockHashAndIndex", Other, R(170, 195), Ge(520), R(178, 180), R(560, 700)),
      unused("eth_getProof", R(140, 400), Ge(600)),
      unused("eth_createAccessList", Ge(120), Ge(100)),
      unused("eth_feeHistory", R(100, 180), Ge(150)),
      unused("eth_getFilterLogs", R(120, 200), Ge(40)),
      unused("eth_getLogs", Ge(100), Ge(40)),
      api("eth_blockNumber", Other, R(60, 75), R(40, 55), R(66, 68), R(44, 48)),
      api("eth_getBlockByNumber", Other, R(80, 100), Ge(500), R(88, 92), R(1400, 3400)),
      api("eth_getBalance", Other, R(110, 130), R(40, 80), R(118, 120), R(52, 70)),
      api("eth_sendRawTransaction", Other, Ge(250), R(100, 120), R(420, 900), R(104, 106)),
      api("eth_call", Other, Ge(180), Ge(40), R(220, 480), R(60, 300)),
      api("eth_getTransactionCount", Other, R(110, 140), R(40, 60), R(128, 130), R(48, 52)),
      api("eth_estimateGas", Other, Ge(200), R(40, 60), R(240, 600), R(48, 52)),
      api("eth_gasPrice", Other, R(50, 65), R(40, 60), R(58, 60), R(50, 54)),
      api("eth_chainId", Other, R(50, 60), R(38, 45), R(55, 57), R(40, 42)),
  };
}

std::vector<ApiSpec> bitcoin_catalog() {
  using enum ApiRole;
  return {
      api("blockchain.transaction.get_merkle", Target, R(130, 165), Ge(100), R(144, 154), R(139, 1200)),
      api("blockchain.scripthash.get_history", Noise, R(135, 150), Ge(40), R(142, 146), R(120, 3000)),
      api("blockchain.scripthash.listunspent", Noise, R(135, 150), Ge(31), R(142, 146), R(31, 1500)),
      api("blockchain.transaction.get", Other, R(120, 160), Ge(150), R(124, 128), R(400, 1200)),
      unused("blockchain.scripthash.get_mempool", R(135, 150), Ge(40)),
      api("blockchain.transaction.broadcast", Other, Ge(200), R(80, 100), R(420, 900), R(90, 92)),
      api("blockchain.estimatefee", Other, R(50, 70), R(30, 50), R(58, 60), R(36, 44)),
      api("blockchain.scripthash.subscribe", Other, R(100, 128), R(90, 140), R(118, 120), R(100, 120)),
      api("blockchain.headers.subscribe", Other, R(60, 80), R(200, 260), R(70, 72), R(220, 240)),
      api("blockchain.relayfee", Other, R(50, 60), R(30, 50), R(52, 54), R(36, 40)),
      api("server.ping", Other, R(40, 50), R(30, 40), R(44, 46), R(34, 36)),
  };
}

std::vector<ApiSpec> solana_catalog() {
  using enum ApiRole;
  return {
      api("getSignatureStatuses", Target, R(180, 300), R(150, 400), R(231, 231), R(235, 238)),
      api("getAccountInfo", Noise, R(120, 400), Ge(100), R(144, 307), R(127, 2000)),
      api("getMultipleAccounts", Noise, Ge(150), Ge(100), R(151, 1200), R(129, 4000)),
      api("getTokenAccountsByOwner", Noise, R(150, 450), Ge(100), R(154, 428), R(125, 3000)),
      api("getTransaction", Other, R(150, 260), Ge(200), R(200, 210), R(900, 3000)),
      api("getFeeForMessage", Other, Ge(200), R(60, 300), R(400, 900), R(70, 80)),
      api("getSignaturesForAddress", Other, R(150, 260), Ge(120), R(170, 180), R(400, 4000)),
      api("simulateTransaction", Other, Ge(250), Ge(150), R(600, 1200), R(500, 3000)),
      unused("getProgramAccounts", R(150, 600), Ge(100)),
      unused("getRecentPrioritizationFees", R(100, 2000), Ge(60)),
      unused("getTokenAccountsByDelegate", R(150, 450), Ge(100)),
      unused("getVoteAccounts", R(60, 300), Ge(200)),
      unused("getBlock", R(90, 300), Ge(200)),
      unused("getInflationReward", R(100, 2000), Ge(60)),
      unused("getLeaderSchedule", R(40, 120), Ge(1000)),
      api("getBlockHeight", Other, R(40, 60), R(35, 50), R(48, 50), R(40, 44)),
      api("getLatestBlockhash", Other, R(60, 100), R(120, 160), R(80, 82), R(140, 150)),
      api("getBalance", Other, R(100, 140), R(60, 100), R(118, 120), R(70, 80)),
      api("sendTransaction", Other, Ge(301), R(100, 130), R(500, 1300), R(110, 112)),
  };
}

WalletProfile ethereum_wallet(std::string name, double cycle, double vendor_period) {
  WalletProfile p;
  p.name = std::move(name);
  p.blockchain = "ethereum";
  p.block_time = 12.0;
  p.method = QueryMethod::Periodic;
  p.cycle = cycle;
  p.min_window_blocks = 3;
  p.overhead = {22, 9};  // TLS record + HTTP/2 frame
  p.catalog = ethereum_catalog();
  p.calls.send = {"eth_estimateGas", "eth_getTransactionCount", "eth_sendRawTransaction"};
  p.calls.after_send = {"eth_getTransactionByHash"};
  p.calls.poll = {"eth_blockNumber"};
  p.calls.status_query = "eth_getTransactionReceipt";
  p.calls.post_status = {"eth_getBlockByHash", "eth_getBalance"};
  p.calls.on_new_block = {"eth_getBlockByNumber"};
  p.background = {{"eth_getBlockByHash", 45.0},
                  {"eth_call", 30.0},
                  {"eth_getTransactionByBlockHash", 90.0},
                  {"eth_getUncleByBlockHashAndIndex", 120.0},
                  {"eth_chainId", 60.0}};
  p.vendor_poll_period = vendor_period;
  return p;
}

WalletProfile bitcoin_wallet(std::string name) {
  WalletProfile p;
  p.name = std::move(name);
  p.blockchain = "bitcoin";
  p.block_time = 120.0;
  p.method = QueryMethod::Subscription;
  p.min_window_blocks = 2;
  p.overhead = {22, 6};  // TLS record + WebSocket frame
  p.catalog = bitcoin_catalog();
  p.calls.send = {"blockchain.relayfee", "blockchain.transaction.broadcast"};
  p.calls.after_send = {"blockchain.scripthash.get_history"};
  p.calls.notification = "blockchain.scripthash.subscribe";
  p.calls.status_query = "blockchain.transaction.get_merkle";
  p.calls.post_status = {"blockchain.scripthash.get_history", "blockchain.transaction.get"};
  p.background = {{"blockchain.estimatefee", 60.0},
                  {"server.ping", 120.0},
                  {"blockchain.scripthash.listunspent", 180.0},
                  {"blockchain.scripthash.get_history", 300.0}};
  return p;
}

WalletProfile solana_wallet(std::string name, double cycle, double vendor_period) {
  WalletProfile p;
  p.name = std::move(name);
  p.blockchain = "solana";
  p.block_time = 0.4;
  p.method = QueryMethod::Periodic;
  p.cycle = cycle;
  p.min_window_blocks = 60;
  p.overhead = {22, 9};
  p.catalog = solana_catalog();
  p.calls.send = {"getLatestBlockhash", "getFeeForMessage", "sendTransaction"};
  p.calls.after_send = {"getSignaturesForAddress"};
  p.calls.poll = {"getBlockHeight"};
  p.calls.status_query = "getSignatureStatuses";
  p.calls.post_status = {"getTransaction", "getBalance"};
  p.background = {{"getAccountInfo", 20.0},
                  {"getTokenAccountsByOwner", 30.0},
                  {"getMultipleAccounts", 60.0},
                  {"getBalance", 15.0}};
  p.vendor_poll_period = vendor_period;
  return p;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::vector<WalletProfile> builtin_profiles() {
  std::vector<WalletProfile> out{
      ethereum_wallet("MetaMask", 20.0, 10.0), ethereum_wallet("Enkrypt", 10.0, 15.0),
      ethereum_wallet("Taho", 2.0, 15.0),      bitcoin_wallet("Electrum"),
      bitcoin_wallet("Green"),                 bitcoin_wallet("Sparrow"),
      solana_wallet("Torus", 10.0, 30.0),      solana_wallet("Phantom", 0.5, 30.0),
      solana_wallet("Solflare", 1.0, 30.0),
  };
  for (const WalletProfile& p : out) p.validate();
  return out;
}

const WalletProfile& find_profile(const std::vector<WalletProfile>& profiles, std::string_view name) {
  const std::string key = lower(name);
  for (const WalletProfile& p : profiles)
    if (lower(p.name) == key) return p;
  throw Error(ErrorKind::InvalidArgument, "unknown wallet profile '" + std::string(name) + "'");
}

std::vector<WalletProfile> merge_profiles(std::vector<WalletProfile> base, const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("profiles")) throw Error(ErrorKind::Malformed, "profile file: missing 'profiles'");
    list = &doc["profiles"];
  }
  if (!list->is_array()) throw Error(ErrorKind::Malformed, "profile file: expected an array of profiles");
  for (const auto& entry : *list) {
    WalletProfile p = WalletProfile::from_json(entry);
    auto same = std::find_if(base.begin(), base.end(), [&](const WalletProfile& b) { return lower(b.name) == lower(p.name); });
    if (same != base.end()) *same = std::move(p);
    else base.push_back(std::move(p));
  }
  return base;
}

std::vector<WalletProfile> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open profile file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Malformed, std::string("profile file: ") + e.what());
  }
  return merge_profiles(builtin_profiles(), doc);
}

}  // namespace rpclink

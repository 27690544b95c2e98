#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rpclink {

/// Closed byte range; `max` empty means unbounded above.
struct SizeRange {
  std::uint32_t min = 0;
  std::optional<std::uint32_t> max;

  static SizeRange closed(std::uint32_t lo, std::uint32_t hi) { return {lo, hi}; }
  static SizeRange at_least(std::uint32_t lo) { return {lo, std::nullopt}; }

  bool bounded() const noexcept { return max.has_value(); }
  bool contains(double size) const noexcept;
  bool intersects(const SizeRange& other) const noexcept;
  bool subset_of(const SizeRange& other) const noexcept;
  SizeRange shifted(std::uint32_t bytes) const;

  friend bool operator==(const SizeRange&, const SizeRange&) = default;
};

enum class ApiRole { Target, Noise, Other, Unused };

std::string_view to_string(ApiRole role) noexcept;
ApiRole api_role_from_string(std::string_view s);

/// One RPC API: theoretical JSON size ranges and the narrower ranges a
/// specific wallet actually produces.
struct ApiSpec {
  std::string name;
  SizeRange request_json;
  SizeRange response_json;
  ApiRole role = ApiRole::Other;
  SizeRange wallet_request;
  SizeRange wallet_response;

  void validate() const;
};

/// Bytes added around an RPC JSON body on the wire.
struct OverheadModel {
  std::uint32_t tls_header = 0;
  std::uint32_t app_header = 0;

  std::uint32_t total() const noexcept { return tls_header + app_header; }
};

std::uint32_t packet_size(std::uint32_t json_bytes, const OverheadModel& overhead);
SizeRange packet_range(const SizeRange& json, const OverheadModel& overhead);

/// APIs other than `target` whose request and response ranges both intersect
/// the target's. With `practical`, wallet ranges are compared and Unused APIs
/// are skipped.
std::vector<ApiSpec> overlapping_apis(const std::vector<ApiSpec>& catalog,
                                      const ApiSpec& target, bool practical);

enum class QueryMethod { Periodic, Subscription };

std::string_view to_string(QueryMethod method) noexcept;

struct BackgroundTask {
  std::string api;
  double period = 0.0;  // seconds
};

/// API invocations a wallet performs around one transaction.
///
/// Periodic wallets run `poll` every cycle; when the reported chain head
/// advanced they query `status_query` for each pending transaction, follow a
/// receipt with `post_status`, and finish the tick with `on_new_block`.
/// Subscription wallets receive `notification` when a transaction confirms,
/// call `pre_status`, then `status_query` and `post_status`.
struct CallSequence {
  std::vector<std::string> send;        // last entry carries the raw transaction
  std::vector<std::string> after_send;
  std::vector<std::string> poll;
  std::string status_query;
  std::vector<std::string> pre_status;
  std::vector<std::string> post_status;
  std::vector<std::string> on_new_block;
  std::string notification;
};

struct WalletProfile {
  std::string name;
  std::string blockchain;
  double block_time = 0.0;  // z, seconds
  QueryMethod method = QueryMethod::Periodic;
  double cycle = 0.0;       // y, seconds; periodic only
  double rtt = 0.4;         // nominal round trip, seconds
  int min_window_blocks = 1;  // operational floor for k on this chain
  OverheadModel overhead;
  std::vector<ApiSpec> catalog;
  CallSequence calls;
  std::vector<BackgroundTask> background;
  SizeRange nil_response = SizeRange::closed(60, 120);  // packet bytes
  double vendor_poll_period = 0.0;  // wallet-vendor flow; 0 disables

  void validate() const;
  const ApiSpec& api(std::string_view api_name) const;
  const ApiSpec* find_api(std::string_view api_name) const;
  const ApiSpec& target() const;
  /// Collapsing window for repeated detections of one query.
  double dedup_window() const;

  nlohmann::json to_json() const;
  static WalletProfile from_json(const nlohmann::json& j);
};

std::vector<WalletProfile> builtin_profiles();

/// Case-insensitive lookup; throws InvalidArgument if absent.
const WalletProfile& find_profile(const std::vector<WalletProfile>& profiles, std::string_view name);

/// Reads a profile file ({"profiles": [...]} or a bare array) and returns the
/// builtin set with same-named entries replaced and new ones appended.
std::vector<WalletProfile> load_profiles(const std::string& path);
std::vector<WalletProfile> merge_profiles(std::vector<WalletProfile> base, const nlohmann::json& doc);

nlohmann::json to_json(const SizeRange& r);
SizeRange size_range_from_json(const nlohmann::json& j);

}  // namespace rpclink

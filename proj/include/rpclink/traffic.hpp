#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpclink/catalog.hpp"
#include "rpclink/random.hpp"

namespace rpclink {

class Ledger;

enum class Direction { Request, Response };

/// Ground-truth annotation attached by the synthesizer.
enum class LabelRole { Target, Noise, Other, Nil };

std::string_view to_string(LabelRole role) noexcept;

struct PacketLabel {
  std::string api;
  LabelRole role = LabelRole::Other;

  std::string to_string() const;  // "api/role"
  static PacketLabel parse(std::string_view text);
  friend bool operator==(const PacketLabel&, const PacketLabel&) = default;
};

struct Flow {
  std::string id;
  std::string src_ip;
  std::uint16_t src_port = 0;
  std::string dst_ip;
  std::uint16_t dst_port = 0;
  std::string service;  // "rpc", "wallet-vendor", "other"
};

struct PacketRecord {
  std::uint32_t flow = 0;  // index into PacketTrace::flows
  double timestamp = 0.0;
  std::uint32_t size = 0;
  Direction direction = Direction::Request;
  std::optional<PacketLabel> label;
};

struct PacketTrace {
  std::vector<Flow> flows;
  std::vector<PacketRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  const std::string& service_of(const PacketRecord& rec) const { return flows.at(rec.flow).service; }
  /// Throws Validation if a record is malformed or timestamps decrease.
  void validate() const;
};

/// Round-trip delay model: truncated normal on [0, max].
struct JitterModel {
  double mean = 0.05;
  double stddev = 0.02;
  double max = 0.4;

  static JitterModel none() { return {0.0, 0.0, 0.0}; }
  double sample(Rng& rng) const;
};

struct TxEvent {
  double send_time = 0.0;                 // T_s
  std::optional<double> confirm_time;     // T_c; empty if never confirmed
  std::string initiator;
};

/// Block timestamps the session is aligned to.
class BlockClock {
 public:
  static BlockClock uniform(double interval, double genesis = 0.0);
  static BlockClock from_ledger(const Ledger& ledger);

  bool on_boundary(double t) const;
  /// Number of blocks with timestamp <= t.
  std::int64_t height_at(double t) const;

 private:
  double interval_ = 0.0;
  double genesis_ = 0.0;
  std::vector<double> stamps_;
};

struct SessionPlan {
  WalletProfile profile;
  std::vector<TxEvent> tx_events;
  JitterModel jitter;
  double noise_rate = 0.2;  // packets per second on unrelated flows
  double start = 0.0;
  double end = 0.0;
  BlockClock clock = BlockClock::uniform(12.0);

  void validate() const;
};

/// Packet-level realization of one wallet session. Deterministic per seed.
PacketTrace synth_session(const SessionPlan& plan, std::uint64_t seed);

/// Keeps only records on flows whose service is "rpc".
PacketTrace filter_rpc_flows(const PacketTrace& trace);

/// Timestamps of Target-labelled responses, ascending.
std::vector<double> ground_truth_tq(const PacketTrace& trace);

/// CSV `flow_id,timestamp,size,direction,label` plus a sidecar mapping
/// flow_id to its service label.
void write_trace_csv(std::ostream& out, const PacketTrace& trace);
nlohmann::json flow_sidecar(const PacketTrace& trace);
PacketTrace read_trace_csv(std::istream& csv, const nlohmann::json& sidecar);

void write_trace_files(const std::string& csv_path, const std::string& sidecar_path,
                       const PacketTrace& trace);
PacketTrace read_trace_files(const std::string& csv_path, const std::string& sidecar_path);

}  // namespace rpclink

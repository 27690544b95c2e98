#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rpclink/catalog.hpp"
#include "rpclink/ledger.hpp"

namespace rpclink {

/// Upper bound on the confirmation-to-query interval, in blocks.
struct IntervalEstimate {
  int k = 1;
  QueryMethod method = QueryMethod::Periodic;
  int theoretical_k = 1;
  int safety_margin = 0;
};

/// Periodic: ceil((y + RTT) / z). Subscription: ceil(2 RTT / z). The
/// operational k is max(theoretical + 1, profile.min_window_blocks).
IntervalEstimate estimate_k(const WalletProfile& profile);

/// Sorted, duplicate-free pseudonym set.
using PseudonymSet = std::vector<PseudonymId>;

struct CandidateSet {
  std::size_t round = 0;
  PseudonymSet pseudonyms;
  std::uint64_t first_height = 0;  // lowest height in the window
  int k = 0;
  double t_q = 0.0;
};

/// Initiators of the k highest blocks stamped at or before t_q.
CandidateSet candidate_set(const Ledger& ledger, double t_q, int k, std::size_t round = 1);

/// Intersection of all rounds; one round returns it unchanged.
PseudonymSet intersect(const std::vector<CandidateSet>& rounds);
PseudonymSet intersect(const std::vector<PseudonymSet>& sets);

struct AttackOutcome {
  enum class Variant { Unique, ActiveTarget, AmbiguousNormal };

  Variant variant = Variant::AmbiguousNormal;
  PseudonymSet candidates;
  std::size_t rounds = 0;

  bool unique() const noexcept { return variant == Variant::Unique; }
  bool identifies(PseudonymId target) const noexcept {
    return unique() && candidates.size() == 1 && candidates.front() == target;
  }
  /// "unique", "active_target", "ambiguous_normal" or "empty_intersection".
  std::string_view code() const noexcept;
};

/// Optimized identification: drop pseudonyms whose rate is >= threshold and
/// decide by the size of what remains. An empty intersection is reported as
/// AmbiguousNormal with no candidates.
AttackOutcome identify(const PseudonymSet& intersection, const ActivityStats& stats,
                       double rate_threshold, std::size_t rounds);

nlohmann::json outcome_to_json(const AttackOutcome& outcome, const std::vector<CandidateSet>& windows,
                               const std::vector<std::string>& names);

}  // namespace rpclink

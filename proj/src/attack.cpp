#include "rpclink/attack.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "rpclink/error.hpp"

namespace rpclink {

namespace {

int ceil_blocks(double ratio) {
  return std::max(1, static_cast<int>(std::ceil(ratio - 1e-9)));
}

}  // namespace

IntervalEstimate estimate_k(const WalletProfile& profile) {
  profile.validate();
  IntervalEstimate est;
  est.method = profile.method;
  if (profile.method == QueryMethod::Periodic)
    est.theoretical_k = ceil_blocks((profile.cycle + profile.rtt) / profile.block_time);
  else
    est.theoretical_k = ceil_blocks(2.0 * profile.rtt / profile.block_time);
  est.k = std::max(est.theoretical_k + 1, profile.min_window_blocks);
  est.safety_margin = est.k - est.theoretical_k;
  return est;
}

CandidateSet candidate_set(const Ledger& ledger, double t_q, int k, std::size_t round) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "candidate_set: k must be positive");
  const auto last = ledger.last_block_at_or_before(t_q);
  if (!last || *last + 1 < static_cast<std::size_t>(k))
    throw Error(ErrorKind::InsufficientData, "candidate_set: fewer than k blocks precede t_q");
  CandidateSet set;
  set.round = round;
  set.k = k;
  set.t_q = t_q;
  const std::size_t first = *last + 1 - static_cast<std::size_t>(k);
  set.first_height = ledger.blocks()[first].height;
  for (std::size_t b = first; b <= *last; ++b)
    for (const Transaction& tx : ledger.blocks()[b].transactions) set.pseudonyms.push_back(tx.initiator);
  std::sort(set.pseudonyms.begin(), set.pseudonyms.end());
  set.pseudonyms.erase(std::unique(set.pseudonyms.begin(), set.pseudonyms.end()), set.pseudonyms.end());
  return set;
}

PseudonymSet intersect(const std::vector<PseudonymSet>& sets) {
  if (sets.empty()) throw Error(ErrorKind::InvalidArgument, "intersect: need at least one round");
  PseudonymSet acc = sets.front();
  for (std::size_t i = 1; i < sets.size() && !acc.empty(); ++i) {
    PseudonymSet next;
    std::set_intersection(acc.begin(), acc.end(), sets[i].begin(), sets[i].end(), std::back_inserter(next));
    acc = std::move(next);
  }
  return acc;
}

PseudonymSet intersect(const std::vector<CandidateSet>& rounds) {
  std::vector<PseudonymSet> sets;
  sets.reserve(rounds.size());
  for (const CandidateSet& c : rounds) sets.push_back(c.pseudonyms);
  return intersect(sets);
}

std::string_view AttackOutcome::code() const noexcept {
  switch (variant) {
    case Variant::Unique: return "unique";
    case Variant::ActiveTarget: return "active_target";
    case Variant::AmbiguousNormal: return candidates.empty() ? "empty_intersection" : "ambiguous_normal";
  }
  return "ambiguous_normal";
}

AttackOutcome identify(const PseudonymSet& intersection, const ActivityStats& stats, double rate_threshold,
                       std::size_t rounds) {
  AttackOutcome out;
  out.rounds = rounds;
  if (intersection.empty()) {
    out.variant = AttackOutcome::Variant::AmbiguousNormal;
    return out;
  }
  PseudonymSet normal;
  for (PseudonymId id : intersection)
    if (stats.rate_of(id) < rate_threshold) normal.push_back(id);
  if (normal.size() == 1) {
    out.variant = AttackOutcome::Variant::Unique;
    out.candidates = std::move(normal);
  } else if (normal.empty()) {
    out.variant = AttackOutcome::Variant::ActiveTarget;
    out.candidates = intersection;
  } else {
    out.variant = AttackOutcome::Variant::AmbiguousNormal;
    out.candidates = std::move(normal);
  }
  return out;
}

nlohmann::json outcome_to_json(const AttackOutcome& outcome, const std::vector<CandidateSet>& windows,
                               const std::vector<std::string>& names) {
  static constexpr const char* kVariant[] = {"Unique", "ActiveTarget", "AmbiguousNormal"};
  auto name_of = [&](PseudonymId id) {
    return id.value < names.size() ? names[id.value] : std::to_string(id.value);
  };
  nlohmann::json candidates = nlohmann::json::array();
  for (PseudonymId id : outcome.candidates) candidates.push_back(name_of(id));
  nlohmann::json rounds = nlohmann::json::array();
  for (const CandidateSet& w : windows) {
    rounds.push_back({{"round", w.round},
                      {"t_q", w.t_q},
                      {"first_height", w.first_height},
                      {"k", w.k},
                      {"candidates", w.pseudonyms.size()}});
  }
  return {{"variant", kVariant[static_cast<int>(outcome.variant)]},
          {"code", std::string(outcome.code())},
          {"candidates", std::move(candidates)},
          {"rounds", outcome.rounds},
          {"windows", std::move(rounds)}};
}

}  // namespace rpclink

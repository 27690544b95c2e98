#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpclink/analytics.hpp"
#include "rpclink/attack.hpp"
#include "rpclink/catalog.hpp"
#include "rpclink/detector.hpp"
#include "rpclink/ledger.hpp"
#include "rpclink/traffic.hpp"

namespace rpclink {

enum class VictimClass { Normal, Active };
enum class ScheduleSource { Poisson, Ledger };

struct VictimSpec {
  std::size_t count = 0;  // 0: one victim per trial
  VictimClass activity = VictimClass::Normal;
  ScheduleSource schedule = ScheduleSource::Poisson;
  // Victim rate drawn log-uniformly in [min, max] times the active threshold.
  double rate_min_factor = 0.05;
  double rate_max_factor = 0.5;
};

struct DetectorSpec {
  int radius = 4;
  TrainingQuota quota;
  Hyperparams hyper;
  std::string classifier_path;  // load instead of training when set
};

struct Scenario {
  std::string name = "scenario";
  std::optional<LedgerConfig> ledger;
  std::string ledger_path;  // JSONL dump used when `ledger` is empty
  std::string wallet = "MetaMask";
  std::string profile_path;
  VictimSpec victim;
  int rounds = 3;
  std::optional<double> alpha;  // bypasses the detector when set
  bool filter = true;
  double q = 0.01;
  std::optional<int> k_override;
  JitterModel jitter;
  double noise_rate = 0.2;
  DetectorSpec detector;
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  std::size_t analytic_samples = 1'000'000;
  unsigned workers = 0;  // 0: hardware concurrency
  bool write_ledger = true;
  std::size_t trace_dump_limit = 3;

  void validate() const;

  nlohmann::json to_json() const;
  std::string to_toml() const;
  static Scenario from_toml_string(const std::string& text);
  static Scenario from_toml_file(const std::string& path);
};

struct RoundRecord {
  double t_q = 0.0;
  std::uint64_t first_height = 0;
  int k = 0;
  std::size_t size = 0;       // |S_j|
  std::size_t survivors = 0;  // |S_1 ∩ ... ∩ S_j|
  bool truthful = true;       // window built from a correct detection
};

struct TrialResult {
  std::size_t index = 0;
  std::string victim;
  AttackOutcome outcome;
  std::vector<RoundRecord> rounds;
  bool success = false;
  bool false_positive = false;
  bool unfiltered_false_positive = false;
  std::size_t detections_true = 0;
  std::size_t detections_false = 0;
  std::size_t transactions = 0;

  nlohmann::json to_json(const std::vector<std::string>& names) const;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<TrialResult> trials;
  double success_rate = 0.0;
  double false_positive_rate = 0.0;
  double unfiltered_false_positive_rate = 0.0;
  double active_target_rate = 0.0;
  double target_included_rate = 0.0;  // output contains the victim
  std::vector<double> mean_cardinality;  // by round
  SuccessEstimate analytic;
  double threshold_rate = 0.0;
  int k = 0;
  std::optional<EvalMetrics> detector;  // when the detector ran in the loop
  std::optional<EvalMetrics> detector_training;
  double wall_seconds = 0.0;

  /// Deterministic payload; wall-clock time and the worker count live under
  /// "run_info".
  nlohmann::json to_json(const std::vector<std::string>& names) const;
  nlohmann::json payload(const std::vector<std::string>& names) const;
};

/// A prepared world: ledger with victims injected, statistics, profile and
/// (optionally) a trained detector. Trials are independent and read-only.
class Experiment {
 public:
  explicit Experiment(Scenario scenario);

  const Scenario& scenario() const noexcept { return scenario_; }
  const Ledger& ledger() const noexcept { return ledger_; }
  const ActivityStats& stats() const noexcept { return stats_; }
  const WalletProfile& profile() const noexcept { return profile_; }
  const DistributionSet& distributions() const noexcept { return dists_; }
  const IntervalEstimate& interval() const noexcept { return interval_; }
  double threshold_rate() const noexcept { return threshold_; }
  const std::optional<Classifier>& classifier() const noexcept { return classifier_; }
  const std::optional<EvalMetrics>& training_metrics() const noexcept { return training_; }

  TrialResult run_trial(std::size_t trial_index) const;
  /// Session traces of one trial, for persistence and inspection.
  std::vector<PacketTrace> trial_traces(std::size_t trial_index) const;
  ExperimentReport run() const;

 private:
  struct Victim {
    PseudonymId id;
    double rate = 0.0;
    std::vector<std::pair<double, std::size_t>> events;  // (send time, block index)
  };

  std::vector<SessionPlan> trial_sessions(std::size_t trial_index, const Victim& victim) const;

  Scenario scenario_;
  WalletProfile profile_;
  IntervalEstimate interval_;
  Ledger ledger_;
  BlockClock clock_ = BlockClock::uniform(12.0);
  ActivityStats stats_;
  DistributionSet dists_;
  double threshold_ = 0.0;
  std::vector<Victim> victims_;
  std::optional<Classifier> classifier_;
  std::optional<EvalMetrics> training_;
};

TrialResult run_trial(const Scenario& scenario, std::size_t trial_index);
ExperimentReport run_experiment(const Scenario& scenario);

/// Writes config.toml, report.json, report.csv, heatmap.csv and, when
/// enabled, ledger.jsonl, trace_*.csv and classifier.json.
ExperimentReport run_experiment_to_directory(const Scenario& scenario, const std::string& dir);

/// Labelled training corpus of synthetic sessions for `profile`.
std::vector<PacketTrace> synth_corpus(const WalletProfile& profile, std::size_t sessions,
                                      std::size_t tx_per_session, const JitterModel& jitter,
                                      double noise_rate, std::uint64_t seed);

}  // namespace rpclink

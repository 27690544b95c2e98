#include "rpclink/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "rpclink/error.hpp"
#include "rpclink/random.hpp"

namespace rpclink {

namespace {

constexpr std::uint64_t kVictimStream = 0x7000;
constexpr std::uint64_t kTrialStream = 1000;
constexpr std::uint64_t kCorpusStream = 0xc0de;
constexpr std::uint64_t kTrainingStream = 0x7a11;
constexpr std::uint64_t kAnalyticStream = 0xa7a1;
constexpr std::uint64_t kHeatmapStream = 0x4ea7;
constexpr std::size_t kCorpusTxPerSession = 20;

const char* variant_name(AttackOutcome::Variant v) {
  switch (v) {
    case AttackOutcome::Variant::Unique: return "Unique";
    case AttackOutcome::Variant::ActiveTarget: return "ActiveTarget";
    case AttackOutcome::Variant::AmbiguousNormal: return "AmbiguousNormal";
  }
  return "AmbiguousNormal";
}

Scenario validated(Scenario s) {
  s.validate();
  return s;
}

WalletProfile pick_profile(const Scenario& s) {
  const auto profiles = s.profile_path.empty() ? builtin_profiles() : load_profiles(s.profile_path);
  return find_profile(profiles, s.wallet);
}

IntervalEstimate pick_interval(const WalletProfile& profile, const Scenario& s) {
  IntervalEstimate est = estimate_k(profile);
  if (s.k_override) {
    est.k = *s.k_override;
    est.safety_margin = est.k - est.theoretical_k;
  }
  return est;
}

Ledger load_base(const Scenario& s) {
  return s.ledger ? synth_ledger(*s.ledger) : ingest_ledger_file(s.ledger_path);
}

std::string victim_name(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "victim-%04zu", v);
  return buf;
}

unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned w = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(w, std::max<std::size_t>(1, jobs)));
}

double session_lead(const WalletProfile& p) { return std::max(2.0 * p.cycle, 30.0); }
double session_tail(const WalletProfile& p) { return std::max(3.0 * p.cycle, 2.0 * p.block_time) + 5.0; }

}  // namespace

nlohmann::json TrialResult::to_json(const std::vector<std::string>& names) const {
  auto name_of = [&](PseudonymId id) {
    return id.value < names.size() ? names[id.value] : std::to_string(id.value);
  };
  nlohmann::json candidates = nlohmann::json::array();
  for (PseudonymId id : outcome.candidates) candidates.push_back(name_of(id));
  nlohmann::json rs = nlohmann::json::array();
  for (const RoundRecord& r : rounds)
    rs.push_back({{"t_q", r.t_q},
                  {"first_height", r.first_height},
                  {"k", r.k},
                  {"size", r.size},
                  {"survivors", r.survivors},
                  {"truthful", r.truthful}});
  return {{"index", index},
          {"victim", victim},
          {"variant", variant_name(outcome.variant)},
          {"code", std::string(outcome.code())},
          {"candidates", std::move(candidates)},
          {"success", success},
          {"false_positive", false_positive},
          {"unfiltered_false_positive", unfiltered_false_positive},
          {"detections_true", detections_true},
          {"detections_false", detections_false},
          {"transactions", transactions},
          {"rounds", std::move(rs)}};
}

namespace {

nlohmann::json metrics_json(const std::optional<EvalMetrics>& m) {
  if (!m) return nullptr;
  return {{"accuracy", m->accuracy}, {"precision", m->precision}, {"recall", m->recall}, {"samples", m->samples}};
}

}  // namespace

nlohmann::json ExperimentReport::payload(const std::vector<std::string>& names) const {
  nlohmann::json trials_json = nlohmann::json::array();
  for (const TrialResult& t : trials) trials_json.push_back(t.to_json(names));
  nlohmann::json cfg = config;
  if (cfg.is_object()) cfg.erase("workers");
  return {{"config", std::move(cfg)},
          {"k", k},
          {"threshold_rate", threshold_rate},
          {"trials", trials.size()},
          {"success_rate", success_rate},
          {"false_positive_rate", false_positive_rate},
          {"unfiltered_false_positive_rate", unfiltered_false_positive_rate},
          {"active_target_rate", active_target_rate},
          {"target_included_rate", target_included_rate},
          {"mean_cardinality", mean_cardinality},
          {"analytic",
           {{"expected_p", analytic.expected_p},
            {"expected_r", analytic.expected_r},
            {"stderr_p", analytic.stderr_p},
            {"stderr_r", analytic.stderr_r},
            {"samples", analytic.samples},
            {"m", analytic.m},
            {"alpha", analytic.alpha},
            {"filtered", analytic.filtered}}},
          {"detector", metrics_json(detector)},
          {"detector_training", metrics_json(detector_training)},
          {"results", std::move(trials_json)}};
}

nlohmann::json ExperimentReport::to_json(const std::vector<std::string>& names) const {
  nlohmann::json j = payload(names);
  j["run_info"] = {{"wall_seconds", wall_seconds}, {"workers", config.value("workers", 0u)}};
  return j;
}

std::vector<PacketTrace> synth_corpus(const WalletProfile& profile, std::size_t sessions,
                                      std::size_t tx_per_session, const JitterModel& jitter,
                                      double noise_rate, std::uint64_t seed) {
  if (tx_per_session == 0) throw Error(ErrorKind::InvalidArgument, "synth_corpus: need at least one transaction");
  const double z = profile.block_time;
  const double y = profile.cycle;
  std::vector<PacketTrace> out;
  out.reserve(sessions);
  for (std::size_t s = 0; s < sessions; ++s) {
    Rng rng(derive_seed(seed, s));
    SessionPlan plan;
    plan.profile = profile;
    plan.jitter = jitter;
    plan.noise_rate = noise_rate;
    plan.clock = BlockClock::uniform(z);
    plan.start = 0.0;
    double t = session_lead(profile) + uniform_real(rng, 0.0, z);
    std::uniform_int_distribution<int> extra_blocks(0, 2);
    for (std::size_t i = 0; i < tx_per_session; ++i) {
      const double confirm = (std::floor(t / z + 1e-9) + 1.0 + extra_blocks(rng)) * z;
      plan.tx_events.push_back({t, confirm, "user"});
      t = confirm + std::max(2.0 * y, 2.0 * z) + uniform_real(rng, 0.0, std::max(y, z));
    }
    plan.end = *plan.tx_events.back().confirm_time + session_tail(profile);
    out.push_back(synth_session(plan, derive_seed(seed, 0x5e55'0000 + s)));
  }
  return out;
}

Experiment::Experiment(Scenario scenario)
    : scenario_(validated(std::move(scenario))),
      profile_(pick_profile(scenario_)),
      interval_(pick_interval(profile_, scenario_)),
      ledger_(load_base(scenario_)) {
  const int k = interval_.k;
  const std::size_t m = static_cast<std::size_t>(scenario_.rounds);
  threshold_ = transacting_threshold(k, ledger_.block_time(), scenario_.q);
  const std::size_t count = scenario_.victim.count ? scenario_.victim.count : scenario_.trials;
  const auto& blocks = ledger_.blocks();
  const double T = ledger_.block_time();
  const bool normal = scenario_.victim.activity == VictimClass::Normal;

  if (scenario_.victim.schedule == ScheduleSource::Poisson) {
    if (blocks.size() < 2 * static_cast<std::size_t>(k) + m + 1)
      throw Error(ErrorKind::InsufficientData, "experiment: ledger too short for the victim schedule");
    const std::size_t lo = static_cast<std::size_t>(k);
    const std::size_t hi = blocks.size() - static_cast<std::size_t>(k) - 1;
    const double span = ledger_.duration();
    const double cap = threshold_ * span;
    std::vector<Block> copy = blocks;
    std::vector<std::string> users = ledger_.users();
    for (std::size_t v = 0; v < count; ++v) {
      Rng rng(derive_seed(scenario_.seed, kVictimStream + v));
      Victim victim;
      victim.id = PseudonymId{static_cast<std::uint32_t>(users.size())};
      victim.rate = std::exp(uniform_real(rng, std::log(scenario_.victim.rate_min_factor * threshold_),
                                          std::log(scenario_.victim.rate_max_factor * threshold_)));
      std::poisson_distribution<long> poisson(victim.rate * span);
      std::size_t n = 0;
      for (int attempt = 0;; ++attempt) {
        if (attempt == 100000)
          throw Error(ErrorKind::InsufficientData, "experiment: cannot draw a schedule for " + victim_name(v));
        n = static_cast<std::size_t>(poisson(rng));
        const double dn = static_cast<double>(n);
        if (n < m || n > hi - lo + 1) continue;
        if (normal ? dn < cap : dn >= cap) break;
      }
      std::vector<std::size_t> picks(hi - lo + 1);
      std::iota(picks.begin(), picks.end(), lo);
      std::shuffle(picks.begin(), picks.end(), rng);
      picks.resize(n);
      std::sort(picks.begin(), picks.end());
      for (std::size_t b : picks) {
        const double send = blocks[b].timestamp - uniform_real(rng, 0.2, 0.8) * T;
        victim.events.emplace_back(send, b);
        copy[b].transactions.push_back({victim.id, blocks[b].timestamp, blocks[b].height});
      }
      users.push_back(victim_name(v));
      victims_.push_back(std::move(victim));
    }
    ledger_ = Ledger(std::move(copy), T, std::move(users));
  } else {
    const ActivityStats base = measure_activity(ledger_, k);
    std::vector<PseudonymId> eligible;
    for (std::uint32_t i = 0; i < base.users.size(); ++i) {
      const bool is_normal = classify_user(base.lambda[i], threshold_) == UserClass::Normal;
      if (base.counts[i] >= m && is_normal == normal) eligible.push_back(PseudonymId{i});
    }
    if (eligible.empty())
      throw Error(ErrorKind::InsufficientData, "experiment: no ledger user matches the victim class");
    std::vector<std::vector<std::size_t>> blocks_of(base.users.size());
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (const Transaction& tx : blocks[b].transactions) {
        auto& list = blocks_of[tx.initiator.value];
        if (list.empty() || list.back() != b) list.push_back(b);
      }
    for (std::size_t v = 0; v < count; ++v) {
      Rng rng(derive_seed(scenario_.seed, kVictimStream + v));
      std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
      Victim victim;
      victim.id = eligible[pick(rng)];
      victim.rate = base.lambda[victim.id.value];
      for (std::size_t b : blocks_of[victim.id.value])
        victim.events.emplace_back(blocks[b].timestamp - uniform_real(rng, 0.2, 0.8) * T, b);
      victims_.push_back(std::move(victim));
    }
  }

  clock_ = BlockClock::from_ledger(ledger_);
  stats_ = measure_activity(ledger_, k);
  dists_ = DistributionSet::from_activity(stats_);

  if (!scenario_.alpha) {
    const DetectorSpec& det = scenario_.detector;
    if (!det.classifier_path.empty()) {
      std::ifstream in(det.classifier_path);
      if (!in) throw Error(ErrorKind::Io, "cannot open classifier '" + det.classifier_path + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Malformed, std::string("classifier: ") + e.what());
      }
      classifier_ = Classifier::from_json(j);
    } else {
      const std::size_t want = std::max(det.quota.positives, det.quota.noise_negatives);
      const std::size_t sessions = want / kCorpusTxPerSession + 2;
      const auto corpus = synth_corpus(profile_, sessions, kCorpusTxPerSession, scenario_.jitter,
                                       scenario_.noise_rate, derive_seed(scenario_.seed, kCorpusStream));
      const TrainingSet set = build_training_set(corpus, profile_, det.radius, det.quota,
                                                 derive_seed(scenario_.seed, kTrainingStream));
      TrainResult result = train(set, det.hyper, RuleConfig::from_profile(profile_));
      classifier_ = std::move(result.classifier);
      training_ = result.holdout;
    }
  }
}

std::vector<SessionPlan> Experiment::trial_sessions(std::size_t trial_index, const Victim& victim) const {
  const int k = interval_.k;
  const std::size_t m = static_cast<std::size_t>(scenario_.rounds);
  Rng rng(derive_seed(scenario_.seed, kTrialStream + trial_index));

  std::vector<std::size_t> order;
  for (std::size_t e = 0; e < victim.events.size(); ++e)
    if (victim.events[e].second + 1 >= static_cast<std::size_t>(k)) order.push_back(e);
  if (order.size() < m)
    throw Error(ErrorKind::InsufficientData, "victim has fewer than m transactions past the first k blocks");
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> chosen;
  for (std::size_t e : order) {
    if (chosen.size() == m) break;
    const std::size_t b = victim.events[e].second;
    const bool clear = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
      const std::size_t o = victim.events[c].second;
      return (b > o ? b - o : o - b) > static_cast<std::size_t>(k);
    });
    if (clear) chosen.push_back(e);
  }
  for (std::size_t e : order) {
    if (chosen.size() == m) break;
    if (std::find(chosen.begin(), chosen.end(), e) == chosen.end()) chosen.push_back(e);
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<SessionPlan> plans;
  for (std::size_t e : chosen) {
    const auto [send, b] = victim.events[e];
    const double confirm = ledger_.blocks()[b].timestamp;
    SessionPlan plan;
    plan.profile = profile_;
    plan.jitter = scenario_.jitter;
    plan.noise_rate = scenario_.noise_rate;
    plan.clock = clock_;
    plan.start = send - session_lead(profile_);
    plan.end = confirm + session_tail(profile_);
    plan.tx_events.push_back({send, confirm, ledger_.name(victim.id)});
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<PacketTrace> Experiment::trial_traces(std::size_t trial_index) const {
  const Victim& victim = victims_[trial_index % victims_.size()];
  const std::uint64_t trial_seed = derive_seed(scenario_.seed, kTrialStream + trial_index);
  std::vector<PacketTrace> out;
  const auto plans = trial_sessions(trial_index, victim);
  for (std::size_t r = 0; r < plans.size(); ++r) out.push_back(synth_session(plans[r], derive_seed(trial_seed, r)));
  return out;
}

TrialResult Experiment::run_trial(std::size_t trial_index) const {
  try {
    const Victim& victim = victims_[trial_index % victims_.size()];
    const std::uint64_t trial_seed = derive_seed(scenario_.seed, kTrialStream + trial_index);
    const auto traces = trial_traces(trial_index);
    const int k = interval_.k;
    const auto& blocks = ledger_.blocks();
    Rng alpha_rng(derive_seed(trial_seed, 0xa1fa));

    TrialResult result;
    result.index = trial_index;
    result.victim = ledger_.name(victim.id);
    result.transactions = victim.events.size();

    std::vector<CandidateSet> windows;
    std::vector<bool> truthful;
    auto add_round = [&](double t_q, bool truth) {
      windows.push_back(candidate_set(ledger_, t_q, k, windows.size() + 1));
      truthful.push_back(truth);
    };

    for (const PacketTrace& trace : traces) {
      const auto truth = ground_truth_tq(trace);
      if (scenario_.alpha) {
        if (truth.empty()) throw Error(ErrorKind::Validation, "session produced no status-query response");
        if (bernoulli(alpha_rng, *scenario_.alpha)) {
          add_round(truth.front(), true);
        } else {
          add_round(uniform_real(alpha_rng, blocks[static_cast<std::size_t>(k) - 1].timestamp,
                                 blocks.back().timestamp),
                    false);
        }
        continue;
      }
      const auto hits = detect_tq(trace, *classifier_, profile_.target(), profile_.overhead,
                                  profile_.dedup_window());
      for (double t : hits) {
        const bool match = std::any_of(truth.begin(), truth.end(), [&](double g) { return std::abs(g - t) < 1e-9; });
        if (match) ++result.detections_true;
        else ++result.detections_false;
        const auto last = ledger_.last_block_at_or_before(t);
        if (!last || *last + 1 < static_cast<std::size_t>(k)) continue;
        add_round(t, match);
      }
    }
    if (scenario_.alpha)
      for (bool t : truthful) ++(t ? result.detections_true : result.detections_false);

    PseudonymSet running;
    for (std::size_t j = 0; j < windows.size(); ++j) {
      running = j == 0 ? windows[j].pseudonyms : intersect(std::vector<PseudonymSet>{running, windows[j].pseudonyms});
      result.rounds.push_back({windows[j].t_q, windows[j].first_height, windows[j].k, windows[j].pseudonyms.size(),
                               running.size(), truthful[j]});
    }

    const double cut = scenario_.filter ? threshold_ : std::numeric_limits<double>::infinity();
    result.outcome = identify(running, stats_, cut, windows.size());
    result.success = result.outcome.identifies(victim.id);
    bool normal_other = false;
    for (PseudonymId id : running) {
      if (id == victim.id) continue;
      result.unfiltered_false_positive = true;
      if (stats_.rate_of(id) < threshold_) normal_other = true;
    }
    result.false_positive = scenario_.filter ? normal_other : result.unfiltered_false_positive;
    return result;
  } catch (const Error& e) {
    throw Error(e.kind(), "trial " + std::to_string(trial_index) + ": " + e.what());
  }
}

ExperimentReport Experiment::run() const {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = scenario_.trials;
  std::vector<TrialResult> results(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = run_trial(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const unsigned workers = worker_count(scenario_.workers, n);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentReport report;
  report.config = scenario_.to_json();
  report.k = interval_.k;
  report.threshold_rate = threshold_;
  report.detector_training = training_;
  std::size_t success = 0, fp = 0, ufp = 0, active = 0, included = 0, det_true = 0, det_false = 0;
  std::vector<double> card_sum;
  std::vector<std::size_t> card_n;
  for (const TrialResult& t : results) {
    success += t.success;
    fp += t.false_positive;
    ufp += t.unfiltered_false_positive;
    active += t.outcome.variant == AttackOutcome::Variant::ActiveTarget;
    const PseudonymId target = victims_[t.index % victims_.size()].id;
    included += std::binary_search(t.outcome.candidates.begin(), t.outcome.candidates.end(), target);
    det_true += t.detections_true;
    det_false += t.detections_false;
    for (std::size_t j = 0; j < t.rounds.size(); ++j) {
      if (card_sum.size() <= j) {
        card_sum.resize(j + 1, 0.0);
        card_n.resize(j + 1, 0);
      }
      card_sum[j] += static_cast<double>(t.rounds[j].survivors);
      ++card_n[j];
    }
  }
  const double dn = static_cast<double>(n);
  report.success_rate = static_cast<double>(success) / dn;
  report.false_positive_rate = static_cast<double>(fp) / dn;
  report.unfiltered_false_positive_rate = static_cast<double>(ufp) / dn;
  report.active_target_rate = static_cast<double>(active) / dn;
  report.target_included_rate = static_cast<double>(included) / dn;
  for (std::size_t j = 0; j < card_sum.size(); ++j)
    report.mean_cardinality.push_back(card_sum[j] / static_cast<double>(card_n[j]));

  const double expected = dn * scenario_.rounds;
  double alpha = 1.0;
  if (scenario_.alpha) {
    alpha = *scenario_.alpha;
  } else {
    EvalMetrics m;
    m.samples = static_cast<std::size_t>(expected);
    m.recall = std::min(1.0, static_cast<double>(det_true) / expected);
    m.precision = det_true + det_false ? static_cast<double>(det_true) / static_cast<double>(det_true + det_false) : 0.0;
    m.accuracy = static_cast<double>(det_true) / (expected + static_cast<double>(det_false));
    report.detector = m;
    alpha = m.recall;
  }
  std::optional<double> share_cut;
  if (scenario_.filter) share_cut = threshold_ / stats_.lambda_total;
  report.analytic = expected_success(dists_, alpha, scenario_.rounds, share_cut,
                                     {scenario_.analytic_samples, derive_seed(scenario_.seed, kAnalyticStream),
                                      worker_count(scenario_.workers, scenario_.analytic_samples)});
  report.trials = std::move(results);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrialResult run_trial(const Scenario& scenario, std::size_t trial_index) {
  return Experiment(scenario).run_trial(trial_index);
}

ExperimentReport run_experiment(const Scenario& scenario) { return Experiment(scenario).run(); }

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

ExperimentReport run_experiment_to_directory(const Scenario& scenario, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir + "': " + ec.message());

  const Experiment exp(scenario);
  const Scenario& s = exp.scenario();
  open_out(root / "config.toml") << s.to_toml();
  if (s.write_ledger) {
    auto out = open_out(root / "ledger.jsonl");
    write_ledger_jsonl(out, exp.ledger());
  }
  if (exp.classifier()) open_out(root / "classifier.json") << exp.classifier()->to_json().dump() << '\n';

  ExperimentReport report = exp.run();
  const auto& names = exp.ledger().users();
  open_out(root / "report.json") << report.to_json(names).dump(2) << '\n';

  {
    auto out = open_out(root / "report.csv");
    out << "trial,victim,variant,code,success,false_positive,unfiltered_false_positive,rounds,final_cardinality,"
           "candidates,detections_true,detections_false\n";
    for (const TrialResult& t : report.trials) {
      out << t.index << ',' << t.victim << ',' << variant_name(t.outcome.variant) << ',' << t.outcome.code() << ','
          << t.success << ',' << t.false_positive << ',' << t.unfiltered_false_positive << ',' << t.rounds.size()
          << ',' << (t.rounds.empty() ? 0 : t.rounds.back().survivors) << ',' << t.outcome.candidates.size() << ','
          << t.detections_true << ',' << t.detections_false << '\n';
    }
  }

  {
    std::vector<int> ms(6);
    std::iota(ms.begin(), ms.end(), 1);
    std::optional<double> share_cut;
    if (s.filter) share_cut = exp.threshold_rate() / exp.stats().lambda_total;
    const std::size_t samples = std::min<std::size_t>(s.analytic_samples, 200000);
    const auto cells = success_heatmap(exp.distributions(), {0.8, 0.85, 0.9, 0.95, 0.99, 1.0}, ms, share_cut,
                                       {samples, derive_seed(s.seed, kHeatmapStream), worker_count(s.workers, samples)});
    auto out = open_out(root / "heatmap.csv");
    out << "alpha,m,expected_p,stderr_p\n";
    out.precision(10);
    for (const HeatmapCell& c : cells) out << c.alpha << ',' << c.m << ',' << c.expected_p << ',' << c.stderr_p << '\n';
  }

  const std::size_t dumps = std::min(s.trace_dump_limit, s.trials);
  for (std::size_t i = 0; i < dumps; ++i) {
    const auto traces = exp.trial_traces(i);
    for (std::size_t r = 0; r < traces.size(); ++r) {
      const std::string stem = "trace_" + std::to_string(i) + "_" + std::to_string(r + 1);
      write_trace_files((root / (stem + ".csv")).string(), (root / (stem + ".flows.json")).string(), traces[r]);
    }
  }
  return report;
}

}  // namespace rpclink

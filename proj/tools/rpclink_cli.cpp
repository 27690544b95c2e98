#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rpclink/analytics.hpp"
#include "rpclink/attack.hpp"
#include "rpclink/catalog.hpp"
#include "rpclink/detector.hpp"
#include "rpclink/error.hpp"
#include "rpclink/harness.hpp"
#include "rpclink/ledger.hpp"
#include "rpclink/traffic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rpclink;

namespace {

// Options shared by every subcommand: a scenario file plus overrides.
struct Common {
  std::string config;
  std::optional<std::string> wallet;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<double> q;
  std::string profiles;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "scenario TOML file")->check(CLI::ExistingFile);
  cmd->add_option("--wallet", c.wallet, "wallet profile name");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("-k", c.k, "window size in blocks");
  cmd->add_option("-q", c.q, "appearance probability for the active threshold");
  cmd->add_option("--profiles", c.profiles, "profile JSON merged over the builtins")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "output path");
}

Scenario scenario_of(const Common& c) {
  Scenario s = c.config.empty() ? Scenario{} : Scenario::from_toml_file(c.config);
  if (c.wallet) s.wallet = *c.wallet;
  if (c.seed) s.seed = *c.seed;
  if (c.k) s.k_override = *c.k;
  if (c.q) s.q = *c.q;
  if (!c.profiles.empty()) s.profile_path = c.profiles;
  return s;
}

WalletProfile profile_of(const Scenario& s) {
  const auto profiles = s.profile_path.empty() ? builtin_profiles() : load_profiles(s.profile_path);
  return find_profile(profiles, s.wallet);
}

int k_of(const Scenario& s) { return s.k_override ? *s.k_override : estimate_k(profile_of(s)).k; }

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, path + ": " + e.what());
  }
}

Ledger ledger_of(const Scenario& s, const std::string& path) {
  if (!path.empty()) return ingest_ledger_file(path);
  if (s.ledger) return synth_ledger(*s.ledger);
  return ingest_ledger_file(s.ledger_path);
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) std::cout << j.dump(2) << '\n';
  else open_out(out) << j.dump(2) << '\n';
}

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rpclink: RPC traffic linkage simulator"};
  app.require_subcommand(1);
  std::function<void()> action;

  // synth-ledger
  Common sl;
  std::optional<std::uint32_t> sl_users;
  std::optional<double> sl_rate, sl_block, sl_duration, sl_zipf;
  auto* c_sl = app.add_subcommand("synth-ledger", "synthesize a ledger dump (JSONL)");
  add_common(c_sl, sl);
  c_sl->add_option("--users", sl_users);
  c_sl->add_option("--rate", sl_rate, "global transactions per second");
  c_sl->add_option("--block-time", sl_block);
  c_sl->add_option("--duration", sl_duration, "seconds");
  c_sl->add_option("--zipf", sl_zipf, "Zipf exponent");
  c_sl->callback([&] {
    action = [&] {
      Scenario s = scenario_of(sl);
      LedgerConfig cfg = s.ledger.value_or(LedgerConfig{});
      if (sl.seed) cfg.seed = *sl.seed;
      if (sl_users) cfg.num_users = *sl_users;
      if (sl_rate) cfg.rate = *sl_rate;
      if (sl_block) cfg.block_time = *sl_block;
      if (sl_duration) cfg.duration = *sl_duration;
      if (sl_zipf) cfg.activity = ActivityDistribution::zipf(*sl_zipf);
      const Ledger ledger = synth_ledger(cfg);
      if (sl.out.empty()) {
        write_ledger_jsonl(std::cout, ledger);
      } else {
        auto out = open_out(sl.out);
        write_ledger_jsonl(out, ledger);
      }
    };
  });

  // ingest
  Common in;
  std::string in_path;
  auto* c_in = app.add_subcommand("ingest", "validate a ledger dump and summarize it");
  add_common(c_in, in);
  c_in->add_option("input", in_path, "JSONL block dump")->required()->check(CLI::ExistingFile);
  c_in->callback([&] {
    action = [&] {
      const Ledger ledger = ingest_ledger_file(in_path);
      if (!in.out.empty()) {
        auto out = open_out(in.out);
        write_ledger_jsonl(out, ledger);
      }
      std::cout << json{{"blocks", ledger.blocks().size()},
                        {"transactions", ledger.transaction_count()},
                        {"users", ledger.users().size()},
                        {"block_time", ledger.block_time()},
                        {"first_height", ledger.blocks().front().height}}
                       .dump(2)
                << '\n';
    };
  });

  // measure
  Common me;
  std::string me_ledger;
  auto* c_me = app.add_subcommand("measure", "activity statistics of a ledger");
  add_common(c_me, me);
  c_me->add_option("--ledger", me_ledger, "JSONL block dump")->check(CLI::ExistingFile);
  c_me->callback([&] {
    action = [&] {
      const Scenario s = scenario_of(me);
      const Ledger ledger = ledger_of(s, me_ledger);
      emit(measure_activity(ledger, k_of(s)).to_json(), me.out);
    };
  });

  // profiles
  Common pr;
  bool pr_full = false;
  auto* c_pr = app.add_subcommand("profiles", "list wallet profiles");
  add_common(c_pr, pr);
  c_pr->add_flag("--full", pr_full, "dump complete profiles");
  c_pr->callback([&] {
    action = [&] {
      const Scenario s = scenario_of(pr);
      const auto profiles = s.profile_path.empty() ? builtin_profiles() : load_profiles(s.profile_path);
      json list = json::array();
      for (const WalletProfile& p : profiles) {
        if (pr_full) {
          list.push_back(p.to_json());
          continue;
        }
        const IntervalEstimate est = estimate_k(p);
        list.push_back({{"name", p.name},
                        {"blockchain", p.blockchain},
                        {"block_time", p.block_time},
                        {"method", std::string(to_string(p.method))},
                        {"cycle", p.cycle},
                        {"theoretical_k", est.theoretical_k},
                        {"k", est.k}});
      }
      emit(list, pr.out);
    };
  });

  // synth-traffic
  Common st;
  std::size_t st_sessions = 1, st_tx = 5;
  auto* c_st = app.add_subcommand("synth-traffic", "synthesize labelled wallet sessions");
  add_common(c_st, st);
  c_st->add_option("--sessions", st_sessions)->check(CLI::PositiveNumber);
  c_st->add_option("--tx", st_tx, "transactions per session")->check(CLI::PositiveNumber);
  c_st->callback([&] {
    action = [&] {
      const Scenario s = scenario_of(st);
      const fs::path dir = st.out.empty() ? fs::path("traces") : fs::path(st.out);
      fs::create_directories(dir);
      const auto traces = synth_corpus(profile_of(s), st_sessions, st_tx, s.jitter, s.noise_rate, s.seed);
      json files = json::array();
      for (std::size_t i = 0; i < traces.size(); ++i) {
        const std::string stem = "trace_" + std::to_string(i);
        write_trace_files((dir / (stem + ".csv")).string(), (dir / (stem + ".flows.json")).string(), traces[i]);
        files.push_back({{"csv", (dir / (stem + ".csv")).string()},
                         {"flows", (dir / (stem + ".flows.json")).string()},
                         {"packets", traces[i].size()},
                         {"t_q", ground_truth_tq(traces[i])}});
      }
      std::cout << files.dump(2) << '\n';
    };
  });

  // train
  Common tr;
  std::optional<int> tr_radius;
  std::size_t tr_tx = 20;
  auto* c_tr = app.add_subcommand("train", "train the status-query classifier on synthetic sessions");
  add_common(c_tr, tr);
  c_tr->add_option("-r,--radius", tr_radius);
  c_tr->callback([&] {
    action = [&] {
      Scenario s = scenario_of(tr);
      if (tr_radius) s.detector.radius = *tr_radius;
      const WalletProfile profile = profile_of(s);
      const auto& d = s.detector;
      const std::size_t want = std::max(d.quota.positives, d.quota.noise_negatives);
      const auto corpus = synth_corpus(profile, want / tr_tx + 2, tr_tx, s.jitter, s.noise_rate,
                                       derive_seed(s.seed, 0xc0de));
      const TrainingSet set = build_training_set(corpus, profile, d.radius, d.quota, derive_seed(s.seed, 0x7a11));
      const TrainResult r = train(set, d.hyper, RuleConfig::from_profile(profile));
      emit(r.classifier.to_json(), tr.out.empty() ? "classifier.json" : tr.out);
      auto m = [](const EvalMetrics& e) {
        return json{{"accuracy", e.accuracy}, {"precision", e.precision}, {"recall", e.recall}, {"samples", e.samples}};
      };
      std::cout << json{{"radius", d.radius},
                        {"train_rows", r.train_rows},
                        {"holdout", m(r.holdout)},
                        {"rules", m(r.rule_holdout)}}
                       .dump(2)
                << '\n';
    };
  });

  // detect
  Common de;
  std::string de_classifier, de_trace, de_flows;
  auto* c_de = app.add_subcommand("detect", "detect status-query responses in a trace");
  add_common(c_de, de);
  c_de->add_option("--classifier", de_classifier)->required()->check(CLI::ExistingFile);
  c_de->add_option("--trace", de_trace, "trace CSV")->required()->check(CLI::ExistingFile);
  c_de->add_option("--flows", de_flows, "flow sidecar JSON")->required()->check(CLI::ExistingFile);
  c_de->callback([&] {
    action = [&] {
      const Scenario s = scenario_of(de);
      const WalletProfile profile = profile_of(s);
      const Classifier clf = Classifier::from_json(read_json(de_classifier));
      const PacketTrace trace = read_trace_files(de_trace, de_flows);
      const auto hits = detect_tq(trace, clf, profile.target(), profile.overhead, profile.dedup_window());
      emit(json{{"t_q", hits}}, de.out);
    };
  });

  // attack
  Common at;
  std::string at_ledger;
  std::vector<double> at_tq;
  bool at_unfiltered = false;
  auto* c_at = app.add_subcommand("attack", "intersect candidate windows for detected query times");
  add_common(c_at, at);
  c_at->add_option("--ledger", at_ledger, "JSONL block dump")->check(CLI::ExistingFile);
  c_at->add_option("--tq", at_tq, "status-query response timestamps")->required()->delimiter(',');
  c_at->add_flag("--no-filter", at_unfiltered, "keep active pseudonyms");
  c_at->callback([&] {
    action = [&] {
      const Scenario s = scenario_of(at);
      const Ledger ledger = ledger_of(s, at_ledger);
      const int k = k_of(s);
      const ActivityStats stats = measure_activity(ledger, k);
      std::vector<CandidateSet> windows;
      for (std::size_t i = 0; i < at_tq.size(); ++i) windows.push_back(candidate_set(ledger, at_tq[i], k, i + 1));
      const bool filter = s.filter && !at_unfiltered;
      const double cut = filter ? transacting_threshold(k, ledger.block_time(), s.q)
                                : std::numeric_limits<double>::infinity();
      emit(outcome_to_json(identify(intersect(windows), stats, cut, windows.size()), windows, ledger.users()), at.out);
    };
  });

  // analytic
  Common an;
  std::string an_stats;
  double an_alpha = 1.0;
  int an_m = 3;
  std::optional<std::size_t> an_samples;
  bool an_unfiltered = false;
  auto* c_an = app.add_subcommand("analytic", "expected success rate from measured statistics");
  add_common(c_an, an);
  c_an->add_option("--stats", an_stats, "statistics JSON from `measure`")->required()->check(CLI::ExistingFile);
  c_an->add_option("--alpha", an_alpha)->check(CLI::Range(0.0, 1.0));
  c_an->add_option("--m", an_m)->check(CLI::PositiveNumber);
  c_an->add_option("--samples", an_samples)->check(CLI::PositiveNumber);
  c_an->add_flag("--no-filter", an_unfiltered);
  c_an->callback([&] {
    action = [&] {
      const Scenario s = scenario_of(an);
      const ActivityStats stats = ActivityStats::from_json(read_json(an_stats));
      const DistributionSet dists = DistributionSet::from_activity(stats);
      std::optional<double> cut;
      if (s.filter && !an_unfiltered) {
        const int k = s.k_override ? *s.k_override : stats.window_k;
        cut = transacting_threshold(k, stats.block_time, s.q) / stats.lambda_total;
      }
      const SuccessEstimate e =
          expected_success(dists, an_alpha, an_m, cut, {an_samples.value_or(s.analytic_samples), s.seed, s.workers});
      emit(json{{"expected_p", e.expected_p},
                {"expected_r", e.expected_r},
                {"stderr_p", e.stderr_p},
                {"stderr_r", e.stderr_r},
                {"samples", e.samples},
                {"alpha", e.alpha},
                {"m", e.m},
                {"filtered", e.filtered}},
           an.out);
    };
  });

  // experiment
  Common ex;
  std::optional<std::size_t> ex_trials;
  std::optional<unsigned> ex_workers;
  std::optional<double> ex_alpha;
  std::optional<int> ex_rounds;
  auto* c_ex = app.add_subcommand("experiment", "run end-to-end attack trials into a run directory");
  add_common(c_ex, ex);
  c_ex->add_option("--trials", ex_trials)->check(CLI::PositiveNumber);
  c_ex->add_option("--workers", ex_workers);
  c_ex->add_option("--alpha", ex_alpha)->check(CLI::Range(0.0, 1.0));
  c_ex->add_option("--m", ex_rounds)->check(CLI::PositiveNumber);
  c_ex->callback([&] {
    action = [&] {
      Scenario s = scenario_of(ex);
      if (ex_trials) s.trials = *ex_trials;
      if (ex_workers) s.workers = *ex_workers;
      if (ex_alpha) s.alpha = *ex_alpha;
      if (ex_rounds) s.rounds = *ex_rounds;
      const std::string dir = ex.out.empty() ? "run-" + s.name : ex.out;
      const ExperimentReport r = run_experiment_to_directory(s, dir);
      std::cout << json{{"run_dir", dir},
                        {"trials", r.trials.size()},
                        {"success_rate", r.success_rate},
                        {"false_positive_rate", r.false_positive_rate},
                        {"unfiltered_false_positive_rate", r.unfiltered_false_positive_rate},
                        {"expected_p", r.analytic.expected_p},
                        {"expected_r", r.analytic.expected_r}}
                       .dump(2)
                << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    return fail("usage", e.what(), e.get_exit_code() ? e.get_exit_code() : 2);
  }
  try {
    action();
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}

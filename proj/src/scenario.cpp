#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "rpclink/error.hpp"
#include "rpclink/harness.hpp"

namespace rpclink {

namespace {

std::string_view activity_name(ActivityDistribution::Kind kind) {
  switch (kind) {
    case ActivityDistribution::Kind::Uniform: return "uniform";
    case ActivityDistribution::Kind::Zipf: return "zipf";
    case ActivityDistribution::Kind::Empirical: return "empirical";
  }
  return "zipf";
}

void check_keys(const toml::table& t, std::string_view section, std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> ok(allowed);
  for (const auto& [key, node] : t) {
    if (!ok.count(key.str())) {
      std::string where = section.empty() ? std::string("top level") : "[" + std::string(section) + "]";
      throw Error(ErrorKind::InvalidConfig, "scenario: unknown key '" + std::string(key.str()) + "' in " + where);
    }
  }
}

template <typename T>
T get(const toml::table& t, std::string_view key, T fallback) {
  const toml::node* node = t.get(key);
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value_exact<bool>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value_exact<std::string>()) return *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) return static_cast<T>(*v);
  } else {
    if (auto v = node->value_exact<std::int64_t>()) {
      if (*v < 0 && std::is_unsigned_v<T>)
        throw Error(ErrorKind::InvalidConfig, "scenario: '" + std::string(key) + "' must be non-negative");
      return static_cast<T>(*v);
    }
  }
  throw Error(ErrorKind::InvalidConfig, "scenario: '" + std::string(key) + "' has the wrong type");
}

const toml::table* section(const toml::table& t, std::string_view key) {
  const toml::node* node = t.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) throw Error(ErrorKind::InvalidConfig, "scenario: '" + std::string(key) + "' must be a table");
  return node->as_table();
}

}  // namespace

void Scenario::validate() const {
  if (trials < 1) throw Error(ErrorKind::InvalidConfig, "scenario: trials must be >= 1");
  if (rounds < 1) throw Error(ErrorKind::InvalidConfig, "scenario: rounds must be >= 1");
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw Error(ErrorKind::InvalidConfig, "scenario: alpha must lie in [0, 1]");
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidConfig, "scenario: q must lie in (0, 1)");
  if (k_override && *k_override < 1) throw Error(ErrorKind::InvalidConfig, "scenario: k must be >= 1");
  if (!(noise_rate >= 0.0)) throw Error(ErrorKind::InvalidConfig, "scenario: noise_rate must be >= 0");
  if (!(jitter.mean >= 0.0 && jitter.stddev >= 0.0 && jitter.max >= 0.0))
    throw Error(ErrorKind::InvalidConfig, "scenario: jitter parameters must be >= 0");
  if (analytic_samples < 1) throw Error(ErrorKind::InvalidConfig, "scenario: analytic_samples must be >= 1");
  if (ledger) ledger->validate();
  else if (ledger_path.empty()) throw Error(ErrorKind::InvalidConfig, "scenario: need a ledger config or a ledger path");
  if (!(victim.rate_min_factor > 0.0 && victim.rate_min_factor < victim.rate_max_factor))
    throw Error(ErrorKind::InvalidConfig, "scenario: victim rate factors must satisfy 0 < min < max");
  if (victim.activity == VictimClass::Normal && victim.rate_max_factor > 1.0)
    throw Error(ErrorKind::InvalidConfig, "scenario: normal victims need rate_max_factor <= 1");
  if (victim.activity == VictimClass::Active && victim.rate_min_factor < 1.0)
    throw Error(ErrorKind::InvalidConfig, "scenario: active victims need rate_min_factor >= 1");
  if (detector.radius < 0) throw Error(ErrorKind::InvalidConfig, "scenario: detector radius must be >= 0");
  if (!(detector.hyper.holdout_fraction >= 0.0 && detector.hyper.holdout_fraction < 1.0))
    throw Error(ErrorKind::InvalidConfig, "scenario: detector holdout must lie in [0, 1)");
  if (detector.hyper.forest.trees < 1 || detector.hyper.forest.max_depth < 1)
    throw Error(ErrorKind::InvalidConfig, "scenario: detector needs >= 1 tree of depth >= 1");
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json j{{"name", name},
                   {"wallet", wallet},
                   {"profile_path", profile_path},
                   {"rounds", rounds},
                   {"filter", filter},
                   {"q", q},
                   {"noise_rate", noise_rate},
                   {"seed", seed},
                   {"trials", trials},
                   {"analytic_samples", analytic_samples},
                   {"workers", workers},
                   {"write_ledger", write_ledger},
                   {"trace_dump_limit", trace_dump_limit}};
  j["alpha"] = alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr);
  j["k"] = k_override ? nlohmann::json(*k_override) : nlohmann::json(nullptr);
  if (ledger) {
    j["ledger"] = {{"num_users", ledger->num_users},
                   {"rate", ledger->rate},
                   {"block_time", ledger->block_time},
                   {"duration", ledger->duration},
                   {"activity", std::string(activity_name(ledger->activity.kind))},
                   {"zipf_exponent", ledger->activity.zipf_exponent},
                   {"weights", ledger->activity.weights},
                   {"seed", ledger->seed}};
  } else {
    j["ledger"] = {{"path", ledger_path}};
  }
  j["victim"] = {{"count", victim.count},
                 {"class", victim.activity == VictimClass::Normal ? "normal" : "active"},
                 {"schedule", victim.schedule == ScheduleSource::Poisson ? "poisson" : "ledger"},
                 {"rate_min_factor", victim.rate_min_factor},
                 {"rate_max_factor", victim.rate_max_factor}};
  j["jitter"] = {{"mean", jitter.mean}, {"stddev", jitter.stddev}, {"max", jitter.max}};
  const auto& f = detector.hyper.forest;
  j["detector"] = {{"radius", detector.radius},
                   {"positives", detector.quota.positives},
                   {"noise_negatives", detector.quota.noise_negatives},
                   {"random_negatives", detector.quota.random_negatives},
                   {"trees", f.trees},
                   {"max_depth", f.max_depth},
                   {"min_samples_split", f.min_samples_split},
                   {"feature_fraction", f.feature_fraction},
                   {"seed", f.seed},
                   {"holdout", detector.hyper.holdout_fraction},
                   {"classifier", detector.classifier_path}};
  return j;
}

std::string Scenario::to_toml() const {
  toml::table root{{"name", name},
                   {"wallet", wallet},
                   {"rounds", rounds},
                   {"filter", filter},
                   {"q", q},
                   {"noise_rate", noise_rate},
                   {"seed", static_cast<std::int64_t>(seed)},
                   {"trials", static_cast<std::int64_t>(trials)},
                   {"analytic_samples", static_cast<std::int64_t>(analytic_samples)},
                   {"workers", static_cast<std::int64_t>(workers)},
                   {"write_ledger", write_ledger},
                   {"trace_dump_limit", static_cast<std::int64_t>(trace_dump_limit)}};
  if (!profile_path.empty()) root.insert("profile_path", profile_path);
  if (alpha) root.insert("alpha", *alpha);
  if (k_override) root.insert("k", *k_override);

  toml::table led;
  if (ledger) {
    led.insert("num_users", static_cast<std::int64_t>(ledger->num_users));
    led.insert("rate", ledger->rate);
    led.insert("block_time", ledger->block_time);
    led.insert("duration", ledger->duration);
    led.insert("activity", std::string(activity_name(ledger->activity.kind)));
    led.insert("zipf_exponent", ledger->activity.zipf_exponent);
    if (!ledger->activity.weights.empty()) {
      toml::array w;
      for (double v : ledger->activity.weights) w.push_back(v);
      led.insert("weights", std::move(w));
    }
    led.insert("seed", static_cast<std::int64_t>(ledger->seed));
  } else {
    led.insert("path", ledger_path);
  }
  root.insert("ledger", std::move(led));

  root.insert("victim", toml::table{{"count", static_cast<std::int64_t>(victim.count)},
                                    {"class", victim.activity == VictimClass::Normal ? "normal" : "active"},
                                    {"schedule", victim.schedule == ScheduleSource::Poisson ? "poisson" : "ledger"},
                                    {"rate_min_factor", victim.rate_min_factor},
                                    {"rate_max_factor", victim.rate_max_factor}});
  root.insert("jitter", toml::table{{"mean", jitter.mean}, {"stddev", jitter.stddev}, {"max", jitter.max}});
  const auto& f = detector.hyper.forest;
  toml::table det{{"radius", detector.radius},
                  {"positives", static_cast<std::int64_t>(detector.quota.positives)},
                  {"noise_negatives", static_cast<std::int64_t>(detector.quota.noise_negatives)},
                  {"random_negatives", static_cast<std::int64_t>(detector.quota.random_negatives)},
                  {"trees", f.trees},
                  {"max_depth", f.max_depth},
                  {"min_samples_split", f.min_samples_split},
                  {"feature_fraction", f.feature_fraction},
                  {"seed", static_cast<std::int64_t>(f.seed)},
                  {"holdout", detector.hyper.holdout_fraction}};
  if (!detector.classifier_path.empty()) det.insert("classifier", detector.classifier_path);
  root.insert("detector", std::move(det));

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

Scenario Scenario::from_toml_string(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "scenario: " << e.description() << " at line " << e.source().begin.line;
    throw Error(ErrorKind::Malformed, msg.str());
  }
  check_keys(root, "", {"name", "wallet", "profile_path", "rounds", "alpha", "filter", "q", "k", "noise_rate", "seed",
                        "trials", "analytic_samples", "workers", "write_ledger", "trace_dump_limit", "ledger",
                        "victim", "jitter", "detector"});
  Scenario s;
  s.name = get(root, "name", s.name);
  s.wallet = get(root, "wallet", s.wallet);
  s.profile_path = get(root, "profile_path", s.profile_path);
  s.rounds = get(root, "rounds", s.rounds);
  if (root.contains("alpha")) s.alpha = get(root, "alpha", 0.0);
  s.filter = get(root, "filter", s.filter);
  s.q = get(root, "q", s.q);
  if (root.contains("k")) s.k_override = get(root, "k", 0);
  s.noise_rate = get(root, "noise_rate", s.noise_rate);
  s.seed = get(root, "seed", s.seed);
  s.trials = get(root, "trials", s.trials);
  s.analytic_samples = get(root, "analytic_samples", s.analytic_samples);
  s.workers = get(root, "workers", s.workers);
  s.write_ledger = get(root, "write_ledger", s.write_ledger);
  s.trace_dump_limit = get(root, "trace_dump_limit", s.trace_dump_limit);

  if (const toml::table* led = section(root, "ledger")) {
    check_keys(*led, "ledger", {"path", "num_users", "rate", "block_time", "duration", "activity", "zipf_exponent",
                                "weights", "seed"});
    if (led->contains("path")) {
      s.ledger_path = get(*led, "path", std::string());
    } else {
      LedgerConfig c;
      c.num_users = get(*led, "num_users", c.num_users);
      c.rate = get(*led, "rate", c.rate);
      c.block_time = get(*led, "block_time", c.block_time);
      c.duration = get(*led, "duration", c.duration);
      c.seed = get(*led, "seed", c.seed);
      const std::string activity = get(*led, "activity", std::string("zipf"));
      if (activity == "uniform") {
        c.activity = ActivityDistribution::uniform();
      } else if (activity == "zipf") {
        c.activity = ActivityDistribution::zipf(get(*led, "zipf_exponent", 1.1));
      } else if (activity == "empirical") {
        std::vector<double> w;
        if (const toml::array* arr = led->get_as<toml::array>("weights"))
          for (const auto& v : *arr) {
            auto d = v.value<double>();
            if (!d) throw Error(ErrorKind::InvalidConfig, "scenario: ledger weights must be numbers");
            w.push_back(*d);
          }
        c.activity = ActivityDistribution::empirical(std::move(w));
      } else {
        throw Error(ErrorKind::InvalidConfig, "scenario: unknown activity '" + activity + "'");
      }
      s.ledger = c;
    }
  }

  if (const toml::table* v = section(root, "victim")) {
    check_keys(*v, "victim", {"count", "class", "schedule", "rate_min_factor", "rate_max_factor"});
    s.victim.count = get(*v, "count", s.victim.count);
    const std::string cls = get(*v, "class", std::string("normal"));
    if (cls == "normal") s.victim.activity = VictimClass::Normal;
    else if (cls == "active") s.victim.activity = VictimClass::Active;
    else throw Error(ErrorKind::InvalidConfig, "scenario: victim class must be normal or active");
    if (s.victim.activity == VictimClass::Active) {
      s.victim.rate_min_factor = 2.0;
      s.victim.rate_max_factor = 20.0;
    }
    const std::string sched = get(*v, "schedule", std::string("poisson"));
    if (sched == "poisson") s.victim.schedule = ScheduleSource::Poisson;
    else if (sched == "ledger") s.victim.schedule = ScheduleSource::Ledger;
    else throw Error(ErrorKind::InvalidConfig, "scenario: victim schedule must be poisson or ledger");
    s.victim.rate_min_factor = get(*v, "rate_min_factor", s.victim.rate_min_factor);
    s.victim.rate_max_factor = get(*v, "rate_max_factor", s.victim.rate_max_factor);
  }

  if (const toml::table* j = section(root, "jitter")) {
    check_keys(*j, "jitter", {"mean", "stddev", "max"});
    s.jitter.mean = get(*j, "mean", s.jitter.mean);
    s.jitter.stddev = get(*j, "stddev", s.jitter.stddev);
    s.jitter.max = get(*j, "max", s.jitter.max);
  }

  if (const toml::table* d = section(root, "detector")) {
    check_keys(*d, "detector", {"radius", "positives", "noise_negatives", "random_negatives", "trees", "max_depth",
                                "min_samples_split", "feature_fraction", "seed", "holdout", "classifier"});
    auto& f = s.detector.hyper.forest;
    s.detector.radius = get(*d, "radius", s.detector.radius);
    s.detector.quota.positives = get(*d, "positives", s.detector.quota.positives);
    s.detector.quota.noise_negatives = get(*d, "noise_negatives", s.detector.quota.noise_negatives);
    s.detector.quota.random_negatives = get(*d, "random_negatives", s.detector.quota.random_negatives);
    f.trees = get(*d, "trees", f.trees);
    f.max_depth = get(*d, "max_depth", f.max_depth);
    f.min_samples_split = get(*d, "min_samples_split", f.min_samples_split);
    f.feature_fraction = get(*d, "feature_fraction", f.feature_fraction);
    f.seed = get(*d, "seed", f.seed);
    s.detector.hyper.holdout_fraction = get(*d, "holdout", s.detector.hyper.holdout_fraction);
    s.detector.classifier_path = get(*d, "classifier", s.detector.classifier_path);
  }
  s.validate();
  return s;
}

Scenario Scenario::from_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open scenario '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_toml_string(buf.str());
}

}  // namespace rpclink

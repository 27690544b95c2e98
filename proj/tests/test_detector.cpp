#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rpclink/catalog.hpp"
#include "rpclink/detector.hpp"
#include "rpclink/error.hpp"
#include "rpclink/harness.hpp"
#include "rpclink/random.hpp"
#include "rpclink/traffic.hpp"

using namespace rpclink;

namespace {

const WalletProfile& metamask() {
  static const WalletProfile p = find_profile(builtin_profiles(), "MetaMask");
  return p;
}

const std::vector<PacketTrace>& corpus() {
  static const std::vector<PacketTrace> c = synth_corpus(metamask(), 30, 20, JitterModel{}, 0.3, 17);
  return c;
}

Hyperparams small_forest(std::uint64_t seed) {
  Hyperparams h;
  h.forest.trees = 40;
  h.forest.max_depth = 12;
  h.forest.seed = seed;
  h.holdout_fraction = 0.2;
  return h;
}

TrainResult trained(int radius) {
  const TrainingSet set = build_training_set(corpus(), metamask(), radius, {800, 800, 800}, 5);
  return train(set, small_forest(11), RuleConfig::from_profile(metamask()));
}

const TrainResult& trained_r4() {
  static const TrainResult r = trained(4);
  return r;
}

PacketTrace toy_trace(const std::vector<std::pair<double, std::uint32_t>>& packets) {
  PacketTrace t;
  t.flows = {{"rpc-0", "a", 1, "b", 443, "rpc"}};
  bool req = true;
  for (const auto& [ts, size] : packets) {
    t.records.push_back({0, ts, size, req ? Direction::Request : Direction::Response, {}});
    req = !req;
  }
  return t;
}

}  // namespace

TEST_CASE("window sizes") {
  const PacketTrace rpc = filter_rpc_flows(corpus()[0]);
  const FeatureVector w0 = extract_features(rpc, 10, 0);
  CHECK(w0.packets() == 2);
  CHECK(w0.flatten().size() == 6);
  const FeatureVector w4 = extract_features(rpc, 10, 4);
  CHECK(w4.packets() == 10);
  CHECK(w4.flatten().size() == 30);
  CHECK(feature_count(4) == 30);
}

TEST_CASE("gaps are consecutive timestamp differences") {
  const PacketTrace rpc = filter_rpc_flows(corpus()[1]);
  for (std::size_t c : {std::size_t{5}, std::size_t{40}, rpc.size() / 2}) {
    const FeatureVector w = extract_features(rpc, c, 4);
    for (std::size_t k = 1; k < w.entries.size(); ++k) {
      const std::size_t i = c - 4 + k;
      CHECK(w.entries[k].gap == doctest::Approx(rpc.records[i].timestamp - rpc.records[i - 1].timestamp));
      CHECK(w.entries[k].size == rpc.records[i].size);
      CHECK(w.entries[k].direction == (rpc.records[i].direction == Direction::Request ? 1.0 : -1.0));
    }
  }
}

TEST_CASE("windows near the edge are zero padded") {
  const PacketTrace t = toy_trace({{1.0, 100}, {1.5, 200}, {3.0, 110}, {3.25, 220}});
  const FeatureVector w = extract_features(t, 0, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(w.entries[k].size == 0.0);
    CHECK(w.entries[k].direction == 0.0);
    CHECK(w.entries[k].gap == 0.0);
  }
  CHECK(w.middle_request().size == 100);
  CHECK(w.middle_response().gap == 0.5);
  CHECK(w.entries[5].size == 220);
  CHECK(w.entries[5].gap == 0.25);
  CHECK_THROWS_AS(extract_features(t, 3, 1), Error);
  CHECK_THROWS_AS(extract_features(t, 0, -1), Error);
}

TEST_CASE("size filter equals a brute-force scan and covers every target query") {
  const WalletProfile& mm = metamask();
  const SizeRange req = packet_range(mm.target().wallet_request, mm.overhead);
  const SizeRange resp = packet_range(mm.target().wallet_response, mm.overhead);
  std::size_t noise_in_range = 0;
  for (std::size_t t = 0; t < 10; ++t) {
    const PacketTrace rpc = filter_rpc_flows(corpus()[t]);
    std::set<std::size_t> oracle;
    for (std::size_t i = 0; i < rpc.size(); ++i) {
      if (rpc.records[i].direction != Direction::Request || !req.contains(rpc.records[i].size)) continue;
      for (std::size_t j = i + 1; j < rpc.size(); ++j) {
        if (rpc.records[j].flow != rpc.records[i].flow) continue;
        if (rpc.records[j].direction == Direction::Response) {
          if (resp.contains(rpc.records[j].size)) oracle.insert(i);
          break;
        }
      }
    }
    const auto got = size_filter(rpc, mm.target(), mm.overhead);
    CHECK(std::set<std::size_t>(got.begin(), got.end()) == oracle);
    for (std::size_t i = 0; i < rpc.size(); ++i) {
      const auto& l = rpc.records[i].label;
      if (rpc.records[i].direction != Direction::Request || !l) continue;
      if (l->role == LabelRole::Target) CHECK(oracle.count(i) == 1);
      if (l->role == LabelRole::Noise && oracle.count(i)) ++noise_in_range;
    }
  }
  CHECK(noise_in_range > 0);
  CHECK(size_filter(toy_trace({{1.0, 50}, {1.1, 60}}), mm.target(), mm.overhead).empty());
}

TEST_CASE("pairing follows the flow") {
  PacketTrace t;
  t.flows = {{"rpc-0", "a", 1, "b", 443, "rpc"}, {"rpc-1", "a", 2, "b", 443, "rpc"}};
  t.records = {{0, 1.0, 100, Direction::Request, {}},
               {1, 1.1, 100, Direction::Request, {}},
               {1, 1.2, 900, Direction::Response, {}},
               {0, 1.3, 800, Direction::Response, {}},
               {0, 1.4, 700, Direction::Response, {}}};
  const auto p = pair_requests(t);
  CHECK(p[0] == std::optional<std::size_t>(3));
  CHECK(p[1] == std::optional<std::size_t>(2));
  CHECK_FALSE(p[4].has_value());
}

TEST_CASE("relative-order rules") {
  const RuleConfig rules = RuleConfig::from_profile(metamask());
  const std::uint32_t treq = rules.target_request.min, tresp = rules.target_response.min;
  const std::uint32_t preq = rules.preceding_request.min, presp = rules.preceding_response.min;
  const std::uint32_t freq = rules.following_request.min, fresp = rules.following_response.min;

  const PacketTrace good =
      toy_trace({{0, preq}, {0.1, presp}, {0.2, treq}, {0.3, tresp}, {0.4, freq}, {0.5, fresp}});
  CHECK(rule_classify(good, 2, 0, rules));
  CHECK(rule_classify(good, 2, 2, rules));

  const PacketTrace inverted =
      toy_trace({{0, freq}, {0.1, fresp}, {0.2, treq}, {0.3, tresp}, {0.4, preq}, {0.5, presp}});
  CHECK(rule_classify(inverted, 2, 0, rules));
  if (!rules.preceding_request.intersects(rules.following_request) ||
      !rules.preceding_response.intersects(rules.following_response))
    CHECK_FALSE(rule_classify(inverted, 2, 2, rules));

  const PacketTrace wrong_size = toy_trace({{0, preq}, {0.1, presp}, {0.2, 20}, {0.3, tresp}, {0.4, freq}, {0.5, fresp}});
  CHECK_FALSE(rule_classify(wrong_size, 2, 0, rules));
}

TEST_CASE("training is deterministic and context helps") {
  const TrainResult a = trained(4);
  const TrainResult& b = trained_r4();
  CHECK(a.classifier.to_json() == b.classifier.to_json());
  CHECK(a.holdout.accuracy == b.holdout.accuracy);
  CHECK(b.holdout.accuracy >= 0.99);
  CHECK(b.rule_holdout.accuracy <= b.holdout.accuracy);
  const TrainResult r0 = trained(0);
  CHECK(r0.holdout.accuracy < b.holdout.accuracy);
}

TEST_CASE("training set composition") {
  const TrainingSet set = build_training_set(corpus(), metamask(), 2, {50, 40, 30}, 3);
  CHECK(set.positives.size() == 50);
  CHECK(set.noise_negatives.size() == 40);
  CHECK(set.random_negatives.size() == 30);
  const ml::Dataset d = set.to_dataset();
  CHECK(d.rows() == 120);
  CHECK(d.num_features == feature_count(2));
  CHECK(std::count(d.y.begin(), d.y.end(), 1) == 50);
  CHECK_THROWS_AS(build_training_set({}, metamask(), 2, {}, 1), Error);
}

TEST_CASE("detection on a ten-transaction session matches ground truth") {
  const auto sessions = synth_corpus(metamask(), 1, 10, JitterModel{}, 0.3, 901);
  const PacketTrace& trace = sessions[0];
  const auto truth = ground_truth_tq(trace);
  REQUIRE(truth.size() == 10);
  const auto got = detect_tq(trace, trained_r4().classifier, metamask().target(), metamask().overhead,
                             metamask().dedup_window());
  CHECK(got == truth);
}

TEST_CASE("no detections without confirmations") {
  const auto& c = trained_r4().classifier;
  SessionPlan plan;
  plan.profile = metamask();
  plan.start = 0;
  plan.end = 900;
  CHECK(detect_tq(synth_session(plan, 4), c, metamask().target(), metamask().overhead, 20.0).empty());
  plan.tx_events.push_back({100.0, std::nullopt, "me"});
  CHECK(detect_tq(synth_session(plan, 5), c, metamask().target(), metamask().overhead, 20.0).empty());
  CHECK(detect_tq(PacketTrace{}, c, metamask().target(), metamask().overhead, 20.0).empty());
}

TEST_CASE("radius mismatch is rejected") {
  const PacketTrace rpc = filter_rpc_flows(corpus()[0]);
  CHECK_THROWS_AS(trained_r4().classifier.predict(extract_features(rpc, 10, 2)), Error);
}

TEST_CASE("permutation importance") {
  const TrainingSet set = build_training_set(corpus(), metamask(), 4, {300, 300, 300}, 8);
  const ml::Dataset data = set.to_dataset();
  const Classifier& c = trained_r4().classifier;
  const auto scores = feature_importance(c, data, 21);
  REQUIRE(scores.size() == 30);
  // The first packet's gap is always zero.
  CHECK(scores[2] == 0.0);

  const double base = accuracy(c, data);
  for (std::size_t j : {std::size_t{0}, std::size_t{12}, std::size_t{15}, std::size_t{29}}) {
    ml::Dataset shuffled = data;
    std::vector<double> col;
    for (std::size_t i = 0; i < data.rows(); ++i) col.push_back(data.row(i)[j]);
    Rng rng(derive_seed(21, j));
    std::shuffle(col.begin(), col.end(), rng);
    for (std::size_t i = 0; i < data.rows(); ++i) shuffled.x[i * data.num_features + j] = col[i];
    CHECK(scores[j] == doctest::Approx(std::max(0.0, base - accuracy(c, shuffled))));
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Middle response size sits at packet 5, column 15.
  const std::vector<std::size_t> top(order.begin(), order.begin() + 3);
  CHECK(std::find(top.begin(), top.end(), std::size_t{15}) != top.end());
}

TEST_CASE("classifier json round trip") {
  const Classifier& c = trained_r4().classifier;
  const Classifier back = Classifier::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.radius() == 4);
  CHECK(back.to_json() == c.to_json());
  nlohmann::json bad = c.to_json();
  bad["radius"] = 3;
  CHECK_THROWS_AS(Classifier::from_json(bad), Error);
  bad = c.to_json();
  bad["version"] = 99;
  CHECK_THROWS_AS(Classifier::from_json(bad), Error);
}

TEST_CASE("metrics") {
  const EvalMetrics m = evaluate({1, 1, 0, 0}, {1, 0, 1, 0});
  CHECK(m.accuracy == 0.5);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 0.5);
  CHECK_THROWS_AS(evaluate({1}, {}), Error);
}

#include "rpclink/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rpclink/error.hpp"
#include "rpclink/random.hpp"

namespace rpclink {

namespace {

constexpr int kClassifierVersion = 1;

bool rpc_only(const PacketTrace& trace) {
  return std::all_of(trace.flows.begin(), trace.flows.end(), [](const Flow& f) { return f.service == "rpc"; });
}

const PacketTrace& rpc_view(const PacketTrace& trace, PacketTrace& storage) {
  if (rpc_only(trace)) return trace;
  storage = filter_rpc_flows(trace);
  return storage;
}

}  // namespace

std::vector<double> FeatureVector::flatten() const {
  std::vector<double> out;
  out.reserve(entries.size() * 3);
  for (const PacketFeature& e : entries) {
    out.push_back(e.size);
    out.push_back(e.direction);
    out.push_back(e.gap);
  }
  return out;
}

FeatureVector extract_features(const PacketTrace& trace, std::size_t center, int radius) {
  if (trace.size() < 2) throw Error(ErrorKind::InvalidArgument, "extract_features: trace has fewer than two records");
  if (radius < 0) throw Error(ErrorKind::InvalidArgument, "extract_features: negative radius");
  if (center + 1 >= trace.size()) throw Error(ErrorKind::InvalidArgument, "extract_features: centre pair out of range");
  FeatureVector fv;
  fv.radius = radius;
  fv.entries.resize(2 * static_cast<std::size_t>(radius) + 2);
  const auto first = static_cast<std::int64_t>(center) - radius;
  const auto n = static_cast<std::int64_t>(trace.size());
  for (std::size_t k = 0; k < fv.entries.size(); ++k) {
    const std::int64_t i = first + static_cast<std::int64_t>(k);
    if (i < 0 || i >= n) continue;
    const PacketRecord& rec = trace.records[static_cast<std::size_t>(i)];
    PacketFeature& e = fv.entries[k];
    e.size = rec.size;
    e.direction = rec.direction == Direction::Request ? 1.0 : -1.0;
    if (k > 0 && i - 1 >= 0) e.gap = rec.timestamp - trace.records[static_cast<std::size_t>(i - 1)].timestamp;
  }
  return fv;
}

std::vector<std::optional<std::size_t>> pair_requests(const PacketTrace& trace) {
  std::vector<std::optional<std::size_t>> partner(trace.size());
  std::vector<std::vector<std::size_t>> open(trace.flows.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const PacketRecord& rec = trace.records[i];
    if (rec.flow >= open.size()) open.resize(rec.flow + 1);
    auto& stack = open[rec.flow];
    if (rec.direction == Direction::Request) {
      stack.push_back(i);
    } else if (!stack.empty()) {
      partner[i] = stack.back();
      partner[stack.back()] = i;
      stack.pop_back();
    }
  }
  return partner;
}

namespace {

std::vector<std::size_t> size_filter_impl(const PacketTrace& trace, const SizeRange& req, const SizeRange& resp) {
  const auto partner = pair_requests(trace);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const PacketRecord& rec = trace.records[i];
    if (rec.direction != Direction::Request || !partner[i] || !req.contains(rec.size)) continue;
    if (resp.contains(trace.records[*partner[i]].size)) out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<std::size_t> size_filter(const PacketTrace& trace, const ApiSpec& target, const OverheadModel& overhead) {
  return size_filter_impl(trace, packet_range(target.wallet_request, overhead),
                          packet_range(target.wallet_response, overhead));
}

RuleConfig RuleConfig::from_profile(const WalletProfile& profile) {
  const OverheadModel& oh = profile.overhead;
  RuleConfig rc;
  const ApiSpec& target = profile.target();
  rc.target_request = packet_range(target.wallet_request, oh);
  rc.target_response = packet_range(target.wallet_response, oh);
  const std::vector<std::string>& before =
      profile.method == QueryMethod::Periodic ? profile.calls.poll : profile.calls.pre_status;
  rc.preceding_request = rc.preceding_response = SizeRange::at_least(1);
  if (!before.empty()) {
    const ApiSpec& api = profile.api(before.back());
    rc.preceding_request = packet_range(api.wallet_request, oh);
    rc.preceding_response = packet_range(api.wallet_response, oh);
  } else if (profile.method == QueryMethod::Subscription && !profile.calls.notification.empty()) {
    rc.preceding_response = packet_range(profile.api(profile.calls.notification).wallet_response, oh);
  }
  rc.following_request = rc.following_response = SizeRange::at_least(1);
  if (!profile.calls.post_status.empty()) {
    const ApiSpec& api = profile.api(profile.calls.post_status.front());
    rc.following_request = packet_range(api.wallet_request, oh);
    rc.following_response = packet_range(api.wallet_response, oh);
  }
  return rc;
}

bool rule_classify(const FeatureVector& window, const RuleConfig& rules) {
  const int r = window.radius;
  if (window.entries.size() != 2 * static_cast<std::size_t>(r) + 2)
    throw Error(ErrorKind::InvalidArgument, "rule_classify: malformed window");
  const auto& e = window.entries;
  const std::size_t mid = static_cast<std::size_t>(r);
  if (!rules.target_request.contains(e[mid].size) || !rules.target_response.contains(e[mid + 1].size)) return false;
  if (r == 0) return true;

  bool seen_p0 = false, preceding = false;
  for (std::size_t i = 0; i < mid && !preceding; ++i) {
    if (seen_p0 && rules.preceding_response.contains(e[i].size)) preceding = true;
    if (rules.preceding_request.contains(e[i].size)) seen_p0 = true;
  }
  if (!preceding) return false;
  bool seen_f0 = false;
  for (std::size_t i = mid + 2; i < e.size(); ++i) {
    if (seen_f0 && rules.following_response.contains(e[i].size)) return true;
    if (rules.following_request.contains(e[i].size)) seen_f0 = true;
  }
  return false;
}

bool rule_classify(const PacketTrace& trace, std::size_t center, int radius, const RuleConfig& rules) {
  return rule_classify(extract_features(trace, center, radius), rules);
}

ml::Dataset TrainingSet::to_dataset() const {
  ml::Dataset d;
  d.num_features = feature_count(radius);
  for (const auto* group : {&positives, &noise_negatives, &random_negatives}) {
    const int label = group == &positives ? 1 : 0;
    for (const FeatureVector& fv : *group) {
      if (fv.radius != radius || fv.entries.size() != 2 * static_cast<std::size_t>(radius) + 2)
        throw Error(ErrorKind::InvalidArgument, "training set: window radius mismatch");
      d.add(fv.flatten(), label);
    }
  }
  return d;
}

TrainingSet build_training_set(const std::vector<PacketTrace>& traces, const WalletProfile& profile, int radius,
                               const TrainingQuota& quota, std::uint64_t seed, std::uint32_t similar_margin) {
  if (radius < 0) throw Error(ErrorKind::InvalidArgument, "build_training_set: negative radius");
  const SizeRange treq = packet_range(profile.target().wallet_request, profile.overhead);
  const SizeRange similar{treq.min > similar_margin ? treq.min - similar_margin : 1,
                          treq.max ? std::optional<std::uint32_t>(*treq.max + similar_margin) : std::nullopt};

  std::vector<PacketTrace> filtered;
  filtered.reserve(traces.size());
  std::vector<InstanceRef> pos, noise, random;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    filtered.push_back(rpc_only(traces[t]) ? traces[t] : filter_rpc_flows(traces[t]));
    const PacketTrace& tr = filtered.back();
    const auto partner = pair_requests(tr);
    for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
      const PacketRecord& rec = tr.records[i];
      if (rec.direction != Direction::Request || !partner[i]) continue;
      const LabelRole role = rec.label ? rec.label->role : LabelRole::Other;
      if (role == LabelRole::Target) pos.push_back({t, i});
      else if (role == LabelRole::Noise) noise.push_back({t, i});
      else if (similar.contains(rec.size)) random.push_back({t, i});
    }
  }
  if (pos.empty()) throw Error(ErrorKind::InsufficientData, "build_training_set: no target instances in traces");

  Rng rng(seed);
  auto take = [&](std::vector<InstanceRef>& pool, std::size_t want) {
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() > want) pool.resize(want);
    std::sort(pool.begin(), pool.end());
  };
  take(pos, quota.positives);
  take(noise, quota.noise_negatives);
  take(random, quota.random_negatives);

  TrainingSet set;
  set.radius = radius;
  for (const InstanceRef& ref : pos) set.positives.push_back(extract_features(filtered[ref.trace], ref.center, radius));
  for (const InstanceRef& ref : noise)
    set.noise_negatives.push_back(extract_features(filtered[ref.trace], ref.center, radius));
  for (const InstanceRef& ref : random)
    set.random_negatives.push_back(extract_features(filtered[ref.trace], ref.center, radius));
  set.positive_refs = std::move(pos);
  set.noise_refs = std::move(noise);
  set.random_refs = std::move(random);
  return set;
}

EvalMetrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::InvalidArgument, "evaluate: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) ++correct;
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] == 0) ++fp;
    if (predicted[i] == 0 && truth[i] == 1) ++fn;
  }
  EvalMetrics m;
  m.samples = truth.size();
  if (m.samples == 0) return m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.samples);
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return m;
}

bool Classifier::predict_row(std::span<const double> row) const {
  if (row.size() != feature_count(radius_))
    throw Error(ErrorKind::InvalidArgument, "classifier: expected " + std::to_string(feature_count(radius_)) + " features");
  return model_.predict(row) == 1;
}

bool Classifier::predict(const FeatureVector& window) const {
  if (window.radius != radius_)
    throw Error(ErrorKind::InvalidArgument, "classifier trained with r=" + std::to_string(radius_) +
                                                " cannot score a window with r=" + std::to_string(window.radius));
  return predict_row(window.flatten());
}

nlohmann::json Classifier::to_json() const {
  return {{"format", "rpclink-classifier"},
          {"version", kClassifierVersion},
          {"radius", radius_},
          {"seed", seed_},
          {"model", model_.to_json()}};
}

Classifier Classifier::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "rpclink-classifier")
      throw Error(ErrorKind::Malformed, "classifier: not a classifier document");
    const int version = j.at("version").get<int>();
    if (version != kClassifierVersion)
      throw Error(ErrorKind::Malformed, "classifier: unsupported version " + std::to_string(version));
    Classifier c(ml::RandomForest::from_json(j.at("model")), j.at("radius").get<int>(), j.at("seed").get<std::uint64_t>());
    if (c.model_.num_features() != feature_count(c.radius_))
      throw Error(ErrorKind::Malformed, "classifier: model width does not match radius");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("classifier: ") + e.what());
  }
}

TrainResult train(const TrainingSet& dataset, const Hyperparams& hyper, const std::optional<RuleConfig>& rules) {
  if (dataset.size() == 0) throw Error(ErrorKind::InsufficientData, "train: empty training set");
  if (!(hyper.holdout_fraction >= 0.0 && hyper.holdout_fraction < 1.0))
    throw Error(ErrorKind::InvalidConfig, "train: holdout fraction must lie in [0, 1)");
  const ml::Dataset all = dataset.to_dataset();

  std::vector<int> rule_pred;
  if (rules) {
    for (const auto* group : {&dataset.positives, &dataset.noise_negatives, &dataset.random_negatives})
      for (const FeatureVector& fv : *group) rule_pred.push_back(rule_classify(fv, *rules) ? 1 : 0);
  }

  std::vector<std::size_t> order(all.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(hyper.forest.seed, 0x5117));
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t held = static_cast<std::size_t>(std::llround(hyper.holdout_fraction * static_cast<double>(all.rows())));
  if (hyper.holdout_fraction > 0.0 && all.rows() >= 2) held = std::clamp<std::size_t>(held, 1, all.rows() - 1);

  ml::Dataset fit_rows, test_rows;
  fit_rows.num_features = test_rows.num_features = all.num_features;
  std::vector<int> rule_test;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (k < held) {
      test_rows.add(all.row(i), all.y[i]);
      if (rules) rule_test.push_back(rule_pred[i]);
    } else {
      fit_rows.add(all.row(i), all.y[i]);
    }
  }

  TrainResult result;
  result.classifier = Classifier(ml::RandomForest::fit(fit_rows, hyper.forest), dataset.radius, hyper.forest.seed);
  result.train_rows = fit_rows.rows();
  std::vector<int> predicted;
  for (std::size_t i = 0; i < test_rows.rows(); ++i)
    predicted.push_back(result.classifier.predict_row(test_rows.row(i)) ? 1 : 0);
  result.holdout = evaluate(test_rows.y, predicted);
  if (rules) result.rule_holdout = evaluate(test_rows.y, rule_test);
  return result;
}

std::vector<double> detect_tq(const PacketTrace& trace, const Classifier& classifier, const ApiSpec& target,
                              const OverheadModel& overhead, double dedup_window) {
  PacketTrace storage;
  const PacketTrace& rpc = rpc_view(trace, storage);
  if (rpc.size() < 2) return {};
  const auto partner = pair_requests(rpc);
  std::vector<double> hits;
  for (std::size_t c : size_filter(rpc, target, overhead)) {
    if (classifier.predict(extract_features(rpc, c, classifier.radius())))
      hits.push_back(rpc.records[*partner[c]].timestamp);
  }
  std::sort(hits.begin(), hits.end());
  std::vector<double> out;
  for (double t : hits)
    if (out.empty() || t - out.back() >= dedup_window) out.push_back(t);
  return out;
}

double accuracy(const Classifier& classifier, const ml::Dataset& data) {
  if (data.rows() == 0) throw Error(ErrorKind::InsufficientData, "accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.rows(); ++i)
    if ((classifier.predict_row(data.row(i)) ? 1 : 0) == data.y[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.rows());
}

std::vector<double> feature_importance(const Classifier& classifier, const ml::Dataset& data, std::uint64_t seed) {
  const double base = accuracy(classifier, data);
  std::vector<double> scores(data.num_features, 0.0);
  ml::Dataset shuffled = data;
  std::vector<double> column(data.rows());
  for (std::size_t j = 0; j < data.num_features; ++j) {
    for (std::size_t i = 0; i < data.rows(); ++i) column[i] = data.x[i * data.num_features + j];
    Rng rng(derive_seed(seed, j));
    std::shuffle(column.begin(), column.end(), rng);
    for (std::size_t i = 0; i < data.rows(); ++i) shuffled.x[i * data.num_features + j] = column[i];
    scores[j] = std::max(0.0, base - accuracy(classifier, shuffled));
    for (std::size_t i = 0; i < data.rows(); ++i)
      shuffled.x[i * data.num_features + j] = data.x[i * data.num_features + j];
  }
  return scores;
}

}  // namespace rpclink

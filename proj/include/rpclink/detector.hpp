#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpclink/catalog.hpp"
#include "rpclink/forest.hpp"
#include "rpclink/traffic.hpp"

namespace rpclink {

/// One packet of a feature window. Padding entries are all zero.
struct PacketFeature {
  double size = 0.0;
  double direction = 0.0;  // request +1, response -1
  double gap = 0.0;        // seconds since the previous packet in the window
};

/// 2r + 2 packets centred on a request/response pair.
struct FeatureVector {
  int radius = 0;
  std::vector<PacketFeature> entries;

  std::size_t packets() const noexcept { return entries.size(); }
  /// (size, direction, gap) per packet, in window order.
  std::vector<double> flatten() const;
  const PacketFeature& middle_request() const { return entries.at(radius); }
  const PacketFeature& middle_response() const { return entries.at(radius + 1); }
};

inline std::size_t feature_count(int radius) { return 3 * (2 * static_cast<std::size_t>(radius) + 2); }

/// Window centre..centre+1 in the middle, r records on each side; positions
/// outside the trace are padded.
FeatureVector extract_features(const PacketTrace& trace, std::size_t center, int radius);

/// For each record, the index of the Response paired with it (requests) or of
/// the Request it answers (responses). A response pairs with the nearest
/// preceding unpaired request on the same flow.
std::vector<std::optional<std::size_t>> pair_requests(const PacketTrace& trace);

/// Indices of requests whose size and paired response size fall inside the
/// target's practical packet ranges.
std::vector<std::size_t> size_filter(const PacketTrace& trace, const ApiSpec& target,
                                     const OverheadModel& overhead);

/// Packet ranges for the target call and the calls that precede and follow it.
struct RuleConfig {
  SizeRange target_request;
  SizeRange target_response;
  SizeRange preceding_request;
  SizeRange preceding_response;
  SizeRange following_request;
  SizeRange following_response;

  /// Preceding = last poll call (periodic), else the last pre-status call or
  /// the notification push (subscription); following = first post-status call.
  static RuleConfig from_profile(const WalletProfile& profile);
};

/// Relative-order heuristic: middle pair in the target ranges and, for r > 0,
/// a preceding pair before it and a following pair after it.
bool rule_classify(const FeatureVector& window, const RuleConfig& rules);
bool rule_classify(const PacketTrace& trace, std::size_t center, int radius, const RuleConfig& rules);

struct InstanceRef {
  std::size_t trace = 0;
  std::size_t center = 0;
  friend auto operator<=>(const InstanceRef&, const InstanceRef&) = default;
};

struct TrainingSet {
  int radius = 0;
  std::vector<FeatureVector> positives;
  std::vector<FeatureVector> noise_negatives;
  std::vector<FeatureVector> random_negatives;
  std::vector<InstanceRef> positive_refs;
  std::vector<InstanceRef> noise_refs;
  std::vector<InstanceRef> random_refs;

  std::size_t size() const noexcept {
    return positives.size() + noise_negatives.size() + random_negatives.size();
  }
  /// Rows in positive, noise, random order; label 1 for positives.
  ml::Dataset to_dataset() const;
};

struct TrainingQuota {
  std::size_t positives = 2000;
  std::size_t noise_negatives = 2000;
  std::size_t random_negatives = 2000;
};

/// Harvests windows from labelled traces: positives centred on Target status
/// queries, noise negatives on Noise-role API calls, random negatives on
/// other requests whose size lies within `similar_margin` bytes of the target
/// request range.
TrainingSet build_training_set(const std::vector<PacketTrace>& traces, const WalletProfile& profile,
                               int radius, const TrainingQuota& quota, std::uint64_t seed,
                               std::uint32_t similar_margin = 32);

struct Hyperparams {
  ml::ForestParams forest;
  double holdout_fraction = 0.2;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t samples = 0;
};

EvalMetrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted);

class Classifier {
 public:
  Classifier() = default;
  Classifier(ml::RandomForest model, int radius, std::uint64_t seed)
      : model_(std::move(model)), radius_(radius), seed_(seed) {}

  int radius() const noexcept { return radius_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ml::RandomForest& model() const noexcept { return model_; }

  /// Throws InvalidArgument if the window radius differs from training.
  bool predict(const FeatureVector& window) const;
  bool predict_row(std::span<const double> row) const;

  nlohmann::json to_json() const;
  static Classifier from_json(const nlohmann::json& j);

 private:
  ml::RandomForest model_;
  int radius_ = 0;
  std::uint64_t seed_ = 0;
};

struct TrainResult {
  Classifier classifier;
  EvalMetrics holdout;
  EvalMetrics rule_holdout;  // relative-order rules on the same split
  std::size_t train_rows = 0;
};

/// Shuffles with the forest seed, holds out a fraction, fits on the rest.
TrainResult train(const TrainingSet& dataset, const Hyperparams& hyper,
                  const std::optional<RuleConfig>& rules = std::nullopt);

/// Response timestamps of size-filter candidates the classifier accepts,
/// ascending, with detections closer than `dedup_window` collapsed onto the
/// earliest.
std::vector<double> detect_tq(const PacketTrace& trace, const Classifier& classifier,
                              const ApiSpec& target, const OverheadModel& overhead,
                              double dedup_window);

/// Permutation importance: accuracy drop when one feature column is shuffled
/// (column j uses a generator seeded with derive_seed(seed, j)), floored at 0.
std::vector<double> feature_importance(const Classifier& classifier, const ml::Dataset& data,
                                       std::uint64_t seed);

/// Mean-aggregated classifier accuracy over a dataset.
double accuracy(const Classifier& classifier, const ml::Dataset& data);

}  // namespace rpclink

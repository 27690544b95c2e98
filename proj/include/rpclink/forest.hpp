#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace rpclink::ml {

/// Row-major design matrix with binary labels.
struct Dataset {
  std::size_t num_features = 0;
  std::vector<double> x;
  std::vector<int> y;

  std::size_t rows() const noexcept { return y.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * num_features, num_features};
  }
  void add(std::span<const double> features, int label);
};

struct ForestParams {
  int trees = 100;
  int max_depth = 12;
  int min_samples_split = 2;
  double feature_fraction = 0.0;  // <= 0 selects sqrt(F) features per split
  bool bootstrap = true;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ForestParams from_json(const nlohmann::json& j);
};

/// CART tree on Gini impurity, stored as a flat node array.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double positive = 0.0;  // fraction of positive samples at the node
  };

  double predict_proba(std::span<const double> features) const;
  int predict(std::span<const double> features) const {
    return predict_proba(features) >= 0.5 ? 1 : 0;
  }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  int depth() const;

  static DecisionTree fit(const Dataset& data, const std::vector<std::size_t>& sample,
                          const ForestParams& params, std::uint64_t seed);

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  std::vector<Node> nodes_;
};

/// Bagged ensemble of CART trees with per-split feature subsampling and
/// majority voting.
class RandomForest {
 public:
  static RandomForest fit(const Dataset& data, const ForestParams& params);

  int predict(std::span<const double> features) const;
  /// Fraction of trees voting positive.
  double vote_fraction(std::span<const double> features) const;

  std::size_t num_features() const noexcept { return num_features_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const ForestParams& params() const noexcept { return params_; }

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& j);

 private:
  std::vector<DecisionTree> trees_;
  std::size_t num_features_ = 0;
  ForestParams params_;
};

}  // namespace rpclink::ml

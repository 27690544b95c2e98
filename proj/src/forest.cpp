#include "rpclink/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rpclink/error.hpp"
#include "rpclink/random.hpp"

namespace rpclink::ml {

void Dataset::add(std::span<const double> features, int label) {
  if (rows() == 0 && num_features == 0) num_features = features.size();
  if (features.size() != num_features)
    throw Error(ErrorKind::InvalidArgument, "dataset: row has " + std::to_string(features.size()) +
                                                " features, expected " + std::to_string(num_features));
  if (label != 0 && label != 1) throw Error(ErrorKind::InvalidArgument, "dataset: labels must be 0 or 1");
  x.insert(x.end(), features.begin(), features.end());
  y.push_back(label);
}

nlohmann::json ForestParams::to_json() const {
  return {{"trees", trees},
          {"max_depth", max_depth},
          {"min_samples_split", min_samples_split},
          {"feature_fraction", feature_fraction},
          {"bootstrap", bootstrap},
          {"seed", seed}};
}

ForestParams ForestParams::from_json(const nlohmann::json& j) {
  ForestParams p;
  p.trees = j.value("trees", p.trees);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_samples_split = j.value("min_samples_split", p.min_samples_split);
  p.feature_fraction = j.value("feature_fraction", p.feature_fraction);
  p.bootstrap = j.value("bootstrap", p.bootstrap);
  p.seed = j.value("seed", p.seed);
  return p;
}

double DecisionTree::predict_proba(std::span<const double> features) const {
  if (nodes_.empty()) return 0.0;
  int at = 0;
  while (nodes_[at].feature >= 0) {
    const Node& n = nodes_[at];
    at = features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes_[at].positive;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> level(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes_[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // weighted child impurity, lower is better
};

double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestParams& params, std::uint64_t seed)
      : data_(data), params_(params), rng_(seed) {
    const std::size_t f = data.num_features;
    if (params.feature_fraction > 0.0)
      mtry_ = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(params.feature_fraction * f)), 1, f);
    else
      mtry_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(f))));
    order_.resize(f);
    std::iota(order_.begin(), order_.end(), 0);
  }

  std::vector<DecisionTree::Node> build(std::vector<std::size_t> sample) {
    grow(sample, 0);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t>& idx, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double pos = 0.0;
    for (std::size_t i : idx) pos += data_.y[i];
    const double n = static_cast<double>(idx.size());
    nodes_[id].positive = n > 0 ? pos / n : 0.0;
    if (depth >= params_.max_depth || idx.size() < static_cast<std::size_t>(std::max(2, params_.min_samples_split)) ||
        pos == 0.0 || pos == n)
      return id;

    const Split best = find_split(idx, pos);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      if (data_.x[i * data_.num_features + static_cast<std::size_t>(best.feature)] <= best.threshold)
        left.push_back(i);
      else
        right.push_back(i);
    }
    std::vector<std::size_t>().swap(idx);
    nodes_[id].feature = best.feature;
    nodes_[id].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    nodes_[id].left = l;
    const int r = grow(right, depth + 1);
    nodes_[id].right = r;
    return id;
  }

  Split find_split(const std::vector<std::size_t>& idx, double pos) {
    const double n = static_cast<double>(idx.size());
    const double parent = gini(pos, n) * n;
    Split best;
    best.score = parent - 1e-12;
    std::shuffle(order_.begin(), order_.end(), rng_);
    std::size_t tried = 0;
    std::vector<std::pair<double, int>> column(idx.size());
    for (std::size_t f : order_) {
      if (tried >= mtry_) break;
      for (std::size_t k = 0; k < idx.size(); ++k)
        column[k] = {data_.x[idx[k] * data_.num_features + f], data_.y[idx[k]]};
      std::sort(column.begin(), column.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      if (column.front().first == column.back().first) continue;
      ++tried;
      double left_pos = 0.0;
      for (std::size_t k = 0; k + 1 < column.size(); ++k) {
        left_pos += column[k].second;
        if (column[k].first == column[k + 1].first) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = n - nl;
        const double score = gini(left_pos, nl) * nl + gini(pos - left_pos, nr) * nr;
        if (score < best.score) {
          best.score = score;
          best.feature = static_cast<int>(f);
          best.threshold = column[k].first + (column[k + 1].first - column[k].first) / 2.0;
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const ForestParams& params_;
  Rng rng_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> order_;
  std::vector<DecisionTree::Node> nodes_;
};

}  // namespace

DecisionTree DecisionTree::fit(const Dataset& data, const std::vector<std::size_t>& sample,
                               const ForestParams& params, std::uint64_t seed) {
  if (sample.empty()) throw Error(ErrorKind::InsufficientData, "decision tree: empty sample");
  if (data.num_features == 0) throw Error(ErrorKind::InsufficientData, "decision tree: no features");
  DecisionTree tree;
  tree.nodes_ = TreeBuilder(data, params, seed).build(sample);
  return tree;
}

nlohmann::json DecisionTree::to_json() const {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, positive;
  for (const Node& n : nodes_) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    positive.push_back(n.positive);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"positive", positive}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree t;
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto positive = j.at("positive").get<std::vector<double>>();
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || positive.size() != n)
    throw Error(ErrorKind::Malformed, "decision tree: node arrays differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                            left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n)))
      throw Error(ErrorKind::Malformed, "decision tree: child index out of range");
    t.nodes_.push_back({feature[i], threshold[i], left[i], right[i], positive[i]});
  }
  return t;
}

RandomForest RandomForest::fit(const Dataset& data, const ForestParams& params) {
  if (data.rows() == 0) throw Error(ErrorKind::InsufficientData, "random forest: empty dataset");
  if (params.trees < 1) throw Error(ErrorKind::InvalidConfig, "random forest: need at least one tree");
  if (params.max_depth < 0) throw Error(ErrorKind::InvalidConfig, "random forest: negative max depth");
  RandomForest forest;
  forest.params_ = params;
  forest.num_features_ = data.num_features;
  const std::size_t n = data.rows();
  for (int t = 0; t < params.trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(params.seed, static_cast<std::uint64_t>(t));
    std::vector<std::size_t> sample(n);
    if (params.bootstrap) {
      Rng rng(derive_seed(tree_seed, 0xb007));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    forest.trees_.push_back(DecisionTree::fit(data, sample, params, tree_seed));
  }
  return forest;
}

double RandomForest::vote_fraction(std::span<const double> features) const {
  if (features.size() != num_features_)
    throw Error(ErrorKind::InvalidArgument, "random forest: feature count mismatch");
  if (trees_.empty()) return 0.0;
  std::size_t votes = 0;
  for (const DecisionTree& t : trees_) votes += static_cast<std::size_t>(t.predict(features));
  return static_cast<double>(votes) / static_cast<double>(trees_.size());
}

int RandomForest::predict(std::span<const double> features) const {
  return vote_fraction(features) > 0.5 ? 1 : 0;
}

nlohmann::json RandomForest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& t : trees_) trees.push_back(t.to_json());
  return {{"params", params_.to_json()}, {"num_features", num_features_}, {"trees", std::move(trees)}};
}

RandomForest RandomForest::from_json(const nlohmann::json& j) {
  RandomForest f;
  try {
    f.params_ = ForestParams::from_json(j.at("params"));
    f.num_features_ = j.at("num_features").get<std::size_t>();
    for (const auto& t : j.at("trees")) f.trees_.push_back(DecisionTree::from_json(t));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("random forest: ") + e.what());
  }
  return f;
}

}  // namespace rpclink::ml

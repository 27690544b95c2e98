#include "rpclink/pmf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rpclink/error.hpp"

namespace rpclink {

Pmf::Pmf(std::vector<double> values, std::vector<double> weights) {
  if (values.size() != weights.size() || values.empty())
    throw Error(ErrorKind::InvalidArgument, "pmf: values and weights must be non-empty and equal length");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::InvalidArgument, "pmf: negative or non-finite weight");
    sum += w;
  }
  if (sum <= 0.0) throw Error(ErrorKind::InvalidArgument, "pmf: weights sum to zero");
  for (std::size_t i : order) {
    if (weights[i] == 0.0) continue;
    if (!values_.empty() && values_.back() == values[i]) {
      probs_.back() += weights[i] / sum;
    } else {
      values_.push_back(values[i]);
      probs_.push_back(weights[i] / sum);
    }
  }
  cdf_.resize(probs_.size());
  std::partial_sum(probs_.begin(), probs_.end(), cdf_.begin());
  cdf_.back() = 1.0;
}

Pmf Pmf::point_mass(double value) { return Pmf({value}, {1.0}); }

Pmf Pmf::from_samples(const std::vector<double>& samples) {
  std::map<double, double> counts;
  for (double s : samples) counts[s] += 1.0;
  std::vector<double> v, w;
  v.reserve(counts.size());
  w.reserve(counts.size());
  for (const auto& [value, count] : counts) {
    v.push_back(value);
    w.push_back(count);
  }
  return Pmf(std::move(v), std::move(w));
}

double Pmf::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) m += values_[i] * probs_[i];
  return m;
}

double Pmf::variance() const {
  const double mu = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) v += probs_[i] * (values_[i] - mu) * (values_[i] - mu);
  return v;
}

double Pmf::total() const { return std::accumulate(probs_.begin(), probs_.end(), 0.0); }

std::size_t Pmf::sample_index(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::size_t>(it - cdf_.begin());
}

double Pmf::sample(Rng& rng) const { return values_[sample_index(rng)]; }

nlohmann::json Pmf::to_json() const {
  return {{"values", values_}, {"probs", probs_}};
}

Pmf Pmf::from_json(const nlohmann::json& j) {
  try {
    return Pmf(j.at("values").get<std::vector<double>>(), j.at("probs").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("pmf: ") + e.what());
  }
}

}  // namespace rpclink

#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include <json.hpp>

#include "rpclink/random.hpp"

namespace rpclink {

/// Probability mass function over a finite, strictly increasing support.
class Pmf {
 public:
  Pmf() = default;
  /// Normalizes `weights`; throws if any weight is negative or all are zero.
  Pmf(std::vector<double> values, std::vector<double> weights);

  static Pmf point_mass(double value);
  /// Builds the empirical PMF of a sample of values.
  static Pmf from_samples(const std::vector<double>& samples);

  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double mean() const;
  double variance() const;
  double total() const;

  double sample(Rng& rng) const;
  std::size_t sample_index(Rng& rng) const;

  nlohmann::json to_json() const;
  static Pmf from_json(const nlohmann::json& j);

 private:
  std::vector<double> values_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

}  // namespace rpclink

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rpclink/ledger.hpp"
#include "rpclink/pmf.hpp"

namespace rpclink {

/// y_j = 1 - (1 - p)^x: chance a pseudonym with share p appears among x
/// transactions.
double appearance_prob(double p, double x);

/// f = 1 - prod_j (1 - (1 - p)^{x_j}) over rounds 2..m; 0 when `xs` is empty.
double exclusion_prob(double p, const std::vector<double>& xs);

struct ModelParams {
  double alpha = 1.0;
  int m = 1;
  std::vector<double> p;   // the n - 1 non-target shares
  std::vector<double> xs;  // x_2 .. x_m
  int n = 1;

  void validate() const;
};

/// alpha^m * prod_{i != t} f_i.
double success_rate(const ModelParams& params);

/// How pseudonym shares are weighted when forming F(p).
enum class ShareWeighting {
  Users,      // each pseudonym counts once
  Occupancy,  // weighted by its chance of appearing in a mean-sized window
};

struct DistributionSet {
  Pmf f_p;
  Pmf f_x;
  Pmf f_n;

  void validate() const;

  /// F(p) from logarithmic bins over the observed nonzero shares; each bin is
  /// represented by the weighted mean share of its members.
  static DistributionSet from_activity(const ActivityStats& stats, int bins = 200,
                                       ShareWeighting weighting = ShareWeighting::Occupancy);
};

struct MonteCarloOptions {
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

struct FiEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  Pmf distribution;  // F(f_i) on 100 equal-width bins (bin centres)
  /// Mass strictly above each threshold in `thresholds`.
  std::vector<double> thresholds;
  std::vector<double> mass_above;

  double tail_above(double threshold) const;
};

/// Samples (p, x_2..x_m) tuples from the distributions and reports E[f_i]
/// and F(f_i). With `share_threshold`, shares at or above it are treated as
/// filtered out (f_i = 1).
FiEstimate expected_fi(const DistributionSet& dists, int m, std::optional<double> share_threshold,
                       const MonteCarloOptions& options);

struct SuccessEstimate {
  double expected_p = 0.0;
  double expected_r = 0.0;
  double stderr_p = 0.0;
  double stderr_r = 0.0;
  std::size_t samples = 0;
  int m = 0;
  double alpha = 0.0;
  bool filtered = false;
};

/// E[P] and E[R] = 1 - E[P_t']. Each sample draws n and x_2..x_m; the
/// non-target shares are independent draws from F(p), so the conditional
/// expectation of P_t' given (n, x) is (E_p f)^(n-1), which is evaluated
/// exactly over F(p).
SuccessEstimate expected_success(const DistributionSet& dists, double alpha, int m,
                                 std::optional<double> share_threshold,
                                 const MonteCarloOptions& options);

struct HeatmapCell {
  double alpha = 0.0;
  int m = 0;
  double expected_p = 0.0;
  double stderr_p = 0.0;
};

/// E[P] over an (alpha, m) grid; one Monte-Carlo run per m since
/// E[P] = alpha^m E[P_t'].
std::vector<HeatmapCell> success_heatmap(const DistributionSet& dists, const std::vector<double>& alphas,
                                         const std::vector<int>& ms, std::optional<double> share_threshold,
                                         const MonteCarloOptions& options);

}  // namespace rpclink

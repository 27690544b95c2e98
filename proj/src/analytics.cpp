#include "rpclink/analytics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "rpclink/error.hpp"
#include "rpclink/random.hpp"

namespace rpclink {

double appearance_prob(double p, double x) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidArgument, "appearance_prob: p must lie in [0, 1]");
  if (!(x >= 0.0)) throw Error(ErrorKind::InvalidArgument, "appearance_prob: x must be >= 0");
  if (p == 1.0) return x > 0.0 ? 1.0 : 0.0;
  return -std::expm1(x * std::log1p(-p));
}

double exclusion_prob(double p, const std::vector<double>& xs) {
  double keep = 1.0;
  for (double x : xs) keep *= appearance_prob(p, x);
  return xs.empty() ? 0.0 : 1.0 - keep;
}

void ModelParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "model: alpha must lie in [0, 1]");
  if (m < 1) throw Error(ErrorKind::InvalidArgument, "model: m must be >= 1");
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "model: n must be >= 1");
  if (xs.size() != static_cast<std::size_t>(m - 1))
    throw Error(ErrorKind::InvalidArgument, "model: need m - 1 window counts");
  if (p.size() != static_cast<std::size_t>(n - 1))
    throw Error(ErrorKind::InvalidArgument, "model: need n - 1 non-target shares");
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidArgument, "model: shares must lie in [0, 1]");
  for (double x : xs)
    if (!(x >= 0.0)) throw Error(ErrorKind::InvalidArgument, "model: window counts must be >= 0");
}

double success_rate(const ModelParams& params) {
  params.validate();
  double prod = std::pow(params.alpha, params.m);
  for (double p : params.p) prod *= exclusion_prob(p, params.xs);
  return prod;
}

void DistributionSet::validate() const {
  for (const Pmf* pmf : {&f_p, &f_x, &f_n}) {
    if (pmf->empty()) throw Error(ErrorKind::InvalidArgument, "distribution set: empty distribution");
    if (std::abs(pmf->total() - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "distribution set: mass != 1");
  }
  if (f_p.values().front() < 0.0 || f_p.values().back() > 1.0)
    throw Error(ErrorKind::InvalidArgument, "distribution set: shares must lie in [0, 1]");
  if (f_x.values().front() < 0.0) throw Error(ErrorKind::InvalidArgument, "distribution set: negative window count");
  if (f_n.values().front() < 1.0) throw Error(ErrorKind::InvalidArgument, "distribution set: candidate size below 1");
}

DistributionSet DistributionSet::from_activity(const ActivityStats& stats, int bins, ShareWeighting weighting) {
  if (bins < 1) throw Error(ErrorKind::InvalidArgument, "from_activity: need at least one bin");
  std::vector<double> shares;
  for (double p : stats.p)
    if (p > 0.0) shares.push_back(p);
  if (shares.empty()) throw Error(ErrorKind::InsufficientData, "from_activity: no transacting pseudonyms");
  const double lo = *std::min_element(shares.begin(), shares.end());
  const double hi = *std::max_element(shares.begin(), shares.end());
  const double span = std::log(hi) - std::log(lo);
  const double x_mean = stats.pdf_x.mean();

  std::vector<double> mass(static_cast<std::size_t>(bins), 0.0), moment(static_cast<std::size_t>(bins), 0.0);
  for (double p : shares) {
    std::size_t b = 0;
    if (span > 0.0)
      b = std::min<std::size_t>(static_cast<std::size_t>(bins) - 1,
                                static_cast<std::size_t>((std::log(p) - std::log(lo)) / span * bins));
    const double w = weighting == ShareWeighting::Users ? 1.0 : appearance_prob(p, x_mean);
    mass[b] += w;
    moment[b] += w * p;
  }
  std::vector<double> values, weights;
  for (std::size_t b = 0; b < mass.size(); ++b) {
    if (mass[b] <= 0.0) continue;
    values.push_back(moment[b] / mass[b]);
    weights.push_back(mass[b]);
  }
  DistributionSet d;
  d.f_p = Pmf(std::move(values), std::move(weights));
  d.f_x = stats.pdf_x;
  d.f_n = stats.pdf_n;
  if (d.f_n.values().front() < 1.0) {
    std::vector<double> v, w;
    for (std::size_t i = 0; i < d.f_n.size(); ++i)
      if (d.f_n.values()[i] >= 1.0) {
        v.push_back(d.f_n.values()[i]);
        w.push_back(d.f_n.probs()[i]);
      }
    if (v.empty()) throw Error(ErrorKind::InsufficientData, "from_activity: every window is empty");
    d.f_n = Pmf(std::move(v), std::move(w));
  }
  return d;
}

namespace {

constexpr std::size_t kChunk = 1 << 15;

/// Runs `body(chunk_index, rng)` for every chunk on a thread pool and returns
/// the per-chunk results in chunk order.
template <typename Acc>
std::vector<Acc> run_chunks(std::size_t samples, const MonteCarloOptions& opts,
                            const std::function<Acc(std::size_t, std::size_t, Rng&)>& body) {
  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<Acc> results(chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      Rng rng(derive_seed(opts.seed, c));
      const std::size_t count = std::min(kChunk, samples - c * kChunk);
      results[c] = body(c, count, rng);
    }
  };
  unsigned workers = opts.workers ? opts.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(chunks, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

struct Moments {
  double sum = 0.0;
  double sumsq = 0.0;
  std::size_t count = 0;
  std::vector<double> hist;
  std::vector<double> above;
};

void check_run(const DistributionSet& dists, int m, const MonteCarloOptions& opts,
               std::optional<double> share_threshold) {
  dists.validate();
  if (m < 1) throw Error(ErrorKind::InvalidArgument, "expectation: m must be >= 1");
  if (opts.samples == 0) throw Error(ErrorKind::InvalidArgument, "expectation: need at least one sample");
  if (share_threshold && !(*share_threshold > 0.0))
    throw Error(ErrorKind::InvalidArgument, "expectation: share threshold must be > 0");
}

}  // namespace

double FiEstimate::tail_above(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (thresholds[i] == threshold) return mass_above[i];
  double mass = 0.0;
  for (std::size_t i = 0; i < distribution.size(); ++i)
    if (distribution.values()[i] > threshold) mass += distribution.probs()[i];
  return mass;
}

FiEstimate expected_fi(const DistributionSet& dists, int m, std::optional<double> share_threshold,
                       const MonteCarloOptions& options) {
  check_run(dists, m, options, share_threshold);
  const std::vector<double> thresholds{0.9, 0.99, 0.999, 0.9999};
  constexpr std::size_t kBins = 100;
  auto body = [&](std::size_t, std::size_t count, Rng& rng) {
    Moments acc;
    acc.hist.assign(kBins, 0.0);
    acc.above.assign(thresholds.size(), 0.0);
    std::vector<double> xs(static_cast<std::size_t>(m - 1));
    for (std::size_t s = 0; s < count; ++s) {
      const double p = dists.f_p.sample(rng);
      for (double& x : xs) x = dists.f_x.sample(rng);
      const double f = share_threshold && p >= *share_threshold ? 1.0 : exclusion_prob(p, xs);
      acc.sum += f;
      acc.sumsq += f * f;
      ++acc.count;
      acc.hist[std::min<std::size_t>(kBins - 1, static_cast<std::size_t>(f * kBins))] += 1.0;
      for (std::size_t t = 0; t < thresholds.size(); ++t)
        if (f > thresholds[t]) acc.above[t] += 1.0;
    }
    return acc;
  };
  const auto parts = run_chunks<Moments>(options.samples, options, body);

  Moments total;
  total.hist.assign(kBins, 0.0);
  total.above.assign(thresholds.size(), 0.0);
  for (const Moments& part : parts) {
    total.sum += part.sum;
    total.sumsq += part.sumsq;
    total.count += part.count;
    for (std::size_t b = 0; b < kBins; ++b) total.hist[b] += part.hist[b];
    for (std::size_t t = 0; t < thresholds.size(); ++t) total.above[t] += part.above[t];
  }
  FiEstimate est;
  const double n = static_cast<double>(total.count);
  est.samples = total.count;
  est.mean = total.sum / n;
  const double var = std::max(0.0, total.sumsq / n - est.mean * est.mean);
  est.std_error = n > 1 ? std::sqrt(var * n / (n - 1) / n) : 0.0;
  std::vector<double> centres(kBins);
  for (std::size_t b = 0; b < kBins; ++b) centres[b] = (static_cast<double>(b) + 0.5) / kBins;
  est.distribution = Pmf(centres, total.hist);
  est.thresholds = thresholds;
  for (double a : total.above) est.mass_above.push_back(a / n);
  return est;
}

SuccessEstimate expected_success(const DistributionSet& dists, double alpha, int m,
                                 std::optional<double> share_threshold, const MonteCarloOptions& options) {
  check_run(dists, m, options, share_threshold);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "expected_success: alpha must lie in [0, 1]");

  const auto& pv = dists.f_p.values();
  const auto& pw = dists.f_p.probs();
  const auto& xv = dists.f_x.values();
  std::vector<char> filtered(pv.size(), 0);
  std::vector<std::vector<double>> appear(pv.size(), std::vector<double>(xv.size()));
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (share_threshold && pv[i] >= *share_threshold) filtered[i] = 1;
    for (std::size_t j = 0; j < xv.size(); ++j) appear[i][j] = appearance_prob(pv[i], xv[j]);
  }

  auto body = [&](std::size_t, std::size_t count, Rng& rng) {
    Moments acc;
    std::vector<std::size_t> xi(static_cast<std::size_t>(m - 1));
    for (std::size_t s = 0; s < count; ++s) {
      const double n = dists.f_n.sample(rng);
      for (std::size_t& j : xi) j = dists.f_x.sample_index(rng);
      double g = 0.0;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        double f = 1.0;
        if (!filtered[i]) {
          double keep = 1.0;
          for (std::size_t j : xi) keep *= appear[i][j];
          f = xi.empty() ? 0.0 : 1.0 - keep;
        }
        g += pw[i] * f;
      }
      const double pt = std::pow(std::min(1.0, g), n - 1.0);
      acc.sum += pt;
      acc.sumsq += pt * pt;
      ++acc.count;
    }
    return acc;
  };
  const auto parts = run_chunks<Moments>(options.samples, options, body);
  Moments total;
  for (const Moments& part : parts) {
    total.sum += part.sum;
    total.sumsq += part.sumsq;
    total.count += part.count;
  }
  const double n = static_cast<double>(total.count);
  const double mean = total.sum / n;
  const double var = std::max(0.0, total.sumsq / n - mean * mean);
  const double se = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  const double scale = std::pow(alpha, m);

  SuccessEstimate est;
  est.expected_p = scale * mean;
  est.expected_r = 1.0 - mean;
  est.stderr_p = scale * se;
  est.stderr_r = se;
  est.samples = total.count;
  est.m = m;
  est.alpha = alpha;
  est.filtered = share_threshold.has_value();
  return est;
}

std::vector<HeatmapCell> success_heatmap(const DistributionSet& dists, const std::vector<double>& alphas,
                                         const std::vector<int>& ms, std::optional<double> share_threshold,
                                         const MonteCarloOptions& options) {
  std::vector<HeatmapCell> cells;
  for (int m : ms) {
    const SuccessEstimate base = expected_success(dists, 1.0, m, share_threshold, options);
    for (double a : alphas) {
      if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorKind::InvalidArgument, "heatmap: alpha must lie in [0, 1]");
      const double scale = std::pow(a, m);
      cells.push_back({a, m, scale * base.expected_p, scale * base.stderr_p});
    }
  }
  return cells;
}

}  // namespace rpclink

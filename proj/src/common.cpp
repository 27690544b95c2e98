#include <algorithm>
#include <cmath>

#include "rpclink/error.hpp"
#include "rpclink/random.hpp"

namespace rpclink {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::InvalidConfig: return "invalid_config";
    case ErrorKind::Malformed: return "malformed";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::UnknownPseudonym: return "unknown_pseudonym";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

double truncated_normal(Rng& rng, double mean, double stddev, double lo, double hi) {
  if (hi <= lo) return lo;
  if (stddev <= 0.0) return std::clamp(mean, lo, hi);
  std::normal_distribution<double> normal(mean, stddev);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double v = normal(rng);
    if (v >= lo && v <= hi) return v;
  }
  return std::clamp(normal(rng), lo, hi);
}

}  // namespace rpclink

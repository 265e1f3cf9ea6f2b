#pragma once

#include <algorithm>
#include <cmath>
#include <random>

namespace marconi {

template <class Rng>
std::int64_t sample_length(const LengthDist& d, Rng& rng) {
  double x = d.mean;
  switch (d.kind) {
    case LengthDist::Kind::constant:
      break;
    case LengthDist::Kind::uniform: {
      const double half = d.mean * d.spread;
      x = std::uniform_real_distribution<double>(d.mean - half, d.mean + half)(rng);
      break;
    }
    case LengthDist::Kind::exponential:
      x = std::exponential_distribution<double>(1.0 / d.mean)(rng);
      break;
    case LengthDist::Kind::lognormal: {
      // mu chosen so that E[X] = mean.
      const double mu = std::log(d.mean) - 0.5 * d.spread * d.spread;
      x = std::lognormal_distribution<double>(mu, d.spread)(rng);
      break;
    }
  }
  const auto n = static_cast<std::int64_t>(std::llround(x));
  return std::clamp(n, d.min, d.max);
}

}  // namespace marconi

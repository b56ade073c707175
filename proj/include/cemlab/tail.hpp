#pragma once

// Envelopes and tail sums used to bound dropped eigenseries terms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "cemlab/errors.hpp"
#include "cemlab/projection.hpp"
#include "cemlab/spectral_basis.hpp"

namespace cemlab {

/// Power-law envelope C m^{-p} (p may be negative for growing sequences),
/// stored as log C so that steep fits do not overflow.
struct PowerEnvelope {
  double log_c = -std::numeric_limits<double>::infinity();
  double p = 0.0;
  double C() const { return std::exp(log_c); }
  double operator()(double m) const { return std::exp(log_c - p * std::log(std::max(m, 1.0))); }
};

/// Fits |v_m| over m in [M/4, M) by a least-squares power law and raises C
/// until the envelope dominates every sample of that range.
inline PowerEnvelope fit_envelope(const std::vector<double>& v) {
  const int M = static_cast<int>(v.size());
  PowerEnvelope env;
  const int lo = std::max(1, M / 4);
  std::vector<double> x, y;
  for (int m = lo; m < M; ++m)
    if (std::abs(v[m]) > 1e-300) {
      x.push_back(m);
      y.push_back(std::abs(v[m]));
    }
  if (x.empty()) return env;
  if (x.size() >= 2) env.p = -loglog_slope(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) env.log_c = std::max(env.log_c, std::log(y[i]) + env.p * std::log(x[i]));
  return env;
}

/// Weyl-type lower bound lambda_m - lambda_0 >= c m^{2/d}, extended past the
/// computed modes.
struct WeylBound {
  double c = 0.0;
  double exponent = 2.0;
  std::vector<double> known;  // computed gaps
  double operator()(int m) const {
    if (m < static_cast<int>(known.size())) return known[m];
    return c * std::pow(static_cast<double>(m), exponent);
  }
};

inline WeylBound weyl_bound(const SpectralBasis& basis) {
  WeylBound w;
  w.exponent = 2.0 / basis.dimension();
  w.known = basis.gaps();
  w.c = basis.modes() >= 2 ? weyl_constant(basis) : 0.0;
  return w;
}

/// sum_{m >= M} term(m), summed explicitly up to 32 M and closed by a
/// power-law remainder estimate. Returns +inf if the terms do not decay
/// faster than 1/m.
inline double tail_sum(const std::function<double(double)>& term, int M) {
  if (M < 1) M = 1;
  double sum = 0.0;
  const int stop = 32 * M + 64;
  int m = M;
  for (; m < stop; ++m) {
    const double t = term(m);
    if (!std::isfinite(t)) return std::numeric_limits<double>::infinity();
    sum += t;
    if (m > 2 * M + 16 && t <= 1e-17 * std::max(sum, 1e-300)) return sum;
  }
  const double t1 = term(m), t2 = term(2.0 * m);
  if (t1 <= 0.0) return sum;
  if (t2 <= 1e-12 * t1) return sum + 2.0 * t1 * m;  // faster than any power at this range
  const double s = std::log(t1 / t2) / std::log(2.0);
  if (!(s > 1.05)) return std::numeric_limits<double>::infinity();
  return sum + t1 * m / (s - 1.0);
}

}  // namespace cemlab

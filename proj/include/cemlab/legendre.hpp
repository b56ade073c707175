#pragma once

// Gauss-Legendre quadrature and Legendre series on a finite interval.
//
// Everything here works on a physical interval [a, b] mapped affinely to the
// reference interval [-1, 1].

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "cemlab/errors.hpp"

namespace cemlab {

struct GaussRule {
  std::vector<double> nodes;    // ascending, strictly inside (a, b)
  std::vector<double> weights;  // sum to b - a
};

namespace detail {

// P_n(z) and P_n'(z) by the three-term recurrence.
inline void legendre_pair(int n, double z, double& p, double& dp) {
  double p0 = 1.0, p1 = z;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  dp = n * (z * p1 - p0) / (z * z - 1.0);
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [a, b]; nodes ascending.
inline GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  detail::require(n >= 1, "gauss_legendre: n must be >= 1");
  detail::require(b > a, "gauss_legendre: empty interval");
  GaussRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi initial guess for the i-th largest root.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double p = 0.0, dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      detail::legendre_pair(n, z, p, dp);
      const double dz = p / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    detail::legendre_pair(n, z, p, dp);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = mid - half * z;
    rule.nodes[n - 1 - i] = mid + half * z;
    rule.weights[i] = half * w;
    rule.weights[n - 1 - i] = half * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

/// Values P_0..P_K and first derivatives at the reference point y.
inline void legendre_table(double y, int K, std::span<double> p, std::span<double> dp) {
  p[0] = 1.0;
  dp[0] = 0.0;
  if (K == 0) return;
  p[1] = y;
  dp[1] = 1.0;
  for (int k = 1; k < K; ++k) {
    p[k + 1] = ((2.0 * k + 1.0) * y * p[k] - k * p[k - 1]) / (k + 1.0);
    dp[k + 1] = dp[k - 1] + (2.0 * k + 1.0) * p[k];
  }
}

/// A finite Legendre expansion f(x) = sum_k c_k P_k(y(x)) on [a, b].
class LegendreSeries {
 public:
  LegendreSeries() = default;
  LegendreSeries(std::vector<double> coeffs, double a, double b)
      : c_(std::move(coeffs)), a_(a), b_(b) {
    detail::require(b > a, "LegendreSeries: empty interval");
  }

  double lower() const { return a_; }
  double upper() const { return b_; }
  const std::vector<double>& coefficients() const { return c_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }

  double to_reference(double x) const { return (2.0 * x - a_ - b_) / (b_ - a_); }

  /// Clenshaw evaluation.
  double operator()(double x) const {
    const int K = degree();
    if (K < 0) return 0.0;
    const double y = to_reference(x);
    double b1 = 0.0, b2 = 0.0;
    for (int k = K; k >= 1; --k) {
      const double alpha = (2.0 * k + 1.0) * y / (k + 1.0);
      const double beta = -(k + 1.0) / (k + 2.0);
      const double bk = c_[k] + alpha * b1 + beta * b2;
      b2 = b1;
      b1 = bk;
    }
    return c_[0] + y * b1 - 0.5 * b2;
  }

  /// d/dx of the series, as a series.
  LegendreSeries derivative() const {
    const int K = degree();
    if (K <= 0) return LegendreSeries({0.0}, a_, b_);
    std::vector<double> d(K, 0.0);
    // d_{k-1} = (2k-1) (c_k + d_{k+1} / (2k+3))
    double next = 0.0;  // d_{k+1}
    double cur = 0.0;   // d_k
    for (int k = K; k >= 1; --k) {
      const double dk1 = (2.0 * k - 1.0) * (c_[k] + next / (2.0 * k + 3.0));
      next = cur;
      cur = dk1;
      d[k - 1] = dk1;
    }
    const double scale = 2.0 / (b_ - a_);
    for (double& v : d) v *= scale;
    return LegendreSeries(std::move(d), a_, b_);
  }

  /// Copy without trailing coefficients below rel * max |c_k|.
  LegendreSeries trimmed(double rel) const {
    double mx = 0.0;
    for (double v : c_) mx = std::max(mx, std::abs(v));
    std::size_t n = c_.size();
    while (n > 1 && std::abs(c_[n - 1]) <= rel * mx) --n;
    return LegendreSeries(std::vector<double>(c_.begin(), c_.begin() + static_cast<long>(n)), a_, b_);
  }

  /// Antiderivative vanishing at x = a.
  LegendreSeries antiderivative() const {
    const int K = degree();
    std::vector<double> e(K + 2, 0.0);
    auto c = [&](int k) { return (k >= 0 && k <= K) ? c_[k] : 0.0; };
    e[0] = c(0) - c(1) / 3.0;
    for (int j = 1; j <= K + 1; ++j) e[j] = c(j - 1) / (2.0 * j - 1.0) - c(j + 1) / (2.0 * j + 3.0);
    const double scale = 0.5 * (b_ - a_);
    for (double& v : e) v *= scale;
    return LegendreSeries(std::move(e), a_, b_);
  }

 private:
  std::vector<double> c_;
  double a_ = -1.0;
  double b_ = 1.0;
};

/// Interpolating Legendre series through values sampled at the nodes of an
/// n-point Gauss rule on [a, b] (discrete Legendre transform; exact for
/// polynomials of degree < n).
inline LegendreSeries legendre_interpolant(const GaussRule& rule, std::span<const double> values,
                                           double a, double b) {
  const int n = static_cast<int>(rule.nodes.size());
  detail::require(static_cast<int>(values.size()) == n, "legendre_interpolant: size mismatch");
  std::vector<double> c(n, 0.0);
  std::vector<double> p(n), dp(n);
  for (int i = 0; i < n; ++i) {
    const double y = (2.0 * rule.nodes[i] - a - b) / (b - a);
    legendre_table(y, n - 1, p, dp);
    const double wref = rule.weights[i] * 2.0 / (b - a);
    for (int k = 0; k < n; ++k) c[k] += wref * values[i] * p[k];
  }
  for (int k = 0; k < n; ++k) c[k] *= (2.0 * k + 1.0) / 2.0;
  return LegendreSeries(std::move(c), a, b);
}

}  // namespace cemlab

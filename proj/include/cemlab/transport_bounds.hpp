#pragma once

// Two-sided bounds on W2(mu_t^nu, mu_0)^2: the weighted H^{-1} upper bound
// and certified Kantorovich-dual lower bounds.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "cemlab/errors.hpp"
#include "cemlab/grid_measure.hpp"
#include "cemlab/legendre.hpp"
#include "cemlab/semigroup.hpp"
#include "cemlab/spectral_basis.hpp"

namespace cemlab {

/// Logarithmic mean (a - b) / (log a - log b), with M(a, a) = a.
inline double log_mean(double a, double b) {
  detail::require(a > 0.0 && b > 0.0, "log_mean: arguments must be positive");
  const double r = std::log(b / a);
  if (std::abs(r) < 1e-4) return a * (1.0 + r / 2.0 + r * r / 6.0 + r * r * r / 24.0);
  return (b - a) / r;
}

struct UpperBoundReport {
  double value = 0.0;            // int |grad L_0^{-1} rho|^2 / M(h, 1) d mu_0
  double boundary_strip = 0.0;   // part of `value` from nodes within 1e-3 of the boundary
  int excluded_nodes = 0;        // nodes with h <= 0 (weight set to zero)
  double gradient_check = 0.0;   // relative mismatch of the integration-by-parts identity
};

/// Weighted H^{-1} upper bound for W2^2 between h mu_0 and mu_0.
inline UpperBoundReport h_minus1_upper_bound(const std::vector<double>& h, const SpectralBasis& basis,
                                             double gradient_tol = 1e-6) {
  detail::require(h.size() == basis.size(), "h_minus1_upper_bound: density must live on the basis grid");
  const int M = basis.modes();
  const std::size_t n = basis.size();
  std::vector<double> rho(n);
  for (std::size_t i = 0; i < n; ++i) rho[i] = h[i] - 1.0;
  const ModeCoefficients c = ground_coefficients(rho, basis);
  const auto a = basis.gaps();
  // grad u_m = (grad phi_m phi_0 - phi_m grad phi_0) / phi_0^2
  const Eigen::MatrixXd& F = basis.eigenfunctions();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(M);
  double energy = 0.0;  // sum c_m^2 / a_m
  for (int m = 1; m < M; ++m) {
    d[m] = -c[m] / a[m];
    energy += c[m] * c[m] / a[m];
  }
  UpperBoundReport r;
  const int dim = basis.dimension();
  double dirichlet_form = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double p0 = F(0, ii);
    double gx = 0.0, gy = 0.0;
    const double dp0x = basis.grad_x()(0, ii), dp0y = dim == 2 ? basis.grad_y()(0, ii) : 0.0;
    for (int m = 1; m < M; ++m) {
      if (d[m] == 0.0) continue;
      gx += d[m] * (basis.grad_x()(m, ii) * p0 - F(m, ii) * dp0x) / (p0 * p0);
      if (dim == 2) gy += d[m] * (basis.grad_y()(m, ii) * p0 - F(m, ii) * dp0y) / (p0 * p0);
    }
    const double g2 = gx * gx + gy * gy;
    dirichlet_form += g2 * basis.mu0_weights()[i];
    if (!(h[i] > 0.0)) {
      ++r.excluded_nodes;
      continue;
    }
    const double contrib = g2 / log_mean(h[i], 1.0) * basis.mu0_weights()[i];
    r.value += contrib;
    if (basis.domain().distance_to_boundary(basis.grid()[i]) < 1e-3) r.boundary_strip += contrib;
  }
  r.gradient_check = energy > 0.0 ? std::abs(dirichlet_form - energy) / energy : 0.0;
  if (r.gradient_check > gradient_tol)
    throw NumericalError("h_minus1_upper_bound: gradient check failed (relative mismatch " +
                         std::to_string(r.gradient_check) + ")");
  return r;
}

inline UpperBoundReport h_minus1_upper_bound(const ConditionalDensity& h, const SpectralBasis& basis,
                                             double gradient_tol = 1e-6) {
  return h_minus1_upper_bound(h.h, basis, gradient_tol);
}

// ---------------------------------------------------------------------------
// Dual lower bounds

/// A potential f on [a, b] with two derivatives. f is constant on the end
/// strips [a, a + flat] and [b - flat, b].
struct DualPotential {
  double a = 0.0, b = 1.0, flat = 0.0;
  double second_bound = 0.0;  // upper bound for sup |f''|
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::function<double(double)> second;
  std::string name;

  /// f(x) = slope x + offset.
  static DualPotential linear(double a, double b, double slope, double offset = 0.0) {
    return {a, b, 0.0, 0.0, [=](double x) { return slope * x + offset; }, [=](double) { return slope; },
            [](double) { return 0.0; }, "linear"};
  }

  /// Legendre series on [a + flat, b - flat], extended by constants.
  static DualPotential from_series(LegendreSeries s, double a, double b, double flat, std::string name) {
    auto f = std::make_shared<LegendreSeries>(std::move(s));
    auto df = std::make_shared<LegendreSeries>(f->derivative());
    auto d2f = std::make_shared<LegendreSeries>(df->derivative());
    const double lo = a + flat, hi = b - flat;
    DualPotential p{a, b, flat, 0.0, {}, {}, {}, std::move(name)};
    for (double c : d2f->coefficients()) p.second_bound += std::abs(c);  // |P_k| <= 1
    p.value = [f, lo, hi](double x) { return (*f)(std::clamp(x, lo, hi)); };
    p.derivative = [df, lo, hi](double x) { return x < lo || x > hi ? 0.0 : (*df)(x); };
    p.second = [d2f, lo, hi](double x) { return x < lo || x > hi ? 0.0 : (*d2f)(x); };
    return p;
  }

  /// Legendre interpolant of values on a Gauss-Legendre grid of [a, b].
  static DualPotential from_gauss_values(const GaussRule& rule, const std::vector<double>& v, double a, double b) {
    return from_series(legendre_interpolant(rule, v, a, b).trimmed(1e-15), a, b, 0.0, "grid-interpolant");
  }

  /// f = sum_m d_m u_m with u_m = phi_m / phi_0, interpolated at n Gauss
  /// nodes of [a + delta, b - delta] with delta = 1e-6 (b - a).
  static DualPotential ground_series(const SpectralBasis& basis, const std::vector<double>& d, std::string name,
                                     int n = 0) {
    detail::require(basis.dimension() == 1, "DualPotential: one-dimensional bases only");
    detail::require(static_cast<int>(d.size()) == basis.modes(), "DualPotential: coefficient count mismatch");
    const double a = basis.domain().a, b = basis.domain().b, delta = 1e-6 * (b - a);
    if (n <= 0) n = std::max(256, 2 * basis.modes() + 64);
    const GaussRule rule = gauss_legendre(n, a + delta, b - delta);
    const int M = basis.modes();
    std::vector<double> v(M), vals(rule.nodes.size());
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      basis.evaluate({rule.nodes[i], 0.0}, v, {}, {});
      double f = 0.0;
      for (int m = 0; m < M; ++m) f += d[m] * v[m] / v[0];
      vals[i] = f;
    }
    return from_series(legendre_interpolant(rule, vals, a + delta, b - delta).trimmed(1e-15), a, b, delta,
                       std::move(name));
  }
};

/// f = L_0^{-1} rho for rho = sum_{m >= 1} c_m u_m (ground coefficients).
inline DualPotential inverse_generator_potential(const SpectralBasis& basis, const ModeCoefficients& ground_coeffs) {
  const auto a = basis.gaps();
  std::vector<double> d(basis.modes(), 0.0);
  for (int m = 1; m < basis.modes(); ++m) d[m] = -ground_coeffs[m] / a[m];
  return DualPotential::ground_series(basis, std::move(d), "inverse-generator");
}

/// Ground coefficients of rho~_t^nu.
inline ModeCoefficients rho_tilde_coefficients(const ModeCoefficients& nu, const ModeCoefficients& mu,
                                               const SpectralBasis& basis, double t, double normalization) {
  const auto a = basis.gaps();
  ModeCoefficients c{std::vector<double>(basis.modes(), 0.0), "rho_tilde"};
  for (int m = 1; m < basis.modes(); ++m) c.values[m] = (mu[0] * nu[m] + nu[0] * mu[m]) / a[m] / (t * normalization);
  return c;
}

/// Semigroup-smoothed potential -eps log P^0_{eps theta / 2} e^{-f / eps},
/// computed on the basis grid through the ground kernel and re-expanded in
/// the ground basis. Returns false if the smoothed values are not positive.
inline bool smoothed_potential(const SpectralBasis& basis, const DualPotential& f, double eps, double theta,
                               DualPotential& out) {
  detail::require(eps > 0.0 && theta > 0.0, "smoothed_potential: eps and theta must be > 0");
  const std::size_t n = basis.size();
  std::vector<double> fv(n);
  double fmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    fv[i] = f.value(basis.grid()[i].x);
    fmin = std::min(fmin, fv[i]);
  }
  const Eigen::MatrixXd K = ground_kernel_matrix(basis, eps * theta / 2.0);
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    g[static_cast<Eigen::Index>(i)] = std::exp(-(fv[i] - fmin) / eps) * basis.mu0_weights()[i];
  const Eigen::VectorXd Pg = K * g;
  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = Pg[static_cast<Eigen::Index>(i)];
    if (!(v > 0.0)) return false;
    phi[i] = fmin - eps * std::log(v);
  }
  const ModeCoefficients c = ground_coefficients(phi, basis);
  out = DualPotential::ground_series(basis, c.values, "smoothed");
  return true;
}

struct DualLowerBound {
  double lower = 0.0;      // certified lower bound for W2^2 (clamped at 0)
  double raw = 0.0;        // unclamped dual value
  double scale = 0.0;      // optimal multiple of the potential
  std::string method;      // "convex-newton" or "grid-search"
  std::string potential;   // potential name
};

namespace detail {

// inf_x { (x - y)^2 / 2 - lam f(x) } over [a, b], certified from below.
struct CTransform {
  const DualPotential& f;
  double lam;
  double curvature;  // upper bound for sup |lam f''|
  const std::vector<double>& grid_x;
  const std::vector<double>& grid_f;

  bool convex() const { return curvature < 0.95; }

  double operator()(double y) const { return convex() ? convex_min(y) : grid_min(y); }

  // g'' <= 1 + curvature on every grid cell, so g >= (cell minimum) - K h^2 / 8.
  double grid_min(double y) const {
    double best = std::numeric_limits<double>::infinity();
    double h = 0.0;
    for (std::size_t k = 0; k < grid_x.size(); ++k) {
      best = std::min(best, 0.5 * (grid_x[k] - y) * (grid_x[k] - y) - lam * grid_f[k]);
      if (k > 0) h = std::max(h, grid_x[k] - grid_x[k - 1]);
    }
    return best - (1.0 + curvature) * h * h / 8.0;
  }

  double convex_min(double y) const {
    const double lo = f.a + f.flat, hi = f.b - f.flat;
    double best = std::numeric_limits<double>::infinity();
    // f is constant on the end strips, where the minimum sits at the clamped point.
    if (f.flat > 0.0)
      for (auto [l, r] : {std::pair{f.a, lo}, std::pair{hi, f.b}}) {
        const double x = std::clamp(y, l, r);
        best = std::min(best, 0.5 * (x - y) * (x - y) - lam * f.value(x));
      }
    // Interior: g' = x - y - lam f'(x) and g'' >= kappa = 1 - curvature.
    const double kappa = 1.0 - curvature;
    auto gp = [&](double x) { return x - y - lam * f.derivative(x); };
    double x;
    bool interior = false;
    if (gp(lo) >= 0.0) {
      x = lo;
    } else if (gp(hi) <= 0.0) {
      x = hi;
    } else {
      interior = true;
      double xl = lo, xr = hi;
      x = std::clamp(y, lo, hi);
      for (int it = 0; it < 100; ++it) {
        const double g1 = gp(x);
        if (g1 > 0.0) xr = x; else xl = x;
        double xn = x - g1 / (1.0 - lam * f.second(x));
        if (!(xn > xl && xn < xr)) xn = 0.5 * (xl + xr);
        const double step = std::abs(xn - x);
        x = xn;
        if (step < 1e-15 * (f.b - f.a) || xr - xl < 1e-15 * (f.b - f.a)) break;
      }
    }
    double val = 0.5 * (x - y) * (x - y) - lam * f.value(x);
    if (interior) {
      const double g1 = gp(x);
      val -= g1 * g1 / (2.0 * kappa);
    }
    return std::min(best, val);
  }
};

}  // namespace detail

/// Lower bound for W2(m1, m2)^2 by weak duality with the potential lam f and
/// its c-transform for the cost |x - y|^2 / 2, maximized over the scalar lam
/// (the dual objective is concave in lam).
inline DualLowerBound kantorovich_dual_lower(const GridMeasure& m1, const GridMeasure& m2, const DualPotential& f) {
  detail::require(m1.dimension == 1 && m2.dimension == 1, "kantorovich_dual_lower: one-dimensional measures only");
  m1.validate();
  m2.validate();
  // grid for the non-convex fallback, containing the strip edges
  const int G = 8192;
  std::vector<double> gx, gf;
  if (f.flat > 0.0) gx.push_back(f.a);
  const double lo = f.a + f.flat, hi = f.b - f.flat;
  for (int k = 0; k <= G; ++k) gx.push_back(lo + (hi - lo) * k / G);
  if (f.flat > 0.0) gx.push_back(f.b);
  for (double x : gx) gf.push_back(f.value(x));
  std::vector<double> f1(m1.size());
  for (std::size_t i = 0; i < m1.size(); ++i) f1[i] = f.value(m1.nodes[i].x);
  double magnitude = 0.0;
  auto dual = [&](double lam, std::string* method) {
    const detail::CTransform ct{f, lam, std::abs(lam) * f.second_bound, gx, gf};
    double s = 0.0, sa = 0.0;
    for (std::size_t i = 0; i < m1.size(); ++i) {
      s += m1.masses[i] * lam * f1[i];
      sa += std::abs(m1.masses[i] * lam * f1[i]);
    }
    for (std::size_t j = 0; j < m2.size(); ++j) {
      const double c = m2.masses[j] * ct(m2.nodes[j].x);
      s += c;
      sa += std::abs(c);
    }
    if (method) *method = ct.convex() ? "convex-newton" : "grid-search";
    magnitude = 2.0 * sa;
    return 2.0 * s;
  };
  // Bracket the maximizer of the concave function D(lam), D(0) = 0.
  const double dir = dual(1.0, nullptr) >= dual(-1.0, nullptr) ? 1.0 : -1.0;
  double l = 0.0, r = dir, prev = 0.0, step = 1.0;
  for (int k = 0; k < 60; ++k) {
    const double v = dual(r, nullptr);
    if (v < prev) break;
    prev = v;
    l = r - dir * step;
    step *= 2.0;
    r += dir * step;
  }
  if (l > r) std::swap(l, r);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = r - gr * (r - l), x2 = l + gr * (r - l);
  double v1 = dual(x1, nullptr), v2 = dual(x2, nullptr);
  for (int it = 0; it < 32; ++it) {
    if (v1 < v2) {
      l = x1;
      x1 = x2;
      v1 = v2;
      x2 = l + gr * (r - l);
      v2 = dual(x2, nullptr);
    } else {
      r = x2;
      x2 = x1;
      v2 = v1;
      x1 = r - gr * (r - l);
      v1 = dual(x1, nullptr);
    }
  }
  DualLowerBound out;
  out.potential = f.name;
  out.method = "trivial";
  const double lam = v1 >= v2 ? x1 : x2;
  if (std::max(v1, v2) > 0.0) {
    out.raw = dual(lam, &out.method);
    out.scale = lam;
  }
  // summation rounding is charged against the bound
  const double rounding = out.raw > 0.0 ? 4.0 * std::numeric_limits<double>::epsilon() *
                                               static_cast<double>(m1.size() + m2.size()) * magnitude
                                         : 0.0;
  out.lower = std::max(out.raw - rounding, 0.0);
  return out;
}

/// Best of the inverse-generator potential and its smoothed variant.
inline DualLowerBound best_dual_lower(const GridMeasure& m1, const GridMeasure& m2, const SpectralBasis& basis,
                                     const DualPotential& f, double t) {
  DualLowerBound best = kantorovich_dual_lower(m1, m2, f);
  DualPotential g;
  const double eps = std::pow(t, -1.5);
  if (smoothed_potential(basis, f, eps, 1.0, g)) {
    const DualLowerBound s = kantorovich_dual_lower(m1, m2, g);
    if (s.lower > best.lower) best = s;
  }
  return best;
}

}  // namespace cemlab

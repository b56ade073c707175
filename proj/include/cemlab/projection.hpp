#pragma once

// Initial distributions nu and their mode coefficients nu(phi_m).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "cemlab/errors.hpp"
#include "cemlab/legendre.hpp"
#include "cemlab/spectral_basis.hpp"

namespace cemlab {

/// Density h with respect to mu, sampled at the grid nodes of a basis.
struct DensityOnGrid {
  std::vector<double> h;
};

/// Dirac mass at x0.
struct PointMass {
  Point x0;
};

/// Lebesgue density tabulated on increasing nodes of an interval,
/// interpolated piecewise linearly.
struct GridDensity {
  std::vector<double> nodes;
  std::vector<double> values;
};

struct InitialDistribution {
  std::variant<DensityOnGrid, PointMass, GridDensity> value;
  std::string tag;

  static InitialDistribution density(std::vector<double> h, std::string tag = "density") {
    return {DensityOnGrid{std::move(h)}, std::move(tag)};
  }
  static InitialDistribution point(Point x0) { return {PointMass{x0}, "point"}; }
  static InitialDistribution grid_density(std::vector<double> nodes, std::vector<double> values) {
    return {GridDensity{std::move(nodes), std::move(values)}, "grid_density"};
  }
  /// nu = mu.
  static InitialDistribution mu(const SpectralBasis& basis) {
    return density(std::vector<double>(basis.size(), 1.0), "mu");
  }
  /// nu = mu_0 = phi_0^2 mu.
  static InitialDistribution mu0(const SpectralBasis& basis) {
    std::vector<double> h(basis.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double p = basis.eigenfunctions()(0, static_cast<Eigen::Index>(i));
      h[i] = p * p;
    }
    return density(std::move(h), "mu0");
  }

  bool is_point() const { return std::holds_alternative<PointMass>(value); }
  bool is_density() const { return !is_point(); }
};

/// nu(phi_m), m = 0..M-1.
struct ModeCoefficients {
  std::vector<double> values;
  std::string source;

  double operator[](std::size_t m) const { return values[m]; }
  std::size_t size() const { return values.size(); }
};

namespace detail {

inline void check_density_on_grid(const SpectralBasis& basis, const std::vector<double>& h) {
  detail::require(h.size() == basis.size(), "project: density must be sampled on the basis grid");
  double mass = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    require(std::isfinite(h[i]), "project: density has non-finite values");
    if (h[i] < -1e-12) throw InvalidArgument("project: density has negative values");
    mass += h[i] * basis.weights()[i];
  }
  if (std::abs(mass - 1.0) > 1e-8)
    throw InvalidArgument("project: density mass " + std::to_string(mass) + " differs from 1");
}

inline void check_point(const SpectralBasis& basis, const Point& x0) {
  const Domain& dom = basis.domain();
  if (basis.boundary() == Boundary::dirichlet) {
    require(dom.contains_interior(x0), "project: point mass must lie strictly inside the domain");
  } else {
    const bool in_x = x0.x >= dom.a && x0.x <= dom.b;
    const bool in_y = dom.kind == DomainKind::interval || (x0.y >= dom.c && x0.y <= dom.d);
    require(in_x && in_y, "project: point mass outside the domain");
  }
}

// Trapezoidal mass of a piecewise-linear tabulated density.
inline double tabulated_mass(const GridDensity& g) {
  double mass = 0.0;
  for (std::size_t i = 1; i < g.nodes.size(); ++i)
    mass += 0.5 * (g.values[i] + g.values[i - 1]) * (g.nodes[i] - g.nodes[i - 1]);
  return mass;
}

inline void check_grid_density(const SpectralBasis& basis, const GridDensity& g) {
  detail::require(basis.dimension() == 1, "project: grid densities are supported on intervals only");
  detail::require(g.nodes.size() >= 2 && g.nodes.size() == g.values.size(), "project: grid density needs >= 2 samples");
  for (std::size_t i = 1; i < g.nodes.size(); ++i)
    require(g.nodes[i] > g.nodes[i - 1], "project: grid density nodes must increase");
  const Domain& dom = basis.domain();
  detail::require(g.nodes.front() >= dom.a - 1e-12 && g.nodes.back() <= dom.b + 1e-12,
          "project: grid density nodes outside the domain");
  for (double v : g.values)
    if (!(v >= -1e-12)) throw InvalidArgument("project: density has negative values");
  const double mass = tabulated_mass(g);
  if (std::abs(mass - 1.0) > 1e-8)
    throw InvalidArgument("project: density mass " + std::to_string(mass) + " differs from 1");
}

}  // namespace detail

/// Lebesgue density of a grid density at x (zero outside its nodes).
inline double grid_density_value(const GridDensity& g, double x) {
  if (x < g.nodes.front() || x > g.nodes.back()) return 0.0;
  auto it = std::upper_bound(g.nodes.begin(), g.nodes.end(), x);
  std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - g.nodes.begin()), 1, g.nodes.size() - 1);
  const double s = (x - g.nodes[i - 1]) / (g.nodes[i] - g.nodes[i - 1]);
  return (1.0 - s) * g.values[i - 1] + s * g.values[i];
}

/// nu(phi_m) for every mode of the basis.
inline ModeCoefficients project(const InitialDistribution& nu, const SpectralBasis& basis) {
  const int M = basis.modes();
  ModeCoefficients out;
  out.source = nu.tag;
  out.values.assign(M, 0.0);
  if (const auto* d = std::get_if<DensityOnGrid>(&nu.value)) {
    detail::check_density_on_grid(basis, d->h);
    Eigen::VectorXd hw(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) hw[static_cast<Eigen::Index>(i)] = d->h[i] * basis.weights()[i];
    const Eigen::VectorXd c = basis.eigenfunctions() * hw;
    for (int m = 0; m < M; ++m) out.values[m] = c[m];
  } else if (const auto* p = std::get_if<PointMass>(&nu.value)) {
    detail::check_point(basis, p->x0);
    basis.evaluate(p->x0, out.values, {}, {});
  } else {
    const auto& g = std::get<GridDensity>(nu.value);
    detail::check_grid_density(basis, g);
    // Exact-order integration on each linear piece.
    const GaussRule q = gauss_legendre(std::clamp(M / 2 + 8, 8, 64), 0.0, 1.0);
    std::vector<double> v(M);
    for (std::size_t i = 1; i < g.nodes.size(); ++i) {
      const double x0 = g.nodes[i - 1], x1 = g.nodes[i], h = x1 - x0;
      for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        const double s = q.nodes[k], x = x0 + s * h;
        const double rho = (1.0 - s) * g.values[i - 1] + s * g.values[i];
        if (rho == 0.0) continue;
        basis.evaluate({x, 0.0}, v, {}, {});
        const double w = q.weights[k] * h * rho;
        for (int m = 0; m < M; ++m) out.values[m] += w * v[m];
      }
    }
  }
  return out;
}

/// The density of nu with respect to mu on the basis grid (density variants only).
inline std::vector<double> density_on_grid(const InitialDistribution& nu, const SpectralBasis& basis) {
  if (const auto* d = std::get_if<DensityOnGrid>(&nu.value)) {
    detail::check_density_on_grid(basis, d->h);
    return d->h;
  }
  if (const auto* g = std::get_if<GridDensity>(&nu.value)) {
    detail::check_grid_density(basis, *g);
    std::vector<double> h(basis.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = grid_density_value(*g, basis.grid()[i].x) / basis.mu_density()[i];
    return h;
  }
  throw InvalidArgument("density_on_grid: point masses have no density");
}

/// Partial reconstruction sum_{m<K} c_m phi_m on the grid.
inline std::vector<double> reconstruct(const ModeCoefficients& c, const SpectralBasis& basis, int K = -1) {
  if (K < 0) K = basis.modes();
  K = std::min<int>(K, static_cast<int>(c.size()));
  Eigen::Map<const Eigen::VectorXd> cv(c.values.data(), K);
  const Eigen::VectorXd f = basis.eigenfunctions().topRows(K).transpose() * cv;
  return {f.data(), f.data() + f.size()};
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Slope of log(lambda_m - lambda_0) vs log m over m in [M/4, M).
inline double weyl_slope(const SpectralBasis& basis) {
  const int M = basis.modes();
  detail::require(M >= 8, "weyl_slope: need M >= 8");
  std::vector<double> x, y;
  for (int m = std::max(1, M / 4); m < M; ++m) {
    x.push_back(m);
    y.push_back(basis.eigenvalues()[m] - basis.eigenvalues()[0]);
  }
  return loglog_slope(x, y);
}

/// Largest c with lambda_m - lambda_0 >= c m^{2/d} for 1 <= m < M, with a 10% margin.
inline double weyl_constant(const SpectralBasis& basis) {
  const double p = 2.0 / basis.dimension();
  double c = std::numeric_limits<double>::infinity();
  for (int m = 1; m < basis.modes(); ++m)
    c = std::min(c, (basis.eigenvalues()[m] - basis.eigenvalues()[0]) / std::pow(m, p));
  detail::require(std::isfinite(c) && c > 0, "weyl_constant: need at least two distinct eigenvalues");
  return 0.9 * c;
}

struct SupNormGrowthReport {
  std::vector<double> sup_phi;    // ||phi_m||_inf
  std::vector<double> sup_ratio;  // ||phi_m / phi_0||_inf
  double exponent_phi = 0.0;      // fitted growth exponents over [M/4, M)
  double exponent_ratio = 0.0;
  double bound_exponent = 0.0;    // (d + 2) / (2 d)
  double constant = 0.0;          // C fitted on 1 <= m <= M/4
  bool violation = false;
  std::vector<int> violating_modes;
};

/// Sup-norm growth of phi_m and phi_m/phi_0 against C m^{(d+2)/(2d)}.
inline SupNormGrowthReport sup_norm_growth_report(const SpectralBasis& basis) {
  const int M = basis.modes();
  detail::require(M >= 16, "sup_norm_growth_report: need M >= 16");
  SupNormGrowthReport r;
  const int d = basis.dimension();
  r.bound_exponent = (d + 2.0) / (2.0 * d);
  r.sup_phi = basis.sup_norms();
  r.sup_ratio.resize(M);
  for (int m = 0; m < M; ++m) r.sup_ratio[m] = basis.ground_ratio().row(m).cwiseAbs().maxCoeff();
  std::vector<double> x, yp, yr;
  for (int m = M / 4; m < M; ++m) {
    x.push_back(m + 1.0);
    yp.push_back(r.sup_phi[m]);
    yr.push_back(r.sup_ratio[m]);
  }
  r.exponent_phi = loglog_slope(x, yp);
  r.exponent_ratio = loglog_slope(x, yr);
  for (int m = 1; m <= M / 4; ++m) r.constant = std::max(r.constant, r.sup_ratio[m] / std::pow(m, r.bound_exponent));
  for (int m = M / 4 + 1; m < M; ++m)
    if (r.sup_ratio[m] > 1.2 * r.constant * std::pow(m, r.bound_exponent)) r.violating_modes.push_back(m);
  r.violation = !r.violating_modes.empty();
  return r;
}

}  // namespace cemlab

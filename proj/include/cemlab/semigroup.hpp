#pragma once

// Dirichlet semigroup P_t^D, ground-state semigroup P_t^0 and the conditional
// empirical density h_t = d mu_t^nu / d mu_0 as truncated eigenseries.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "cemlab/errors.hpp"
#include "cemlab/projection.hpp"
#include "cemlab/spectral_basis.hpp"
#include "cemlab/tail.hpp"

namespace cemlab {

struct SeriesTruncation {
  int M = 0;
  double tail_estimate = 0.0;
  double target_tol = 1e-4;
  bool accepted() const { return tail_estimate <= target_tol; }
};

/// Values of a function on the basis grid with the truncation record.
struct GridFunction {
  std::vector<double> values;
  SeriesTruncation truncation;
};

namespace detail {

// t e^{-(a+b)t/2} (1 + z^2/6 + z^4/120), z = (a - b) t / 2
inline double time_integral_taylor(double a, double b, double t) {
  const double z = 0.5 * (a - b) * t, z2 = z * z;
  return t * std::exp(-0.5 * (a + b) * t) * (1.0 + z2 / 6.0 + z2 * z2 / 120.0);
}

// e^{-min(a,b) t} (1 - e^{-|a-b| t}) / |a - b|
inline double time_integral_closed(double a, double b, double t) {
  const double d = std::abs(a - b);
  return std::exp(-std::min(a, b) * t) * -std::expm1(-d * t) / d;
}

}  // namespace detail

/// int_0^t e^{-a s} e^{-b (t - s)} ds = (e^{-bt} - e^{-at}) / (a - b).
/// For |a - b| t < 1e-6 the symmetric Taylor form is used.
inline double time_integral(double a, double b, double t) {
  if (std::abs(a - b) * t < 1e-6) return detail::time_integral_taylor(a, b, t);
  return detail::time_integral_closed(a, b, t);
}

namespace detail {

inline double sup_tail(const ModeCoefficients& c, const SpectralBasis& basis, const std::vector<double>& sup,
                       const std::function<double(int)>& decay) {
  const PowerEnvelope cenv = fit_envelope(c.values);
  const PowerEnvelope senv = fit_envelope(sup);
  const int M = basis.modes();
  return tail_sum([&](double m) { return cenv(m) * senv(m) * decay(static_cast<int>(m)); }, M);
}

inline std::vector<double> ratio_sups(const SpectralBasis& basis) {
  std::vector<double> s(basis.modes());
  for (int m = 0; m < basis.modes(); ++m) s[m] = basis.ground_ratio().row(m).cwiseAbs().maxCoeff();
  return s;
}

inline void require_coefficients(const ModeCoefficients& c, const SpectralBasis& basis) {
  require(static_cast<int>(c.size()) == basis.modes(), "coefficient count must equal the basis mode count");
}

}  // namespace detail

/// P_t^D f = sum_m e^{-lambda_m t} mu(phi_m f) phi_m on the grid; coeffs hold mu(phi_m f).
inline GridFunction apply_dirichlet_semigroup(const ModeCoefficients& coeffs, const SpectralBasis& basis, double t,
                                              double target_tol = 1e-8) {
  detail::require(t >= 0.0, "apply_dirichlet_semigroup: t must be >= 0");
  detail::require_coefficients(coeffs, basis);
  const int M = basis.modes();
  Eigen::VectorXd c(M);
  for (int m = 0; m < M; ++m) c[m] = std::exp(-basis.eigenvalues()[m] * t) * coeffs[m];
  const Eigen::VectorXd f = basis.eigenfunctions().transpose() * c;
  GridFunction out{{f.data(), f.data() + f.size()}, {M, 0.0, target_tol}};
  const WeylBound w = weyl_bound(basis);
  const double l0 = basis.eigenvalues()[0];
  out.truncation.tail_estimate =
      detail::sup_tail(coeffs, basis, basis.sup_norms(), [&](int m) { return std::exp(-(l0 + w(m)) * t); });
  return out;
}

/// nu(P_t^D 1) = sum_m e^{-lambda_m t} nu(phi_m) mu(phi_m).
inline double survival(const ModeCoefficients& nu, const ModeCoefficients& mu, const SpectralBasis& basis, double t) {
  detail::require(t >= 0.0, "survival: t must be >= 0");
  double s = 0.0;
  for (int m = 0; m < basis.modes(); ++m) s += std::exp(-basis.eigenvalues()[m] * t) * nu[m] * mu[m];
  return s;
}

/// N_t = nu(phi_0 P_t^0 phi_0^{-1}) = e^{lambda_0 t} nu(P_t^D 1).
inline double ground_normalization(const ModeCoefficients& nu, const ModeCoefficients& mu, const SpectralBasis& basis,
                                   double t) {
  const auto a = basis.gaps();
  double s = 0.0;
  for (int m = 0; m < basis.modes(); ++m) s += std::exp(-a[m] * t) * nu[m] * mu[m];
  return s;
}

struct KernelValue {
  double value = 0.0;
  SeriesTruncation truncation;
};

/// p_t^0(x, y) = sum_m u_m(x) u_m(y) e^{-(lambda_m - lambda_0) t}, u_m = phi_m / phi_0.
inline KernelValue ground_kernel(const SpectralBasis& basis, const Point& x, const Point& y, double t,
                                 double target_tol = 1e-8) {
  detail::require(t > 0.0, "ground_kernel: t must be > 0");
  detail::require(basis.domain().contains_interior(x) && basis.domain().contains_interior(y),
                  "ground_kernel: points must be interior");
  const int M = basis.modes();
  std::vector<double> px(M), py(M);
  basis.evaluate(x, px, {}, {});
  basis.evaluate(y, py, {}, {});
  const auto a = basis.gaps();
  KernelValue out;
  for (int m = 0; m < M; ++m) out.value += (px[m] / px[0]) * (py[m] / py[0]) * std::exp(-a[m] * t);
  const PowerEnvelope senv = fit_envelope(detail::ratio_sups(basis));
  const WeylBound w = weyl_bound(basis);
  out.truncation = {M, tail_sum([&](double m) { return senv(m) * senv(m) * std::exp(-w(int(m)) * t); }, M),
                    target_tol};
  return out;
}

/// Kernel matrix K(i, j) = p_t^0(x_i, x_j) on the basis grid.
inline Eigen::MatrixXd ground_kernel_matrix(const SpectralBasis& basis, double t, SeriesTruncation* trunc = nullptr) {
  detail::require(t > 0.0, "ground_kernel_matrix: t must be > 0");
  const auto a = basis.gaps();
  Eigen::VectorXd e(basis.modes());
  for (int m = 0; m < basis.modes(); ++m) e[m] = std::exp(-a[m] * t);
  const Eigen::MatrixXd& U = basis.ground_ratio();
  if (trunc) {
    const PowerEnvelope senv = fit_envelope(detail::ratio_sups(basis));
    const WeylBound w = weyl_bound(basis);
    *trunc = {basis.modes(),
              tail_sum([&](double m) { return senv(m) * senv(m) * std::exp(-w(int(m)) * t); }, basis.modes()),
              trunc->target_tol};
  }
  return U.transpose() * e.asDiagonal() * U;
}

/// Ground-basis coefficients mu_0(g u_m) of a grid function g.
inline ModeCoefficients ground_coefficients(const std::vector<double>& g, const SpectralBasis& basis,
                                            std::string tag = "ground") {
  detail::require(g.size() == basis.size(), "ground_coefficients: size mismatch");
  Eigen::VectorXd gw(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) gw[static_cast<Eigen::Index>(i)] = g[i] * basis.mu0_weights()[i];
  const Eigen::VectorXd c = basis.ground_ratio() * gw;
  return {{c.data(), c.data() + c.size()}, std::move(tag)};
}

/// P_t^0 g = sum_m e^{-(lambda_m - lambda_0) t} c_m u_m with c_m = mu_0(g u_m).
inline std::vector<double> apply_ground_semigroup(const ModeCoefficients& ground_coeffs, const SpectralBasis& basis,
                                                  double t) {
  detail::require(t >= 0.0, "apply_ground_semigroup: t must be >= 0");
  const auto a = basis.gaps();
  Eigen::VectorXd c(basis.modes());
  for (int m = 0; m < basis.modes(); ++m) c[m] = std::exp(-a[m] * t) * ground_coeffs[m];
  const Eigen::VectorXd f = basis.ground_ratio().transpose() * c;
  return {f.data(), f.data() + f.size()};
}

/// psi_s^nu = nu(phi_0) + sum_{m >= 1} nu(phi_m) e^{-(lambda_m - lambda_0) s} u_m on the grid.
inline GridFunction psi_s_nu(const ModeCoefficients& nu, const SpectralBasis& basis, double s,
                             bool nu_is_density = true, double target_tol = 1e-6) {
  detail::require(s > 0.0 || (s == 0.0 && nu_is_density), "psi_s_nu: s must be > 0 (s = 0 only for densities)");
  detail::require_coefficients(nu, basis);
  const auto a = basis.gaps();
  Eigen::VectorXd c(basis.modes());
  for (int m = 0; m < basis.modes(); ++m) c[m] = nu[m] * std::exp(-a[m] * s);
  const Eigen::VectorXd f = basis.ground_ratio().transpose() * c;
  GridFunction out{{f.data(), f.data() + f.size()}, {basis.modes(), 0.0, target_tol}};
  const WeylBound w = weyl_bound(basis);
  out.truncation.tail_estimate =
      detail::sup_tail(nu, basis, detail::ratio_sups(basis), [&](int m) { return std::exp(-w(m) * s); });
  return out;
}

/// Coefficients of the time-shifted measure nu_eps:
/// nu_eps(phi_m) = e^{-lambda_m eps} nu(phi_m) / nu(P_eps^D 1).
inline ModeCoefficients time_shift_coefficients(const ModeCoefficients& nu, const ModeCoefficients& mu,
                                                const SpectralBasis& basis, double eps) {
  detail::require(eps > 0.0, "time_shift: eps must be > 0");
  detail::require_coefficients(nu, basis);
  const double z = survival(nu, mu, basis, eps);
  if (!(z > 0.0)) throw NumericalError("time_shift: nu(P_eps 1) is not positive");
  ModeCoefficients out{std::vector<double>(basis.modes()), nu.source + "@shift"};
  for (int m = 0; m < basis.modes(); ++m) out.values[m] = std::exp(-basis.eigenvalues()[m] * eps) * nu[m] / z;
  return out;
}

/// nu_eps as a density on the grid: h_eps = psi_eps phi_0 / mu(psi_eps phi_0).
inline InitialDistribution time_shift(const InitialDistribution& nu, const SpectralBasis& basis, double eps) {
  detail::require(eps > 0.0, "time_shift: eps must be > 0");
  const ModeCoefficients c = project(nu, basis);
  const GridFunction psi = psi_s_nu(c, basis, eps, nu.is_density());
  std::vector<double> h(basis.size());
  double z = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = psi.values[i] * basis.eigenfunctions()(0, static_cast<Eigen::Index>(i));
    z += h[i] * basis.weights()[i];
  }
  if (!(z > 0.0)) throw NumericalError("time_shift: mu(psi phi_0) is not positive");
  for (double& v : h) v = std::max(v / z, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mass += h[i] * basis.weights()[i];
  for (double& v : h) v /= mass;
  return InitialDistribution::density(std::move(h), nu.tag + "@shift");
}

struct ConditionalDensity {
  double t = 0.0;
  std::vector<double> h;    // d mu_t^nu / d mu_0 on the grid
  std::vector<double> rho;  // h - 1
  double normalization = 0.0;  // nu(phi_0 P_t^0 phi_0^{-1})
  SeriesTruncation truncation;
  double min_h = 0.0;
  double eps_shift = 0.0;  // time shift applied to a point mass (0 if none)
  bool nonnegative = true;
};

namespace detail {

// L^1(mu_0) bound for the dropped terms of the double series, using
// ||u_m||_{L^2(mu_0)} = 1 and J(a, b, t) <= min(t, 1 / max(a, b)).
inline double conditional_tail(const ModeCoefficients& nu, const ModeCoefficients& mu, const SpectralBasis& basis,
                               double t, double N) {
  const int M = basis.modes();
  const PowerEnvelope bn = fit_envelope(nu.values), bm = fit_envelope(mu.values);
  const WeylBound w = weyl_bound(basis);
  auto Jb = [&](double a) { return a > 0 ? std::min(t, 1.0 / a) : t; };
  double s_nu = 0.0, s_mu = 0.0;
  for (int m = 0; m < M; ++m) {
    s_nu += std::abs(nu[m]);
    s_mu += std::abs(mu[m]);
  }
  // Pairs (m, n) with m >= M: n < m contributes |nu_m| |mu_n| / a_m, n >= m contributes |nu_m| B_mu(n) / a_n.
  const int cap = std::max(64 * M, 4096);
  std::vector<double> suffix(cap + 2, 0.0);
  const double rem_mu = tail_sum([&](double n) { return bm(n) * Jb(w(int(n))); }, cap + 1);
  if (!std::isfinite(rem_mu)) return std::numeric_limits<double>::infinity();
  suffix[cap + 1] = rem_mu;
  for (int n = cap; n >= M; --n) suffix[n] = suffix[n + 1] + bm(n) * Jb(w(n));
  double t1 = 0.0, prefix_mu = s_mu;
  for (int m = M; m <= cap; ++m) {
    t1 += bn(m) * (Jb(w(m)) * prefix_mu + suffix[m]);
    prefix_mu += bm(m);
  }
  // Terms beyond the cap: prefix grows at most like the partial envelope sum.
  const double t1_rem = tail_sum([&](double m) { return bn(m) * Jb(w(int(m))) * (prefix_mu + bm(m) * m) * 2.0; },
                                 cap + 1);
  if (!std::isfinite(t1_rem)) return std::numeric_limits<double>::infinity();
  t1 += t1_rem;
  // Pairs with m < M <= n.
  const double t2 = s_nu * tail_sum([&](double n) { return bm(n) * Jb(w(int(n))); }, M);
  // Diagonal correction terms t nu_k mu_k e^{-a_k t}, k >= M.
  const double t3 = t * tail_sum([&](double k) { return bn(k) * bm(k) * std::exp(-w(int(k)) * t); }, M);
  return (t1 + t2 + t3) / (t * std::abs(N));
}

}  // namespace detail

/// h_t^nu on the grid from coefficients of nu and mu.
inline ConditionalDensity conditional_density_from_coefficients(const ModeCoefficients& nu,
                                                                const ModeCoefficients& mu,
                                                                const SpectralBasis& basis, double t,
                                                                double target_tol = 1e-4) {
  detail::require(t > 0.0, "conditional_density: t must be > 0");
  detail::require_coefficients(nu, basis);
  detail::require_coefficients(mu, basis);
  const int M = basis.modes();
  const auto a = basis.gaps();
  ConditionalDensity out;
  out.t = t;
  const double N = ground_normalization(nu, mu, basis, t);
  if (!(N > 0.0)) throw NumericalError("conditional_density: normalization is not positive");
  out.normalization = N;

  // A(m, n) = nu_m mu_n J(a_m, a_n, t) without the (0, 0) term; the diagonal
  // correction -t nu_k mu_k e^{-a_k t} is folded into A(k, k).
  Eigen::MatrixXd A(M, M);
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < M; ++n) A(m, n) = nu[m] * mu[n] * time_integral(a[m], a[n], t);
  A(0, 0) = 0.0;
  for (int k = 1; k < M; ++k) A(k, k) -= t * nu[k] * mu[k] * std::exp(-a[k] * t);
  const Eigen::MatrixXd& U = basis.ground_ratio();
  const Eigen::MatrixXd AU = A * U;
  const double scale = 1.0 / (t * N);
  const std::size_t n = basis.size();
  out.rho.resize(n);
  out.h.resize(n);
  out.min_h = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out.rho[i] = scale * U.col(ii).dot(AU.col(ii));
    out.h[i] = 1.0 + out.rho[i];
    out.min_h = std::min(out.min_h, out.h[i]);
  }
  out.nonnegative = out.min_h >= -1e-6;
  out.truncation = {M, detail::conditional_tail(nu, mu, basis, t, N), target_tol};
  return out;
}

/// h_t^nu for an initial distribution. Point masses are replaced by the
/// time-shifted density nu_eps with eps = t^{-2}.
inline ConditionalDensity conditional_density(const InitialDistribution& nu, const SpectralBasis& basis, double t,
                                              double target_tol = 1e-4) {
  detail::require(t > 0.0, "conditional_density: t must be > 0");
  detail::require(basis.boundary() == Boundary::dirichlet, "conditional_density: Dirichlet basis required");
  const ModeCoefficients mu = project(InitialDistribution::mu(basis), basis);
  ModeCoefficients c = project(nu, basis);
  double eps = 0.0;
  if (nu.is_point()) {
    eps = 1.0 / (t * t);
    c = time_shift_coefficients(c, mu, basis, eps);
  }
  ConditionalDensity out = conditional_density_from_coefficients(c, mu, basis, t, target_tol);
  out.eps_shift = eps;
  return out;
}

/// rho~_t^nu = [t N_t]^{-1} sum_{m >= 1} (mu_0 nu_m + nu_0 mu_m) / a_m u_m on the grid.
inline GridFunction rho_tilde(const ModeCoefficients& nu, const ModeCoefficients& mu, const SpectralBasis& basis,
                              double t, double normalization, double target_tol = 1e-4) {
  detail::require(t > 0.0, "rho_tilde: t must be > 0");
  detail::require(normalization > 0.0, "rho_tilde: normalization must be > 0");
  const auto a = basis.gaps();
  const int M = basis.modes();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(M);
  std::vector<double> comb(M, 0.0);
  for (int m = 1; m < M; ++m) {
    comb[m] = mu[0] * nu[m] + nu[0] * mu[m];
    c[m] = comb[m] / a[m] / (t * normalization);
  }
  const Eigen::VectorXd f = basis.ground_ratio().transpose() * c;
  GridFunction out{{f.data(), f.data() + f.size()}, {M, 0.0, target_tol}};
  // L^1(mu_0) tail: sum_{m >= M} |comb_m| / a_m
  const PowerEnvelope env = fit_envelope(comb);
  const WeylBound w = weyl_bound(basis);
  out.truncation.tail_estimate = tail_sum([&](double m) { return env(m) / w(int(m)); }, M) / (t * normalization);
  return out;
}

/// Neumann mean empirical density with respect to mu:
/// 1 + t^{-1} sum_{m >= 1} nu(phi_m) (1 - e^{-lambda_m t}) / lambda_m phi_m.
inline GridFunction mean_empirical_density(const ModeCoefficients& nu, const SpectralBasis& basis, double t,
                                           double target_tol = 1e-4) {
  detail::require(basis.boundary() == Boundary::neumann, "mean_empirical_density: Neumann basis required");
  detail::require(t > 0.0, "mean_empirical_density: t must be > 0");
  detail::require_coefficients(nu, basis);
  const int M = basis.modes();
  const auto& lam = basis.eigenvalues();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(M);
  for (int m = 1; m < M; ++m) c[m] = nu[m] * (-std::expm1(-lam[m] * t)) / (lam[m] * t);
  Eigen::VectorXd f = basis.eigenfunctions().transpose() * c;
  f.array() += 1.0;
  GridFunction out{{f.data(), f.data() + f.size()}, {M, 0.0, target_tol}};
  // L^1(mu) tail with ||phi_m||_{L^1(mu)} <= 1.
  const PowerEnvelope env = fit_envelope(nu.values);
  const WeylBound w = weyl_bound(basis);
  out.truncation.tail_estimate = tail_sum([&](double m) { return env(m) / w(int(m)); }, M) / t;
  return out;
}

struct TMinReport {
  double t_min = std::numeric_limits<double>::infinity();
  std::vector<double> times;
  std::vector<double> min_h;
};

/// Scans t geometrically over [t_lo, t_hi] and reports the smallest t beyond
/// which every scanned density satisfies h >= -1e-6.
inline TMinReport scan_t_min(const InitialDistribution& nu, const SpectralBasis& basis, double t_lo, double t_hi,
                             int n = 24) {
  detail::require(t_lo > 0.0 && t_hi > t_lo && n >= 2, "scan_t_min: need 0 < t_lo < t_hi and n >= 2");
  TMinReport r;
  for (int k = 0; k < n; ++k) {
    const double t = t_lo * std::pow(t_hi / t_lo, static_cast<double>(k) / (n - 1));
    r.times.push_back(t);
    r.min_h.push_back(conditional_density(nu, basis, t, 1.0).min_h);
  }
  for (int k = n - 1; k >= 0; --k) {
    if (r.min_h[k] < -1e-6) break;
    r.t_min = r.times[k];
  }
  return r;
}

/// CSV snapshot: x[,y], h_t, mu0_density (Lebesgue density of mu_0).
inline void write_density_csv(const std::string& path, const ConditionalDensity& h, const SpectralBasis& basis) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.precision(17);
  out << "# t=" << h.t << " M=" << h.truncation.M << " tail_estimate=" << h.truncation.tail_estimate
      << " normalization=" << h.normalization << " eps_shift=" << h.eps_shift << '\n';
  const bool two_d = basis.dimension() == 2;
  out << (two_d ? "x,y,h_t,mu0_density\n" : "x,h_t,mu0_density\n");
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double p0 = basis.eigenfunctions()(0, static_cast<Eigen::Index>(i));
    out << basis.grid()[i].x << ',';
    if (two_d) out << basis.grid()[i].y << ',';
    out << h.h[i] << ',' << p0 * p0 * basis.mu_density()[i] << '\n';
  }
}

}  // namespace cemlab

#pragma once

// The limit constant I of t^2 W2(mu_t^nu, mu_0)^2 (Dirichlet) and its Neumann
// counterpart for the mean empirical measure.

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cemlab/errors.hpp"
#include "cemlab/projection.hpp"
#include "cemlab/tail.hpp"

namespace cemlab {

enum class Finiteness { guaranteed_low_dimension, guaranteed_integrable_density, not_guaranteed };

inline std::string to_string(Finiteness f) {
  switch (f) {
    case Finiteness::guaranteed_low_dimension:
      return "guaranteed(d<=6)";
    case Finiteness::guaranteed_integrable_density:
      return "guaranteed(h in L^{2d/(d+6)})";
    default:
      return "not-guaranteed";
  }
}

struct LimitReport {
  std::string kind;  // "dirichlet" or "neumann"
  double I_value = 0.0;
  std::vector<double> partial_sums;  // partial_sums[k] = sum over modes 1..k
  double tail_bound = 0.0;
  double tolerance = 0.0;
  bool positivity_flag = true;
  bool admissible = true;  // false when the sum vanishes numerically
  std::string diagnostic;
  Finiteness finiteness = Finiteness::guaranteed_low_dimension;
  std::vector<double> nu_coefficients, mu_coefficients, eigenvalues;
};

namespace detail {

inline WeylBound weyl_from_eigenvalues(const std::vector<double>& lam, int dimension) {
  WeylBound w;
  w.exponent = 2.0 / dimension;
  for (double l : lam) w.known.push_back(l - lam[0]);
  double c = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m < lam.size(); ++m) c = std::min(c, w.known[m] / std::pow(double(m), w.exponent));
  require(std::isfinite(c) && c > 0.0, "limit constant: need at least two distinct eigenvalues");
  w.c = 0.9 * c;
  return w;
}

}  // namespace detail

/// I = {mu(phi_0) nu(phi_0)}^{-2} sum_{m >= 1} {nu(phi_0) mu(phi_m) + mu(phi_0) nu(phi_m)}^2 / (lambda_m - lambda_0)^3.
inline LimitReport compute_I(const ModeCoefficients& nu, const ModeCoefficients& mu,
                             const std::vector<double>& eigenvalues, int dimension = 1, double tol = 1e-8) {
  const std::size_t M = eigenvalues.size();
  detail::require(M >= 2 && nu.size() == M && mu.size() == M, "compute_I: coefficient/eigenvalue size mismatch");
  if (!(nu[0] > 0.0)) throw InvalidArgument("compute_I: nu(phi_0) <= 0, nu is not in P_0 numerically");
  detail::require(mu[0] > 0.0, "compute_I: mu(phi_0) must be > 0");
  LimitReport r;
  r.kind = "dirichlet";
  r.tolerance = tol;
  r.nu_coefficients = nu.values;
  r.mu_coefficients = mu.values;
  r.eigenvalues = eigenvalues;
  const double pref = 1.0 / std::pow(mu[0] * nu[0], 2);
  std::vector<double> comb(M, 0.0);
  double s = 0.0;
  r.partial_sums.push_back(0.0);
  for (std::size_t m = 1; m < M; ++m) {
    const double a = eigenvalues[m] - eigenvalues[0];
    detail::require(a > 0.0, "compute_I: spectral gap must be positive");
    comb[m] = nu[0] * mu[m] + mu[0] * nu[m];
    s += pref * comb[m] * comb[m] / (a * a * a);
    r.partial_sums.push_back(s);
  }
  const WeylBound w = detail::weyl_from_eigenvalues(eigenvalues, dimension);
  const PowerEnvelope env = fit_envelope(comb);
  r.tail_bound = pref * tail_sum([&](double m) { return std::pow(env(m), 2) / std::pow(w(int(m)), 3); }, int(M));
  r.I_value = s;
  if (s < 1e-14) {
    r.positivity_flag = false;
    r.admissible = false;
    r.diagnostic = "sum vanishes: nu is not an admissible probability measure (the limit is positive on P_0)";
  }
  if (!(r.tail_bound <= tol))
    throw TruncationError("compute_I: tail bound " + std::to_string(r.tail_bound) + " exceeds tolerance");
  return r;
}

/// Neumann limit sum_{m >= 1} nu(phi_m)^2 / lambda_m^3.
inline LimitReport compute_I_neumann(const ModeCoefficients& nu, const std::vector<double>& eigenvalues,
                                     int dimension = 1, double tol = 1e-8) {
  const std::size_t M = eigenvalues.size();
  detail::require(M >= 2 && nu.size() == M, "compute_I_neumann: coefficient/eigenvalue size mismatch");
  if (std::abs(eigenvalues[0]) > 1e-9) throw InvalidArgument("compute_I_neumann: basis is not Neumann (lambda_0 != 0)");
  LimitReport r;
  r.kind = "neumann";
  r.tolerance = tol;
  r.nu_coefficients = nu.values;
  r.eigenvalues = eigenvalues;
  double s = 0.0, max_c = 0.0;
  r.partial_sums.push_back(0.0);
  for (std::size_t m = 1; m < M; ++m) {
    detail::require(eigenvalues[m] > 0.0, "compute_I_neumann: lambda_m must be > 0 for m >= 1");
    s += nu[m] * nu[m] / std::pow(eigenvalues[m], 3);
    max_c = std::max(max_c, std::abs(nu[m]));
    r.partial_sums.push_back(s);
  }
  const WeylBound w = detail::weyl_from_eigenvalues(eigenvalues, dimension);
  const PowerEnvelope env = fit_envelope(nu.values);
  r.tail_bound = tail_sum([&](double m) { return std::pow(env(m), 2) / std::pow(w(int(m)), 3); }, int(M));
  r.I_value = s;
  if (max_c <= 1e-10) {
    r.I_value = 0.0;
    r.positivity_flag = false;
    r.diagnostic = "nu coincides with mu to coefficient tolerance; the limit is zero";
  }
  if (!(r.tail_bound <= tol))
    throw TruncationError("compute_I_neumann: tail bound " + std::to_string(r.tail_bound) + " exceeds tolerance");
  return r;
}

/// Sufficient condition for I < infinity: d <= 6, or a density h in L^{2d/(d+6)}(mu).
inline Finiteness finiteness_predicate(int d, const InitialDistribution& nu, const SpectralBasis* basis = nullptr) {
  detail::require(d >= 1, "finiteness_predicate: d must be >= 1");
  if (d <= 6) return Finiteness::guaranteed_low_dimension;
  if (nu.is_point()) return Finiteness::not_guaranteed;
  const double p = 2.0 * d / (d + 6.0);
  detail::require(basis != nullptr, "finiteness_predicate: densities need their basis");
  const std::vector<double> h = density_on_grid(nu, *basis);
  const std::vector<double>& w = basis->weights();
  double norm = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) norm += std::pow(std::abs(h[i]), p) * w[i];
  return std::isfinite(norm) ? Finiteness::guaranteed_integrable_density : Finiteness::not_guaranteed;
}

/// Variant without a basis for dimension-only classification or when the
/// L^p norm has been computed elsewhere.
inline Finiteness finiteness_predicate(int d, bool has_density, double lp_norm) {
  detail::require(d >= 1, "finiteness_predicate: d must be >= 1");
  if (d <= 6) return Finiteness::guaranteed_low_dimension;
  if (has_density && std::isfinite(lp_norm)) return Finiteness::guaranteed_integrable_density;
  return Finiteness::not_guaranteed;
}

inline nlohmann::json limit_report_to_json(const LimitReport& r) {
  return {{"kind", r.kind},
          {"I", r.I_value},
          {"tail_bound", r.tail_bound},
          {"tolerance", r.tolerance},
          {"positivity_flag", r.positivity_flag},
          {"admissible", r.admissible},
          {"diagnostic", r.diagnostic},
          {"finiteness", to_string(r.finiteness)},
          {"partial_sums", r.partial_sums},
          {"inputs",
           {{"nu_coefficients", r.nu_coefficients},
            {"mu_coefficients", r.mu_coefficients},
            {"eigenvalues", r.eigenvalues}}}};
}

}  // namespace cemlab

// Acceptance run: one PASS/FAIL line per criterion; exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "cemlab/cemlab.hpp"

using namespace cemlab;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ExperimentConfig base_config(int modes) {
  return parse_config({{"version", kConfigFormat}, {"basis", {{"modes", modes}}}});
}

GridMeasure random_density(std::mt19937_64& rng, int n = 41) {
  std::uniform_real_distribution<double> u(0.05, 2.0);
  std::vector<double> x(n), f(n);
  for (int i = 0; i < n; ++i) {
    x[i] = static_cast<double>(i) / (n - 1);
    f[i] = u(rng);
  }
  double mass = 0.0;
  for (int i = 1; i < n; ++i) mass += 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1]);
  for (double& v : f) v /= mass;
  return GridMeasure::piecewise_linear(x, f);
}

// 1. Sturm-Liouville eigenbasis for V = 0.
void eigenbasis_fidelity(Outcome& o) {
  const auto t0 = Clock::now();
  const SpectralBasis b = solve_sturm_liouville(Domain::interval(0, 1, Boundary::dirichlet), 20, 2000);
  double err = 0.0;
  for (int m = 0; m < 20; ++m) {
    const double exact = (m + 1.0) * (m + 1.0) * kPi * kPi;
    err = std::max(err, std::abs(b.eigenvalues()[m] - exact) / exact);
  }
  const double secs = seconds_since(t0);
  o.detail << "max rel eigenvalue error " << err << ", orthonormality " << b.orthonormality_residual() << ", "
           << secs << " s";
  o.check(err <= 1e-6, "eigenvalues within 1e-6");
  o.check(b.orthonormality_residual() <= 1e-8, "orthonormality residual <= 1e-8");
  o.check(secs < 5.0, "runtime < 5 s");
}

// 2. Neumann closed form 2/945 for a start at the endpoint.
void neumann_closed_form(Outcome& o) {
  const auto t0 = Clock::now();
  const double exact = 2.0 / 945.0, t = 16.0;
  const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::neumann), 2000);
  const ModeCoefficients nu = project(InitialDistribution::point({0.0, 0.0}), b);
  const LimitReport lim = compute_I_neumann(nu, b.eigenvalues());
  const GridFunction g = mean_empirical_density(nu, b, t);
  const TransportResult w = w2_quantile_1d(GridMeasure::from_basis(b, g.values, Reference::mu0), GridMeasure::mu0(b));
  const double rel = std::abs(t * t * w.w2_squared - exact) / exact;
  const double secs = seconds_since(t0);
  o.detail << "I = " << lim.I_value << " (|I - 2/945| = " << std::abs(lim.I_value - exact) << "), t^2 W2^2 at t=16 = "
           << t * t * w.w2_squared << " (rel " << rel << "), series tail " << g.truncation.tail_estimate << ", " << secs
           << " s";
  o.check(std::abs(lim.I_value - exact) <= 1e-9, "I within 1e-9 of 2/945");
  o.check(g.truncation.accepted(), "series tail within tolerance");
  o.check(rel <= 0.02, "pipeline within 2%");
  o.check(secs < 60.0, "runtime < 1 min");
}

// 3. Dirichlet limit for the uniform start.
void dirichlet_limit(Outcome& o) {
  const auto t0 = Clock::now();
  long double s = 0.0L;
  for (long k = 3; k < 200001; k += 2) {
    const long double k2 = static_cast<long double>(k) * k;
    s += 1.0L / (k2 * (k2 - 1) * (k2 - 1) * (k2 - 1));
  }
  const double oracle = static_cast<double>(4.0L * s / std::pow(static_cast<long double>(kPi), 6));
  ExperimentConfig c = base_config(128);
  c.quantile_nodes = 100000;
  const ConvergenceReport r = run_convergence(c);
  bool monotone = true;
  for (std::size_t k = 1; k < r.rows.size(); ++k)
    monotone = monotone && std::abs(r.rows[k].relative_gap) < std::abs(r.rows[k - 1].relative_gap);
  const double last = r.rows.back().relative_gap;
  const double secs = seconds_since(t0);
  o.detail << "I = " << r.limit.I_value << " (oracle diff " << std::abs(r.limit.I_value - oracle) << "), gaps";
  for (const auto& row : r.rows) o.detail << " t=" << row.t << ":" << row.relative_gap;
  o.detail << ", exponent " << r.gap_exponent << ", " << secs << " s";
  o.check(std::abs(r.limit.I_value - oracle) <= 1e-12, "compute_I within 1e-12 of the oracle");
  o.check(monotone, "relative gap decreasing");
  o.check(r.rows.back().t == 16.0 && std::abs(last) <= 0.1, "|gap| <= 0.1 at t = 16");
  o.check(r.gap_exponent >= 0.7 && r.gap_exponent <= 1.3, "gap exponent in [0.7, 1.3]");
  o.check(secs < 300.0, "runtime < 5 min");
}

// 4. Sandwich lower <= W2^2 <= upper.
void sandwich(Outcome& o) {
  const ExperimentConfig c = base_config(128);
  o.detail << std::setprecision(10);
  for (double t : {2.0, 4.0, 8.0}) {
    const SandwichRow r = run_sandwich(c, t);
    o.detail << "t=" << t << ": " << r.lower << " < " << r.w2_squared << " < " << r.upper << "; ";
    o.check(r.lower < r.w2_squared - r.w2_sq_error && r.w2_squared + r.w2_sq_error < r.upper,
            "strict ordering at t = " + std::to_string(t));
    if (t == 8.0) {
      const double ratio = r.upper / r.w2_squared;
      o.detail << "upper/W2^2 at t=8 = " << ratio;
      o.check(ratio >= 1.0 && ratio <= 2.0, "upper/W2^2 in [1, 2] at t = 8");
    }
  }
}

// 5. Quantile, exact and entropic W2 agree; metric axioms.
void cross_method(Outcome& o) {
  std::mt19937_64 rng(23);
  ExperimentConfig c;
  c.atoms = 256;
  double worst = 0.0;
  auto agree = [&](const TransportResult& a, const TransportResult& b) {
    const double r = std::abs(a.w2_squared - b.w2_squared) / (a.error_estimate + b.error_estimate);
    worst = std::max(worst, r);
    return r <= 1.0;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const GridMeasure a = random_density(rng), b = random_density(rng);
    TransportResult r[3];
    int k = 0;
    for (const char* m : {"quantile", "exact", "entropic"}) {
      c.w2_method = m;
      r[k++] = detail::w2_by_method(a, b, c);
    }
    o.check(agree(r[0], r[1]) && agree(r[0], r[2]) && agree(r[1], r[2]), "pair " + std::to_string(trial));
  }
  o.detail << "max |difference| / combined error " << worst;
  double asym = 0.0, self = 0.0, triangle = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const GridMeasure a = random_density(rng), b = random_density(rng), d = random_density(rng);
    for (const char* m : {"quantile", "exact", "entropic"}) {
      c.w2_method = m;
      const TransportResult ab = detail::w2_by_method(a, b, c), ba = detail::w2_by_method(b, a, c);
      const TransportResult aa = detail::w2_by_method(a, a, c);
      const TransportResult ad = detail::w2_by_method(a, d, c), db = detail::w2_by_method(d, b, c);
      asym = std::max(asym, std::abs(ab.w2 - ba.w2) - (ab.w2_error + ba.w2_error));
      self = std::max(self, aa.w2 - aa.w2_error);
      triangle = std::max(triangle, ab.w2 - ad.w2 - db.w2 - (ab.w2_error + ad.w2_error + db.w2_error));
    }
  }
  o.detail << "; axiom excess beyond error bars: symmetry " << asym << ", identity " << self << ", triangle "
           << triangle;
  o.check(asym <= 1e-12, "symmetry");
  o.check(self <= 1e-12, "identity");
  o.check(triangle <= 1e-12, "triangle inequality");
}

// 6. Monte Carlo consistency.
void monte_carlo(Outcome& o) {
  const auto t0 = Clock::now();
  const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::dirichlet), 128);
  SimulationConfig kill;
  kill.rule = BoundaryRule::kill;
  kill.n_paths = 100000;
  kill.dt = 1e-3;
  kill.horizon = 0.8;
  kill.seed = 2024;
  kill.initial = InitialDistribution::mu(b);
  kill.record_times = {0.2, 0.4, 0.6, 0.8};
  const PathEnsembleSummary ks = simulate(kill, &b);
  const double slope = survival_rate(ks.record_times, ks.survival_curve);
  const double slope_rel = std::abs(slope / (-kPi * kPi) - 1.0);
  o.detail << "survival slope " << slope << " (rel " << slope_rel << ")";
  o.check(slope_rel <= 0.05, "survival slope within 5% of -pi^2");

  ExperimentConfig c = parse_config({{"version", kConfigFormat},
                                     {"basis", {{"modes", 128}}},
                                     {"mc", {{"rule", "fleming-viot"}, {"horizon", 2.0}, {"n_paths", 100000}}},
                                     {"seed", 2024}});
  const CrosscheckReport r = run_mc_crosscheck(c);
  o.detail << "; t=2 occupation vs spectral W1 " << r.w1_spectral << " (SE " << r.w1_se << ")"
           << "; final law vs phi_0 mu/mu(phi_0) W1 " << r.w1_final_qsd << " (SE " << r.w1_final_se << ")"
           << "; occupation vs mu_0 W1 " << r.w1_occ_mu0 << "; W1(phi_0 mu/mu(phi_0), mu_0) " << r.w1_qsd_mu0;
  o.check(r.w1_spectral <= 3.0 * r.w1_se, "occupation within 3 SE of h_t mu_0");
  o.check(r.w1_final_qsd <= 3.0 * r.w1_final_se, "single-time law within 3 SE of phi_0 mu / mu(phi_0)");
  o.check(r.w1_final_qsd < 0.1 * r.w1_qsd_mu0, "single-time law separated from mu_0");
  o.check(r.w1_occ_mu0 < 0.25 * r.w1_qsd_mu0, "occupation separated from phi_0 mu / mu(phi_0)");
  const double secs = seconds_since(t0);
  o.detail << "; " << secs << " s";
  o.check(secs < 600.0, "runtime < 10 min");
}

// 7. Invariants, rechecked in-process (the full suites run under ctest).
void invariants(Outcome& o) {
  const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::dirichlet), 64);
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  o.check(b.orthonormality_residual() <= 1e-10, "orthonormality");
  double mass_err = 0.0, rt_mean = 0.0;
  for (double t : {0.5, 2.0, 8.0}) {
    const ConditionalDensity d = conditional_density(InitialDistribution::mu(b), b, t);
    double m = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) m += d.h[i] * b.mu0_weights()[i];
    mass_err = std::max(mass_err, std::abs(m - 1.0));
    const GridFunction r = rho_tilde(mu, mu, b, t, d.normalization);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) s += r.values[i] * b.mu0_weights()[i];
    rt_mean = std::max(rt_mean, std::abs(s));
  }
  o.check(mass_err <= 1e-10, "mass conservation");
  o.check(rt_mean <= 1e-10, "mu_0(rho~) = 0");
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  ModeCoefficients c{std::vector<double>(64, 0.0), "random"};
  for (int m = 0; m < 8; ++m) c.values[m] = g(rng);
  const std::vector<double> pt = apply_ground_semigroup(c, b, 0.2);
  const std::vector<double> pst = apply_ground_semigroup(ground_coefficients(pt, b), b, 0.3);
  const std::vector<double> direct = apply_ground_semigroup(c, b, 0.5);
  double sg = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) sg = std::max(sg, std::abs(pst[i] - direct[i]));
  o.check(sg <= 1e-8, "semigroup property");
  double branch = 0.0;
  for (double d : {1e-8, -1e-8})
    for (double t : {0.5, 2.0}) {
      const double a = 10.0 + d;
      branch = std::max(branch, std::abs(detail::time_integral_taylor(a, 10.0, t) /
                                             detail::time_integral_closed(a, 10.0, t) - 1.0));
    }
  o.check(branch <= 1e-12, "degenerate-branch continuity");
  bool tails = true;
  double prev_I = 0.0, prev_tail = 0.0;
  for (int M : {32, 64, 128}) {
    const SpectralBasis bm = build_analytic_basis(Domain::interval(0, 1, Boundary::dirichlet), M);
    const ModeCoefficients mm = project(InitialDistribution::mu(bm), bm);
    const LimitReport r = compute_I(project(InitialDistribution::point({0.3, 0.0}), bm), mm, bm.eigenvalues(), 1, 1.0);
    if (M > 32) tails = tails && std::abs(r.I_value - prev_I) <= prev_tail;
    prev_I = r.I_value;
    prev_tail = r.tail_bound;
  }
  o.check(tails, "tail bound under mode doubling");
  SimulationConfig s;
  s.n_paths = 4000;
  s.horizon = 0.2;
  s.chunk_size = 500;
  s.initial = InitialDistribution::mu(b);
  const PathEnsembleSummary e1 = simulate(s, &b), e2 = simulate(s, &b);
  s.workers = 3;
  const PathEnsembleSummary e3 = simulate(s, &b);
  o.check(e1.occupation == e2.occupation && e1.survival_count == e2.survival_count, "seed determinism");
  o.check(e1.occupation == e3.occupation && e1.occupation_se == e3.occupation_se, "worker-count independence");
  o.detail << "mass " << mass_err << ", mu_0(rho~) " << rt_mean << ", semigroup " << sg << ", branch " << branch;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"eigenbasis fidelity", eigenbasis_fidelity},   {"Neumann closed form", neumann_closed_form},
      {"Dirichlet limit", dirichlet_limit},           {"sandwich", sandwich},
      {"cross-method W2 agreement", cross_method},    {"Monte Carlo consistency", monte_carlo},
      {"invariant suites", invariants}};
  int failed = 0, n = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failed;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", ++n, name, o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed;
}

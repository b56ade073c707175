#pragma once

// Experiment runner: versioned configuration, convergence studies of
// t^2 W2(mu_t^nu, mu_0)^2, sandwich reports and Monte Carlo cross-checks.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cemlab/basis_io.hpp"
#include "cemlab/errors.hpp"
#include "cemlab/grid_measure.hpp"
#include "cemlab/limit_constant.hpp"
#include "cemlab/mc.hpp"
#include "cemlab/projection.hpp"
#include "cemlab/semigroup.hpp"
#include "cemlab/spectral_basis.hpp"
#include "cemlab/transport_bounds.hpp"
#include "cemlab/wasserstein.hpp"

namespace cemlab {

inline constexpr const char* kConfigFormat = "cemlab-config/1";
inline constexpr const char* kConvergenceFormat = "cemlab-convergence/1";
inline constexpr const char* kSandwichFormat = "cemlab-sandwich/1";
inline constexpr const char* kCrosscheckFormat = "cemlab-mc-crosscheck/1";

struct NuSpec {
  std::string kind = "mu";  // mu | mu0 | point | grid_density
  Point x0;
  bool time_shift = true;   // point masses: replace nu by nu_eps with eps = t^{-2}
  std::vector<double> nodes, values;
};

struct McSettings {
  BoundaryRule rule = BoundaryRule::fleming_viot;
  double dt = 1e-3;
  double horizon = 2.0;
  long n_paths = 100000;
  long chunk_size = 5000;
  int n_bins = 256;
  int resamples = 200;
  bool dt_halving = false;
};

struct GapTolerance {
  double c = 0.7;      // tolerance(t) = max(floor, c / t)
  double floor = 0.1;
  double operator()(double t) const { return std::max(floor, c / t); }
};

struct ExperimentConfig {
  std::string version = kConfigFormat;
  Domain domain = Domain::interval(0.0, 1.0, Boundary::dirichlet);
  std::string basis_method = "auto";  // auto | analytic | sturm-liouville
  int modes = 128;
  int n_grid = 0;
  NuSpec nu;
  std::vector<double> times{2.0, 4.0, 8.0, 16.0};
  double series_tol = 1e-4;
  double limit_tol = 1e-8;
  std::string w2_method = "quantile";  // quantile | exact | entropic
  long quantile_nodes = 100000;
  int atoms = 256;
  std::vector<double> betas{0.0, 0.025, 0.05};
  GapTolerance gap_tolerance;
  std::optional<McSettings> mc;
  std::string out_dir = ".";
  std::string prefix = "cemlab";
  std::uint64_t seed = 0;
  int workers = 1;
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw InvalidArgument("config: unknown key '" + k + "' in " + where);
}

// Two columns x,value; '#' comments and a non-numeric header line are skipped.
inline void read_two_columns(const std::string& path, std::vector<double>& x, std::vector<double>& v) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: referenced file does not exist: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a, b;
    if (!(ss >> a >> b)) {
      if (x.empty()) continue;
      throw InvalidArgument("config: malformed row in " + path + ": " + line);
    }
    x.push_back(a);
    v.push_back(b);
  }
}

inline std::string resolve(const std::string& base, const std::string& p) {
  namespace fs = std::filesystem;
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? p : (fs::path(base) / path).string();
}

inline json potential_json(const Potential& v) {
  if (v.is_zero()) return {{"kind", "zero"}};
  return {{"kind", "tabulated"}, {"nodes", v.nodes()}, {"values", v.values()}};
}

}  // namespace detail

/// Parses a configuration document; relative file references are resolved
/// against `base_dir`. Unknown keys are rejected at every level.
inline ExperimentConfig parse_config(const json& j, const std::string& base_dir = "") {
  using detail::check_keys;
  check_keys(j, {"version", "domain", "boundary", "potential", "basis", "nu", "times", "tol", "transport",
                 "gap_tolerance", "mc", "output", "seed", "workers"},
             "top level");
  ExperimentConfig c;
  if (!j.contains("version")) throw InvalidArgument("config: missing version tag");
  c.version = j.at("version").get<std::string>();
  if (c.version != kConfigFormat) throw InvalidArgument("config: unrecognized version tag '" + c.version + "'");

  Boundary bc = Boundary::dirichlet;
  if (j.contains("boundary")) bc = boundary_from_string(j.at("boundary").get<std::string>());
  Potential V;
  if (j.contains("potential")) {
    const json& p = j.at("potential");
    check_keys(p, {"kind", "nodes", "values", "path"}, "potential");
    const std::string kind = p.value("kind", "zero");
    if (kind == "tabulated") {
      V = Potential::tabulated(p.at("nodes").get<std::vector<double>>(), p.at("values").get<std::vector<double>>());
    } else if (kind == "file") {
      std::vector<double> x, v;
      detail::read_two_columns(detail::resolve(base_dir, p.at("path").get<std::string>()), x, v);
      V = Potential::tabulated(std::move(x), std::move(v));
    } else if (kind != "zero") {
      throw InvalidArgument("config: unknown potential kind '" + kind + "'");
    }
  }
  if (j.contains("domain")) {
    const json& d = j.at("domain");
    check_keys(d, {"kind", "x", "y"}, "domain");
    const std::string kind = d.value("kind", "interval");
    const auto x = d.value("x", std::vector<double>{0.0, 1.0});
    detail::require(x.size() == 2, "config: domain.x must be [a, b]");
    if (kind == "interval") {
      c.domain = Domain::interval(x[0], x[1], bc, V);
    } else if (kind == "rectangle") {
      const auto y = d.value("y", std::vector<double>{0.0, 1.0});
      detail::require(y.size() == 2, "config: domain.y must be [c, d]");
      detail::require(V.is_zero(), "config: rectangle requires zero potential");
      c.domain = Domain::rectangle(x[0], x[1], y[0], y[1], bc);
    } else {
      throw InvalidArgument("config: unknown domain kind '" + kind + "'");
    }
  } else {
    c.domain = Domain::interval(0.0, 1.0, bc, V);
  }
  if (j.contains("basis")) {
    const json& b = j.at("basis");
    check_keys(b, {"method", "modes", "grid"}, "basis");
    c.basis_method = b.value("method", c.basis_method);
    c.modes = b.value("modes", c.modes);
    c.n_grid = b.value("grid", c.n_grid);
    if (c.basis_method != "auto" && c.basis_method != "analytic" && c.basis_method != "sturm-liouville")
      throw InvalidArgument("config: unknown basis method '" + c.basis_method + "'");
    detail::require(c.modes >= 2, "config: basis.modes must be >= 2");
  }
  if (j.contains("nu")) {
    const json& n = j.at("nu");
    check_keys(n, {"kind", "x", "y", "nodes", "values", "path", "shift"}, "nu");
    c.nu.kind = n.value("kind", "mu");
    if (c.nu.kind == "point") {
      c.nu.x0 = {n.at("x").get<double>(), n.value("y", 0.0)};
      const std::string shift = n.value("shift", "t^-2");
      if (shift != "t^-2" && shift != "none") throw InvalidArgument("config: nu.shift must be 't^-2' or 'none'");
      c.nu.time_shift = shift == "t^-2";
    } else if (c.nu.kind == "grid_density") {
      if (n.contains("path")) {
        detail::read_two_columns(detail::resolve(base_dir, n.at("path").get<std::string>()), c.nu.nodes, c.nu.values);
      } else {
        c.nu.nodes = n.at("nodes").get<std::vector<double>>();
        c.nu.values = n.at("values").get<std::vector<double>>();
      }
    } else if (c.nu.kind != "mu" && c.nu.kind != "mu0") {
      throw InvalidArgument("config: unknown nu kind '" + c.nu.kind + "'");
    }
  }
  if (j.contains("times")) c.times = j.at("times").get<std::vector<double>>();
  detail::require(!c.times.empty(), "config: times must not be empty");
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    detail::require(c.times[i] > 0.0, "config: times must be > 0");
    if (i > 0) detail::require(c.times[i] > c.times[i - 1], "config: times must be strictly increasing");
  }
  if (j.contains("tol")) {
    const json& t = j.at("tol");
    check_keys(t, {"series", "limit"}, "tol");
    c.series_tol = t.value("series", c.series_tol);
    c.limit_tol = t.value("limit", c.limit_tol);
  }
  if (j.contains("transport")) {
    const json& t = j.at("transport");
    check_keys(t, {"method", "quantile_nodes", "atoms", "betas"}, "transport");
    c.w2_method = t.value("method", c.w2_method);
    c.quantile_nodes = t.value("quantile_nodes", c.quantile_nodes);
    c.atoms = t.value("atoms", c.atoms);
    c.betas = t.value("betas", c.betas);
    if (c.w2_method != "quantile" && c.w2_method != "exact" && c.w2_method != "entropic")
      throw InvalidArgument("config: unknown transport method '" + c.w2_method + "'");
  }
  if (j.contains("gap_tolerance")) {
    const json& g = j.at("gap_tolerance");
    check_keys(g, {"c", "floor"}, "gap_tolerance");
    c.gap_tolerance.c = g.value("c", c.gap_tolerance.c);
    c.gap_tolerance.floor = g.value("floor", c.gap_tolerance.floor);
  }
  if (j.contains("mc")) {
    const json& m = j.at("mc");
    check_keys(m, {"rule", "dt", "horizon", "n_paths", "chunk_size", "n_bins", "resamples", "dt_halving"}, "mc");
    McSettings s;
    if (m.contains("rule")) s.rule = boundary_rule_from_string(m.at("rule").get<std::string>());
    s.dt = m.value("dt", s.dt);
    s.horizon = m.value("horizon", s.horizon);
    s.n_paths = m.value("n_paths", s.n_paths);
    s.chunk_size = m.value("chunk_size", s.chunk_size);
    s.n_bins = m.value("n_bins", s.n_bins);
    s.resamples = m.value("resamples", s.resamples);
    s.dt_halving = m.value("dt_halving", s.dt_halving);
    c.mc = s;
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, {"dir", "prefix"}, "output");
    c.out_dir = o.value("dir", c.out_dir);
    c.prefix = o.value("prefix", c.prefix);
  }
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  detail::require(c.workers >= 1, "config: workers must be >= 1");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_json_file(path), std::filesystem::path(path).parent_path().string());
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["version"] = c.version;
  j["domain"] = {{"kind", to_string(c.domain.kind)}, {"x", {c.domain.a, c.domain.b}}};
  if (c.domain.kind == DomainKind::rectangle) j["domain"]["y"] = {c.domain.c, c.domain.d};
  j["boundary"] = to_string(c.domain.boundary);
  j["potential"] = detail::potential_json(c.domain.potential);
  j["basis"] = {{"method", c.basis_method}, {"modes", c.modes}, {"grid", c.n_grid}};
  json nu = {{"kind", c.nu.kind}};
  if (c.nu.kind == "point") {
    nu["x"] = c.nu.x0.x;
    nu["shift"] = c.nu.time_shift ? "t^-2" : "none";
    if (c.domain.kind == DomainKind::rectangle) nu["y"] = c.nu.x0.y;
  }
  if (c.nu.kind == "grid_density") {
    nu["nodes"] = c.nu.nodes;
    nu["values"] = c.nu.values;
  }
  j["nu"] = nu;
  j["times"] = c.times;
  j["tol"] = {{"series", c.series_tol}, {"limit", c.limit_tol}};
  j["transport"] = {{"method", c.w2_method}, {"quantile_nodes", c.quantile_nodes}, {"atoms", c.atoms}, {"betas", c.betas}};
  j["gap_tolerance"] = {{"c", c.gap_tolerance.c}, {"floor", c.gap_tolerance.floor}};
  if (c.mc)
    j["mc"] = {{"rule", to_string(c.mc->rule)}, {"dt", c.mc->dt},         {"horizon", c.mc->horizon},
               {"n_paths", c.mc->n_paths},      {"chunk_size", c.mc->chunk_size}, {"n_bins", c.mc->n_bins},
               {"resamples", c.mc->resamples},  {"dt_halving", c.mc->dt_halving}};
  j["output"] = {{"dir", c.out_dir}, {"prefix", c.prefix}};
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  return j;
}

inline SpectralBasis basis_for(const ExperimentConfig& c) {
  if (c.basis_method == "analytic") return build_analytic_basis(c.domain, c.modes, c.n_grid);
  if (c.basis_method == "sturm-liouville")
    return solve_sturm_liouville(c.domain, c.modes, c.n_grid > 0 ? c.n_grid : std::max(8 * c.modes, 512));
  return build_basis(c.domain, c.modes, c.n_grid);
}

inline InitialDistribution initial_for(const NuSpec& nu, const SpectralBasis& basis) {
  if (nu.kind == "mu") return InitialDistribution::mu(basis);
  if (nu.kind == "mu0") return InitialDistribution::mu0(basis);
  if (nu.kind == "point") return InitialDistribution::point(nu.x0);
  return InitialDistribution::grid_density(nu.nodes, nu.values);
}

// ---------------------------------------------------------------------------
// Reports

struct ConvergenceRow {
  double t = 0.0;
  double w2 = 0.0, w2_squared = 0.0, w2_sq_error = 0.0;
  double scaled = 0.0;  // t^2 W2^2
  double I = 0.0;
  double relative_gap = 0.0;
  double gap_tolerance = 0.0;
  double upper = 0.0, upper_boundary_strip = 0.0;
  int upper_excluded = 0;
  double lower = 0.0;
  std::string w2_method, lower_method;
  double series_tail = 0.0, limit_tail = 0.0;
  int modes = 0;
  double eps_shift = 0.0;
  double min_h = 0.0;
  std::uint64_t seed = 0;
};

struct ConvergenceReport {
  std::string kind;  // dirichlet | neumann
  std::vector<ConvergenceRow> rows;
  LimitReport limit;
  double gap_exponent = 0.0;  // p in |gap| ~ t^{-p}
  double gap_constant = 0.0;  // c in gap ~ c / t
  bool tail_monotone = true;  // |gap| nonincreasing over the last three rows
  json config;
};

struct SandwichRow {
  double t = 0.0;
  double lower = 0.0;
  std::string lower_method, lower_potential;
  double lower_scale = 0.0;
  double w2_squared = 0.0, w2_sq_error = 0.0;
  std::string w2_method;
  double upper = 0.0, upper_boundary_strip = 0.0;
  int upper_excluded = 0;
  double series_tail = 0.0;
  bool ordered = false;
};

namespace detail {

// Runs f(i) for i in [0, n) on up to `workers` threads; errors are rethrown
// in index order.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  std::vector<std::exception_ptr> err(n);
  auto body = [&](std::size_t i) {
    try {
      f(i);
    } catch (...) {
      err[i] = std::current_exception();
    }
  };
  const std::size_t W = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (W <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < W; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += W) body(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : err)
    if (e) std::rethrow_exception(e);
}

inline std::string annotate(double t, const std::exception& e) {
  std::ostringstream os;
  os << "t=" << t << ": " << e.what();
  return os.str();
}

// Rethrows with the failing time prefixed, preserving the error category.
[[noreturn]] inline void rethrow_annotated(double t) {
  try {
    throw;
  } catch (const TruncationError& e) {
    throw TruncationError(annotate(t, e));
  } catch (const InsufficientSamples& e) {
    throw InsufficientSamples(annotate(t, e));
  } catch (const NumericalError& e) {
    throw NumericalError(annotate(t, e));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(annotate(t, e));
  } catch (const std::exception& e) {
    throw Error(annotate(t, e));
  }
}

inline TransportResult w2_by_method(const GridMeasure& m1, const GridMeasure& m2, const ExperimentConfig& c) {
  if (m1.dimension == 1 && c.w2_method == "quantile") return w2_quantile_1d(m1, m2, c.quantile_nodes);
  if (c.w2_method == "exact") {
    if (m1.dimension == 1) {
      const Atomization A = atomize(m1, c.atoms), B = atomize(m2, c.atoms);
      TransportResult r = w2_exact_discrete(A.atoms, B.atoms);
      const double w_err = A.w2_bound + B.w2_bound;
      r.w2_error = w_err;
      r.error_estimate = (2.0 * r.w2 + w_err) * w_err;
      r.plan.clear();
      return r;
    }
    TransportResult r = w2_exact_discrete(m1, m2);
    r.plan.clear();
    return r;
  }
  return w2_entropic(m1, m2, EntropicOptions{}, c.atoms);
}

// Dual candidates: L_0^{-1} rho mollified by P^0_{t^{-beta}} for each beta,
// then the semigroup-smoothed variant (eps = t^{-3/2}) of the best one.
inline DualLowerBound dual_lower_for(const GridMeasure& m0, const GridMeasure& mt, const SpectralBasis& basis,
                                     const ModeCoefficients& rho_ground, double t, const std::vector<double>& betas) {
  const auto a = basis.gaps();
  DualLowerBound best;
  best.method = "trivial";
  std::optional<DualPotential> best_f;
  for (double beta : betas.empty() ? std::vector<double>{0.0} : betas) {
    ModeCoefficients c = rho_ground;
    const double s = beta > 0.0 ? std::pow(t, -beta) : 0.0;
    for (int m = 0; m < basis.modes(); ++m) c.values[m] *= std::exp(-a[m] * s);
    DualPotential f = inverse_generator_potential(basis, c);
    std::ostringstream name;
    name << f.name << "(beta=" << beta << ")";
    f.name = name.str();
    const DualLowerBound b = kantorovich_dual_lower(m0, mt, f);
    if (!best_f || b.lower > best.lower) {
      best = b;
      best_f = std::move(f);
    }
  }
  DualPotential g;
  if (smoothed_potential(basis, *best_f, std::pow(t, -1.5), 1.0, g)) {
    g.name = "smoothed:" + best_f->name;
    const DualLowerBound b = kantorovich_dual_lower(m0, mt, g);
    if (b.lower > best.lower) best = b;
  }
  return best;
}

// Relative gaps below this are rounding noise: the scaled distance already
// equals the limit constant.
inline constexpr double kGapNoise = 1e-10;

inline double fit_gap_exponent(const std::vector<ConvergenceRow>& rows) {
  std::vector<double> x, y;
  for (const auto& r : rows)
    if (std::abs(r.relative_gap) > kGapNoise) {
      x.push_back(r.t);
      y.push_back(std::abs(r.relative_gap));
    }
  if (x.size() < 2) return 0.0;
  return -loglog_slope(x, y);
}

}  // namespace detail

/// Conditional density for the configured nu, and the coefficients of the
/// (possibly time-shifted) initial law it was built from.
inline ConditionalDensity configured_density(const ExperimentConfig& c, const InitialDistribution& nu,
                                             const ModeCoefficients& nc, const ModeCoefficients& mu,
                                             const SpectralBasis& basis, double t, ModeCoefficients& used) {
  if (nu.is_point() && !c.nu.time_shift) {
    used = nc;
    return conditional_density_from_coefficients(nc, mu, basis, t, c.series_tol);
  }
  ConditionalDensity d = conditional_density(nu, basis, t, c.series_tol);
  used = nu.is_point() ? time_shift_coefficients(nc, mu, basis, d.eps_shift) : nc;
  return d;
}

/// Sandwich for an explicit density h = d mu_t / d mu_0 on the basis grid.
inline SandwichRow sandwich_for_density(const std::vector<double>& h, const SpectralBasis& basis,
                                        const ExperimentConfig& c, double t, const ModeCoefficients* rho_tilde_ground,
                                        double series_tail = 0.0) {
  SandwichRow row;
  row.t = t;
  row.series_tail = series_tail;
  const GridMeasure m0 = GridMeasure::mu0(basis);
  const GridMeasure mt = GridMeasure::from_basis(basis, h, Reference::mu0);
  const TransportResult w = detail::w2_by_method(mt, m0, c);
  row.w2_squared = w.w2_squared;
  row.w2_sq_error = w.error_estimate;
  row.w2_method = w.method;
  const UpperBoundReport up = h_minus1_upper_bound(h, basis);
  row.upper = up.value;
  row.upper_boundary_strip = up.boundary_strip;
  row.upper_excluded = up.excluded_nodes;
  if (basis.dimension() == 1) {
    std::vector<double> rho(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) rho[i] = h[i] - 1.0;
    const ModeCoefficients rg = rho_tilde_ground ? *rho_tilde_ground : ground_coefficients(rho, basis);
    const DualLowerBound lo = detail::dual_lower_for(m0, mt, basis, rg, t, c.betas);
    row.lower = lo.lower;
    row.lower_method = lo.method;
    row.lower_potential = lo.potential;
    row.lower_scale = lo.scale;
  } else {
    row.lower_method = "unavailable(d=2)";
  }
  row.ordered = row.lower <= row.w2_squared + row.w2_sq_error && row.w2_squared - row.w2_sq_error <= row.upper;
  return row;
}

/// One sandwich row lower <= W2^2 <= upper at time t.
inline SandwichRow run_sandwich(const ExperimentConfig& c, double t) {
  try {
    const SpectralBasis basis = basis_for(c);
    const InitialDistribution nu = initial_for(c.nu, basis);
    if (basis.boundary() == Boundary::neumann) {
      const ModeCoefficients nc = project(nu, basis);
      const GridFunction g = mean_empirical_density(nc, basis, t, c.series_tol);
      return sandwich_for_density(g.values, basis, c, t, nullptr, g.truncation.tail_estimate);
    }
    const ModeCoefficients mu = project(InitialDistribution::mu(basis), basis);
    ModeCoefficients used;
    const ConditionalDensity h = configured_density(c, nu, project(nu, basis), mu, basis, t, used);
    const ModeCoefficients rt = rho_tilde_coefficients(used, mu, basis, t, h.normalization);
    return sandwich_for_density(h.h, basis, c, t, &rt, h.truncation.tail_estimate);
  } catch (...) {
    detail::rethrow_annotated(t);
  }
}

/// Convergence study of t^2 W2(mu_t^nu, mu_0)^2 towards the limit constant.
/// Dirichlet: conditional empirical measure; Neumann: mean empirical measure.
inline ConvergenceReport run_convergence(const ExperimentConfig& c) {
  const SpectralBasis basis = basis_for(c);
  const InitialDistribution nu = initial_for(c.nu, basis);
  const ModeCoefficients nc = project(nu, basis);
  const ModeCoefficients mu = project(InitialDistribution::mu(basis), basis);
  ConvergenceReport rep;
  rep.config = config_to_json(c);
  const bool neumann = basis.boundary() == Boundary::neumann;
  rep.kind = neumann ? "neumann" : "dirichlet";
  rep.limit = neumann ? compute_I_neumann(nc, basis.eigenvalues(), basis.dimension(), c.limit_tol)
                      : compute_I(nc, mu, basis.eigenvalues(), basis.dimension(), c.limit_tol);
  rep.limit.finiteness = finiteness_predicate(basis.dimension(), nu, &basis);
  rep.rows.resize(c.times.size());
  const GridMeasure m0 = GridMeasure::mu0(basis);
  detail::parallel_for(c.times.size(), c.workers, [&](std::size_t k) {
    const double t = c.times[k];
    try {
      ConvergenceRow& row = rep.rows[k];
      row.t = t;
      row.seed = c.seed;
      row.modes = basis.modes();
      row.I = rep.limit.I_value;
      row.limit_tail = rep.limit.tail_bound;
      row.gap_tolerance = c.gap_tolerance(t);
      std::vector<double> h;
      std::optional<ModeCoefficients> rt;
      if (neumann) {
        GridFunction g = mean_empirical_density(nc, basis, t, c.series_tol);
        if (!g.truncation.accepted())
          throw TruncationError("series tail " + std::to_string(g.truncation.tail_estimate) + " exceeds tolerance");
        row.series_tail = g.truncation.tail_estimate;
        h = std::move(g.values);
      } else {
        ModeCoefficients used;
        ConditionalDensity d = configured_density(c, nu, nc, mu, basis, t, used);
        if (!d.truncation.accepted())
          throw TruncationError("series tail " + std::to_string(d.truncation.tail_estimate) + " exceeds tolerance");
        row.series_tail = d.truncation.tail_estimate;
        row.eps_shift = d.eps_shift;
        rt = rho_tilde_coefficients(used, mu, basis, t, d.normalization);
        h = std::move(d.h);
      }
      row.min_h = *std::min_element(h.begin(), h.end());
      const SandwichRow s = sandwich_for_density(h, basis, c, t, rt ? &*rt : nullptr, row.series_tail);
      row.w2_squared = s.w2_squared;
      row.w2 = std::sqrt(s.w2_squared);
      row.w2_sq_error = s.w2_sq_error;
      row.w2_method = s.w2_method;
      row.scaled = t * t * s.w2_squared;
      row.relative_gap = row.I > 0.0 ? row.scaled / row.I - 1.0 : std::numeric_limits<double>::quiet_NaN();
      row.upper = s.upper;
      row.upper_boundary_strip = s.upper_boundary_strip;
      row.upper_excluded = s.upper_excluded;
      row.lower = s.lower;
      row.lower_method = s.lower_method;
    } catch (...) {
      detail::rethrow_annotated(t);
    }
  });
  rep.gap_exponent = detail::fit_gap_exponent(rep.rows);
  double num = 0.0, den = 0.0;
  for (const auto& r : rep.rows) {
    num += r.relative_gap / r.t;
    den += 1.0 / (r.t * r.t);
  }
  rep.gap_constant = den > 0.0 ? num / den : 0.0;
  const std::size_t n = rep.rows.size();
  for (std::size_t k = n >= 3 ? n - 2 : 1; k < n; ++k)
    if (std::abs(rep.rows[k].relative_gap) > std::abs(rep.rows[k - 1].relative_gap) + detail::kGapNoise)
      rep.tail_monotone = false;
  return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo cross-check

struct CrosscheckReport {
  std::string rule;
  double horizon = 0.0, dt = 0.0;
  long n_paths = 0, survivors = 0;
  double effective_sample_size = 0.0;
  double survival_mc = 0.0, survival_se = 0.0, survival_spectral = 0.0;
  double survival_rate_mc = 0.0, survival_rate_spectral = 0.0;  // d/dt log P(t < tau)
  double w1_spectral = 0.0, w1_se = 0.0;     // occupation histogram vs spectral density
  double w2_mc = 0.0, w2_mc_se = 0.0;        // W2(histogram, mu_0)
  double w2_spectral = 0.0;                  // W2(spectral density, mu_0)
  double w1_final_qsd = 0.0, w1_final_se = 0.0;  // single-time law vs phi_0 mu / mu(phi_0) (Dirichlet)
  double w1_occ_mu0 = 0.0, w1_qsd_mu0 = 0.0;
  double dt_halving_tv = -1.0, dt_halving_noise = -1.0;
  bool agree = false;
  std::uint64_t seed = 0;
};

inline SimulationConfig simulation_config(const ExperimentConfig& c, const McSettings& s) {
  SimulationConfig sc;
  sc.domain = c.domain;
  sc.rule = s.rule;
  sc.dt = s.dt;
  sc.horizon = s.horizon;
  sc.n_paths = s.n_paths;
  sc.chunk_size = s.chunk_size;
  sc.n_bins = s.n_bins;
  sc.seed = c.seed;
  sc.workers = c.workers;
  return sc;
}

/// Total-variation change between two ensembles and the noise level
/// sum_j sqrt(se1_j^2 + se2_j^2) it is compared against.
inline std::pair<double, double> histogram_tv(const PathEnsembleSummary& a, const PathEnsembleSummary& b) {
  detail::require(a.occupation.size() == b.occupation.size(), "histogram_tv: bin mismatch");
  double tv = 0.0, noise = 0.0;
  for (std::size_t j = 0; j < a.occupation.size(); ++j) {
    tv += 0.5 * std::abs(a.occupation[j] - b.occupation[j]);
    noise += std::hypot(a.occupation_se[j], b.occupation_se[j]);
  }
  return {tv, noise};
}

/// Simulates the configured ensemble and compares it with the spectral
/// prediction; the ensemble is returned through `ensemble` when given.
inline CrosscheckReport run_mc_crosscheck(const ExperimentConfig& c, PathEnsembleSummary* ensemble = nullptr) {
  detail::require(c.mc.has_value(), "run_mc_crosscheck: config has no mc section");
  detail::require(c.domain.kind == DomainKind::interval, "run_mc_crosscheck: interval domains only");
  const McSettings& s = *c.mc;
  const SpectralBasis basis = basis_for(c);
  const InitialDistribution nu = initial_for(c.nu, basis);
  SimulationConfig sc = simulation_config(c, s);
  sc.initial = nu;
  // killed survival is unresolvable beyond t ~ 1 at 1e5 paths
  const double span = s.rule == BoundaryRule::kill ? std::min(s.horizon, 0.8) : s.horizon;
  for (int k = 1; k <= 8; ++k) sc.record_times.push_back(span * k / 8.0);
  const PathEnsembleSummary ens = simulate(sc, &basis);
  CrosscheckReport r;
  r.rule = to_string(s.rule);
  r.horizon = s.horizon;
  r.dt = s.dt;
  r.n_paths = s.n_paths;
  r.seed = c.seed;
  r.survivors = ens.survival_count;
  r.effective_sample_size = ens.effective_sample_size;
  r.survival_mc = ens.survival_fraction;
  r.survival_se = ens.survival_se;
  try {
    r.survival_rate_mc = survival_rate(ens.record_times, ens.survival_curve);
  } catch (const InsufficientSamples&) {
    r.survival_rate_mc = std::numeric_limits<double>::quiet_NaN();
  }
  r.survival_rate_spectral = basis.boundary() == Boundary::dirichlet ? -basis.eigenvalues()[0] : 0.0;
  const ModeCoefficients nc = project(nu, basis);
  const GridMeasure m0 = GridMeasure::mu0(basis);
  std::vector<double> h;
  if (basis.boundary() == Boundary::neumann) {
    h = mean_empirical_density(nc, basis, s.horizon, c.series_tol).values;
    r.survival_spectral = 1.0;
  } else {
    const ModeCoefficients mu = project(InitialDistribution::mu(basis), basis);
    ModeCoefficients used;
    h = configured_density(c, nu, nc, mu, basis, s.horizon, used).h;
    r.survival_spectral = survival(nc, mu, basis, s.horizon);
  }
  const GridMeasure spectral = GridMeasure::from_basis(basis, h, Reference::mu0);
  const MCTransport occ = conditional_empirical_w2(ens, spectral, false, s.resamples);
  r.w1_spectral = occ.w1;
  r.w1_se = occ.w1_se;
  const MCTransport occ0 = conditional_empirical_w2(ens, m0, false, s.resamples);
  r.w2_mc = occ0.result.w2;
  r.w2_mc_se = occ0.w2_se;
  r.w1_occ_mu0 = occ0.w1;
  r.w2_spectral = w2_quantile_1d(spectral, m0, c.quantile_nodes).w2;
  r.agree = r.w1_spectral <= 3.0 * r.w1_se;
  if (basis.boundary() == Boundary::dirichlet) {
    const ModeCoefficients mu = project(InitialDistribution::mu(basis), basis);
    std::vector<double> q(basis.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = basis.eigenfunctions()(0, static_cast<Eigen::Index>(i)) / mu[0];
    const GridMeasure qsd = GridMeasure::from_basis(basis, q, Reference::mu);
    const MCTransport fin = conditional_empirical_w2(ens, qsd, true, s.resamples);
    r.w1_final_qsd = fin.w1;
    r.w1_final_se = fin.w1_se;
    r.w1_qsd_mu0 = w1_1d(qsd, m0);
  }
  if (s.dt_halving) {
    SimulationConfig half = sc;
    half.dt = sc.dt / 2.0;
    const auto [tv, noise] = histogram_tv(ens, simulate(half, &basis));
    r.dt_halving_tv = tv;
    r.dt_halving_noise = noise;
  }
  if (ensemble) *ensemble = ens;
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline json convergence_to_json(const ConvergenceReport& r) {
  json rows = json::array();
  for (const auto& x : r.rows)
    rows.push_back({{"t", x.t},
                    {"w2", x.w2},
                    {"w2_squared", x.w2_squared},
                    {"w2_sq_error", x.w2_sq_error},
                    {"t2_w2_squared", x.scaled},
                    {"I", x.I},
                    {"relative_gap", x.relative_gap},
                    {"gap_tolerance", x.gap_tolerance},
                    {"upper", x.upper},
                    {"upper_boundary_strip", x.upper_boundary_strip},
                    {"upper_excluded_nodes", x.upper_excluded},
                    {"lower", x.lower},
                    {"w2_method", x.w2_method},
                    {"lower_method", x.lower_method},
                    {"series_tail", x.series_tail},
                    {"limit_tail", x.limit_tail},
                    {"modes", x.modes},
                    {"eps_shift", x.eps_shift},
                    {"min_h", x.min_h},
                    {"seed", x.seed}});
  return {{"format", kConvergenceFormat},
          {"kind", r.kind},
          {"rows", rows},
          {"limit", limit_report_to_json(r.limit)},
          {"gap_exponent", r.gap_exponent},
          {"gap_constant", r.gap_constant},
          {"tail_monotone", r.tail_monotone},
          {"config", r.config}};
}

inline json sandwich_to_json(const SandwichRow& s, const ExperimentConfig& c) {
  return {{"format", kSandwichFormat},
          {"t", s.t},
          {"lower", s.lower},
          {"lower_method", s.lower_method},
          {"lower_potential", s.lower_potential},
          {"lower_scale", s.lower_scale},
          {"w2_squared", s.w2_squared},
          {"w2_sq_error", s.w2_sq_error},
          {"w2_method", s.w2_method},
          {"upper", s.upper},
          {"upper_boundary_strip", s.upper_boundary_strip},
          {"upper_excluded_nodes", s.upper_excluded},
          {"series_tail", s.series_tail},
          {"ordered", s.ordered},
          {"seed", c.seed},
          {"config", config_to_json(c)}};
}

inline json crosscheck_to_json(const CrosscheckReport& r, const ExperimentConfig& c) {
  return {{"format", kCrosscheckFormat},
          {"rule", r.rule},
          {"horizon", r.horizon},
          {"dt", r.dt},
          {"n_paths", r.n_paths},
          {"survivors", r.survivors},
          {"effective_sample_size", r.effective_sample_size},
          {"survival_mc", r.survival_mc},
          {"survival_se", r.survival_se},
          {"survival_spectral", r.survival_spectral},
          {"survival_rate_mc", r.survival_rate_mc},
          {"survival_rate_spectral", r.survival_rate_spectral},
          {"w1_spectral", r.w1_spectral},
          {"w1_se", r.w1_se},
          {"w2_mc", r.w2_mc},
          {"w2_mc_se", r.w2_mc_se},
          {"w2_spectral", r.w2_spectral},
          {"w1_final_qsd", r.w1_final_qsd},
          {"w1_final_se", r.w1_final_se},
          {"w1_occupation_mu0", r.w1_occ_mu0},
          {"w1_qsd_mu0", r.w1_qsd_mu0},
          {"dt_halving_tv", r.dt_halving_tv},
          {"dt_halving_noise", r.dt_halving_noise},
          {"agree", r.agree},
          {"seed", r.seed},
          {"config", config_to_json(c)}};
}

inline constexpr const char* kConvergenceColumns =
    "t,w2,w2_squared,w2_sq_error,t2_w2_squared,I,relative_gap,gap_tolerance,upper,upper_boundary_strip,lower,"
    "w2_method,lower_method,series_tail,limit_tail,modes,eps_shift,seed";

inline void write_convergence_csv(const std::string& path, const ConvergenceReport& r) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.precision(17);
  os << "# " << kConvergenceFormat << " kind=" << r.kind << " I=" << r.limit.I_value
     << " gap_exponent=" << r.gap_exponent << " gap_constant=" << r.gap_constant << "\n";
  os << kConvergenceColumns << "\n";
  for (const auto& x : r.rows)
    os << x.t << ',' << x.w2 << ',' << x.w2_squared << ',' << x.w2_sq_error << ',' << x.scaled << ',' << x.I << ','
       << x.relative_gap << ',' << x.gap_tolerance << ',' << x.upper << ',' << x.upper_boundary_strip << ','
       << x.lower << ',' << x.w2_method << ',' << x.lower_method << ',' << x.series_tail << ',' << x.limit_tail
       << ',' << x.modes << ',' << x.eps_shift << ',' << x.seed << "\n";
}

}  // namespace cemlab

// Command-line front end for the cemlab experiment harness.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cemlab/cemlab.hpp"

namespace {

using namespace cemlab;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> modes;
  std::optional<double> tol;
  std::optional<int> workers;
};

ExperimentConfig configure(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? parse_config(json{{"version", kConfigFormat}}) : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.out) c.out_dir = *g.out;
  if (g.modes) {
    detail::require(*g.modes >= 2, "--modes must be >= 2");
    c.modes = *g.modes;
  }
  if (g.tol) {
    detail::require(*g.tol > 0.0, "--tol must be > 0");
    c.series_tol = *g.tol;
  }
  if (g.workers) {
    detail::require(*g.workers >= 1, "--workers must be >= 1");
    c.workers = *g.workers;
  }
  std::filesystem::create_directories(c.out_dir);
  return c;
}

std::string output_path(const ExperimentConfig& c, const std::string& stem, const std::string& ext) {
  return (std::filesystem::path(c.out_dir) / (c.prefix + "_" + stem + "." + ext)).string();
}

std::string time_tag(double t) {
  std::ostringstream os;
  os << "t" << t;
  return os.str();
}

void announce(const std::string& path) { std::cout << "wrote " << path << '\n'; }

void write_mean_density_csv(const std::string& path, const GridFunction& g, const SpectralBasis& basis, double t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.precision(17);
  out << "# t=" << t << " M=" << g.truncation.M << " tail_estimate=" << g.truncation.tail_estimate << '\n';
  const bool two_d = basis.dimension() == 2;
  out << (two_d ? "x,y,h_t,mu0_density\n" : "x,h_t,mu0_density\n");
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double p0 = basis.eigenfunctions()(0, static_cast<Eigen::Index>(i));
    out << basis.grid()[i].x << ',';
    if (two_d) out << basis.grid()[i].y << ',';
    out << g.values[i] << ',' << p0 * p0 * basis.mu_density()[i] << '\n';
  }
}

// Two-column density file, normalized to a probability measure.
GridMeasure read_density(const std::string& path) {
  std::vector<double> x, f;
  detail::read_two_columns(path, x, f);
  detail::require(x.size() >= 2, "density file " + path + " needs at least two rows");
  double mass = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) mass += 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1]);
  detail::require(mass > 0.0, "density file " + path + " has no mass");
  for (double& v : f) v /= mass;
  return GridMeasure::piecewise_linear(x, f);
}

json transport_json(const TransportResult& r) {
  return {{"w2", r.w2},
          {"w2_squared", r.w2_squared},
          {"error_estimate", r.error_estimate},
          {"w2_error", r.w2_error},
          {"method", r.method},
          {"iterations", r.iterations},
          {"dual_gap", r.dual_gap}};
}

std::vector<double> times_or_config(const std::vector<double>& ts, const ExperimentConfig& c) {
  return ts.empty() ? c.times : ts;
}

int cmd_basis(const Globals& g) {
  const ExperimentConfig c = configure(g);
  const SpectralBasis b = basis_for(c);
  const std::string path = output_path(c, "basis", "json");
  write_json_file(path, basis_to_json(b));
  std::printf("method=%s boundary=%s modes=%d grid=%zu lambda0=%.12g gap1=%.12g orthonormality=%.3e\n",
              b.method().c_str(), to_string(b.boundary()).c_str(), b.modes(), b.size(), b.eigenvalues()[0],
              b.modes() > 1 ? b.eigenvalues()[1] - b.eigenvalues()[0] : 0.0, b.orthonormality_residual());
  announce(path);
  return 0;
}

int cmd_project(const Globals& g) {
  const ExperimentConfig c = configure(g);
  const SpectralBasis b = basis_for(c);
  const ModeCoefficients nc = project(initial_for(c.nu, b), b);
  json j = coefficients_to_json(nc);
  j["format"] = "cemlab-coefficients/1";
  j["basis_method"] = b.method();
  j["boundary"] = to_string(b.boundary());
  j["modes"] = b.modes();
  j["seed"] = c.seed;
  const std::string path = output_path(c, "coefficients", "json");
  write_json_file(path, j);
  std::printf("nu=%s nu(phi_0)=%.12g\n", c.nu.kind.c_str(), nc[0]);
  announce(path);
  return 0;
}

int cmd_density(const Globals& g, const std::vector<double>& ts) {
  const ExperimentConfig c = configure(g);
  const SpectralBasis b = basis_for(c);
  const InitialDistribution nu = initial_for(c.nu, b);
  const ModeCoefficients nc = project(nu, b);
  for (double t : times_or_config(ts, c)) {
    const std::string path = output_path(c, "density_" + time_tag(t), "csv");
    if (b.boundary() == Boundary::neumann) {
      const GridFunction f = mean_empirical_density(nc, b, t, c.series_tol);
      write_mean_density_csv(path, f, b, t);
      std::printf("t=%g tail=%.3e\n", t, f.truncation.tail_estimate);
    } else {
      const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
      ModeCoefficients used;
      const ConditionalDensity h = configured_density(c, nu, nc, mu, b, t, used);
      write_density_csv(path, h, b);
      std::printf("t=%g tail=%.3e min_h=%.6g\n", t, h.truncation.tail_estimate, h.min_h);
    }
    announce(path);
  }
  return 0;
}

int cmd_limit(const Globals& g) {
  const ExperimentConfig c = configure(g);
  const SpectralBasis b = basis_for(c);
  const InitialDistribution nu = initial_for(c.nu, b);
  const ModeCoefficients nc = project(nu, b);
  LimitReport r = b.boundary() == Boundary::neumann
                      ? compute_I_neumann(nc, b.eigenvalues(), b.dimension(), c.limit_tol)
                      : compute_I(nc, project(InitialDistribution::mu(b), b), b.eigenvalues(), b.dimension(),
                                  c.limit_tol);
  r.finiteness = finiteness_predicate(b.dimension(), nu, &b);
  json j = limit_report_to_json(r);
  j["format"] = "cemlab-limit/1";
  j["seed"] = c.seed;
  const std::string path = output_path(c, "limit", "json");
  write_json_file(path, j);
  std::printf("kind=%s I=%.15g tail_bound=%.3e finiteness=%s\n", r.kind.c_str(), r.I_value, r.tail_bound,
              to_string(r.finiteness).c_str());
  announce(path);
  return 0;
}

int cmd_w2(const Globals& g, const std::vector<double>& ts, const std::string& fa, const std::string& fb) {
  const ExperimentConfig c = configure(g);
  json rows = json::array();
  if (!fa.empty() || !fb.empty()) {
    detail::require(!fa.empty() && !fb.empty(), "w2: --a and --b must be given together");
    const TransportResult r = detail::w2_by_method(read_density(fa), read_density(fb), c);
    json j = transport_json(r);
    j["a"] = fa;
    j["b"] = fb;
    rows.push_back(j);
    std::printf("W2=%.12g W2^2=%.12g error=%.3e method=%s\n", r.w2, r.w2_squared, r.error_estimate,
                r.method.c_str());
  } else {
    const SpectralBasis b = basis_for(c);
    const InitialDistribution nu = initial_for(c.nu, b);
    const ModeCoefficients nc = project(nu, b);
    const GridMeasure m0 = GridMeasure::mu0(b);
    for (double t : times_or_config(ts, c)) {
      std::vector<double> h;
      double tail = 0.0;
      if (b.boundary() == Boundary::neumann) {
        GridFunction f = mean_empirical_density(nc, b, t, c.series_tol);
        tail = f.truncation.tail_estimate;
        h = std::move(f.values);
      } else {
        ModeCoefficients used;
        ConditionalDensity d = configured_density(c, nu, nc, project(InitialDistribution::mu(b), b), b, t, used);
        tail = d.truncation.tail_estimate;
        h = std::move(d.h);
      }
      const TransportResult r = detail::w2_by_method(GridMeasure::from_basis(b, h, Reference::mu0), m0, c);
      json j = transport_json(r);
      j["t"] = t;
      j["series_tail"] = tail;
      j["t2_w2_squared"] = t * t * r.w2_squared;
      rows.push_back(j);
      std::printf("t=%g W2^2=%.12g error=%.3e t^2W2^2=%.12g tail=%.3e\n", t, r.w2_squared, r.error_estimate,
                  t * t * r.w2_squared, tail);
    }
  }
  const std::string path = output_path(c, "w2", "json");
  write_json_file(path, {{"format", "cemlab-w2/1"}, {"rows", rows}, {"seed", c.seed}, {"config", config_to_json(c)}});
  announce(path);
  return 0;
}

int cmd_converge(const Globals& g) {
  const ExperimentConfig c = configure(g);
  const ConvergenceReport r = run_convergence(c);
  for (const auto& x : r.rows)
    std::printf("t=%g t^2W2^2=%.10g I=%.10g gap=%+.4e tol=%.3g lower=%.6e W2^2=%.6e upper=%.6e\n", x.t, x.scaled,
                x.I, x.relative_gap, x.gap_tolerance, x.lower, x.w2_squared, x.upper);
  std::printf("gap_exponent=%.4f gap_constant=%.4g tail_monotone=%s\n", r.gap_exponent, r.gap_constant,
              r.tail_monotone ? "true" : "false");
  const std::string jp = output_path(c, "convergence", "json"), cp = output_path(c, "convergence", "csv");
  write_json_file(jp, convergence_to_json(r));
  write_convergence_csv(cp, r);
  announce(jp);
  announce(cp);
  return 0;
}

int cmd_sandwich(const Globals& g, const std::vector<double>& ts) {
  const ExperimentConfig c = configure(g);
  bool ordered = true;
  for (double t : times_or_config(ts, c)) {
    const SandwichRow s = run_sandwich(c, t);
    ordered = ordered && s.ordered;
    std::printf("t=%g lower=%.10e W2^2=%.10e (+-%.2e) upper=%.10e ratio=%.6f ordered=%s\n", t, s.lower,
                s.w2_squared, s.w2_sq_error, s.upper, s.w2_squared > 0.0 ? s.upper / s.w2_squared : 0.0,
                s.ordered ? "true" : "false");
    const std::string path = output_path(c, "sandwich_" + time_tag(t), "json");
    write_json_file(path, sandwich_to_json(s, c));
    announce(path);
  }
  return ordered ? 0 : 1;
}

int cmd_mc(const Globals& g, const std::string& rule, long paths, double dt, double horizon, bool halving) {
  ExperimentConfig c = configure(g);
  if (!c.mc) c.mc = McSettings{};
  if (!rule.empty()) c.mc->rule = boundary_rule_from_string(rule);
  if (paths > 0) c.mc->n_paths = paths;
  if (dt > 0.0) c.mc->dt = dt;
  if (horizon > 0.0) c.mc->horizon = horizon;
  if (halving) c.mc->dt_halving = true;
  PathEnsembleSummary ens;
  const CrosscheckReport r = run_mc_crosscheck(c, &ens);
  const std::string ep = output_path(c, "mc", "csv"), jp = output_path(c, "crosscheck", "json");
  write_ensemble_csv(ep, ens);
  write_json_file(jp, crosscheck_to_json(r, c));
  std::printf("rule=%s survivors=%ld survival=%.6g (spectral %.6g) rate=%.5g (spectral %.5g)\n", r.rule.c_str(),
              r.survivors, r.survival_mc, r.survival_spectral, r.survival_rate_mc, r.survival_rate_spectral);
  std::printf("W1(occupation, spectral)=%.3e se=%.3e agree=%s W1(final, qsd)=%.3e se=%.3e\n", r.w1_spectral,
              r.w1_se, r.agree ? "true" : "false", r.w1_final_qsd, r.w1_final_se);
  announce(ep);
  announce(jp);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cemlab: conditional empirical measures of killed diffusions"};
  app.require_subcommand(1);
  Globals g;
  auto* config = app.add_option("--config", g.config, "experiment configuration (JSON)");
  config->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--modes", g.modes, "number of eigenmodes");
  app.add_option("--tol", g.tol, "series truncation tolerance");
  app.add_option("--workers", g.workers, "worker threads");
  app.fallthrough();

  std::vector<double> ts;
  std::string fa, fb, rule;
  long paths = 0;
  double dt = 0.0, horizon = 0.0;
  bool halving = false;

  auto* basis = app.add_subcommand("basis", "compute the eigenbasis and write it as JSON");
  auto* proj = app.add_subcommand("project", "project the initial distribution onto the basis");
  auto* dens = app.add_subcommand("density", "write h_t = d mu_t / d mu_0 on the basis grid");
  dens->add_option("--t", ts, "times (default: config times)");
  auto* limit = app.add_subcommand("limit", "compute the limit constant I");
  auto* w2 = app.add_subcommand("w2", "W2 distance of mu_t to mu_0, or between two density files");
  w2->add_option("--t", ts, "times (default: config times)");
  w2->add_option("--a", fa, "first density file (x,f columns)")->check(CLI::ExistingFile);
  w2->add_option("--b", fb, "second density file (x,f columns)")->check(CLI::ExistingFile);
  auto* conv = app.add_subcommand("converge", "convergence study of t^2 W2^2 towards I");
  auto* sand = app.add_subcommand("sandwich", "lower <= W2^2 <= upper at the given times");
  sand->add_option("--t", ts, "times (default: config times)");
  auto* mc = app.add_subcommand("mc", "Monte Carlo ensemble and spectral cross-check");
  mc->add_option("--rule", rule, "kill | reflect | fleming-viot");
  mc->add_option("--paths", paths, "number of paths");
  mc->add_option("--dt", dt, "time step");
  mc->add_option("--horizon", horizon, "final time");
  mc->add_flag("--dt-halving", halving, "rerun with dt / 2 and report the histogram change");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*basis) return cmd_basis(g);
    if (*proj) return cmd_project(g);
    if (*dens) return cmd_density(g, ts);
    if (*limit) return cmd_limit(g);
    if (*w2) return cmd_w2(g, ts, fa, fb);
    if (*conv) return cmd_converge(g);
    if (*sand) return cmd_sandwich(g, ts);
    if (*mc) return cmd_mc(g, rule, paths, dt, horizon, halving);
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

#pragma once

// Monte Carlo simulation of killed, reflected and Fleming-Viot diffusions
// dX = V'(X) dt + sqrt(2) dB on an interval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cemlab/errors.hpp"
#include "cemlab/grid_measure.hpp"
#include "cemlab/projection.hpp"
#include "cemlab/spectral_basis.hpp"
#include "cemlab/wasserstein.hpp"

namespace cemlab {

enum class BoundaryRule { kill, reflect, fleming_viot };

inline std::string to_string(BoundaryRule r) {
  switch (r) {
    case BoundaryRule::kill:
      return "kill";
    case BoundaryRule::reflect:
      return "reflect";
    default:
      return "fleming-viot";
  }
}

inline BoundaryRule boundary_rule_from_string(const std::string& s) {
  if (s == "kill") return BoundaryRule::kill;
  if (s == "reflect") return BoundaryRule::reflect;
  if (s == "fleming-viot" || s == "fleming_viot") return BoundaryRule::fleming_viot;
  throw InvalidArgument("unknown boundary rule: " + s);
}

struct SimulationConfig {
  Domain domain = Domain::interval(0.0, 1.0, Boundary::dirichlet);
  BoundaryRule rule = BoundaryRule::kill;
  double dt = 1e-3;
  double horizon = 1.0;
  long n_paths = 100000;
  std::uint64_t seed = 0;
  InitialDistribution initial = InitialDistribution::point({0.5, 0.0});
  int n_bins = 256;
  long chunk_size = 1000;  // paths per chunk; Fleming-Viot: particles per system
  std::vector<double> record_times;  // survival fractions are recorded at these times
  int workers = 1;

  long steps() const { return std::lround(horizon / dt); }

  void validate() const {
    detail::require(domain.kind == DomainKind::interval, "SimulationConfig: interval domains only");
    detail::require(dt > 0.0 && horizon > 0.0, "SimulationConfig: dt and horizon must be > 0");
    detail::require(dt <= horizon / 100.0 * (1.0 + 1e-12), "SimulationConfig: dt must be <= horizon / 100");
    detail::require(std::abs(steps() * dt - horizon) <= 1e-9 * horizon, "SimulationConfig: horizon must be a multiple of dt");
    detail::require(n_paths >= 1 && chunk_size >= 1, "SimulationConfig: n_paths and chunk_size must be >= 1");
    detail::require(n_bins >= 1, "SimulationConfig: n_bins must be >= 1");
    detail::require(workers >= 1, "SimulationConfig: workers must be >= 1");
    if (rule == BoundaryRule::fleming_viot) detail::require(chunk_size >= 2, "SimulationConfig: Fleming-Viot needs >= 2 particles");
    for (double t : record_times) detail::require(t > 0.0 && t <= horizon, "SimulationConfig: record times must lie in (0, horizon]");
  }
};

/// Raw tallies of one chunk of paths (one independent particle system in
/// Fleming-Viot mode).
struct ChunkTally {
  long paths = 0;
  long survivors = 0;              // paths alive at the horizon (all particles for Fleming-Viot)
  double log_survival = 0.0;       // Fleming-Viot estimate of log P(tau > horizon)
  std::vector<double> occupation;  // summed time-occupation of the survivors per bin
  std::vector<double> final_law;   // summed indicator of X_horizon per bin for survivors
  std::vector<double> alive_at;    // survival fraction estimates at the record times
  long distinct_ancestors = 0;
};

struct PathEnsembleSummary {
  BoundaryRule rule = BoundaryRule::kill;
  double dt = 0.0, horizon = 0.0;
  long n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> edges;
  std::vector<double> occupation, occupation_se;  // bin masses (conditional on survival unless reflect)
  std::vector<double> final_law, final_law_se;
  long survival_count = 0;
  double survival_fraction = 0.0, survival_se = 0.0;
  std::vector<double> record_times, survival_curve;
  double effective_sample_size = 0.0;
  std::vector<ChunkTally> chunks;

  GridMeasure occupation_measure() const { return GridMeasure::histogram(edges, occupation); }
  GridMeasure final_measure() const { return GridMeasure::histogram(edges, final_law); }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream keyed by (seed, stream index).
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t k = splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

class InitialSampler {
 public:
  InitialSampler(const InitialDistribution& nu, const Domain& dom, const SpectralBasis* basis, bool closed) {
    if (const auto* p = std::get_if<PointMass>(&nu.value)) {
      if (closed)
        require(p->x0.x >= dom.a && p->x0.x <= dom.b, "simulate: initial point outside the domain");
      else
        require(p->x0.x > dom.a && p->x0.x < dom.b, "simulate: initial point must be interior");
      point_ = p->x0.x;
    } else if (const auto* d = std::get_if<DensityOnGrid>(&nu.value)) {
      require(basis != nullptr, "simulate: densities on a basis grid need the basis");
      cdf_.emplace(GridMeasure::from_basis(*basis, d->h, Reference::mu));
    } else {
      const auto& g = std::get<GridDensity>(nu.value);
      cdf_.emplace(GridMeasure::piecewise_linear(g.nodes, g.values));
    }
  }
  double operator()(std::mt19937_64& rng) const {
    if (!cdf_) return point_;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    return cdf_->quantile(U(rng));
  }

 private:
  double point_ = 0.0;
  std::optional<Cdf1D> cdf_;
};

struct Stepper {
  double a, b, dt, sd;
  const Potential* V;

  double drift(double x) const { return V->is_zero() ? 0.0 : V->gradient(x); }

  // Brownian-bridge probability of touching a face between x and y.
  double bridge_kill(double x, double y) const {
    const double pa = std::exp(-(x - a) * (y - a) / dt), pb = std::exp(-(b - x) * (b - y) / dt);
    return 1.0 - (1.0 - pa) * (1.0 - pb);
  }

  double fold(double x) const {
    const double L = b - a;
    double y = std::fmod(x - a, 2.0 * L);
    if (y < 0.0) y += 2.0 * L;
    if (y > L) y = 2.0 * L - y;
    return a + y;
  }
};

inline int bin_of(double x, double a, double b, int n) {
  const int k = static_cast<int>((x - a) / (b - a) * n);
  return std::clamp(k, 0, n - 1);
}

inline std::vector<long> record_steps(const SimulationConfig& c) {
  std::vector<long> s;
  for (double t : c.record_times) s.push_back(std::lround(t / c.dt));
  return s;
}

// Independent paths: kill or reflect.
inline ChunkTally run_independent_chunk(const SimulationConfig& c, const InitialSampler& init, long first, long count) {
  const int nb = c.n_bins;
  const Stepper st{c.domain.a, c.domain.b, c.dt, std::sqrt(2.0 * c.dt), &c.domain.potential};
  const long N = c.steps();
  const auto rec = record_steps(c);
  ChunkTally tally;
  tally.paths = count;
  tally.occupation.assign(nb, 0.0);
  tally.final_law.assign(nb, 0.0);
  tally.alive_at.assign(rec.size(), 0.0);
  std::vector<double> occ(nb);
  for (long p = first; p < first + count; ++p) {
    auto rng = make_stream(c.seed, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> Z(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::fill(occ.begin(), occ.end(), 0.0);
    double x = init(rng);
    bool alive = true;
    std::size_t r = 0;
    for (long k = 1; k <= N; ++k) {
      double y = x + st.drift(x) * c.dt + st.sd * Z(rng);
      if (c.rule == BoundaryRule::reflect) {
        y = st.fold(y);
      } else if (y <= st.a || y >= st.b || U(rng) < st.bridge_kill(x, y)) {
        alive = false;
        break;
      }
      occ[bin_of(x, st.a, st.b, nb)] += 0.5 * c.dt;
      occ[bin_of(y, st.a, st.b, nb)] += 0.5 * c.dt;
      x = y;
      while (r < rec.size() && rec[r] == k) tally.alive_at[r++] += 1.0;
    }
    if (!alive) continue;
    ++tally.survivors;
    for (int j = 0; j < nb; ++j) tally.occupation[j] += occ[j];
    tally.final_law[bin_of(x, st.a, st.b, nb)] += 1.0;
  }
  for (double& v : tally.alive_at) v /= static_cast<double>(count);
  tally.distinct_ancestors = tally.survivors;
  return tally;
}

// One Fleming-Viot system: killed particles jump onto a uniformly chosen
// survivor and inherit its past occupation (ancestral lines).
inline ChunkTally run_fleming_viot_chunk(const SimulationConfig& c, const InitialSampler& init, long first, long count,
                                         long chunk_index) {
  const int nb = c.n_bins;
  const Stepper st{c.domain.a, c.domain.b, c.dt, std::sqrt(2.0 * c.dt), &c.domain.potential};
  const long N = c.steps();
  const auto rec = record_steps(c);
  const auto n = static_cast<std::size_t>(count);
  std::vector<std::mt19937_64> rngs;
  rngs.reserve(n);
  std::vector<double> x(n), y(n);
  std::vector<long> root(n);
  std::vector<double> occ(n * nb, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rngs.push_back(make_stream(c.seed, static_cast<std::uint64_t>(first) + i));
    x[i] = init(rngs[i]);
    root[i] = static_cast<long>(i);
  }
  auto select = make_stream(~c.seed, static_cast<std::uint64_t>(chunk_index));
  std::normal_distribution<double> Z(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ChunkTally tally;
  tally.paths = count;
  tally.alive_at.assign(rec.size(), 0.0);
  std::vector<char> dead(n);
  std::vector<std::size_t> alive_idx;
  double log_s = 0.0;
  std::size_t r = 0;
  for (long k = 1; k <= N; ++k) {
    alive_idx.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Z.reset();
      y[i] = x[i] + st.drift(x[i]) * c.dt + st.sd * Z(rngs[i]);
      dead[i] = y[i] <= st.a || y[i] >= st.b || U(rngs[i]) < st.bridge_kill(x[i], y[i]);
      if (!dead[i]) {
        double* o = &occ[i * nb];
        o[bin_of(x[i], st.a, st.b, nb)] += 0.5 * c.dt;
        o[bin_of(y[i], st.a, st.b, nb)] += 0.5 * c.dt;
        alive_idx.push_back(i);
      }
    }
    if (alive_idx.empty()) throw NumericalError("simulate: Fleming-Viot system died out in one step (dt too large)");
    const std::size_t killed = n - alive_idx.size();
    log_s += std::log1p(-static_cast<double>(killed) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!dead[i]) continue;
      std::uniform_int_distribution<std::size_t> pick(0, alive_idx.size() - 1);
      const std::size_t j = alive_idx[pick(select)];
      y[i] = y[j];
      root[i] = root[j];
      std::copy_n(&occ[j * nb], nb, &occ[i * nb]);
    }
    x.swap(y);
    while (r < rec.size() && rec[r] == k) tally.alive_at[r++] = std::exp(log_s);
  }
  tally.survivors = count;
  tally.log_survival = log_s;
  tally.occupation.assign(nb, 0.0);
  tally.final_law.assign(nb, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < nb; ++j) tally.occupation[j] += occ[i * nb + j];
    tally.final_law[bin_of(x[i], st.a, st.b, nb)] += 1.0;
  }
  std::sort(root.begin(), root.end());
  tally.distinct_ancestors = std::unique(root.begin(), root.end()) - root.begin();
  return tally;
}

// Normalized occupation and final-law histograms from a multiset of chunks.
inline void pooled_histograms(const std::vector<const ChunkTally*>& chunks, int nb, std::vector<double>& occ,
                              std::vector<double>& fin) {
  occ.assign(nb, 0.0);
  fin.assign(nb, 0.0);
  for (const ChunkTally* c : chunks)
    for (int j = 0; j < nb; ++j) {
      occ[j] += c->occupation[j];
      fin[j] += c->final_law[j];
    }
  const double so = std::accumulate(occ.begin(), occ.end(), 0.0), sf = std::accumulate(fin.begin(), fin.end(), 0.0);
  if (so > 0.0)
    for (double& v : occ) v /= so;
  if (sf > 0.0)
    for (double& v : fin) v /= sf;
}

inline std::vector<const ChunkTally*> resample(const std::vector<ChunkTally>& chunks, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, chunks.size() - 1);
  std::vector<const ChunkTally*> out(chunks.size());
  for (auto& p : out) p = &chunks[pick(rng)];
  return out;
}

}  // namespace detail

/// Simulates the ensemble. Chunks are processed by `workers` threads and
/// merged in chunk order, so the summary does not depend on the worker count.
inline PathEnsembleSummary simulate(const SimulationConfig& c, const SpectralBasis* basis = nullptr) {
  c.validate();
  detail::require((c.rule == BoundaryRule::reflect) == (c.domain.boundary == Boundary::neumann),
                  "simulate: reflect goes with Neumann domains, kill and Fleming-Viot with Dirichlet");
  const detail::InitialSampler init(c.initial, c.domain, basis, c.rule == BoundaryRule::reflect);
  const long n_chunks = (c.n_paths + c.chunk_size - 1) / c.chunk_size;
  std::vector<ChunkTally> tallies(static_cast<std::size_t>(n_chunks));
  auto run = [&](long q) {
    const long first = q * c.chunk_size, count = std::min(c.chunk_size, c.n_paths - first);
    tallies[static_cast<std::size_t>(q)] = c.rule == BoundaryRule::fleming_viot
                                               ? detail::run_fleming_viot_chunk(c, init, first, count, q)
                                               : detail::run_independent_chunk(c, init, first, count);
  };
  const int W = static_cast<int>(std::min<long>(c.workers, n_chunks));
  if (W <= 1) {
    for (long q = 0; q < n_chunks; ++q) run(q);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(W));
    for (int w = 0; w < W; ++w)
      pool.emplace_back([&, w] {
        try {
          for (long q = w; q < n_chunks; q += W) run(q);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  PathEnsembleSummary s;
  s.rule = c.rule;
  s.dt = c.dt;
  s.horizon = c.horizon;
  s.n_paths = c.n_paths;
  s.seed = c.seed;
  s.record_times = c.record_times;
  s.edges.resize(c.n_bins + 1);
  for (int j = 0; j <= c.n_bins; ++j) s.edges[j] = c.domain.a + (c.domain.b - c.domain.a) * j / c.n_bins;
  double fv_surv = 0.0, fv_surv2 = 0.0;
  s.survival_curve.assign(c.record_times.size(), 0.0);
  for (const auto& t : tallies) {
    s.survival_count += t.survivors;
    s.effective_sample_size += static_cast<double>(t.distinct_ancestors);
    const double sf = std::exp(t.log_survival);
    fv_surv += sf;
    fv_surv2 += sf * sf;
    for (std::size_t r = 0; r < s.survival_curve.size(); ++r)
      s.survival_curve[r] += t.alive_at[r] * static_cast<double>(t.paths) / static_cast<double>(c.n_paths);
  }
  if (c.rule == BoundaryRule::fleming_viot) {
    const double m = fv_surv / n_chunks;
    s.survival_fraction = m;
    s.survival_se = n_chunks > 1 ? std::sqrt(std::max(fv_surv2 / n_chunks - m * m, 0.0) / (n_chunks - 1)) : 0.0;
  } else {
    const double p = static_cast<double>(s.survival_count) / static_cast<double>(c.n_paths);
    s.survival_fraction = p;
    s.survival_se = std::sqrt(p * (1.0 - p) / static_cast<double>(c.n_paths));
  }
  s.chunks = std::move(tallies);
  if (s.survival_count == 0) {
    s.occupation.assign(c.n_bins, 0.0);
    s.final_law.assign(c.n_bins, 0.0);
    s.occupation_se.assign(c.n_bins, 0.0);
    s.final_law_se.assign(c.n_bins, 0.0);
    return s;
  }
  std::vector<const ChunkTally*> all;
  for (const auto& t : s.chunks) all.push_back(&t);
  detail::pooled_histograms(all, c.n_bins, s.occupation, s.final_law);
  // per-bin standard errors by bootstrap over chunks
  const int B = 200;
  auto rng = detail::make_stream(c.seed ^ 0xb0075ULL, 0);
  std::vector<double> so(c.n_bins, 0.0), sf(c.n_bins, 0.0), ho, hf;
  if (s.chunks.size() > 1)
    for (int b = 0; b < B; ++b) {
      detail::pooled_histograms(detail::resample(s.chunks, rng), c.n_bins, ho, hf);
      for (int j = 0; j < c.n_bins; ++j) {
        so[j] += (ho[j] - s.occupation[j]) * (ho[j] - s.occupation[j]);
        sf[j] += (hf[j] - s.final_law[j]) * (hf[j] - s.final_law[j]);
      }
    }
  s.occupation_se.resize(c.n_bins);
  s.final_law_se.resize(c.n_bins);
  for (int j = 0; j < c.n_bins; ++j) {
    s.occupation_se[j] = std::sqrt(so[j] / B);
    s.final_law_se[j] = std::sqrt(sf[j] / B);
  }
  return s;
}

/// Least-squares slope of log survival against time.
inline double survival_rate(const std::vector<double>& times, const std::vector<double>& fractions) {
  detail::require(times.size() == fractions.size() && times.size() >= 2, "survival_rate: need >= 2 samples");
  std::vector<double> y;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InsufficientSamples("survival_rate: zero survival fraction");
    y.push_back(std::log(f));
  }
  const double n = static_cast<double>(times.size());
  const double mx = std::accumulate(times.begin(), times.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sxy += (times[i] - mx) * (y[i] - my);
    sxx += (times[i] - mx) * (times[i] - mx);
  }
  return sxy / sxx;
}

struct MCTransport {
  TransportResult result;     // W2 between the histogram and the reference
  double w2_se = 0.0;         // bootstrap standard deviation of W2
  double w1 = 0.0;            // W1 between the histogram and the reference
  double w1_se = 0.0;         // sqrt(mean_b W1(H_b, H)^2): sampling spread of the histogram in W1
  long survivors = 0;
  int resamples = 0;
};

/// Distance from the conditional occupation histogram (or the single-time
/// law when `final_law` is set) to a reference, with bootstrap error bars.
inline MCTransport conditional_empirical_w2(const PathEnsembleSummary& s, const GridMeasure& reference,
                                           bool final_law = false, int resamples = 200, long min_survivors = 1000) {
  if (s.survival_count < min_survivors)
    throw InsufficientSamples("conditional_empirical_w2: " + std::to_string(s.survival_count) + " survivors, need " +
                              std::to_string(min_survivors));
  detail::require(s.chunks.size() >= 2, "conditional_empirical_w2: bootstrap needs >= 2 chunks");
  const GridMeasure H = final_law ? s.final_measure() : s.occupation_measure();
  MCTransport out;
  out.survivors = s.survival_count;
  out.resamples = resamples;
  out.result = w2_quantile_1d(H, reference, 20000);
  out.result.method = "quantile1d(mc-histogram)";
  out.w1 = w1_1d(H, reference);
  auto rng = detail::make_stream(s.seed ^ 0x5eedULL, 1);
  const int nb = static_cast<int>(s.edges.size()) - 1;
  std::vector<double> ho, hf;
  double m = 0.0, m2 = 0.0, w1sq = 0.0;
  for (int b = 0; b < resamples; ++b) {
    detail::pooled_histograms(detail::resample(s.chunks, rng), nb, ho, hf);
    const GridMeasure Hb = GridMeasure::histogram(s.edges, final_law ? hf : ho);
    const double w = w2_quantile_1d(Hb, reference, 4000).w2;
    m += w;
    m2 += w * w;
    const double d = w1_1d(Hb, H, 4000);
    w1sq += d * d;
  }
  m /= resamples;
  out.w2_se = std::sqrt(std::max(m2 / resamples - m * m, 0.0));
  out.w1_se = std::sqrt(w1sq / resamples);
  return out;
}

/// Bin centers, densities and standard errors with the configuration echoed
/// in the header.
inline void write_ensemble_csv(const std::string& path, const PathEnsembleSummary& s) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  os.precision(17);
  os << "# cemlab-mc/1 rule=" << to_string(s.rule) << " dt=" << s.dt << " horizon=" << s.horizon
     << " n_paths=" << s.n_paths << " seed=" << s.seed << " survivors=" << s.survival_count
     << " survival_fraction=" << s.survival_fraction << " survival_se=" << s.survival_se << "\n";
  os << "bin_center,occupation_density,occupation_se,final_density,final_se\n";
  for (std::size_t j = 0; j + 1 < s.edges.size(); ++j) {
    const double w = s.edges[j + 1] - s.edges[j];
    os << 0.5 * (s.edges[j] + s.edges[j + 1]) << ',' << s.occupation[j] / w << ',' << s.occupation_se[j] / w << ','
       << s.final_law[j] / w << ',' << s.final_law_se[j] / w << "\n";
  }
}

}  // namespace cemlab

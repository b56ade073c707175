#pragma once

// Probability measures on grids, their 1D distribution functions and
// atomizations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cemlab/domain.hpp"
#include "cemlab/errors.hpp"
#include "cemlab/legendre.hpp"
#include "cemlab/spectral_basis.hpp"

namespace cemlab {

enum class Reference { lebesgue, mu, mu0 };
enum class Profile { legendre, piecewise_linear, histogram, atoms };

inline std::string to_string(Reference r) {
  return r == Reference::lebesgue ? "lebesgue" : (r == Reference::mu ? "mu" : "mu0");
}
inline std::string to_string(Profile p) {
  switch (p) {
    case Profile::legendre:
      return "legendre";
    case Profile::piecewise_linear:
      return "piecewise_linear";
    case Profile::histogram:
      return "histogram";
    default:
      return "atoms";
  }
}

/// A probability measure given by density values against a reference
/// measure at grid nodes. `masses` are the node masses used for quadrature
/// (exact for atoms); `lebesgue` is the Lebesgue density at the nodes (1D
/// continuous profiles); `edges` are histogram bin edges.
struct GridMeasure {
  int dimension = 1;
  double a = 0.0, b = 1.0;
  std::vector<Point> nodes;
  std::vector<double> density;
  std::vector<double> masses;
  std::vector<double> lebesgue;
  std::vector<double> edges;
  Reference reference = Reference::lebesgue;
  Profile profile = Profile::atoms;

  std::size_t size() const { return nodes.size(); }
  double total_mass() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }

  void validate() const {
    detail::require(!nodes.empty() && masses.size() == nodes.size(), "GridMeasure: nodes/masses mismatch");
    for (double d : density)
      if (!(d >= -1e-12)) throw InvalidArgument("GridMeasure: density is negative");
    for (double m : masses)
      if (!(m >= -1e-12)) throw InvalidArgument("GridMeasure: negative node mass");
    if (std::abs(total_mass() - 1.0) > 1e-8)
      throw InvalidArgument("GridMeasure: total mass " + std::to_string(total_mass()) + " differs from 1");
  }

  /// Density against mu or mu_0 on the grid of a basis.
  static GridMeasure from_basis(const SpectralBasis& basis, const std::vector<double>& dens, Reference ref) {
    detail::require(dens.size() == basis.size(), "GridMeasure::from_basis: size mismatch");
    detail::require(ref != Reference::lebesgue, "GridMeasure::from_basis: reference must be mu or mu0");
    GridMeasure m;
    m.dimension = basis.dimension();
    m.a = basis.domain().a;
    m.b = basis.domain().b;
    m.nodes = basis.grid();
    m.density = dens;
    m.reference = ref;
    m.profile = basis.dimension() == 1 ? Profile::legendre : Profile::atoms;
    const auto& w = ref == Reference::mu ? basis.weights() : basis.mu0_weights();
    m.masses.resize(dens.size());
    m.lebesgue.resize(dens.size());
    for (std::size_t i = 0; i < dens.size(); ++i) {
      m.masses[i] = dens[i] * w[i];
      double leb = dens[i] * basis.mu_density()[i];
      if (ref == Reference::mu0) {
        const double p0 = basis.eigenfunctions()(0, static_cast<Eigen::Index>(i));
        leb *= p0 * p0;
      }
      m.lebesgue[i] = leb;
    }
    m.validate();
    return m;
  }

  /// mu_0 itself on the grid of a basis.
  static GridMeasure mu0(const SpectralBasis& basis) {
    return from_basis(basis, std::vector<double>(basis.size(), 1.0), Reference::mu0);
  }

  /// Histogram with bin edges and bin masses (constant Lebesgue density per bin).
  static GridMeasure histogram(std::vector<double> edges, const std::vector<double>& bin_masses) {
    detail::require(edges.size() == bin_masses.size() + 1 && bin_masses.size() >= 1, "histogram: edges/masses mismatch");
    for (std::size_t i = 1; i < edges.size(); ++i) detail::require(edges[i] > edges[i - 1], "histogram: edges must increase");
    GridMeasure m;
    m.dimension = 1;
    m.a = edges.front();
    m.b = edges.back();
    m.profile = Profile::histogram;
    m.reference = Reference::lebesgue;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const double w = edges[i + 1] - edges[i];
      m.nodes.push_back({0.5 * (edges[i] + edges[i + 1]), 0.0});
      m.masses.push_back(bin_masses[i]);
      m.density.push_back(bin_masses[i] / w);
      m.lebesgue.push_back(bin_masses[i] / w);
    }
    m.edges = std::move(edges);
    m.validate();
    return m;
  }

  /// Piecewise-linear Lebesgue density through (x_k, f_k) on [x_0, x_last].
  static GridMeasure piecewise_linear(const std::vector<double>& x, const std::vector<double>& f) {
    detail::require(x.size() >= 2 && x.size() == f.size(), "piecewise_linear: need >= 2 matching samples");
    GridMeasure m;
    m.dimension = 1;
    m.a = x.front();
    m.b = x.back();
    m.profile = Profile::piecewise_linear;
    m.reference = Reference::lebesgue;
    m.density = f;
    m.lebesgue = f;
    m.masses.assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) m.nodes.push_back({x[i], 0.0});
    for (std::size_t i = 1; i < x.size(); ++i) {
      detail::require(x[i] > x[i - 1], "piecewise_linear: nodes must increase");
      const double h = x[i] - x[i - 1];
      m.masses[i - 1] += h * (f[i - 1] / 3.0 + f[i] / 6.0);
      m.masses[i] += h * (f[i - 1] / 6.0 + f[i] / 3.0);
    }
    m.validate();
    return m;
  }

  /// Discrete measure sum_k w_k delta_{x_k}.
  static GridMeasure atoms(const std::vector<Point>& x, const std::vector<double>& w, int dimension = 1) {
    detail::require(!x.empty() && x.size() == w.size(), "atoms: size mismatch");
    GridMeasure m;
    m.dimension = dimension;
    m.nodes = x;
    m.masses = w;
    m.profile = Profile::atoms;
    m.reference = Reference::lebesgue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : x) {
      lo = std::min(lo, p.x);
      hi = std::max(hi, p.x);
    }
    m.a = lo;
    m.b = hi;
    m.validate();
    return m;
  }
  static GridMeasure atoms_1d(const std::vector<double>& x, const std::vector<double>& w) {
    std::vector<Point> p;
    for (double v : x) p.push_back({v, 0.0});
    return atoms(p, w, 1);
  }
};

/// Distribution function, density and quantile of a 1D grid measure.
class Cdf1D {
 public:
  explicit Cdf1D(const GridMeasure& m) : m_(m) {
    detail::require(m.dimension == 1, "Cdf1D: one-dimensional measures only");
    m.validate();
    switch (m.profile) {
      case Profile::legendre:
        build_legendre();
        break;
      case Profile::piecewise_linear:
        build_piecewise_linear();
        break;
      case Profile::histogram:
        build_histogram();
        break;
      case Profile::atoms:
        build_atoms();
        break;
    }
  }

  Profile profile() const { return m_.profile; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }
  bool is_atomic() const { return m_.profile == Profile::atoms; }

  /// CDF levels where the quantile function has breaks or kinks.
  const std::vector<double>& break_levels() const { return levels_; }
  /// Sorted atom positions and their cumulative masses (atoms only).
  const std::vector<double>& atom_x() const { return xs_; }
  const std::vector<double>& atom_cum() const { return cum_; }

  double cdf(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    switch (m_.profile) {
      case Profile::legendre:
        return std::clamp(F_(x) / total_, 0.0, 1.0);
      case Profile::piecewise_linear: {
        const std::size_t k = segment(x);
        const double x0 = xs_[k], h = xs_[k + 1] - x0, s = x - x0;
        const double f0 = fs_[k], slope = (fs_[k + 1] - f0) / h;
        return std::clamp(cum_[k] + f0 * s + 0.5 * slope * s * s, 0.0, 1.0);
      }
      case Profile::histogram: {
        const std::size_t k = segment(x);
        return std::clamp(cum_[k] + fs_[k] * (x - xs_[k]), 0.0, 1.0);
      }
      default: {
        auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        const std::size_t k = static_cast<std::size_t>(it - xs_.begin());
        return k == 0 ? 0.0 : cum_[k - 1];
      }
    }
  }

  /// Lebesgue density (continuous profiles).
  double density(double x) const {
    if (x < lo_ || x > hi_) return 0.0;
    switch (m_.profile) {
      case Profile::legendre:
        return f_(x) / total_;
      case Profile::piecewise_linear: {
        const std::size_t k = segment(x);
        const double s = (x - xs_[k]) / (xs_[k + 1] - xs_[k]);
        return (1.0 - s) * fs_[k] + s * fs_[k + 1];
      }
      case Profile::histogram:
        return fs_[segment(x)];
      default:
        return 0.0;
    }
  }

  /// Left-continuous quantile F^{-1}(u) = inf{x : F(x) >= u}.
  double quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    switch (m_.profile) {
      case Profile::atoms: {
        auto it = std::lower_bound(cum_.begin(), cum_.end(), u - 1e-15);
        std::size_t k = static_cast<std::size_t>(it - cum_.begin());
        if (k >= xs_.size()) k = xs_.size() - 1;
        return xs_[k];
      }
      case Profile::histogram: {
        std::size_t k = level_segment(u);
        while (k + 1 < fs_.size() && fs_[k] <= 0.0) ++k;
        if (fs_[k] <= 0.0) return xs_[k];
        return std::clamp(xs_[k] + (u - cum_[k]) / fs_[k], xs_[k], xs_[k + 1]);
      }
      case Profile::piecewise_linear: {
        const std::size_t k = level_segment(u);
        const double x0 = xs_[k], h = xs_[k + 1] - x0, f0 = fs_[k], slope = (fs_[k + 1] - f0) / h;
        const double r = u - cum_[k];
        double s;
        if (std::abs(slope) * h < 1e-12 * std::max(f0, 1e-300)) {
          s = f0 > 0.0 ? r / f0 : 0.0;
        } else {
          const double disc = std::max(f0 * f0 + 2.0 * slope * r, 0.0);
          s = 2.0 * r / (f0 + std::sqrt(disc));  // stable root of slope/2 s^2 + f0 s - r = 0
        }
        return std::clamp(x0 + s, x0, xs_[k + 1]);
      }
      default:
        return legendre_quantile(u);
    }
  }

 private:
  std::size_t segment(double x) const {
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t k = static_cast<std::size_t>(it - xs_.begin());
    return std::clamp<std::size_t>(k, 1, xs_.size() - 1) - 1;
  }
  std::size_t level_segment(double u) const {
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    std::size_t k = static_cast<std::size_t>(it - cum_.begin());
    return std::clamp<std::size_t>(k, 1, xs_.size() - 1) - 1;
  }

  void build_legendre() {
    const GaussRule rule = gauss_legendre(static_cast<int>(m_.size()), m_.a, m_.b);
    for (std::size_t i = 0; i < m_.size(); ++i)
      detail::require(std::abs(rule.nodes[i] - m_.nodes[i].x) < 1e-12 * (m_.b - m_.a) + 1e-15,
                      "Cdf1D: legendre profile requires Gauss-Legendre nodes");
    f_ = legendre_interpolant(rule, m_.lebesgue, m_.a, m_.b).trimmed(1e-13);
    F_ = f_.antiderivative();
    lo_ = m_.a;
    hi_ = m_.b;
    total_ = F_(hi_);
    detail::require(total_ > 0.0, "Cdf1D: zero total mass");
    const int K = 4096;
    tab_x_.resize(K + 1);
    tab_F_.resize(K + 1);
    for (int j = 0; j <= K; ++j) {
      tab_x_[j] = lo_ + (hi_ - lo_) * j / K;
      tab_F_[j] = F_(tab_x_[j]) / total_;
      if (j > 0 && tab_F_[j] < tab_F_[j - 1] - 1e-10)
        throw NumericalError("Cdf1D: non-monotone distribution function (corrupt density)");
      if (j > 0) tab_F_[j] = std::max(tab_F_[j], tab_F_[j - 1]);
    }
    tab_F_[0] = 0.0;
    tab_F_[K] = 1.0;
  }

  double legendre_quantile(double u) const {
    if (u <= 0.0) return lo_;
    if (u >= 1.0) return hi_;
    auto it = std::lower_bound(tab_F_.begin(), tab_F_.end(), u);
    std::size_t j = static_cast<std::size_t>(it - tab_F_.begin());
    j = std::clamp<std::size_t>(j, 1, tab_F_.size() - 1);
    double xl = tab_x_[j - 1], xr = tab_x_[j];
    double x = tab_F_[j] > tab_F_[j - 1] ? xl + (xr - xl) * (u - tab_F_[j - 1]) / (tab_F_[j] - tab_F_[j - 1])
                                         : 0.5 * (xl + xr);
    const double tol = 1e-14 * (hi_ - lo_);
    for (int it2 = 0; it2 < 100; ++it2) {
      const double g = F_(x) / total_ - u;
      if (std::abs(g) <= 2e-16) break;
      if (g > 0.0) xr = x; else xl = x;
      const double d = f_(x) / total_;
      double xn = (d > 0.0) ? x - g / d : 0.5 * (xl + xr);
      if (!(xn > xl && xn < xr)) xn = 0.5 * (xl + xr);
      const double step = std::abs(xn - x);
      x = xn;
      if (step <= tol || xr - xl <= tol) break;
    }
    return x;
  }

  void build_piecewise_linear() {
    for (const auto& p : m_.nodes) xs_.push_back(p.x);
    fs_ = m_.lebesgue;
    lo_ = xs_.front();
    hi_ = xs_.back();
    cum_.assign(xs_.size(), 0.0);
    for (std::size_t k = 1; k < xs_.size(); ++k)
      cum_[k] = cum_[k - 1] + 0.5 * (fs_[k - 1] + fs_[k]) * (xs_[k] - xs_[k - 1]);
    const double total = cum_.back();
    for (double& c : cum_) c /= total;
    for (double& f : fs_) f /= total;
    levels_ = cum_;
  }

  void build_histogram() {
    xs_ = m_.edges;
    lo_ = xs_.front();
    hi_ = xs_.back();
    double total = 0.0;
    for (double w : m_.masses) total += w;
    cum_.assign(xs_.size(), 0.0);
    fs_.assign(xs_.size() - 1, 0.0);
    for (std::size_t k = 0; k + 1 < xs_.size(); ++k) {
      fs_[k] = m_.masses[k] / total / (xs_[k + 1] - xs_[k]);
      cum_[k + 1] = cum_[k] + m_.masses[k] / total;
    }
    cum_.back() = 1.0;
    levels_ = cum_;
  }

  void build_atoms() {
    std::vector<std::size_t> order(m_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return m_.nodes[i].x < m_.nodes[j].x; });
    double total = m_.total_mass(), c = 0.0;
    for (auto i : order) {
      if (m_.masses[i] <= 0.0) continue;
      c += m_.masses[i] / total;
      if (!xs_.empty() && m_.nodes[i].x == xs_.back()) {
        cum_.back() = c;
      } else {
        xs_.push_back(m_.nodes[i].x);
        cum_.push_back(c);
      }
    }
    cum_.back() = 1.0;
    lo_ = xs_.front();
    hi_ = xs_.back();
    levels_ = cum_;
  }

  GridMeasure m_;
  LegendreSeries f_, F_;
  double total_ = 1.0, lo_ = 0.0, hi_ = 1.0;
  std::vector<double> tab_x_, tab_F_;
  std::vector<double> xs_, fs_, cum_, levels_;
};

/// Atomized copy of a measure with a bound on W2(measure, atoms).
struct Atomization {
  GridMeasure atoms;
  double w2_bound = 0.0;
};

/// 1D: equal-width cells, each replaced by an atom at its conditional mean;
/// W2 <= sqrt(sum_c m_c Var_c). Atomic inputs are returned unchanged.
inline Atomization atomize(const GridMeasure& m, int n_cells) {
  detail::require(m.dimension == 1, "atomize: one-dimensional measures only");
  if (m.profile == Profile::atoms) return {m, 0.0};
  detail::require(n_cells >= 1, "atomize: need at least one cell");
  const Cdf1D F(m);
  const double lo = F.lower(), hi = F.upper(), w = (hi - lo) / n_cells;
  const GaussRule q = gauss_legendre(16, 0.0, 1.0);
  std::vector<double> xs, ws;
  double var_sum = 0.0;
  for (int c = 0; c < n_cells; ++c) {
    const double l = lo + c * w, r = (c + 1 == n_cells) ? hi : lo + (c + 1) * w;
    const double mass = F.cdf(r) - F.cdf(l);
    if (mass <= 0.0) continue;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    // sub-panels for profiles with kinks inside a cell
    const int sub = m.profile == Profile::legendre ? 1 : 4;
    for (int s = 0; s < sub; ++s) {
      const double sl = l + (r - l) * s / sub, sr = l + (r - l) * (s + 1) / sub;
      for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        const double x = sl + (sr - sl) * q.nodes[k], d = F.density(x) * q.weights[k] * (sr - sl);
        m0 += d;
        m1 += d * x;
        m2 += d * x * x;
      }
    }
    const double mean = m0 > 0.0 ? std::clamp(m1 / m0, l, r) : 0.5 * (l + r);
    const double var = m0 > 0.0 ? std::max(m2 / m0 - mean * mean, 0.0) : 0.25 * (r - l) * (r - l);
    // small margin for quadrature error; the half-width bound always holds
    var_sum += mass * std::min(var + 1e-6 * (r - l) * (r - l), 0.25 * (r - l) * (r - l));
    xs.push_back(mean);
    ws.push_back(mass);
  }
  double tot = 0.0;
  for (double v : ws) tot += v;
  for (double& v : ws) v /= tot;
  return {GridMeasure::atoms_1d(xs, ws), std::sqrt(var_sum)};
}

}  // namespace cemlab

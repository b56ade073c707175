#pragma once

// W2 between probability measures: 1D quantile coupling, exact discrete
// transport (transportation simplex) and debiased entropic transport.

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cemlab/errors.hpp"
#include "cemlab/grid_measure.hpp"
#include "cemlab/legendre.hpp"

namespace cemlab {

struct PlanEntry {
  int i = 0, j = 0;
  double mass = 0.0;
};

/// A W2 value with its method tag and error estimate. `error_estimate` is an
/// absolute bound on the error of w2_squared; `w2_error` the induced bound on w2.
struct TransportResult {
  double w2 = 0.0;
  double w2_squared = 0.0;
  double error_estimate = 0.0;
  double w2_error = 0.0;
  std::string method;
  std::vector<PlanEntry> plan;
  int iterations = 0;
  double dual_gap = 0.0;

  void set_squared(double sq, double err) {
    w2_squared = std::max(sq, 0.0);
    w2 = std::sqrt(w2_squared);
    error_estimate = err;
    w2_error = std::sqrt(w2_squared + err) - std::sqrt(std::max(w2_squared - err, 0.0));
  }
};

namespace detail {

// Subintervals of [0, 1] between quantile break levels of both measures.
inline std::vector<double> quantile_breaks(const Cdf1D& F1, const Cdf1D& F2) {
  std::vector<double> u{0.0, 1.0};
  for (const Cdf1D* F : {&F1, &F2})
    if (F->profile() != Profile::legendre && F->break_levels().size() <= 20000)
      u.insert(u.end(), F->break_levels().begin(), F->break_levels().end());
  std::sort(u.begin(), u.end());
  std::vector<double> out;
  for (double v : u) {
    v = std::clamp(v, 0.0, 1.0);
    if (out.empty() || v - out.back() > 1e-14) out.push_back(v);
  }
  if (out.back() < 1.0) out.back() = 1.0;
  return out;
}

// int_0^1 g(q1(u), q2(u)) du by composite Gauss rules in s with
// u = u0 + (u1 - u0)(1 - cos(pi s))/2 on every break interval.
template <class G>
double quantile_integral(const Cdf1D& F1, const Cdf1D& F2, const std::vector<double>& breaks, long n_total,
                         int panel_divisor, G&& g) {
  static const GaussRule q = gauss_legendre(8, 0.0, 1.0);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double u0 = breaks[k], u1 = breaks[k + 1], len = u1 - u0;
    const long want = static_cast<long>(std::ceil(n_total * len / 8.0));
    const long panels = std::max<long>(1, std::max<long>(2, want) / panel_divisor);
    double sub = 0.0;
    for (long p = 0; p < panels; ++p) {
      for (std::size_t j = 0; j < q.nodes.size(); ++j) {
        const double s = (p + q.nodes[j]) / panels;
        const double c = std::cos(std::numbers::pi * s);
        const double u = u0 + len * 0.5 * (1.0 - c);
        const double du = len * 0.5 * std::numbers::pi * std::sin(std::numbers::pi * s) * q.weights[j] / panels;
        sub += g(F1.quantile(u), F2.quantile(u)) * du;
      }
    }
    total += sub;
  }
  return total;
}

inline double atoms_merge(const Cdf1D& F1, const Cdf1D& F2, double power) {
  const auto &x1 = F1.atom_x(), &c1 = F1.atom_cum(), &x2 = F2.atom_x(), &c2 = F2.atom_cum();
  std::size_t i = 0, j = 0;
  double u = 0.0, s = 0.0;
  while (i < x1.size() && j < x2.size()) {
    const double next = std::min(c1[i], c2[j]);
    s += (next - u) * std::pow(std::abs(x1[i] - x2[j]), power);
    u = next;
    if (c1[i] <= next + 1e-15) ++i;
    if (c2[j] <= next + 1e-15) ++j;
  }
  return s;
}

}  // namespace detail

/// W2^2 = int_0^1 |F1^{-1}(u) - F2^{-1}(u)|^2 du. Error estimate from a run
/// with half the quadrature panels; exact for pairs of atomic measures.
inline TransportResult w2_quantile_1d(const GridMeasure& m1, const GridMeasure& m2, long n_quantiles = 100000) {
  detail::require(m1.dimension == 1 && m2.dimension == 1, "w2_quantile_1d: one-dimensional measures only");
  detail::require(n_quantiles >= 16, "w2_quantile_1d: need at least 16 quantile nodes");
  const Cdf1D F1(m1), F2(m2);
  TransportResult r;
  r.method = "quantile1d";
  if (F1.is_atomic() && F2.is_atomic()) {
    r.set_squared(detail::atoms_merge(F1, F2, 2.0), 1e-15);
    return r;
  }
  const auto breaks = detail::quantile_breaks(F1, F2);
  auto sq = [](double a, double b) { return (a - b) * (a - b); };
  const double fine = detail::quantile_integral(F1, F2, breaks, n_quantiles, 1, sq);
  const double coarse = detail::quantile_integral(F1, F2, breaks, n_quantiles, 2, sq);
  r.iterations = static_cast<int>(n_quantiles);
  r.set_squared(fine, std::abs(fine - coarse) + 1e-15 * std::max(fine, 1e-300));
  return r;
}

/// W1 = int |F1^{-1} - F2^{-1}| du (1D).
inline double w1_1d(const GridMeasure& m1, const GridMeasure& m2, long n_quantiles = 20000) {
  const Cdf1D F1(m1), F2(m2);
  if (F1.is_atomic() && F2.is_atomic()) return detail::atoms_merge(F1, F2, 1.0);
  const auto breaks = detail::quantile_breaks(F1, F2);
  return detail::quantile_integral(F1, F2, breaks, n_quantiles, 1, [](double a, double b) { return std::abs(a - b); });
}

// ---------------------------------------------------------------------------
// Exact discrete transport

namespace detail {

// Transportation simplex on the bipartite basis tree (rows 0..m-1,
// columns m..m+n-1), Dantzig pricing, north-west corner start.
class TransportationSimplex {
 public:
  TransportationSimplex(std::vector<double> supply, std::vector<double> demand, std::vector<double> cost)
      : m_(static_cast<int>(supply.size())), n_(static_cast<int>(demand.size())), a_(std::move(supply)),
        b_(std::move(demand)), c_(std::move(cost)) {}

  int solve(int max_iterations) {
    north_west_corner();
    std::vector<double> pot(m_ + n_);
    const double scale = *std::max_element(c_.begin(), c_.end());
    const double tol = 1e-12 * std::max(scale, 1e-300);
    int it = 0;
    for (; it < max_iterations; ++it) {
      potentials(pot);
      int bi = -1, bj = -1;
      double best = -tol;
      for (int i = 0; i < m_; ++i)
        for (int j = 0; j < n_; ++j) {
          const double rc = c_[i * n_ + j] - pot[i] - pot[m_ + j];
          if (rc < best) {
            best = rc;
            bi = i;
            bj = j;
          }
        }
      if (bi < 0) return it;
      pivot(bi, bj);
    }
    throw NumericalError("w2_exact_discrete: simplex iteration cap reached");
  }

  double objective() const {
    double s = 0.0;
    for (const auto& e : basis_) s += e.flow * c_[e.i * n_ + e.j];
    return s;
  }
  std::vector<PlanEntry> plan() const {
    std::vector<PlanEntry> p;
    for (const auto& e : basis_)
      if (e.flow > 0.0) p.push_back({e.i, e.j, e.flow});
    std::sort(p.begin(), p.end(), [](const PlanEntry& x, const PlanEntry& y) {
      return x.i != y.i ? x.i < y.i : x.j < y.j;
    });
    return p;
  }

 private:
  struct Cell {
    int i, j;
    double flow;
  };

  void north_west_corner() {
    std::vector<double> a = a_, b = b_;
    int i = 0, j = 0;
    while (i < m_ && j < n_) {
      const double f = std::min(a[i], b[j]);
      basis_.push_back({i, j, f});
      a[i] -= f;
      b[j] -= f;
      if (i == m_ - 1 && j == n_ - 1) break;
      // Advance one index per step so the basis keeps m + n - 1 cells.
      if ((a[i] <= b[j] && i < m_ - 1) || j == n_ - 1) {
        ++i;
      } else {
        ++j;
      }
    }
    rebuild_adjacency();
  }

  void rebuild_adjacency() {
    adj_.assign(m_ + n_, {});
    for (int k = 0; k < static_cast<int>(basis_.size()); ++k) {
      adj_[basis_[k].i].push_back(k);
      adj_[m_ + basis_[k].j].push_back(k);
    }
  }

  void potentials(std::vector<double>& pot) {
    std::vector<char> seen(m_ + n_, 0);
    std::deque<int> queue{0};
    pot[0] = 0.0;
    seen[0] = 1;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      for (int k : adj_[v]) {
        const Cell& e = basis_[k];
        const int w = v < m_ ? m_ + e.j : e.i;
        if (seen[w]) continue;
        seen[w] = 1;
        pot[w] = c_[e.i * n_ + e.j] - pot[v];
        queue.push_back(w);
      }
    }
  }

  // Enter cell (bi, bj): find the tree path column bj -> row bi, alternate signs.
  void pivot(int bi, int bj) {
    const int src = m_ + bj, dst = bi;
    std::vector<int> parent_edge(m_ + n_, -1), parent(m_ + n_, -1);
    std::vector<char> seen(m_ + n_, 0);
    std::deque<int> queue{src};
    seen[src] = 1;
    while (!queue.empty() && !seen[dst]) {
      const int v = queue.front();
      queue.pop_front();
      for (int k : adj_[v]) {
        const Cell& e = basis_[k];
        const int w = v < m_ ? m_ + e.j : e.i;
        if (seen[w]) continue;
        seen[w] = 1;
        parent[w] = v;
        parent_edge[w] = k;
        queue.push_back(w);
      }
    }
    if (!seen[dst]) throw NumericalError("w2_exact_discrete: basis tree is disconnected");
    // Cycle: entering (+), then path edges from row bi back to column bj alternate -, +, -, ...
    std::vector<int> path;
    for (int v = dst; v != src; v = parent[v]) path.push_back(parent_edge[v]);
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const double f = basis_[path[k]].flow;
      if (f < theta) {
        theta = f;
        leave = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) basis_[path[k]].flow += (k % 2 == 0 ? -theta : theta);
    basis_[leave] = {bi, bj, theta};
    rebuild_adjacency();
  }

  int m_, n_;
  std::vector<double> a_, b_, c_;
  std::vector<Cell> basis_;
  std::vector<std::vector<int>> adj_;
};

inline double sqdist(const Point& p, const Point& q) {
  const double dx = p.x - q.x, dy = p.y - q.y;
  return dx * dx + dy * dy;
}

}  // namespace detail

/// Exact W2 between two discrete measures (supports of at most 512 atoms each).
inline TransportResult w2_exact_discrete(const std::vector<Point>& x, const std::vector<double>& a,
                                         const std::vector<Point>& y, const std::vector<double>& b) {
  detail::require(!x.empty() && !y.empty(), "w2_exact_discrete: empty support");
  detail::require(x.size() == a.size() && y.size() == b.size(), "w2_exact_discrete: support/weight mismatch");
  detail::require(x.size() <= 512 && y.size() <= 512, "w2_exact_discrete: supports are limited to 512 atoms");
  double sa = 0.0, sb = 0.0;
  for (double v : a) {
    detail::require(v >= 0.0, "w2_exact_discrete: negative weight");
    sa += v;
  }
  for (double v : b) {
    detail::require(v >= 0.0, "w2_exact_discrete: negative weight");
    sb += v;
  }
  if (std::abs(sa - sb) > 1e-10) throw InvalidArgument("w2_exact_discrete: infeasible marginals (mass mismatch)");
  std::vector<double> bb = b;
  bb.back() += sa - sb;
  bb.back() = std::max(bb.back(), 0.0);
  std::vector<double> cost(x.size() * y.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) cost[i * y.size() + j] = detail::sqdist(x[i], y[j]);
  detail::TransportationSimplex simplex(a, bb, cost);
  TransportResult r;
  r.method = "exact-discrete";
  r.iterations = simplex.solve(200000);
  r.plan = simplex.plan();
  r.set_squared(simplex.objective(), 1e-12 * std::max(simplex.objective(), 1e-300) + 1e-15);
  return r;
}

inline TransportResult w2_exact_discrete(const GridMeasure& m1, const GridMeasure& m2) {
  detail::require(m1.profile == Profile::atoms && m2.profile == Profile::atoms,
                  "w2_exact_discrete: atomic measures required (see atomize)");
  return w2_exact_discrete(m1.nodes, m1.masses, m2.nodes, m2.masses);
}

// ---------------------------------------------------------------------------
// Entropic transport

struct EntropicOptions {
  double eps_start = 0.0;   // 0: squared diameter of the supports
  double eps_final = 1e-5;  // relative to the squared diameter
  double ratio = 0.5;       // geometric decrease per stage
  double marginal_tol = 1e-10;  // final stage
  double stage_tol = 1e-6;      // intermediate stages
  double relaxation = 1.8;      // over-relaxation of the alternating updates
  int max_iterations = 5000;    // per stage
};

namespace detail {

struct SinkhornState {
  std::vector<double> f, g;
  double value = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

// Stabilized Sinkhorn for OT_eps(a, b) = <f, a> + <g, b> at the fixed point.
// Scalings u, v act on the kernel exp((f + g - C) / eps); they are absorbed
// into the potentials whenever they leave [e^-100, e^100]. When `symmetric` is
// set the problem is OT_eps(a, a) and f = g.
inline void sinkhorn_stage(const std::vector<double>& C, const std::vector<double>& a, const std::vector<double>& b,
                           double eps, bool symmetric, const EntropicOptions& opt, double tol, double cmax,
                           SinkhornState& st) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index n = static_cast<Eigen::Index>(a.size()), m = static_cast<Eigen::Index>(b.size());
  const Eigen::Map<const RowMat> Cm(C.data(), n, m);
  const Eigen::Map<const Eigen::VectorXd> A(a.data(), n), B(b.data(), m);
  Eigen::Map<Eigen::VectorXd> F(st.f.data(), n), G(st.g.data(), m);
  RowMat K;
  Eigen::ArrayXd u = Eigen::ArrayXd::Ones(n), v = Eigen::ArrayXd::Ones(m);
  auto absorb = [&] {
    F.array() += eps * u.log();
    if (symmetric)
      G = F;
    else
      G.array() += eps * v.log();
    u.setOnes();
    v.setOnes();
    K = (((-Cm).colwise() + F).rowwise() + G.transpose()) / eps;
    K = (K.array() < -690.0).select(0.0, K.array().exp()).matrix();  // no subnormals
  };
  auto out_of_range = [](const Eigen::ArrayXd& s) {
    return !s.allFinite() || (s.abs().log().abs() > 100.0).any();
  };
  absorb();
  const double w = opt.relaxation;
  for (int it = 0; it < opt.max_iterations; ++it) {
    ++st.iterations;
    if (symmetric) {
      const Eigen::ArrayXd nu = 1.0 / (K * (A.array() * u).matrix()).array();
      u = (u * nu).sqrt();
      v = u;
    } else {
      const Eigen::ArrayXd nu = 1.0 / (K * (B.array() * v).matrix()).array();
      u = w == 1.0 ? nu : u.pow(1.0 - w) * nu.pow(w);
      const Eigen::ArrayXd nv = 1.0 / (K.transpose() * (A.array() * u).matrix()).array();
      v = w == 1.0 ? nv : v.pow(1.0 - w) * nv.pow(w);
    }
    if (out_of_range(u) || out_of_range(v)) absorb();
    if (it % 10 != 9 && it + 1 < opt.max_iterations) continue;
    // Row-marginal violation of the current plan.
    const Eigen::ArrayXd rows = A.array() * u * (K * (B.array() * v).matrix()).array();
    double viol = (rows - A.array()).abs().sum();
    if (symmetric) viol *= 2.0;
    st.gap = viol * cmax;
    if (viol < tol) break;
  }
  absorb();
  st.value = A.dot(F) + B.dot(G);
}

struct EntropicRun {
  double value = 0.0, previous = 0.0, gap = 0.0;
  int iterations = 0;
  bool converged = true;
};

inline EntropicRun entropic_ot(const std::vector<Point>& x, const std::vector<double>& a, const std::vector<Point>& y,
                               const std::vector<double>& b, bool symmetric, double diam2, const EntropicOptions& opt,
                               std::vector<double>* f_out = nullptr, std::vector<double>* g_out = nullptr) {
  const std::size_t n = x.size(), m = y.size();
  std::vector<double> C(n * m);
  double cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      C[i * m + j] = sqdist(x[i], y[j]);
      cmax = std::max(cmax, C[i * m + j]);
    }
  SinkhornState st;
  st.f.assign(n, 0.0);
  st.g.assign(m, 0.0);
  EntropicRun run;
  double eps = opt.eps_start > 0 ? opt.eps_start : diam2;
  const double eps_final = opt.eps_final * diam2;
  bool first = true;
  while (true) {
    const double e = std::max(eps, eps_final);
    const int before = st.iterations;
    const bool last = e <= eps_final;
    const double tol = last ? opt.marginal_tol : std::max(opt.stage_tol, opt.marginal_tol);
    sinkhorn_stage(C, a, b, e, symmetric, opt, tol, cmax, st);
    if (last && st.iterations - before >= opt.max_iterations && st.gap > tol * cmax) run.converged = false;
    run.previous = first ? st.value : run.value;
    run.value = st.value;
    first = false;
    if (e <= eps_final) break;
    eps *= opt.ratio;
  }
  run.gap = st.gap;
  run.iterations = st.iterations;
  if (f_out) *f_out = st.f;
  if (g_out) *g_out = st.g;
  return run;
}

}  // namespace detail

namespace detail {

struct PlanBounds {
  double lower = 0.0, upper = 0.0;
};

// Certified bounds on the unregularized OT value from entropic potentials:
// the c-transformed pair (f~, g~) is dual feasible, and the entropic plan
// rounded onto the exact marginals is primal feasible.
inline PlanBounds certified_bounds(const std::vector<double>& C, const std::vector<double>& a,
                                   const std::vector<double>& b, const std::vector<double>& f,
                                   const std::vector<double>& g, double eps) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> ft(n), gt(m, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    double v = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) v = std::min(v, C[i * m + j] - g[j]);
    ft[i] = v;
    for (std::size_t j = 0; j < m; ++j) gt[j] = std::min(gt[j], C[i * m + j] - v);
  }
  PlanBounds out;
  for (std::size_t i = 0; i < n; ++i) out.lower += a[i] * ft[i];
  for (std::size_t j = 0; j < m; ++j) out.lower += b[j] * gt[j];

  auto P = [&](std::size_t i, std::size_t j) { return a[i] * b[j] * std::exp((f[i] + g[j] - C[i * m + j]) / eps); };
  std::vector<double> x(n, 0.0), y(m, 0.0), er(n, 0.0), ec(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += P(i, j);
    x[i] = r > a[i] ? a[i] / r : 1.0;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[j] += x[i] * P(i, j);
  for (std::size_t j = 0; j < m; ++j) y[j] = y[j] > b[j] ? b[j] / y[j] : 1.0;
  double cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double p = x[i] * P(i, j) * y[j];
      cost += p * C[i * m + j];
      er[i] += p;
      ec[j] += p;
    }
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    er[i] = std::max(a[i] - er[i], 0.0);
    mass += er[i];
  }
  for (std::size_t j = 0; j < m; ++j) ec[j] = std::max(b[j] - ec[j], 0.0);
  if (mass > 0.0)
    for (std::size_t i = 0; i < n; ++i)
      if (er[i] > 0.0)
        for (std::size_t j = 0; j < m; ++j) cost += er[i] * ec[j] / mass * C[i * m + j];
  out.upper = cost;
  return out;
}

}  // namespace detail

/// Debiased Sinkhorn divergence S_eps = OT_eps(a, b) - (OT_eps(a, a) + OT_eps(b, b)) / 2
/// with geometric eps-scaling, reported inside certified primal/dual bounds
/// on the exact discrete value; the error estimate covers the whole bracket.
inline TransportResult w2_entropic(const std::vector<Point>& x, const std::vector<double>& a,
                                   const std::vector<Point>& y, const std::vector<double>& b,
                                   const EntropicOptions& opt = {}) {
  detail::require(!x.empty() && !y.empty() && x.size() == a.size() && y.size() == b.size(),
                  "w2_entropic: support/weight mismatch");
  detail::require(x.size() <= 4096 && y.size() <= 4096, "w2_entropic: grids are limited to 4096 nodes");
  double sa = 0.0, sb = 0.0;
  for (double v : a) sa += v;
  for (double v : b) sb += v;
  if (std::abs(sa - sb) > 1e-10) throw InvalidArgument("w2_entropic: infeasible marginals (mass mismatch)");
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = hi_x;
  for (const auto* S : {&x, &y})
    for (const Point& p : *S) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  const double diam2 = std::max((hi_x - lo_x) * (hi_x - lo_x) + (hi_y - lo_y) * (hi_y - lo_y), 1e-300);
  std::vector<double> f, g;
  const auto xy = detail::entropic_ot(x, a, y, b, false, diam2, opt, &f, &g);
  const auto xx = detail::entropic_ot(x, a, x, a, true, diam2, opt);
  const auto yy = detail::entropic_ot(y, b, y, b, true, diam2, opt);
  std::vector<double> C(x.size() * y.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) C[i * y.size() + j] = detail::sqdist(x[i], y[j]);
  const detail::PlanBounds pb = detail::certified_bounds(C, a, b, f, g, std::max(opt.eps_final * diam2, 1e-300));
  const double lower = std::max(pb.lower, 0.0), upper = std::max(pb.upper, lower);
  const double s = std::clamp(xy.value - 0.5 * (xx.value + yy.value), lower, upper);
  TransportResult r;
  r.method = xy.converged && xx.converged && yy.converged ? "entropic" : "entropic(unconverged)";
  r.iterations = xy.iterations + xx.iterations + yy.iterations;
  r.dual_gap = upper - lower;
  r.set_squared(s, std::max(s - lower, upper - s) + 1e-12 * std::max(upper, 1e-300));
  return r;
}

/// Entropic W2 between grid measures: atomized with `cells` cells in 1D
/// (the atomization bound is added to the error), node masses in 2D.
inline TransportResult w2_entropic(const GridMeasure& m1, const GridMeasure& m2, const EntropicOptions& opt = {},
                                   int cells = 256) {
  if (m1.dimension == 2 || m2.dimension == 2) return w2_entropic(m1.nodes, m1.masses, m2.nodes, m2.masses, opt);
  const Atomization A = atomize(m1, cells), B = atomize(m2, cells);
  TransportResult r = w2_entropic(A.atoms.nodes, A.atoms.masses, B.atoms.nodes, B.atoms.masses, opt);
  const double w_err = r.w2_error + A.w2_bound + B.w2_bound;
  const double err_sq = (2.0 * r.w2 + w_err) * w_err;
  r.error_estimate = std::max(r.error_estimate, err_sq);
  r.w2_error = w_err;
  return r;
}

/// Plan as COO triplets i,j,mass.
inline void write_plan_csv(const std::string& path, const TransportResult& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.precision(17);
  out << "i,j,mass\n";
  for (const auto& e : r.plan) out << e.i << ',' << e.j << ',' << e.mass << '\n';
}

}  // namespace cemlab

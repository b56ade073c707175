#pragma once

// Dirichlet / Neumann eigenbasis {phi_m, lambda_m} of -L, L = Delta + grad V,
// on an interval or an axis-aligned rectangle, sampled on a Gauss-Legendre grid
// together with quadrature weights for the probability measure
// mu(dx) = e^V dx / Z.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cemlab/domain.hpp"
#include "cemlab/errors.hpp"
#include "cemlab/legendre.hpp"

namespace cemlab {

/// Closed-form sine/cosine modes. Mode m is the tensor product of 1D factors
/// with wave numbers (kx, ky); ky is unused on intervals.
struct AnalyticModes {
  std::vector<std::array<int, 2>> wave_numbers;
};

/// Modes given as Legendre expansions on [a, b] (columns = modes).
struct LegendreModes {
  Eigen::MatrixXd coefficients;  // (degree + 1) x M
};

/// Everything that defines a basis. SpectralBasis validates it on construction.
struct BasisData {
  Domain domain;
  std::string method;
  std::vector<double> eigenvalues;
  GaussRule rule_x, rule_y;           // rule_y empty on intervals
  std::vector<Point> grid;            // tensor grid, x fastest
  std::vector<double> weights;        // quadrature weights of mu, sum = 1
  std::vector<double> mu_density;     // Lebesgue density of mu at the grid nodes
  double normalization = 1.0;         // Z = integral of e^V dx
  Eigen::MatrixXd eigenfunctions;     // M x n
  std::variant<AnalyticModes, LegendreModes> representation;
};

class SpectralBasis {
 public:
  explicit SpectralBasis(BasisData data) : d_(std::move(data)) { finalize(); }

  const Domain& domain() const { return d_.domain; }
  int dimension() const { return d_.domain.dimension(); }
  Boundary boundary() const { return d_.domain.boundary; }
  const std::string& method() const { return d_.method; }
  int modes() const { return static_cast<int>(d_.eigenvalues.size()); }
  std::size_t size() const { return d_.grid.size(); }

  const std::vector<double>& eigenvalues() const { return d_.eigenvalues; }
  const std::vector<Point>& grid() const { return d_.grid; }
  const std::vector<double>& weights() const { return d_.weights; }
  const std::vector<double>& mu_density() const { return d_.mu_density; }
  double normalization() const { return d_.normalization; }
  const GaussRule& rule_x() const { return d_.rule_x; }
  const GaussRule& rule_y() const { return d_.rule_y; }
  const Eigen::MatrixXd& eigenfunctions() const { return d_.eigenfunctions; }
  const std::variant<AnalyticModes, LegendreModes>& representation() const { return d_.representation; }

  /// phi_m / phi_0 on the grid (equal to phi_m up to the constant phi_0 for Neumann).
  const Eigen::MatrixXd& ground_ratio() const { return ratio_; }
  /// Gradients of phi_m on the grid; grad_y is empty on intervals.
  const Eigen::MatrixXd& grad_x() const { return grad_x_; }
  const Eigen::MatrixXd& grad_y() const { return grad_y_; }
  /// Grid estimates of the sup norms of phi_m.
  const std::vector<double>& sup_norms() const { return sup_; }
  /// Quadrature weights of mu_0 = phi_0^2 mu.
  const std::vector<double>& mu0_weights() const { return w0_; }

  /// Gaps lambda_m - lambda_0.
  std::vector<double> gaps() const {
    std::vector<double> g(d_.eigenvalues.size());
    for (std::size_t m = 0; m < g.size(); ++m) g[m] = d_.eigenvalues[m] - d_.eigenvalues[0];
    return g;
  }

  /// Lebesgue density of mu at an arbitrary point.
  double mu_density_at(const Point& p) const {
    if (d_.domain.kind == DomainKind::rectangle) return d_.normalization > 0 ? 1.0 / d_.normalization : 0.0;
    return std::exp(d_.domain.potential.value(p.x)) / d_.normalization;
  }

  /// All modes and their gradients at one point (off-grid evaluation).
  void evaluate(const Point& p, std::span<double> value, std::span<double> dx, std::span<double> dy) const {
    const int M = modes();
    if (const auto* an = std::get_if<AnalyticModes>(&d_.representation)) {
      for (int m = 0; m < M; ++m) {
        const auto [kx, ky] = an->wave_numbers[m];
        double fx, gx, fy = 1.0, gy = 0.0;
        factor(kx, p.x, d_.domain.a, d_.domain.b, fx, gx);
        if (dimension() == 2) factor(ky, p.y, d_.domain.c, d_.domain.d, fy, gy);
        value[m] = fx * fy;
        if (!dx.empty()) dx[m] = gx * fy;
        if (!dy.empty()) dy[m] = fx * gy;
      }
      return;
    }
    const auto& coef = std::get<LegendreModes>(d_.representation).coefficients;
    const int K = static_cast<int>(coef.rows()) - 1;
    std::vector<double> P(K + 1), dP(K + 1);
    const double a = d_.domain.a, b = d_.domain.b;
    legendre_table((2.0 * p.x - a - b) / (b - a), K, P, dP);
    const Eigen::Map<const Eigen::VectorXd> Pv(P.data(), K + 1), dPv(dP.data(), K + 1);
    for (int m = 0; m < M; ++m) {
      value[m] = coef.col(m).dot(Pv);
      if (!dx.empty()) dx[m] = coef.col(m).dot(dPv) * 2.0 / (b - a);
      if (!dy.empty()) dy[m] = 0.0;
    }
  }

  double eval(int m, const Point& p) const {
    std::vector<double> v(modes());
    evaluate(p, v, {}, {});
    return v.at(m);
  }

  /// max_{i,j} |sum_grid phi_i phi_j w - delta_ij|
  double orthonormality_residual() const {
    const Eigen::Map<const Eigen::VectorXd> w(d_.weights.data(), static_cast<Eigen::Index>(d_.weights.size()));
    const Eigen::MatrixXd& F = d_.eigenfunctions;
    Eigen::MatrixXd G = F * w.asDiagonal() * F.transpose();
    G.diagonal().array() -= 1.0;
    return G.cwiseAbs().maxCoeff();
  }

 private:
  // sqrt(2) sin / sqrt(2) cos factor and its derivative.
  void factor(int k, double x, double lo, double hi, double& f, double& g) const {
    const double L = hi - lo, w = k * std::numbers::pi / L, s = std::sqrt(2.0);
    if (d_.domain.boundary == Boundary::dirichlet) {
      f = s * std::sin(w * (x - lo));
      g = s * w * std::cos(w * (x - lo));
    } else if (k == 0) {
      f = 1.0;
      g = 0.0;
    } else {
      f = s * std::cos(w * (x - lo));
      g = -s * w * std::sin(w * (x - lo));
    }
  }

  void finalize() {
    d_.domain.validate();
    const int M = modes();
    const std::size_t n = d_.grid.size();
    detail::require(M >= 1, "SpectralBasis: need at least one mode");
    detail::require(d_.weights.size() == n && d_.mu_density.size() == n, "SpectralBasis: grid/weight size mismatch");
    detail::require(d_.eigenfunctions.rows() == M && d_.eigenfunctions.cols() == static_cast<Eigen::Index>(n),
                    "SpectralBasis: eigenfunction matrix has wrong shape");
    for (int m = 1; m < M; ++m)
      detail::require(d_.eigenvalues[m] >= d_.eigenvalues[m - 1], "SpectralBasis: eigenvalues must ascend");
    for (const Point& p : d_.grid)
      detail::require(d_.domain.contains_interior(p), "SpectralBasis: grid nodes must be interior");
    const double mass = std::accumulate(d_.weights.begin(), d_.weights.end(), 0.0);
    if (std::abs(mass - 1.0) > 1e-12) throw NumericalError("SpectralBasis: mu is not normalized");

    const double resid = orthonormality_residual();
    if (!(resid <= 1e-8))
      throw NumericalError("SpectralBasis: orthonormality residual " + std::to_string(resid) + " exceeds 1e-8");

    const Eigen::RowVectorXd phi0 = d_.eigenfunctions.row(0);
    if (d_.domain.boundary == Boundary::dirichlet) {
      for (Eigen::Index i = 0; i < phi0.size(); ++i)
        if (!(phi0[i] > 0.0)) throw NumericalError("SpectralBasis: Dirichlet ground state not positive on the grid");
    }
    ratio_ = d_.eigenfunctions;
    for (Eigen::Index i = 0; i < ratio_.cols(); ++i) ratio_.col(i) /= phi0[i];

    grad_x_.resize(M, static_cast<Eigen::Index>(n));
    if (dimension() == 2) grad_y_.resize(M, static_cast<Eigen::Index>(n));
    std::vector<double> v(M), gx(M), gy(M);
    for (std::size_t i = 0; i < n; ++i) {
      evaluate(d_.grid[i], v, gx, dimension() == 2 ? std::span<double>(gy) : std::span<double>());
      for (int m = 0; m < M; ++m) {
        grad_x_(m, static_cast<Eigen::Index>(i)) = gx[m];
        if (dimension() == 2) grad_y_(m, static_cast<Eigen::Index>(i)) = gy[m];
      }
    }
    sup_.resize(M);
    for (int m = 0; m < M; ++m) sup_[m] = d_.eigenfunctions.row(m).cwiseAbs().maxCoeff();
    w0_.resize(n);
    for (std::size_t i = 0; i < n; ++i) w0_[i] = phi0[static_cast<Eigen::Index>(i)] * phi0[static_cast<Eigen::Index>(i)] * d_.weights[i];
  }

  BasisData d_;
  Eigen::MatrixXd ratio_, grad_x_, grad_y_;
  std::vector<double> sup_, w0_;
};

// ---------------------------------------------------------------------------
// Construction

namespace detail {

inline int default_axis_nodes(int max_wave_number) { return std::max(48, 2 * max_wave_number + 32); }

inline void fill_interval_grid(BasisData& d, int n_grid) {
  const Domain& dom = d.domain;
  d.rule_x = gauss_legendre(n_grid, dom.a, dom.b);
  d.grid.resize(n_grid);
  d.weights.resize(n_grid);
  d.mu_density.resize(n_grid);
  std::vector<double> ev(n_grid);
  double Z = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    d.grid[i] = {d.rule_x.nodes[i], 0.0};
    ev[i] = std::exp(dom.potential.value(d.rule_x.nodes[i]));
    Z += d.rule_x.weights[i] * ev[i];
  }
  d.normalization = Z;
  for (int i = 0; i < n_grid; ++i) {
    d.weights[i] = d.rule_x.weights[i] * ev[i] / Z;
    d.mu_density[i] = ev[i] / Z;
  }
}

}  // namespace detail

/// Closed-form basis for V = 0: sine modes (Dirichlet) or cosine modes
/// (Neumann); tensor products sorted by eigenvalue on rectangles.
/// n_grid <= 0 selects a default resolution (per axis on rectangles).
inline SpectralBasis build_analytic_basis(const Domain& domain, int M, int n_grid = 0) {
  detail::require(M >= 1, "build_analytic_basis: M must be >= 1");
  detail::require(domain.potential.is_zero(), "build_analytic_basis: requires zero potential");
  domain.validate();
  const bool dir = domain.boundary == Boundary::dirichlet;
  const int k0 = dir ? 1 : 0;
  const double pi2 = std::numbers::pi * std::numbers::pi;

  BasisData d;
  d.domain = domain;
  d.method = "analytic";
  AnalyticModes modes;
  if (domain.kind == DomainKind::interval) {
    const double L = domain.b - domain.a;
    for (int m = 0; m < M; ++m) {
      const int k = m + k0;
      modes.wave_numbers.push_back({k, 0});
      d.eigenvalues.push_back(pi2 * k * k / (L * L));
    }
    const int n = n_grid > 0 ? n_grid : std::max(512, static_cast<int>(std::ceil(1.75 * M)) + 64);
    detail::fill_interval_grid(d, n);
  } else {
    const double Lx = domain.b - domain.a, Ly = domain.d - domain.c;
    struct Cand {
      double lam;
      int i, j;
    };
    std::vector<Cand> cand;
    const int kmax = M + k0;
    for (int i = k0; i <= kmax; ++i)
      for (int j = k0; j <= kmax; ++j) cand.push_back({pi2 * (i * i / (Lx * Lx) + j * j / (Ly * Ly)), i, j});
    std::sort(cand.begin(), cand.end(), [](const Cand& p, const Cand& q) {
      if (p.lam != q.lam) return p.lam < q.lam;
      if (p.i != q.i) return p.i < q.i;
      return p.j < q.j;
    });
    int max_i = 0, max_j = 0;
    for (int m = 0; m < M; ++m) {
      modes.wave_numbers.push_back({cand[m].i, cand[m].j});
      d.eigenvalues.push_back(cand[m].lam);
      max_i = std::max(max_i, cand[m].i);
      max_j = std::max(max_j, cand[m].j);
    }
    const int nx = n_grid > 0 ? n_grid : detail::default_axis_nodes(max_i);
    const int ny = n_grid > 0 ? n_grid : detail::default_axis_nodes(max_j);
    d.rule_x = gauss_legendre(nx, domain.a, domain.b);
    d.rule_y = gauss_legendre(ny, domain.c, domain.d);
    const double area = Lx * Ly;
    d.normalization = area;
    for (int jy = 0; jy < ny; ++jy)
      for (int ix = 0; ix < nx; ++ix) {
        d.grid.push_back({d.rule_x.nodes[ix], d.rule_y.nodes[jy]});
        d.weights.push_back(d.rule_x.weights[ix] * d.rule_y.weights[jy] / area);
        d.mu_density.push_back(1.0 / area);
      }
  }
  d.representation = modes;

  // Sample modes on the grid through the same closed form used off-grid.
  const std::size_t n = d.grid.size();
  d.eigenfunctions.resize(M, static_cast<Eigen::Index>(n));
  const double s2 = std::sqrt(2.0);
  auto fac = [&](int k, double x, double lo, double hi) {
    const double w = k * std::numbers::pi / (hi - lo);
    if (dir) return s2 * std::sin(w * (x - lo));
    return k == 0 ? 1.0 : s2 * std::cos(w * (x - lo));
  };
  for (int m = 0; m < M; ++m) {
    const auto [kx, ky] = modes.wave_numbers[m];
    for (std::size_t i = 0; i < n; ++i) {
      double v = fac(kx, d.grid[i].x, domain.a, domain.b);
      if (domain.kind == DomainKind::rectangle) v *= fac(ky, d.grid[i].y, domain.c, domain.d);
      d.eigenfunctions(m, static_cast<Eigen::Index>(i)) = v;
    }
  }
  return SpectralBasis(std::move(d));
}

/// Lowest M modes of f'' + V' f' = -lambda f on an interval, by a
/// Legendre-Galerkin discretization of the weighted form
///   int e^V f' g' dx = lambda int e^V f g dx
/// with boundary-adapted polynomial modes (P_k - P_{k+2} for Dirichlet, the
/// Shen-Neumann combination for Neumann). The stiffness and mass matrices are
/// symmetric by construction and assembled with an n_grid-point Gauss rule,
/// which is also the grid the returned basis is sampled on.
inline SpectralBasis solve_sturm_liouville(const Domain& domain, int M, int n_grid, int galerkin_degree = 0) {
  detail::require(domain.kind == DomainKind::interval, "solve_sturm_liouville: interval domains only");
  detail::require(M >= 1, "solve_sturm_liouville: M must be >= 1");
  detail::require(n_grid >= 8 * M, "solve_sturm_liouville: n_grid must be >= 8 M");
  domain.validate();
  if (!domain.potential.is_zero()) {
    const auto& xs = domain.potential.nodes();
    const double coarse = (domain.b - domain.a) / (2.0 * M);
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (xs[i] - xs[i - 1] > coarse * (1.0 + 1e-12))
        throw InvalidArgument("solve_sturm_liouville: potential grid too coarse for the requested modes");
  }
  const bool dir = domain.boundary == Boundary::dirichlet;

  BasisData d;
  d.domain = domain;
  d.method = "legendre-galerkin";
  detail::fill_interval_grid(d, n_grid);
  const int n = n_grid;
  const double a = domain.a, b = domain.b, L = b - a;

  auto solve = [&](int K) {
    // Boundary-adapted modes: phi_k = P_k - s_k P_{k+2}
    std::vector<double> s(K);
    for (int k = 0; k < K; ++k) s[k] = dir ? 1.0 : (k * (k + 1.0)) / ((k + 2.0) * (k + 3.0));
    Eigen::MatrixXd V(n, K), dV(n, K);
    std::vector<double> P(K + 2), dP(K + 2);
    for (int i = 0; i < n; ++i) {
      legendre_table((2.0 * d.rule_x.nodes[i] - a - b) / L, K + 1, P, dP);
      for (int k = 0; k < K; ++k) {
        V(i, k) = P[k] - s[k] * P[k + 2];
        dV(i, k) = (dP[k] - s[k] * dP[k + 2]) * 2.0 / L;
      }
    }
    const Eigen::Map<const Eigen::VectorXd> w(d.weights.data(), n);
    Eigen::MatrixXd A = dV.transpose() * w.asDiagonal() * dV;
    Eigen::MatrixXd B = V.transpose() * w.asDiagonal() * V;
    A = 0.5 * (A + A.transpose());
    B = 0.5 * (B + B.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(A, B);
    if (ges.info() != Eigen::Success) throw NumericalError("solve_sturm_liouville: eigen-iteration did not converge");
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(K + 2, M);
    const Eigen::MatrixXd& vecs = ges.eigenvectors();
    for (int m = 0; m < M; ++m)
      for (int k = 0; k < K; ++k) {
        coef(k, m) += vecs(k, m);
        coef(k + 2, m) -= s[k] * vecs(k, m);
      }
    Eigen::VectorXd lam = ges.eigenvalues().head(M);
    return std::pair{lam, coef};
  };

  const int K = galerkin_degree > 0 ? galerkin_degree : std::clamp(n / 4, M + 16, 512);
  detail::require(K >= M + 2 && K + 2 <= n, "solve_sturm_liouville: galerkin degree incompatible with M and n_grid");
  auto [lam, coef] = solve(K);
  const int Kc = std::max(M + 2, K - std::max(8, K / 4));
  if (Kc < K) {
    auto [lam_c, coef_c] = solve(Kc);
    (void)coef_c;
    for (int m = 0; m < M; ++m) {
      const double scale = std::max(1.0, std::abs(lam[m]));
      if (std::abs(lam[m] - lam_c[m]) > 1e-7 * scale)
        throw NumericalError("solve_sturm_liouville: eigenvalue " + std::to_string(m) +
                             " not converged in the Galerkin degree");
    }
  }
  for (int m = 1; m < M; ++m) {
    const double gap = lam[m] - lam[m - 1];
    if (!(gap > 1e-10 * std::max(1.0, std::abs(lam[m]))))
      throw NumericalError("solve_sturm_liouville: eigenvalue crossing detected at mode " + std::to_string(m));
  }
  if (!dir) lam[0] = std::abs(lam[0]) < 1e-10 ? 0.0 : lam[0];

  // Sample on the grid and fix signs: phi_0 > 0, otherwise the first lobe from
  // the left end is positive.
  Eigen::MatrixXd Pg(n, coef.rows());
  std::vector<double> P(coef.rows()), dP(coef.rows());
  for (int i = 0; i < n; ++i) {
    legendre_table((2.0 * d.rule_x.nodes[i] - a - b) / L, static_cast<int>(coef.rows()) - 1, P, dP);
    for (Eigen::Index k = 0; k < coef.rows(); ++k) Pg(i, k) = P[k];
  }
  Eigen::MatrixXd F = (Pg * coef).transpose();  // M x n
  for (int m = 0; m < M; ++m) {
    const double peak = F.row(m).cwiseAbs().maxCoeff();
    double sign = 1.0;
    if (m == 0) {
      sign = F.row(m).sum() >= 0.0 ? 1.0 : -1.0;
    } else {
      for (int i = 0; i < n; ++i)
        if (std::abs(F(m, i)) > 1e-6 * peak) {
          sign = F(m, i) > 0.0 ? 1.0 : -1.0;
          break;
        }
    }
    if (sign < 0.0) {
      F.row(m) *= -1.0;
      coef.col(m) *= -1.0;
    }
  }
  d.eigenfunctions = std::move(F);
  d.eigenvalues.assign(lam.data(), lam.data() + M);
  d.representation = LegendreModes{coef};
  return SpectralBasis(std::move(d));
}

/// Analytic basis when V = 0 (and always on rectangles), otherwise the
/// Sturm-Liouville solver with 16 M grid nodes.
inline SpectralBasis build_basis(const Domain& domain, int M, int n_grid = 0) {
  if (domain.potential.is_zero()) return build_analytic_basis(domain, M, n_grid);
  return solve_sturm_liouville(domain, M, n_grid > 0 ? n_grid : std::max(16 * M, 512));
}

}  // namespace cemlab

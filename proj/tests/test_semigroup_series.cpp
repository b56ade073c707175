#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cemlab/cemlab.hpp"

using namespace cemlab;

namespace {

constexpr double kPi = std::numbers::pi;

const SpectralBasis& dirichlet(int M = 64, int n = 0) {
  static std::map<std::pair<int, int>, SpectralBasis> cache;
  auto it = cache.find({M, n});
  if (it == cache.end())
    it = cache.emplace(std::pair{M, n}, build_analytic_basis(Domain::interval(0, 1, Boundary::dirichlet), M, n)).first;
  return it->second;
}

double mu0_integral(const std::vector<double>& f, const SpectralBasis& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * b.mu0_weights()[i];
  return s;
}

double mu0_l1(const std::vector<double>& f, const std::vector<double>& g, const SpectralBasis& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(f[i] - g[i]) * b.mu0_weights()[i];
  return s;
}

// probability density (1 + s (x - 1/2)) with respect to the uniform measure
InitialDistribution tilted(const SpectralBasis& b, double s) {
  std::vector<double> h(b.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = 1.0 + s * (b.grid()[i].x - 0.5);
  return InitialDistribution::density(h, "tilted");
}

}  // namespace

TEST(TimeIntegral, MatchesQuadrature) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ua(0.0, 400.0), ut(0.01, 3.0);
  for (int k = 0; k < 20; ++k) {
    const double a = ua(rng), b = ua(rng), t = ut(rng);
    const GaussRule q = gauss_legendre(200, 0.0, t);
    double ref = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i)
      ref += q.weights[i] * std::exp(-a * q.nodes[i]) * std::exp(-b * (t - q.nodes[i]));
    EXPECT_NEAR(time_integral(a, b, t), ref, 1e-9) << "a=" << a << " b=" << b << " t=" << t;
  }
}

TEST(TimeIntegral, DegenerateBranchContinuity) {
  for (double a : {0.0, 1.0, 9.87, 100.0})
    for (double t : {0.5, 2.0, 16.0}) {
      EXPECT_NEAR(time_integral(a, a, t), t * std::exp(-a * t), 1e-15);
      for (double d : {1e-8, -1e-8}) {
        if (a + d < 0.0) continue;
        const double taylor = detail::time_integral_taylor(a + d, a, t);
        const double closed = detail::time_integral_closed(a + d, a, t);
        EXPECT_NEAR(taylor, closed, 1e-12 * std::max(1.0, taylor)) << "a=" << a << " t=" << t << " d=" << d;
      }
      // on both sides of the switching point |a - b| t = 1e-6
      for (double z : {0.999999e-6, 1.000001e-6}) {
        const double d = z / t;
        // t e^{-at} sum_k (d t)^k / (k + 1)!
        long double series = 0.0L, term = 1.0L;
        for (int k = 0; k < 8; ++k) {
          series += term;
          term *= static_cast<long double>(z) / (k + 2);
        }
        const double oracle = static_cast<double>(t * std::exp(-static_cast<long double>(a + d) * t) * series);
        EXPECT_NEAR(time_integral(a + d, a, t), oracle, 1e-13 * oracle);
      }
    }
}

TEST(DirichletSemigroup, IdentityAtTimeZero) {
  const SpectralBasis& b = dirichlet(16);
  ModeCoefficients c{std::vector<double>(16, 0.0), "phi_1"};
  c.values[1] = 1.0;
  const GridFunction f = apply_dirichlet_semigroup(c, b, 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(f.values[i], b.eigenfunctions()(1, Eigen::Index(i)), 1e-14);
}

TEST(DirichletSemigroup, SurvivalOfUniformStart) {
  const SpectralBasis& b = dirichlet(128);
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  for (double t : {0.01, 0.1, 0.5}) {
    double exact = 0.0;
    for (int k = 1; k < 20001; k += 2) exact += 8.0 / (k * k * kPi * kPi) * std::exp(-k * k * kPi * kPi * t);
    EXPECT_NEAR(survival(mu, mu, b, t), exact, 1e-10) << "t=" << t;
  }
  // at t = 0 the truncated series misses sum_{k > M} 8 / (k pi)^2
  EXPECT_NEAR(survival(mu, mu, b, 0.0), 1.0, 8.0 / (kPi * kPi * 127.0));
}

TEST(DirichletSemigroup, RelaxesAtSpectralGapRate) {
  const SpectralBasis& b = dirichlet(64);
  const ModeCoefficients c = project(tilted(b, 1.0), b);
  auto deviation = [&](double t) {
    const GridFunction f = apply_dirichlet_semigroup(c, b, t);
    double d = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      d = std::max(d, std::abs(std::exp(b.eigenvalues()[0] * t) * f.values[i] -
                               c[0] * b.eigenfunctions()(0, Eigen::Index(i))));
    return d;
  };
  const double rate = std::log(deviation(0.5) / deviation(1.0)) / 0.5;
  EXPECT_NEAR(rate, b.eigenvalues()[1] - b.eigenvalues()[0], 1e-3 * rate);
}

TEST(DirichletSemigroup, TailBoundCoversModeDoubling) {
  const int n = 512;
  const SpectralBasis& b1 = dirichlet(24, n);
  const SpectralBasis& b2 = dirichlet(48, n);
  const ModeCoefficients c1 = project(InitialDistribution::point({0.3, 0.0}), b1);
  const ModeCoefficients c2 = project(InitialDistribution::point({0.3, 0.0}), b2);
  for (double t : {0.002, 0.01, 0.05}) {
    const GridFunction f1 = apply_dirichlet_semigroup(c1, b1, t), f2 = apply_dirichlet_semigroup(c2, b2, t);
    double d = 0.0;
    for (std::size_t i = 0; i < f1.values.size(); ++i) d = std::max(d, std::abs(f1.values[i] - f2.values[i]));
    EXPECT_LE(d, f1.truncation.tail_estimate) << "t=" << t;
  }
}

TEST(GroundSemigroup, SemigroupProperty) {
  const SpectralBasis& b = dirichlet(32);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    ModeCoefficients c{std::vector<double>(32, 0.0), "random"};
    for (int m = 0; m < 8; ++m) c.values[m] = g(rng);
    for (auto [s, t] : {std::pair{0.01, 0.02}, std::pair{0.05, 0.3}, std::pair{1.0, 0.5}}) {
      const std::vector<double> pt = apply_ground_semigroup(c, b, t);
      const std::vector<double> pst = apply_ground_semigroup(ground_coefficients(pt, b), b, s);
      const std::vector<double> direct = apply_ground_semigroup(c, b, s + t);
      for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(pst[i], direct[i], 1e-8);
    }
  }
}

TEST(GroundKernel, MassAndSymmetry) {
  const SpectralBasis& b = dirichlet(128);
  for (double t : {0.05, 0.5, 5.0}) {
    const Eigen::MatrixXd K = ground_kernel_matrix(b, t);
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < K.cols(); ++j) s += K(i, j) * b.mu0_weights()[std::size_t(j)];
      EXPECT_NEAR(s, 1.0, 1e-7);
    }
    EXPECT_LE((K - K.transpose()).cwiseAbs().maxCoeff(), 1e-12 * K.cwiseAbs().maxCoeff());
  }
  const KernelValue v = ground_kernel(b, {0.2, 0.0}, {0.7, 0.0}, 1.0);
  const KernelValue w = ground_kernel(b, {0.7, 0.0}, {0.2, 0.0}, 1.0);
  EXPECT_EQ(v.value, w.value);
  EXPECT_NEAR(v.value, 1.0, 10.0 * std::exp(-(b.eigenvalues()[1] - b.eigenvalues()[0])));
}

TEST(PsiS, SingleModeInputIsConstant) {
  const SpectralBasis& b = dirichlet(16);
  ModeCoefficients c{std::vector<double>(16, 0.0), "single"};
  c.values[0] = 0.7;
  const GridFunction psi = psi_s_nu(c, b, 0.3);
  for (double v : psi.values) EXPECT_NEAR(v, 0.7, 1e-14);
}

TEST(PsiS, SurvivalIdentity) {
  const SpectralBasis& b = dirichlet(64);
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  const ModeCoefficients nu = project(tilted(b, 1.5), b);
  for (double s : {0.05, 0.3, 1.0}) {
    const GridFunction psi = psi_s_nu(nu, b, s);
    std::vector<double> f(b.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = psi.values[i] / b.eigenfunctions()(0, Eigen::Index(i));
    EXPECT_NEAR(mu0_integral(f, b), std::exp(b.eigenvalues()[0] * s) * survival(nu, mu, b, s), 1e-10);
  }
}

TEST(PsiS, GroundMeasureRelaxesAtGapRate) {
  const SpectralBasis& b = dirichlet(64);
  const ModeCoefficients nu = project(InitialDistribution::mu0(b), b);
  auto dev = [&](double s) {
    const GridFunction psi = psi_s_nu(nu, b, s);
    double d = 0.0;
    for (double v : psi.values) d = std::max(d, std::abs(v - nu[0]));
    return d;
  };
  // mu_0 is symmetric, so the first active mode is m = 2
  const double rate = std::log(dev(0.2) / dev(0.4)) / 0.2;
  EXPECT_NEAR(rate, b.eigenvalues()[2] - b.eigenvalues()[0], 1e-3 * rate);
}

TEST(ConditionalDensity, MassConservation) {
  const SpectralBasis& b = dirichlet(64);
  for (double t : {0.5, 2.0, 8.0}) {
    const ConditionalDensity h = conditional_density(InitialDistribution::mu(b), b, t);
    EXPECT_NEAR(mu0_integral(h.rho, b), 0.0, 1e-8) << "t=" << t;
    EXPECT_TRUE(h.nonnegative);
  }
  const ConditionalDensity p = conditional_density(InitialDistribution::point({0.2, 0.0}), b, 4.0);
  EXPECT_NEAR(mu0_integral(p.h, b), 1.0, 1e-8);
  EXPECT_NEAR(p.eps_shift, 1.0 / 16.0, 0.0);
}

TEST(ConditionalDensity, SingleModeGivesUnitDensity) {
  const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::dirichlet), 1);
  const ConditionalDensity h = conditional_density(InitialDistribution::mu(b), b, 3.0);
  for (double v : h.h) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(ConditionalDensity, TailBoundCoversModeDoubling) {
  const int n = 600;
  for (auto [M, t] : {std::pair{16, 2.0}, std::pair{32, 8.0}}) {
    const SpectralBasis& b1 = dirichlet(M, n);
    const SpectralBasis& b2 = dirichlet(2 * M, n);
    for (const char* kind : {"mu", "tilted"}) {
      const bool uni = std::string(kind) == "mu";
      const InitialDistribution n1 = uni ? InitialDistribution::mu(b1) : tilted(b1, 1.0);
      const InitialDistribution n2 = uni ? InitialDistribution::mu(b2) : tilted(b2, 1.0);
      const ConditionalDensity h1 = conditional_density(n1, b1, t), h2 = conditional_density(n2, b2, t);
      EXPECT_LE(mu0_l1(h1.h, h2.h, b2), h1.truncation.tail_estimate) << kind << " M=" << M << " t=" << t;
    }
  }
}

TEST(RhoTilde, ZeroGroundMeanAndInverseTimeScaling) {
  const SpectralBasis& b = dirichlet(64);
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  std::vector<double> mins;
  for (double t : {2.0, 4.0, 8.0}) {
    const double N = ground_normalization(mu, mu, b, t);
    const GridFunction r = rho_tilde(mu, mu, b, t, N);
    EXPECT_NEAR(mu0_integral(r.values, b), 0.0, 1e-15);
    mins.push_back(t * *std::min_element(r.values.begin(), r.values.end()));
  }
  EXPECT_LT(mins[0], 0.0);
  EXPECT_NEAR(mins[1] / mins[0], 1.0, 1e-10);
  EXPECT_NEAR(mins[2] / mins[0], 1.0, 1e-10);
}

TEST(RhoTilde, ApproximatesRhoExponentially) {
  const SpectralBasis& b = dirichlet(96);
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  const ModeCoefficients nu = project(tilted(b, 1.0), b);
  auto gap = [&](double t) {
    const ConditionalDensity h = conditional_density_from_coefficients(nu, mu, b, t);
    const GridFunction r = rho_tilde(nu, mu, b, t, h.normalization);
    return t * mu0_l1(h.rho, r.values, b);
  };
  const double a1 = b.eigenvalues()[1] - b.eigenvalues()[0];
  EXPECT_NEAR(gap(0.3) / gap(0.2), std::exp(-0.1 * a1), 0.25 * std::exp(-0.1 * a1));
}

TEST(TimeShift, PointMassBecomesSmoothProbabilityDensity) {
  const SpectralBasis& b = dirichlet(64);
  const InitialDistribution nu = InitialDistribution::point({0.5, 0.0});
  const InitialDistribution shifted = time_shift(nu, b, 0.01);
  ASSERT_TRUE(shifted.is_density());
  const std::vector<double> h = density_on_grid(shifted, b);
  double mass = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mass += h[i] * b.weights()[i];
  EXPECT_NEAR(mass, 1.0, 1e-8);
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  const ModeCoefficients direct = time_shift_coefficients(project(nu, b), mu, b, 0.01);
  const ModeCoefficients projected = project(shifted, b);
  for (int m = 0; m < b.modes(); ++m) EXPECT_NEAR(projected[m], direct[m], 1e-7);
}

TEST(TimeShift, ConvergesForSmoothDensities) {
  const SpectralBasis& b = dirichlet(64);
  const InitialDistribution nu = tilted(b, 1.2);
  const std::vector<double> h = density_on_grid(nu, b);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.05, 0.025}) {
    const std::vector<double> he = density_on_grid(time_shift(nu, b, eps), b);
    double d = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) d += (he[i] - h[i]) * (he[i] - h[i]) * b.weights()[i];
    EXPECT_LT(d, prev) << "eps=" << eps;
    prev = d;
  }
}

TEST(MeanEmpiricalDensity, NeumannMassConservation) {
  const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::neumann), 256);
  const ModeCoefficients nu = project(InitialDistribution::point({0.0, 0.0}), b);
  for (double t : {0.5, 4.0}) {
    const GridFunction g = mean_empirical_density(nu, b, t);
    double mass = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) mass += g.values[i] * b.weights()[i];
    EXPECT_NEAR(mass, 1.0, 1e-12);
  }
}

TEST(ScanTMin, PointMassDensityBecomesNonnegative) {
  const SpectralBasis& b = dirichlet(64);
  const TMinReport r = scan_t_min(InitialDistribution::point({0.1, 0.0}), b, 1.0, 8.0, 12);
  EXPECT_TRUE(std::isfinite(r.t_min));
  EXPECT_LE(r.t_min, 8.0);
}

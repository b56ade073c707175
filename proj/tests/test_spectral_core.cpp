#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cemlab/cemlab.hpp"

using namespace cemlab;

namespace {

constexpr double kPi = std::numbers::pi;

Domain unit(Boundary bc) { return Domain::interval(0.0, 1.0, bc); }

Potential linear_potential(int n) {
  std::vector<double> x(n + 1), v(n + 1);
  for (int i = 0; i <= n; ++i) x[i] = v[i] = static_cast<double>(i) / n;
  return Potential::tabulated(x, v);
}

double max_rel_eig_err(const SpectralBasis& b, int count) {
  double e = 0.0;
  for (int m = 0; m < count; ++m) {
    const double exact = (m + 1.0) * (m + 1.0) * kPi * kPi;
    e = std::max(e, std::abs(b.eigenvalues()[m] - exact) / exact);
  }
  return e;
}

}  // namespace

TEST(AnalyticBasis, DirichletSineModes) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 3);
  EXPECT_NEAR(b.eigenvalues()[0], kPi * kPi, 1e-12);
  EXPECT_NEAR(b.eigenvalues()[1], 4 * kPi * kPi, 1e-11);
  EXPECT_NEAR(b.eigenvalues()[2], 9 * kPi * kPi, 1e-11);
  EXPECT_NEAR(b.eval(0, {0.5, 0.0}), std::sqrt(2.0), 1e-14);
}

TEST(AnalyticBasis, NeumannConstantGroundState) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::neumann), 2);
  EXPECT_NEAR(b.eigenvalues()[0], 0.0, 1e-15);
  EXPECT_NEAR(b.eigenvalues()[1], kPi * kPi, 1e-12);
  for (double x : {0.1, 0.5, 0.9}) EXPECT_NEAR(b.eval(0, {x, 0.0}), 1.0, 1e-15);
}

TEST(AnalyticBasis, OrthonormalityWith400Nodes) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 50, 400);
  EXPECT_LE(b.orthonormality_residual(), 1e-10);
}

TEST(AnalyticBasis, RectangleTensorModes) {
  const SpectralBasis b = build_analytic_basis(Domain::rectangle(0.0, 1.0, 0.0, 2.0, Boundary::dirichlet), 12);
  EXPECT_EQ(b.dimension(), 2);
  EXPECT_NEAR(b.eigenvalues()[0], kPi * kPi * (1.0 + 0.25), 1e-10);
  EXPECT_LE(b.orthonormality_residual(), 1e-8);
  for (int m = 1; m < b.modes(); ++m) EXPECT_GE(b.eigenvalues()[m], b.eigenvalues()[m - 1]);
}

TEST(SturmLiouville, FreeDirichletEigenvalues) {
  const SpectralBasis b = solve_sturm_liouville(unit(Boundary::dirichlet), 20, 2000);
  EXPECT_LE(max_rel_eig_err(b, 20), 1e-6);
  EXPECT_LE(b.orthonormality_residual(), 1e-8);
}

TEST(SturmLiouville, FreeNeumannConstantMode) {
  const SpectralBasis b = solve_sturm_liouville(unit(Boundary::neumann), 1, 200);
  EXPECT_NEAR(b.eigenvalues()[0], 0.0, 1e-9);
  for (double x : {0.05, 0.5, 0.95}) EXPECT_NEAR(std::abs(b.eval(0, {x, 0.0})), 1.0, 1e-7);
}

TEST(SturmLiouville, AgreesWithAnalyticBasis) {
  const int M = 12;
  const SpectralBasis sl = solve_sturm_liouville(unit(Boundary::dirichlet), M, 1000);
  const SpectralBasis an = build_analytic_basis(unit(Boundary::dirichlet), M);
  std::vector<double> a(M), s(M);
  for (int m = 0; m < M; ++m)
    EXPECT_NEAR(sl.eigenvalues()[m] / an.eigenvalues()[m], 1.0, 1e-6) << "mode " << m;
  std::vector<double> sign(M, 0.0);
  double err = 0.0;
  for (int k = 1; k < 200; ++k) {
    const Point p{k / 200.0, 0.0};
    sl.evaluate(p, s, {}, {});
    an.evaluate(p, a, {}, {});
    for (int m = 0; m < M; ++m) {
      if (sign[m] == 0.0 && std::abs(a[m]) > 0.5) sign[m] = (a[m] * s[m] > 0.0) ? 1.0 : -1.0;
      if (sign[m] != 0.0) err = std::max(err, std::abs(sign[m] * s[m] - a[m]));
    }
  }
  EXPECT_LE(err, 1e-5);
}

TEST(SturmLiouville, LinearPotentialMeshRefinement) {
  const Domain d = Domain::interval(0.0, 1.0, Boundary::dirichlet, linear_potential(400));
  const SpectralBasis coarse = solve_sturm_liouville(d, 5, 800);
  const SpectralBasis fine = solve_sturm_liouville(d, 5, 1600);
  for (int m = 0; m < 5; ++m) EXPECT_NEAR(coarse.eigenvalues()[m] / fine.eigenvalues()[m], 1.0, 1e-5);
  EXPECT_LE(coarse.orthonormality_residual(), 1e-8);
}

TEST(SturmLiouville, RejectsCoarsePotentialGrid) {
  const Domain d = Domain::interval(0.0, 1.0, Boundary::dirichlet, linear_potential(4));
  EXPECT_THROW(solve_sturm_liouville(d, 20, 400), InvalidArgument);
}

TEST(SpectralBasis, GroundStatePositiveOnInteriorNodes) {
  for (const SpectralBasis& b : {build_analytic_basis(unit(Boundary::dirichlet), 32),
                                 solve_sturm_liouville(Domain::interval(0, 1, Boundary::dirichlet, linear_potential(200)),
                                                       16, 512)})
    EXPECT_GT(b.eigenfunctions().row(0).minCoeff(), 0.0);
}

TEST(SpectralBasis, WeylSlope) {
  EXPECT_NEAR(weyl_slope(build_analytic_basis(unit(Boundary::dirichlet), 64)), 2.0, 0.1);
  const SpectralBasis rect = build_analytic_basis(Domain::rectangle(0, 1, 0, 1, Boundary::dirichlet), 256);
  EXPECT_NEAR(weyl_slope(rect), 1.0, 0.15);
}

TEST(SpectralBasis, JsonRoundTrip) {
  const SpectralBasis b = solve_sturm_liouville(unit(Boundary::neumann), 8, 256);
  const SpectralBasis r = basis_from_json(json::parse(basis_to_json(b).dump()));
  ASSERT_EQ(r.modes(), b.modes());
  for (int m = 0; m < b.modes(); ++m) EXPECT_EQ(r.eigenvalues()[m], b.eigenvalues()[m]);
  EXPECT_EQ(r.eval(3, {0.3, 0.0}), b.eval(3, {0.3, 0.0}));
}

TEST(Projection, UniformMeasureCoefficients) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 40);
  const ModeCoefficients c = project(InitialDistribution::mu(b), b);
  for (int m = 0; m < 40; ++m) {
    const double exact = m % 2 == 0 ? 2.0 * std::sqrt(2.0) / ((m + 1) * kPi) : 0.0;
    EXPECT_NEAR(c[m], exact, 1e-12) << "mode " << m;
  }
}

TEST(Projection, PointMassAtMidpoint) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 4);
  const ModeCoefficients c = project(InitialDistribution::point({0.5, 0.0}), b);
  EXPECT_NEAR(c[0], std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(c[1], 0.0, 1e-14);
}

TEST(Projection, GroundMeasureStableUnderRefinement) {
  const SpectralBasis b1 = build_analytic_basis(unit(Boundary::dirichlet), 16, 64);
  const SpectralBasis b2 = build_analytic_basis(unit(Boundary::dirichlet), 16, 256);
  const ModeCoefficients c1 = project(InitialDistribution::mu0(b1), b1);
  const ModeCoefficients c2 = project(InitialDistribution::mu0(b2), b2);
  // mu(phi_0^3) = 2 sqrt(2) int sin^3 = 8 sqrt(2) / (3 pi)
  EXPECT_NEAR(c1[0], 8.0 * std::sqrt(2.0) / (3.0 * kPi), 1e-12);
  for (int m = 0; m < 16; ++m) EXPECT_NEAR(c1[m], c2[m], 1e-12);
}

TEST(Projection, GridDensityMatchesDensityOnGrid) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 16);
  std::vector<double> x, v;
  for (int i = 0; i <= 400; ++i) {
    x.push_back(i / 400.0);
    v.push_back(1.0);
  }
  const ModeCoefficients g = project(InitialDistribution::grid_density(x, v), b);
  const ModeCoefficients u = project(InitialDistribution::mu(b), b);
  for (int m = 0; m < 16; ++m) EXPECT_NEAR(g[m], u[m], 1e-12);
}

TEST(Projection, RejectsBoundaryPointForDirichlet) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 4);
  EXPECT_THROW(project(InitialDistribution::point({0.0, 0.0}), b), InvalidArgument);
}

TEST(Projection, CompletenessOnDoublingSequence) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 64);
  std::vector<double> f(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b.grid()[i].x;
    f[i] = std::exp(x) * x * (1.0 - x) + 1.0 + 0.3 * std::cos(3.0 * x);
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) mass += f[i] * b.weights()[i];
  for (double& v : f) v /= mass;
  const ModeCoefficients c = project(InitialDistribution::density(f), b);
  double prev = std::numeric_limits<double>::infinity();
  for (int K : {8, 16, 32, 64}) {
    const std::vector<double> r = reconstruct(c, b, K);
    double e = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) e += (r[i] - f[i]) * (r[i] - f[i]) * b.weights()[i];
    e = std::sqrt(e);
    EXPECT_LT(e, prev) << "K=" << K;
    prev = e;
  }
}

TEST(SupNormGrowth, SineRatiosGrowLinearly) {
  const SpectralBasis b = build_analytic_basis(unit(Boundary::dirichlet), 64, 2048);
  const SupNormGrowthReport r = sup_norm_growth_report(b);
  for (int m = 0; m < 64; ++m) EXPECT_NEAR(r.sup_phi[m], std::sqrt(2.0), 0.02);
  // the supremum m + 1 is attained at the boundary; interior nodes approach it
  for (int m = 0; m < 16; ++m) EXPECT_NEAR(r.sup_ratio[m], m + 1.0, 1e-2 * (m + 1.0));
  EXPECT_NEAR(r.exponent_ratio, 1.0, 0.05);
  EXPECT_LE(r.exponent_ratio, r.bound_exponent);
  EXPECT_FALSE(r.violation);
}

TEST(Domain, RejectsDegenerateInterval) { EXPECT_THROW(Domain::interval(1.0, 1.0, Boundary::dirichlet), InvalidArgument); }

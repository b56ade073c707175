#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "cemlab/cemlab.hpp"

using namespace cemlab;

namespace {

constexpr double kPi = std::numbers::pi;

const SpectralBasis& dirichlet() {
  static const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::dirichlet), 64);
  return b;
}

const SpectralBasis& neumann() {
  static const SpectralBasis b = build_analytic_basis(Domain::interval(0, 1, Boundary::neumann), 64);
  return b;
}

SimulationConfig killed(long paths, double horizon, double dt = 1e-3) {
  SimulationConfig c;
  c.rule = BoundaryRule::kill;
  c.n_paths = paths;
  c.horizon = horizon;
  c.dt = dt;
  c.seed = 11;
  c.initial = InitialDistribution::mu(dirichlet());
  return c;
}

double histogram_mass(const std::vector<double>& h) {
  double s = 0.0;
  for (double v : h) s += v;
  return s;
}

GridMeasure ground_ratio_measure(const SpectralBasis& b) {
  std::vector<double> phi0(b.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    phi0[i] = b.eigenfunctions()(0, static_cast<Eigen::Index>(i));
    mass += phi0[i] * b.weights()[i];
  }
  for (double& v : phi0) v /= mass;
  return GridMeasure::from_basis(b, phi0, Reference::mu);
}

}  // namespace

TEST(Simulate, SameSeedIsBitwiseReproducible) {
  SimulationConfig c = killed(3000, 0.2);
  c.record_times = {0.1, 0.2};
  const PathEnsembleSummary a = simulate(c, &dirichlet()), b = simulate(c, &dirichlet());
  EXPECT_EQ(a.survival_count, b.survival_count);
  EXPECT_EQ(a.occupation, b.occupation);
  EXPECT_EQ(a.final_law, b.final_law);
  EXPECT_EQ(a.occupation_se, b.occupation_se);
  EXPECT_EQ(a.survival_curve, b.survival_curve);
}

TEST(Simulate, WorkerCountDoesNotChangeSummary) {
  for (BoundaryRule rule : {BoundaryRule::kill, BoundaryRule::fleming_viot}) {
    SimulationConfig c = killed(4000, 0.2);
    c.rule = rule;
    c.chunk_size = 500;
    const PathEnsembleSummary one = simulate(c, &dirichlet());
    c.workers = 3;
    const PathEnsembleSummary three = simulate(c, &dirichlet());
    EXPECT_EQ(one.survival_count, three.survival_count) << to_string(rule);
    EXPECT_EQ(one.survival_fraction, three.survival_fraction) << to_string(rule);
    EXPECT_EQ(one.occupation, three.occupation) << to_string(rule);
    EXPECT_EQ(one.final_law, three.final_law) << to_string(rule);
    EXPECT_EQ(one.occupation_se, three.occupation_se) << to_string(rule);
  }
}

TEST(Simulate, DifferentSeedsGiveDifferentEnsembles) {
  SimulationConfig c = killed(2000, 0.2);
  const PathEnsembleSummary a = simulate(c, &dirichlet());
  c.seed = 12;
  const PathEnsembleSummary b = simulate(c, &dirichlet());
  EXPECT_NE(a.occupation, b.occupation);
}

TEST(Simulate, HistogramsHaveUnitMass) {
  const PathEnsembleSummary s = simulate(killed(5000, 0.3), &dirichlet());
  ASSERT_GT(s.survival_count, 0);
  EXPECT_NEAR(histogram_mass(s.occupation), 1.0, 1e-12);
  EXPECT_NEAR(histogram_mass(s.final_law), 1.0, 1e-12);
  EXPECT_EQ(s.occupation.size(), 256u);
}

TEST(Simulate, ReflectedUniformStartStaysUniform) {
  SimulationConfig c;
  c.domain = Domain::interval(0, 1, Boundary::neumann);
  c.rule = BoundaryRule::reflect;
  c.n_paths = 100000;
  c.horizon = 5.0;
  c.dt = 0.01;
  c.seed = 3;
  c.initial = InitialDistribution::mu(neumann());
  const PathEnsembleSummary s = simulate(c, &neumann());
  EXPECT_EQ(s.survival_count, c.n_paths);
  const double expected = 1.0 / static_cast<double>(s.occupation.size());
  int outside = 0;
  double chi2 = 0.0;
  for (std::size_t j = 0; j < s.occupation.size(); ++j) {
    const double z = (s.occupation[j] - expected) / s.occupation_se[j];
    chi2 += z * z;
    if (std::abs(z) > 3.0) ++outside;
  }
  // 256 bins: a handful of 3-sigma excursions and a chi-square near its mean
  EXPECT_LE(outside, 4);
  EXPECT_LE(chi2, 256.0 + 3.0 * std::sqrt(512.0));
}

TEST(Simulate, KilledSurvivalMatchesSpectralSeries) {
  const SpectralBasis& b = dirichlet();
  const ModeCoefficients mu = project(InitialDistribution::mu(b), b);
  const double exact = survival(mu, mu, b, 0.5);
  for (double dt : {1e-3, 5e-3}) {
    const PathEnsembleSummary s = simulate(killed(100000, 0.5, dt), &b);
    EXPECT_NEAR(s.survival_fraction, exact, 3.0 * s.survival_se) << "dt=" << dt;
  }
}

TEST(Simulate, KilledSurvivalDecaysAtGroundRate) {
  SimulationConfig c = killed(100000, 0.8);
  c.record_times = {0.2, 0.4, 0.6, 0.8};
  const PathEnsembleSummary s = simulate(c, &dirichlet());
  EXPECT_NEAR(survival_rate(s.record_times, s.survival_curve) / (-kPi * kPi), 1.0, 0.05);
}

TEST(Simulate, PointMassStartIsSimulatedDirectly) {
  SimulationConfig c = killed(20000, 0.3);
  c.initial = InitialDistribution::point({0.5, 0.0});
  const PathEnsembleSummary s = simulate(c, nullptr);
  const SpectralBasis& b = dirichlet();
  const double exact = survival(project(c.initial, b), project(InitialDistribution::mu(b), b), b, 0.3);
  EXPECT_NEAR(s.survival_fraction, exact, 3.0 * s.survival_se);
}

TEST(Simulate, HalvingTheStepStaysWithinNoise) {
  SimulationConfig c = killed(40000, 0.5);
  const PathEnsembleSummary coarse = simulate(c, &dirichlet());
  c.dt = 5e-4;
  const PathEnsembleSummary fine = simulate(c, &dirichlet());
  const auto [tv, noise] = histogram_tv(coarse, fine);
  EXPECT_LE(tv, noise);
}

TEST(Simulate, QuasiErgodicLimitsAreDistinguished) {
  SimulationConfig c = killed(20000, 2.0);
  c.rule = BoundaryRule::fleming_viot;
  const SpectralBasis& b = dirichlet();
  const PathEnsembleSummary s = simulate(c, &b);
  const GridMeasure mu0 = GridMeasure::mu0(b), qsd = ground_ratio_measure(b);
  const double gap = w1_1d(mu0, qsd);
  const double final_to_qsd = w1_1d(s.final_measure(), qsd), final_to_mu0 = w1_1d(s.final_measure(), mu0);
  const double occ_to_mu0 = w1_1d(s.occupation_measure(), mu0), occ_to_qsd = w1_1d(s.occupation_measure(), qsd);
  EXPECT_GT(gap, 0.02);
  EXPECT_LT(final_to_qsd, 0.25 * gap);
  EXPECT_LT(occ_to_mu0, 0.25 * gap);
  EXPECT_LT(final_to_qsd, final_to_mu0);
  EXPECT_LT(occ_to_mu0, occ_to_qsd);
}

TEST(Simulate, RejectsInvalidConfigurations) {
  SimulationConfig c = killed(10, 0.1, 0.01);
  EXPECT_THROW(simulate(c, &dirichlet()), InvalidArgument);
  c = killed(10, 0.1);
  c.rule = BoundaryRule::reflect;
  EXPECT_THROW(simulate(c, &dirichlet()), InvalidArgument);
  c = killed(10, 0.1);
  c.initial = InitialDistribution::point({0.0, 0.0});
  EXPECT_THROW(simulate(c, nullptr), InvalidArgument);
  c = killed(10, 0.1);
  c.record_times = {0.2};
  EXPECT_THROW(simulate(c, &dirichlet()), InvalidArgument);
}

TEST(SurvivalRate, ZeroFractionIsInsufficient) {
  EXPECT_THROW(survival_rate({0.1, 0.2}, {0.5, 0.0}), InsufficientSamples);
  EXPECT_NEAR(survival_rate({0.0, 1.0, 2.0}, {1.0, std::exp(-2.0), std::exp(-4.0)}), -2.0, 1e-12);
}

TEST(ConditionalW2, HistogramAgainstItselfIsZero) {
  const PathEnsembleSummary s = simulate(killed(20000, 0.2), &dirichlet());
  const MCTransport t = conditional_empirical_w2(s, s.occupation_measure(), false, 20);
  EXPECT_NEAR(t.result.w2_squared, 0.0, 1e-12);
  EXPECT_NEAR(t.w1, 0.0, 1e-12);
  EXPECT_GT(t.w1_se, 0.0);
}

TEST(ConditionalW2, FewSurvivorsAreRejected) {
  const PathEnsembleSummary s = simulate(killed(500, 0.2), &dirichlet());
  EXPECT_THROW(conditional_empirical_w2(s, GridMeasure::mu0(dirichlet())), InsufficientSamples);
}

TEST(EnsembleCsv, EchoesConfigurationInHeader) {
  const PathEnsembleSummary s = simulate(killed(2000, 0.2), &dirichlet());
  const std::string path = ::testing::TempDir() + "mc.csv";
  write_ensemble_csv(path, s);
  std::ifstream in(path);
  std::string header, columns;
  std::getline(in, header);
  std::getline(in, columns);
  EXPECT_NE(header.find("rule=kill"), std::string::npos);
  EXPECT_NE(header.find("seed=11"), std::string::npos);
  EXPECT_EQ(columns, "bin_center,occupation_density,occupation_se,final_density,final_se");
}

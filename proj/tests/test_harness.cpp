#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cemlab/cemlab.hpp"

using namespace cemlab;

namespace {

json minimal() { return {{"version", kConfigFormat}}; }

ExperimentConfig small_config(int modes = 32) {
  json j = minimal();
  j["basis"] = {{"modes", modes}};
  return parse_config(j);
}

std::string temp_path(const std::string& name) { return ::testing::TempDir() + name; }

}  // namespace

TEST(Config, MinimalDocumentUsesDefaults) {
  const ExperimentConfig c = parse_config(minimal());
  EXPECT_EQ(c.domain.boundary, Boundary::dirichlet);
  EXPECT_EQ(c.modes, 128);
  EXPECT_EQ(c.nu.kind, "mu");
  EXPECT_EQ(c.times, (std::vector<double>{2.0, 4.0, 8.0, 16.0}));
  EXPECT_EQ(c.w2_method, "quantile");
  EXPECT_FALSE(c.mc.has_value());
}

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
  EXPECT_THROW(parse_config({{"version", kConfigFormat}, {"mode", 3}}), InvalidArgument);
  for (const char* section : {"domain", "potential", "basis", "nu", "tol", "transport", "gap_tolerance", "mc", "output"}) {
    json j = minimal();
    j[section] = {{"bogus", 1}};
    EXPECT_THROW(parse_config(j), InvalidArgument) << section;
  }
}

TEST(Config, RequiresRecognizedVersionTag) {
  EXPECT_THROW(parse_config(json::object()), InvalidArgument);
  EXPECT_THROW(parse_config({{"version", "cemlab-config/0"}}), InvalidArgument);
}

TEST(Config, TimesMustIncreaseStrictly) {
  for (const json& times : {json::array({2.0, 2.0}), json::array({4.0, 2.0}), json::array({0.0, 1.0}), json::array()}) {
    json j = minimal();
    j["times"] = times;
    EXPECT_THROW(parse_config(j), InvalidArgument) << times.dump();
  }
}

TEST(Config, RejectsUnknownEnumerations) {
  const std::vector<std::pair<const char*, json>> bad = {
      {"basis", {{"method", "fem"}}},        {"transport", {{"method", "sliced"}}}, {"nu", {{"kind", "delta"}}},
      {"nu", {{"kind", "point"}, {"x", 0.3}, {"shift", "t^-1"}}}, {"mc", {{"rule", "absorb"}}},
      {"domain", {{"kind", "disk"}}},         {"potential", {{"kind", "quartic"}}}};
  for (const auto& [section, value] : bad) {
    json j = minimal();
    j[section] = value;
    EXPECT_THROW(parse_config(j), InvalidArgument) << section << " " << value.dump();
  }
}

TEST(Config, MissingFilesAreReported) {
  EXPECT_THROW(load_config(temp_path("does-not-exist.json")), InvalidArgument);
  json j = minimal();
  j["nu"] = {{"kind", "grid_density"}, {"path", "missing.csv"}};
  EXPECT_THROW(parse_config(j, ::testing::TempDir()), InvalidArgument);
}

TEST(Config, RelativeFilesResolveAgainstConfigDirectory) {
  const std::filesystem::path dir = std::filesystem::path(::testing::TempDir()) / "cfgdir";
  std::filesystem::create_directories(dir);
  {
    std::ofstream nu(dir / "nu.csv");
    nu << "x,value\n0,1\n0.5,1\n1,1\n";
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"version": "cemlab-config/1", "nu": {"kind": "grid_density", "path": "nu.csv"}})";
  }
  const ExperimentConfig c = load_config((dir / "config.json").string());
  EXPECT_EQ(c.nu.nodes, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(c.nu.values, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Config, JsonRoundTrip) {
  json j = minimal();
  j["boundary"] = "neumann";
  j["potential"] = {{"kind", "tabulated"}, {"nodes", {0.0, 0.5, 1.0}}, {"values", {0.0, 0.2, 0.1}}};
  j["basis"] = {{"method", "sturm-liouville"}, {"modes", 24}, {"grid", 400}};
  j["nu"] = {{"kind", "point"}, {"x", 0.25}, {"shift", "none"}};
  j["times"] = {1.0, 3.0};
  j["transport"] = {{"method", "entropic"}, {"atoms", 128}};
  j["mc"] = {{"rule", "reflect"}, {"n_paths", 5000}, {"dt_halving", true}};
  j["seed"] = 42;
  const json once = config_to_json(parse_config(j));
  const json twice = config_to_json(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once["seed"], 42);
  EXPECT_EQ(once["mc"]["rule"], "reflect");
  EXPECT_EQ(once["nu"]["shift"], "none");
}

TEST(Sandwich, UnitDensityIsAllZero) {
  const ExperimentConfig c = small_config();
  const SpectralBasis b = basis_for(c);
  const SandwichRow r = sandwich_for_density(std::vector<double>(b.size(), 1.0), b, c, 4.0, nullptr);
  EXPECT_EQ(r.lower, 0.0);
  EXPECT_NEAR(r.w2_squared, 0.0, 1e-12);
  EXPECT_NEAR(r.upper, 0.0, 1e-14);
  EXPECT_TRUE(r.ordered);
}

TEST(Sandwich, RunsAreDeterministicAndOrdered) {
  ExperimentConfig c = small_config();
  const SandwichRow a = run_sandwich(c, 8.0), b = run_sandwich(c, 8.0);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.w2_squared, b.w2_squared);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_TRUE(a.ordered);
  EXPECT_LT(a.lower, a.upper);
  const json j = sandwich_to_json(a, c);
  EXPECT_EQ(j["format"], kSandwichFormat);
  EXPECT_TRUE(j.contains("config"));
}

TEST(Sandwich, ErrorsNameTheFailingTime) {
  json j = minimal();
  j["basis"] = {{"modes", 16}};
  j["nu"] = {{"kind", "point"}, {"x", 0.0}};
  const ExperimentConfig c = parse_config(j);
  try {
    run_sandwich(c, 2.5);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_EQ(std::string(e.what()).rfind("t=2.5: ", 0), 0u) << e.what();
  }
}

TEST(Convergence, RowsMatchLimitAndScaling) {
  json j = minimal();
  j["basis"] = {{"modes", 64}};
  j["times"] = {4.0, 8.0};
  const ConvergenceReport r = run_convergence(parse_config(j));
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.kind, "dirichlet");
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.scaled, row.t * row.t * row.w2_squared, 1e-15 * row.scaled);
    EXPECT_EQ(row.I, r.limit.I_value);
    EXPECT_NEAR(row.relative_gap, row.scaled / row.I - 1.0, 1e-12);
    EXPECT_LE(row.lower, row.w2_squared + row.w2_sq_error);
    EXPECT_LE(row.w2_squared - row.w2_sq_error, row.upper);
  }
  EXPECT_LT(std::abs(r.rows[1].relative_gap), std::abs(r.rows[0].relative_gap));
  const std::string path = temp_path("convergence.csv");
  write_convergence_csv(path, r);
  std::ifstream in(path);
  std::string header, columns;
  std::getline(in, header);
  std::getline(in, columns);
  EXPECT_EQ(columns, kConvergenceColumns);
  EXPECT_EQ(convergence_to_json(r)["rows"].size(), 2u);
}

TEST(Convergence, GapExponentOfExactPowerLaw) {
  std::vector<ConvergenceRow> rows(4);
  for (int k = 0; k < 4; ++k) {
    rows[k].t = std::pow(2.0, k + 1);
    rows[k].relative_gap = 0.3 / rows[k].t;
  }
  EXPECT_NEAR(detail::fit_gap_exponent(rows), 1.0, 1e-12);
}

TEST(Crosscheck, KilledEnsembleAgreesWithSpectralSurvival) {
  json j = minimal();
  j["basis"] = {{"modes", 64}};
  j["mc"] = {{"rule", "kill"}, {"horizon", 0.2}, {"n_paths", 20000}, {"chunk_size", 1000}, {"resamples", 40}};
  j["seed"] = 5;
  const ExperimentConfig c = parse_config(j);
  PathEnsembleSummary ens;
  const CrosscheckReport r = run_mc_crosscheck(c, &ens);
  EXPECT_EQ(ens.survival_count, r.survivors);
  EXPECT_NEAR(r.survival_mc, r.survival_spectral, 3.0 * r.survival_se);
  EXPECT_LE(r.w1_spectral, 3.0 * r.w1_se);
  EXPECT_TRUE(r.agree);
  const CrosscheckReport again = run_mc_crosscheck(c);
  EXPECT_EQ(again.w1_spectral, r.w1_spectral);
  EXPECT_EQ(crosscheck_to_json(r, c)["format"], kCrosscheckFormat);
}

TEST(Crosscheck, RequiresMcSection) { EXPECT_THROW(run_mc_crosscheck(small_config()), InvalidArgument); }

TEST(HistogramTv, IdenticalEnsemblesHaveZeroChange) {
  SimulationConfig s;
  s.n_paths = 2000;
  s.horizon = 0.2;
  s.initial = InitialDistribution::point({0.5, 0.0});
  const PathEnsembleSummary e = simulate(s);
  const auto [tv, noise] = histogram_tv(e, e);
  EXPECT_EQ(tv, 0.0);
  EXPECT_GT(noise, 0.0);
}

#pragma once

// JSON export/import of domains, bases and mode coefficients.

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

#include "cemlab/projection.hpp"
#include "cemlab/spectral_basis.hpp"

namespace cemlab {

using json = nlohmann::json;

inline constexpr const char* kBasisFormat = "cemlab-basis/1";

inline json domain_to_json(const Domain& d) {
  json j;
  j["kind"] = to_string(d.kind);
  j["boundary"] = to_string(d.boundary);
  j["x"] = {d.a, d.b};
  if (d.kind == DomainKind::rectangle) j["y"] = {d.c, d.d};
  if (d.potential.is_zero()) {
    j["potential"] = {{"kind", "zero"}};
  } else {
    j["potential"] = {{"kind", "tabulated"}, {"nodes", d.potential.nodes()}, {"values", d.potential.values()}};
  }
  return j;
}

inline Domain domain_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const Boundary bc = boundary_from_string(j.at("boundary").get<std::string>());
  const auto x = j.at("x").get<std::vector<double>>();
  detail::require(x.size() == 2, "domain: x must be [a, b]");
  Potential v;
  if (j.contains("potential")) {
    const json& p = j.at("potential");
    const std::string pk = p.at("kind").get<std::string>();
    if (pk == "tabulated") {
      v = Potential::tabulated(p.at("nodes").get<std::vector<double>>(), p.at("values").get<std::vector<double>>());
    } else if (pk != "zero") {
      throw InvalidArgument("domain: unknown potential kind " + pk);
    }
  }
  if (kind == "interval") return Domain::interval(x[0], x[1], bc, std::move(v));
  if (kind == "rectangle") {
    const auto y = j.at("y").get<std::vector<double>>();
    detail::require(y.size() == 2, "domain: y must be [c, d]");
    detail::require(v.is_zero(), "domain: rectangle requires zero potential");
    return Domain::rectangle(x[0], x[1], y[0], y[1], bc);
  }
  throw InvalidArgument("domain: unknown kind " + kind);
}

inline json basis_to_json(const SpectralBasis& b) {
  json j;
  j["format"] = kBasisFormat;
  j["domain"] = domain_to_json(b.domain());
  j["method"] = b.method();
  j["modes"] = b.modes();
  j["eigenvalues"] = b.eigenvalues();
  j["rule_x"] = {{"nodes", b.rule_x().nodes}, {"weights", b.rule_x().weights}};
  if (b.dimension() == 2) j["rule_y"] = {{"nodes", b.rule_y().nodes}, {"weights", b.rule_y().weights}};
  std::vector<double> gx, gy;
  for (const Point& p : b.grid()) {
    gx.push_back(p.x);
    gy.push_back(p.y);
  }
  j["grid_x"] = gx;
  if (b.dimension() == 2) j["grid_y"] = gy;
  j["weights"] = b.weights();
  j["mu_density"] = b.mu_density();
  j["normalization"] = b.normalization();
  const auto& F = b.eigenfunctions();
  std::vector<double> flat(static_cast<std::size_t>(F.size()));
  for (Eigen::Index m = 0; m < F.rows(); ++m)
    for (Eigen::Index i = 0; i < F.cols(); ++i) flat[static_cast<std::size_t>(m * F.cols() + i)] = F(m, i);
  j["eigenfunctions"] = {{"rows", F.rows()}, {"cols", F.cols()}, {"row_major", flat}};
  if (const auto* an = std::get_if<AnalyticModes>(&b.representation())) {
    json w = json::array();
    for (const auto& k : an->wave_numbers) w.push_back({k[0], k[1]});
    j["representation"] = {{"kind", "analytic"}, {"wave_numbers", w}};
  } else {
    const auto& C = std::get<LegendreModes>(b.representation()).coefficients;
    std::vector<double> c(static_cast<std::size_t>(C.size()));
    for (Eigen::Index m = 0; m < C.cols(); ++m)
      for (Eigen::Index k = 0; k < C.rows(); ++k) c[static_cast<std::size_t>(m * C.rows() + k)] = C(k, m);
    j["representation"] = {{"kind", "legendre"}, {"degree", C.rows() - 1}, {"coefficients_by_mode", c}};
  }
  return j;
}

inline SpectralBasis basis_from_json(const json& j) {
  detail::require(j.at("format").get<std::string>() == kBasisFormat, "basis: unsupported format tag");
  BasisData d;
  d.domain = domain_from_json(j.at("domain"));
  d.method = j.at("method").get<std::string>();
  d.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  d.rule_x.nodes = j.at("rule_x").at("nodes").get<std::vector<double>>();
  d.rule_x.weights = j.at("rule_x").at("weights").get<std::vector<double>>();
  if (j.contains("rule_y")) {
    d.rule_y.nodes = j.at("rule_y").at("nodes").get<std::vector<double>>();
    d.rule_y.weights = j.at("rule_y").at("weights").get<std::vector<double>>();
  }
  const auto gx = j.at("grid_x").get<std::vector<double>>();
  const auto gy = j.contains("grid_y") ? j.at("grid_y").get<std::vector<double>>() : std::vector<double>(gx.size(), 0.0);
  detail::require(gx.size() == gy.size(), "basis: grid_x/grid_y size mismatch");
  for (std::size_t i = 0; i < gx.size(); ++i) d.grid.push_back({gx[i], gy[i]});
  d.weights = j.at("weights").get<std::vector<double>>();
  d.mu_density = j.at("mu_density").get<std::vector<double>>();
  d.normalization = j.at("normalization").get<double>();
  const json& ef = j.at("eigenfunctions");
  const auto rows = ef.at("rows").get<Eigen::Index>(), cols = ef.at("cols").get<Eigen::Index>();
  const auto flat = ef.at("row_major").get<std::vector<double>>();
  detail::require(static_cast<Eigen::Index>(flat.size()) == rows * cols, "basis: eigenfunction array size mismatch");
  d.eigenfunctions.resize(rows, cols);
  for (Eigen::Index m = 0; m < rows; ++m)
    for (Eigen::Index i = 0; i < cols; ++i) d.eigenfunctions(m, i) = flat[static_cast<std::size_t>(m * cols + i)];
  const json& rep = j.at("representation");
  if (rep.at("kind") == "analytic") {
    AnalyticModes an;
    for (const auto& w : rep.at("wave_numbers")) an.wave_numbers.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
    d.representation = an;
  } else {
    const auto K = rep.at("degree").get<Eigen::Index>();
    const auto c = rep.at("coefficients_by_mode").get<std::vector<double>>();
    detail::require(static_cast<Eigen::Index>(c.size()) == (K + 1) * rows, "basis: coefficient array size mismatch");
    Eigen::MatrixXd C(K + 1, rows);
    for (Eigen::Index m = 0; m < rows; ++m)
      for (Eigen::Index k = 0; k <= K; ++k) C(k, m) = c[static_cast<std::size_t>(m * (K + 1) + k)];
    d.representation = LegendreModes{C};
  }
  return SpectralBasis(std::move(d));
}

inline json coefficients_to_json(const ModeCoefficients& c) {
  return {{"source", c.source}, {"values", c.values}};
}

/// Writes JSON; doubles are emitted in shortest round-trip form (at most 17 significant digits).
inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << j.dump(1) << '\n';
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace cemlab

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cemlab/errors.hpp"

namespace cemlab {

enum class Boundary { dirichlet, neumann };

inline std::string to_string(Boundary b) { return b == Boundary::dirichlet ? "dirichlet" : "neumann"; }

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "dirichlet") return Boundary::dirichlet;
  if (s == "neumann") return Boundary::neumann;
  throw InvalidArgument("unknown boundary condition: " + s);
}

/// A point of the model domain; y is ignored on intervals.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Natural cubic spline through tabulated (x_i, v_i).
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, std::vector<double> v) : x_(std::move(x)), v_(std::move(v)) {
    const std::size_t n = x_.size();
    detail::require(n >= 2 && v_.size() == n, "CubicSpline: need >= 2 matching samples");
    for (std::size_t i = 1; i < n; ++i)
      detail::require(x_[i] > x_[i - 1], "CubicSpline: nodes must be strictly increasing");
    m_.assign(n, 0.0);
    if (n == 2) return;
    // Tridiagonal solve for second derivatives, natural end conditions.
    std::vector<double> diag(n, 2.0), upper(n, 0.0), rhs(n, 0.0);
    diag[0] = diag[n - 1] = 1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      const double lower = h0 / (h0 + h1);
      upper[i] = h1 / (h0 + h1);
      rhs[i] = 6.0 * ((v_[i + 1] - v_[i]) / h1 - (v_[i] - v_[i - 1]) / h0) / (h0 + h1);
      // forward elimination
      const double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    m_[n - 1] = 0.0;
    for (std::size_t i = n - 1; i-- > 1;) m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
  }

  double operator()(double x) const { return eval(x, 0); }
  double derivative(double x) const { return eval(x, 1); }
  const std::vector<double>& nodes() const { return x_; }
  const std::vector<double>& values() const { return v_; }

 private:
  double eval(double x, int order) const {
    const std::size_t n = x_.size();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1);
    const double h = x_[i] - x_[i - 1];
    const double A = (x_[i] - x) / h, B = (x - x_[i - 1]) / h;
    if (order == 0)
      return A * v_[i - 1] + B * v_[i] + ((A * A * A - A) * m_[i - 1] + (B * B * B - B) * m_[i]) * h * h / 6.0;
    return (v_[i] - v_[i - 1]) / h + ((1.0 - 3.0 * A * A) * m_[i - 1] + (3.0 * B * B - 1.0) * m_[i]) * h / 6.0;
  }

  std::vector<double> x_, v_, m_;
};

/// Potential V of the generator L = Delta + grad V. Either identically zero or
/// tabulated on a grid covering the interval and interpolated by a cubic spline.
class Potential {
 public:
  Potential() = default;
  static Potential zero() { return Potential(); }
  static Potential tabulated(std::vector<double> nodes, std::vector<double> values) {
    Potential p;
    p.spline_ = CubicSpline(std::move(nodes), std::move(values));
    p.zero_ = false;
    return p;
  }

  bool is_zero() const { return zero_; }
  double value(double x) const { return zero_ ? 0.0 : spline_(x); }
  double gradient(double x) const { return zero_ ? 0.0 : spline_.derivative(x); }
  const std::vector<double>& nodes() const { return spline_.nodes(); }
  const std::vector<double>& values() const { return spline_.values(); }

 private:
  bool zero_ = true;
  CubicSpline spline_;
};

enum class DomainKind { interval, rectangle };

struct Domain {
  DomainKind kind = DomainKind::interval;
  double a = 0.0, b = 1.0;  // x-extent
  double c = 0.0, d = 1.0;  // y-extent (rectangle only)
  Boundary boundary = Boundary::dirichlet;
  Potential potential;

  static Domain interval(double a, double b, Boundary bc, Potential v = Potential::zero()) {
    Domain dom;
    dom.kind = DomainKind::interval;
    dom.a = a;
    dom.b = b;
    dom.boundary = bc;
    dom.potential = std::move(v);
    dom.validate();
    return dom;
  }

  static Domain rectangle(double a, double b, double c, double d, Boundary bc) {
    Domain dom;
    dom.kind = DomainKind::rectangle;
    dom.a = a;
    dom.b = b;
    dom.c = c;
    dom.d = d;
    dom.boundary = bc;
    dom.validate();
    return dom;
  }

  int dimension() const { return kind == DomainKind::interval ? 1 : 2; }
  double diameter() const {
    return kind == DomainKind::interval ? b - a : std::hypot(b - a, d - c);
  }

  bool contains_interior(const Point& p) const {
    const bool in_x = p.x > a && p.x < b;
    return kind == DomainKind::interval ? in_x : (in_x && p.y > c && p.y < d);
  }

  double distance_to_boundary(const Point& p) const {
    double dist = std::min(p.x - a, b - p.x);
    if (kind == DomainKind::rectangle) dist = std::min({dist, p.y - c, d - p.y});
    return dist;
  }

  void validate() const {
    detail::require(b > a, "Domain: require b > a");
    if (kind == DomainKind::rectangle) {
      detail::require(d > c, "Domain: require d > c");
      detail::require(potential.is_zero(), "Domain: rectangle requires zero potential");
    }
    if (!potential.is_zero()) {
      const auto& xs = potential.nodes();
      detail::require(xs.front() <= a + 1e-12 && xs.back() >= b - 1e-12,
                      "Domain: tabulated potential must cover [a, b]");
      for (double v : potential.values()) detail::require(std::isfinite(v), "Domain: potential must be finite");
    }
  }
};

inline std::string to_string(DomainKind k) { return k == DomainKind::interval ? "interval" : "rectangle"; }

}  // namespace cemlab

// ============================================================================
// quadrature.hpp -- adaptive Gauss-Kronrod integration with breakpoints
//
// Thin wrapper over Boost.Math. The library uses it where a closed form is
// not available (exact-mode interval pmfs) and the tests use it as an oracle.
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace cpns::quad {

/// Integrate f over [a, b], splitting at every breakpoint strictly inside.
/// `rel_tol` is passed to each adaptive sub-integration.
template <class F>
double integrate(F&& f, double a, double b, std::vector<double> breaks = {}, double rel_tol = 1e-12,
                 unsigned max_depth = 15) {
  if (a == b) return 0.0;
  const double sign = a < b ? 1.0 : -1.0;
  if (a > b) std::swap(a, b);
  std::vector<double> knots{a};
  std::sort(breaks.begin(), breaks.end());
  for (double x : breaks)
    if (x > knots.back() && x < b) knots.push_back(x);
  knots.push_back(b);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, knots[i], knots[i + 1],
                                                                            max_depth, rel_tol, &err);
  }
  return sign * total;
}

/// Composite 20-point Gauss-Legendre rule on `panels` equal panels of [a, b].
/// Calls visit(x, w) for every node, which lets callers accumulate
/// vector-valued integrands without re-evaluating shared work.
template <class Visit>
void gauss_legendre_nodes(double a, double b, std::size_t panels, Visit&& visit) {
  using rule = boost::math::quadrature::gauss<double, 20>;
  const auto& x = rule::abscissa();
  const auto& w = rule::weights();
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    const double mid = lo + 0.5 * h;
    const double half = 0.5 * h;
    for (std::size_t i = 0; i < x.size(); ++i) {
      visit(mid - half * x[i], half * w[i]);
      visit(mid + half * x[i], half * w[i]);
    }
  }
}

}  // namespace cpns::quad

#include "hofmat/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hofmat {

void QuadratureSpec::validate() const {
  if (order_1d < 2 || simplex_order < 2) {
    throw std::invalid_argument("quadrature orders must be >= 2");
  }
}

Rule1D gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  Rule1D rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    if (n % 2 == 1 && i == m - 1) z = 0.0;
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = mid - half * z;
    rule.nodes[hi] = mid + half * z;
    rule.weights[lo] = half * w;
    rule.weights[hi] = half * w;
  }
  return rule;
}

SimplexRule simplex_rule(int order) {
  if (order < 2) throw std::invalid_argument("simplex_rule: order must be >= 2");
  // Duffy map (u, v) in [0,1]^2 -> (s, t) = (u, (1 - u) v), Jacobian 1 - u.
  const Rule1D line = gauss_legendre(order, 0.0, 1.0);
  SimplexRule rule;
  rule.nodes.reserve(2 * line.size() * line.size());
  rule.weights.reserve(2 * line.size() * line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    for (std::size_t j = 0; j < line.size(); ++j) {
      const double u = line.nodes[i];
      const double v = line.nodes[j];
      const double s = u;
      const double t = (1.0 - u) * v;
      const double w = 0.5 * line.weights[i] * line.weights[j] * (1.0 - u);
      rule.nodes.push_back({s, t});
      rule.weights.push_back(w);
      rule.nodes.push_back({t, s});
      rule.weights.push_back(w);
    }
  }
  return rule;
}

TensorRule tensor_rule(const Rule1D& rule, int dim) {
  if (dim < 1) throw std::invalid_argument("tensor_rule: dim must be >= 1");
  TensorRule out;
  out.dim = dim;
  const std::size_t q = rule.size();
  std::size_t total = 1;
  for (int j = 0; j < dim; ++j) total *= q;
  out.points.resize(total * static_cast<std::size_t>(dim));
  out.weights.resize(total);
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
  for (std::size_t p = 0; p < total; ++p) {
    double w = 1.0;
    for (int j = 0; j < dim; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      out.points[p * static_cast<std::size_t>(dim) + jj] = rule.nodes[idx[jj]];
      w *= rule.weights[idx[jj]];
    }
    out.weights[p] = w;
    for (int j = dim - 1; j >= 0; --j) {
      const auto jj = static_cast<std::size_t>(j);
      if (++idx[jj] < q) break;
      idx[jj] = 0;
    }
  }
  return out;
}

}  // namespace hofmat

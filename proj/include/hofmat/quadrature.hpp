#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace hofmat {

/// Node counts for the line and triangle rules used by the flux geometry.
struct QuadratureSpec {
  int order_1d = 16;
  int simplex_order = 12;

  void validate() const;
};

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre rule with n nodes on [a, b]. Nodes are mirrored exactly
/// about the interval midpoint.
Rule1D gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Rule on the standard simplex {s, t >= 0, s + t <= 1}: a collapsed
/// Gauss-Legendre tensor rule, symmetrized under s <-> t.
struct SimplexRule {
  std::vector<std::array<double, 2>> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

SimplexRule simplex_rule(int order);

/// Tensor product of one 1-D rule over `dim` axes. Points are stored
/// row-major (point p, axis j at points[p * dim + j]) in lexicographic
/// order with the first axis slowest.
struct TensorRule {
  int dim = 0;
  std::vector<double> points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  const double* point(std::size_t p) const { return points.data() + p * static_cast<std::size_t>(dim); }
};

TensorRule tensor_rule(const Rule1D& rule, int dim);

}  // namespace hofmat

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hofmat {

using cplx = std::complex<double>;

using SymbolEvaluator =
    std::function<cplx(std::span<const double> x, std::span<const double> xp, std::span<const double> xi)>;

/// One lattice hop: a(xi) contains coeff * exp(i shift . xi).
struct Hop {
  std::vector<int> shift;
  cplx coeff;
};

/// Symbols that are trigonometric polynomials in xi. Their kernel is a sum of
/// deltas and assembly takes a closed-form fast path.
struct HoppingClass {
  std::vector<Hop> hops;
};

/// Symbols negligible (below tail_tol) outside the box |xi|_inf <= box_halfwidth.
struct XiIntegrableClass {
  double box_halfwidth = 0.0;
  int grid_points = 64;  // Gauss-Legendre nodes per xi axis
  double tail_tol = 1e-12;
};

/// Everything else; usable only with epsilon > 0 regularization.
struct GeneralClass {
  double nodes_per_unit = 4.0;  // xi nodes per unit length of the regularized box
  int min_grid_points = 32;
};

using XiClass = std::variant<HoppingClass, XiIntegrableClass, GeneralClass>;

/// Optional factorization a(y, y', xi) = spatial(y, y') * prod_j profile(xi_j).
/// Assembly uses it to reduce the xi integral to per-axis 1-D transforms.
struct SeparableXi {
  std::function<cplx(std::span<const double> y, std::span<const double> yp)> spatial;
  std::function<double(double)> profile;
};

struct Symbol {
  std::string id;
  int dim = 0;
  SymbolEvaluator eval;
  double growth_order = 0.0;
  bool hermitian = false;
  XiClass xi_class;
  std::optional<SeparableXi> separable;

  bool is_hopping() const { return std::holds_alternative<HoppingClass>(xi_class); }
  bool is_xi_integrable() const { return std::holds_alternative<XiIntegrableClass>(xi_class); }
  bool is_general() const { return std::holds_alternative<GeneralClass>(xi_class); }
  const HoppingClass& hopping() const { return std::get<HoppingClass>(xi_class); }
  const XiIntegrableClass& xi_integrable() const { return std::get<XiIntegrableClass>(xi_class); }

  cplx operator()(std::span<const double> x, std::span<const double> xp, std::span<const double> xi) const {
    return eval(x, xp, xi);
  }
};

/// A named smooth bounded real potential used by `modulated`.
struct Potential {
  std::string name;
  std::function<double(std::span<const double>)> eval;
};

Potential cos2pi_x1();

/// a(xi) = sum_j 2 cos(xi_j): hops +-e_j with coefficient 1.
Symbol harper(int dim);

/// Hopping symbol from an explicit hop list; hermitian iff the list is closed
/// under shift -> -shift with conjugate coefficients.
Symbol hopping_symbol(int dim, std::vector<Hop> hops, std::string id);

/// a(x, x', xi) = exp(-|xi|^2 / (2 w^2)); box chosen for the given tail.
Symbol gaussian_xi(int dim, double width, int grid_points = 64, double tail_tol = 1e-12);

/// a(x, x', xi) = V((x + x') / 2) * exp(-|xi|^2 / (2 w^2)).
Symbol modulated(int dim, Potential potential, double width, int grid_points = 64, double tail_tol = 1e-12);

/// Same evaluator, reclassified as General (drops class metadata and any
/// separable factorization). Used to exercise the epsilon-regularized path.
Symbol as_general(const Symbol& s, double nodes_per_unit = 4.0);

/// Half-width L with exp(-L^2 / (2 w^2)) = tail_tol.
double gaussian_tail_box(double width, double tail_tol);

struct SymbolReport {
  int samples = 0;
  double growth_constant = 0.0;      // max |a| / <x - x'>^M
  double derivative_constant = 0.0;  // max finite-difference |d a|, |d^2 a| / <x - x'>^M
  double hermitian_violation = 0.0;  // max |a(x,x',xi) - conj a(x',x,xi)|, 0 if not flagged
  double hopping_mismatch = 0.0;     // max |a(xi) - sum c e^{i delta xi}|, Hopping only
  double tail_max = 0.0;             // max |a| beyond the declared box, XiIntegrable only
  bool hermitian_checked = false;
  bool tail_checked = false;
  std::vector<std::string> warnings;
};

/// Sampled checks of the symbol's declared properties. Soft violations are
/// recorded in the report; evaluator exceptions propagate.
SymbolReport validate_symbol(const Symbol& s, int samples, std::uint64_t seed = 7);

}  // namespace hofmat

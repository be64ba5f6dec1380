#include "hofmat/symbol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hofmat/util.hpp"

namespace hofmat {

namespace {

double jbracket(std::span<const double> x, std::span<const double> xp) {
  double s = 1.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - xp[k]) * (x[k] - xp[k]);
  return std::sqrt(s);
}

bool hop_list_hermitian(const std::vector<Hop>& hops) {
  for (const Hop& h : hops) {
    std::vector<int> neg(h.shift.size());
    std::transform(h.shift.begin(), h.shift.end(), neg.begin(), [](int v) { return -v; });
    const auto it = std::find_if(hops.begin(), hops.end(), [&](const Hop& o) { return o.shift == neg; });
    if (it == hops.end() || std::abs(it->coeff - std::conj(h.coeff)) > 1e-14 * (1.0 + std::abs(h.coeff))) {
      return false;
    }
  }
  return true;
}

}  // namespace

Potential cos2pi_x1() {
  return {"cos2pi_x1", [](std::span<const double> x) { return std::cos(2.0 * std::numbers::pi * x[0]); }};
}

Symbol hopping_symbol(int dim, std::vector<Hop> hops, std::string id) {
  if (dim < 1) throw std::invalid_argument("hopping_symbol: dim must be positive");
  for (const Hop& h : hops) {
    if (static_cast<int>(h.shift.size()) != dim) throw std::invalid_argument("hop shift has wrong dimension");
  }
  Symbol s;
  s.id = std::move(id);
  s.dim = dim;
  s.hermitian = hop_list_hermitian(hops);
  s.growth_order = 0.0;
  s.eval = [hops](std::span<const double>, std::span<const double>, std::span<const double> xi) {
    cplx sum{0.0, 0.0};
    for (const Hop& h : hops) {
      double arg = 0.0;
      for (std::size_t k = 0; k < xi.size(); ++k) arg += h.shift[k] * xi[k];
      sum += h.coeff * std::polar(1.0, arg);
    }
    return sum;
  };
  s.xi_class = HoppingClass{std::move(hops)};
  return s;
}

Symbol harper(int dim) {
  if (dim < 2) throw std::invalid_argument("harper: d must be >= 2");
  std::vector<Hop> hops;
  for (int j = 0; j < dim; ++j) {
    for (int sign : {1, -1}) {
      Hop h;
      h.shift.assign(static_cast<std::size_t>(dim), 0);
      h.shift[static_cast<std::size_t>(j)] = sign;
      h.coeff = 1.0;
      hops.push_back(std::move(h));
    }
  }
  Symbol s = hopping_symbol(dim, std::move(hops), "harper(d=" + std::to_string(dim) + ")");
  // Closed form equals the hop sum; cheaper to evaluate.
  s.eval = [](std::span<const double>, std::span<const double>, std::span<const double> xi) {
    double sum = 0.0;
    for (double v : xi) sum += 2.0 * std::cos(v);
    return cplx{sum, 0.0};
  };
  return s;
}

double gaussian_tail_box(double width, double tail_tol) {
  if (!(width > 0.0)) throw std::invalid_argument("gaussian width must be positive");
  if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw std::invalid_argument("tail_tol must be in (0, 1)");
  return width * std::sqrt(2.0 * std::log(1.0 / tail_tol));
}

Symbol gaussian_xi(int dim, double width, int grid_points, double tail_tol) {
  if (dim < 1) throw std::invalid_argument("gaussian_xi: dim must be positive");
  if (!(width > 0.0)) throw std::invalid_argument("gaussian_xi: width must be positive");
  Symbol s;
  s.id = "gaussian_xi(d=" + std::to_string(dim) + ",w=" + format_double(width) + ",n=" +
         std::to_string(grid_points) + ")";
  s.dim = dim;
  s.hermitian = true;
  s.growth_order = 0.0;
  const double inv = 1.0 / (2.0 * width * width);
  s.eval = [inv](std::span<const double>, std::span<const double>, std::span<const double> xi) {
    double r2 = 0.0;
    for (double v : xi) r2 += v * v;
    return cplx{std::exp(-r2 * inv), 0.0};
  };
  s.xi_class = XiIntegrableClass{gaussian_tail_box(width, tail_tol), grid_points, tail_tol};
  s.separable = SeparableXi{[](std::span<const double>, std::span<const double>) { return cplx{1.0, 0.0}; },
                            [inv](double t) { return std::exp(-t * t * inv); }};
  return s;
}

Symbol modulated(int dim, Potential potential, double width, int grid_points, double tail_tol) {
  if (!potential.eval) throw std::invalid_argument("modulated: potential must be callable");
  Symbol s = gaussian_xi(dim, width, grid_points, tail_tol);
  s.id = "modulated(d=" + std::to_string(dim) + ",V=" + potential.name + ",w=" + format_double(width) +
         ",n=" + std::to_string(grid_points) + ")";
  const double inv = 1.0 / (2.0 * width * width);
  auto mid_value = [v = potential.eval](std::span<const double> x, std::span<const double> xp) {
    double buf[8];
    std::vector<double> heap;
    double* mid = buf;
    if (x.size() > 8) {
      heap.resize(x.size());
      mid = heap.data();
    }
    for (std::size_t k = 0; k < x.size(); ++k) mid[k] = 0.5 * (x[k] + xp[k]);
    return v(std::span<const double>(mid, x.size()));
  };
  s.eval = [mid_value, inv](std::span<const double> x, std::span<const double> xp, std::span<const double> xi) {
    double r2 = 0.0;
    for (double v : xi) r2 += v * v;
    return cplx{mid_value(x, xp) * std::exp(-r2 * inv), 0.0};
  };
  s.separable = SeparableXi{[mid_value](std::span<const double> y, std::span<const double> yp) {
                              return cplx{mid_value(y, yp), 0.0};
                            },
                            [inv](double t) { return std::exp(-t * t * inv); }};
  return s;
}

Symbol as_general(const Symbol& s, double nodes_per_unit) {
  Symbol g = s;
  g.id = "general:" + s.id;
  g.xi_class = GeneralClass{nodes_per_unit, 32};
  g.separable.reset();
  return g;
}

SymbolReport validate_symbol(const Symbol& s, int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("validate_symbol: need at least one sample");
  const auto d = static_cast<std::size_t>(s.dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> space(-5.0, 5.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  double xi_range = std::numbers::pi;
  if (s.is_xi_integrable()) xi_range = s.xi_integrable().box_halfwidth;

  SymbolReport r;
  r.samples = samples;
  r.hermitian_checked = s.hermitian;
  r.tail_checked = s.is_xi_integrable();

  std::vector<double> x(d), xp(d), xi(d), tmp(d);
  const double h = 1e-3;
  for (int n = 0; n < samples; ++n) {
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = space(rng);
      xp[k] = space(rng);
      xi[k] = xi_range * unit(rng);
    }
    const double weight = std::pow(jbracket(x, xp), s.growth_order);
    const cplx a = s(x, xp, xi);
    r.growth_constant = std::max(r.growth_constant, std::abs(a) / weight);

    // First and second central differences along each coordinate of x, x', xi.
    for (int block = 0; block < 3; ++block) {
      std::vector<double>& v = block == 0 ? x : (block == 1 ? xp : xi);
      for (std::size_t k = 0; k < d; ++k) {
        const double saved = v[k];
        v[k] = saved + h;
        const cplx ap = s(x, xp, xi);
        v[k] = saved - h;
        const cplx am = s(x, xp, xi);
        v[k] = saved;
        const double d1 = std::abs(ap - am) / (2.0 * h);
        const double d2 = std::abs(ap - 2.0 * a + am) / (h * h);
        r.derivative_constant = std::max(r.derivative_constant, std::max(d1, d2) / weight);
      }
    }

    if (s.hermitian) {
      r.hermitian_violation = std::max(r.hermitian_violation, std::abs(a - std::conj(s(xp, x, xi))));
    }
    if (s.is_hopping()) {
      cplx sum{0.0, 0.0};
      for (const Hop& hop : s.hopping().hops) {
        double arg = 0.0;
        for (std::size_t k = 0; k < d; ++k) arg += hop.shift[k] * xi[k];
        sum += hop.coeff * std::polar(1.0, arg);
      }
      r.hopping_mismatch = std::max(r.hopping_mismatch, std::abs(a - sum));
    }
    if (s.is_xi_integrable()) {
      // A point with |xi|_inf in (L, 2L].
      const double box = s.xi_integrable().box_halfwidth;
      for (std::size_t k = 0; k < d; ++k) tmp[k] = 2.0 * box * unit(rng);
      const std::size_t axis = static_cast<std::size_t>(n) % d;
      tmp[axis] = (unit(rng) < 0.0 ? -1.0 : 1.0) * box * (1.0 + 1e-9 + std::abs(unit(rng)));
      r.tail_max = std::max(r.tail_max, std::abs(s(x, xp, tmp)));
    }
  }
  if (s.hermitian && r.hermitian_violation > 1e-12) {
    r.warnings.push_back("hermitian flag set but conjugate-swap identity violated");
  }
  if (s.is_xi_integrable() && r.tail_max >= s.xi_integrable().tail_tol) {
    r.warnings.push_back("symbol not negligible outside the declared xi box");
  }
  if (s.is_hopping() && r.hopping_mismatch > 1e-12) {
    r.warnings.push_back("evaluator disagrees with the hop list");
  }
  return r;
}

}  // namespace hofmat

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "hofmat/symbol.hpp"

using namespace hofmat;

namespace {
const std::vector<double> kOrigin2{0.0, 0.0};
}

TEST_SUITE("symbols") {
  TEST_CASE("harper values and hop set") {
    const Symbol h = harper(2);
    CHECK(h(kOrigin2, kOrigin2, std::vector<double>{0.0, 0.0}).real() == 4.0);
    CHECK(std::abs(h(kOrigin2, kOrigin2, std::vector<double>{std::numbers::pi, 0.0})) < 1e-15);
    CHECK(h.hermitian);
    CHECK(h.growth_order == 0.0);

    const Symbol h3 = harper(3);
    REQUIRE(h3.hopping().hops.size() == 6);
    for (const Hop& hop : h3.hopping().hops) {
      int norm1 = 0;
      for (int v : hop.shift) norm1 += std::abs(v);
      CHECK(norm1 == 1);
      CHECK(hop.coeff == cplx{1.0, 0.0});
    }
    CHECK_THROWS_AS(harper(1), std::invalid_argument);
  }

  TEST_CASE("hopping symbol hermitian detection") {
    const Symbol herm = hopping_symbol(2, {{{1, 0}, {0.0, 1.0}}, {{-1, 0}, {0.0, -1.0}}}, "i-hop");
    CHECK(herm.hermitian);
    const Symbol one_way = hopping_symbol(2, {{{1, 0}, {1.0, 0.0}}}, "one-way");
    CHECK_FALSE(one_way.hermitian);
  }

  TEST_CASE("gaussian_xi values and tail box") {
    const Symbol g = gaussian_xi(2, 1.0);
    CHECK(g(kOrigin2, kOrigin2, std::vector<double>{0.0, 0.0}).real() == 1.0);
    CHECK(g(kOrigin2, kOrigin2, std::vector<double>{1.0, 1.0}).real() == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    const double l = g.xi_integrable().box_halfwidth;
    CHECK(l >= std::sqrt(2.0 * 12.0 * std::log(10.0)) - 1e-12);
    CHECK(l == doctest::Approx(7.43).epsilon(1e-3));
    CHECK_THROWS_AS(gaussian_xi(2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_xi(2, -1.0), std::invalid_argument);
  }

  TEST_CASE("modulated examples") {
    const Potential one{"one", [](std::span<const double>) { return 1.0; }};
    const Symbol m1 = modulated(2, one, 1.0);
    const Symbol g = gaussian_xi(2, 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    std::vector<double> x(2), xp(2), xi(2);
    for (int n = 0; n < 100; ++n) {
      for (int k = 0; k < 2; ++k) {
        x[k] = uni(rng);
        xp[k] = uni(rng);
        xi[k] = uni(rng);
      }
      CHECK(m1(x, xp, xi) == g(x, xp, xi));
    }

    const Symbol mc = modulated(2, cos2pi_x1(), 1.0);
    const std::vector<double> q{0.25, 0.0};
    CHECK(std::abs(mc(q, q, kOrigin2)) < 1e-15);

    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      for (int k = 0; k < 2; ++k) {
        x[k] = uni(rng);
        xp[k] = uni(rng);
        xi[k] = uni(rng);
      }
      worst = std::max(worst, std::abs(mc(x, xp, xi) - std::conj(mc(xp, x, xi))));
    }
    CHECK(worst == 0.0);
  }

  TEST_CASE("separable factorization reproduces the evaluator") {
    const Symbol mc = modulated(2, cos2pi_x1(), 0.7);
    REQUIRE(mc.separable.has_value());
    const std::vector<double> x{0.3, -1.2}, xp{0.9, 0.4}, xi{1.1, -0.6};
    const cplx fact = mc.separable->spatial(x, xp) * mc.separable->profile(xi[0]) * mc.separable->profile(xi[1]);
    CHECK(std::abs(fact - mc(x, xp, xi)) < 1e-15);
  }

  TEST_CASE("validate_symbol reports") {
    const SymbolReport h = validate_symbol(harper(2), 500);
    CHECK(h.hermitian_violation == 0.0);
    CHECK(h.hopping_mismatch <= 1e-12);
    CHECK(h.growth_constant <= 4.0);
    CHECK(h.warnings.empty());

    const SymbolReport g = validate_symbol(gaussian_xi(2, 1.0), 500);
    CHECK(g.tail_checked);
    CHECK(g.tail_max < 1e-12);
    CHECK(g.growth_constant <= 1.0);
    CHECK(std::isfinite(g.derivative_constant));

    Symbol bad = gaussian_xi(2, 1.0);
    bad.eval = [](std::span<const double> x, std::span<const double>, std::span<const double>) {
      return cplx{0.0, x[0]};
    };
    const SymbolReport b = validate_symbol(bad, 100);
    CHECK(b.hermitian_violation > 0.0);
    CHECK_FALSE(b.warnings.empty());

    Symbol thrower = harper(2);
    thrower.eval = [](std::span<const double>, std::span<const double>, std::span<const double>) -> cplx {
      throw std::runtime_error("boom");
    };
    CHECK_THROWS_AS(validate_symbol(thrower, 1), std::runtime_error);
    CHECK_THROWS_AS(validate_symbol(harper(2), 0), std::invalid_argument);
  }

  TEST_CASE("growth bound with M > 0") {
    Symbol s = gaussian_xi(2, 1.0);
    s.growth_order = 1.0;
    s.eval = [](std::span<const double> x, std::span<const double> xp, std::span<const double>) {
      double r2 = 1.0;
      for (std::size_t k = 0; k < x.size(); ++k) r2 += (x[k] - xp[k]) * (x[k] - xp[k]);
      return cplx{3.0 * std::sqrt(r2), 0.0};
    };
    const SymbolReport r = validate_symbol(s, 200);
    CHECK(r.growth_constant == doctest::Approx(3.0));
  }
}

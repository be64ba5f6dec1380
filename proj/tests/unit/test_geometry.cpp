#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "hofmat/field.hpp"
#include "hofmat/quadrature.hpp"

using namespace hofmat;

namespace {

Eigen::MatrixXd unit_matrix() {
  Eigen::MatrixXd b(2, 2);
  b << 0.0, 1.0, -1.0, 0.0;
  return b;
}

Eigen::MatrixXd random_antisymmetric(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = j + 1; k < d; ++k) {
      b(j, k) = uni(rng);
      b(k, j) = -b(j, k);
    }
  return b;
}

// d = 3 closed smooth field: B = dA for A = (sin x2, cos x3 x1, x1 x2).
MagneticField curl_field_3d() {
  auto eval = [](std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out) {
    // B_jk = d_j A_k - d_k A_j
    Eigen::Matrix3d grad;  // grad(j, k) = d_j A_k
    grad << 0.0, std::cos(x[2]), x[1], std::cos(x[1]), 0.0, x[0], 0.0, -std::sin(x[2]) * x[0], 0.0;
    out = grad - grad.transpose();
  };
  return MagneticField::smooth(3, eval, 2.0, "curl3d");
}

MagneticField cos_x1_field() {
  auto eval = [](std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out) {
    out << 0.0, std::cos(x[0]), -std::cos(x[0]), 0.0;
  };
  return MagneticField::smooth(2, eval, 1.0, "cos_x1");
}

}  // namespace

TEST_SUITE("quadrature") {
  TEST_CASE("gauss_legendre integrates polynomials and mirrors nodes") {
    const Rule1D r = gauss_legendre(8, 0.0, 1.0);
    for (int p = 0; p < 16; ++p) {
      double s = 0.0;
      for (std::size_t q = 0; q < r.size(); ++q) s += r.weights[q] * std::pow(r.nodes[q], p);
      CHECK(s == doctest::Approx(1.0 / (p + 1)).epsilon(1e-14));
    }
    for (std::size_t q = 0; q < r.size(); ++q) CHECK(r.nodes[q] + r.nodes[r.size() - 1 - q] == 1.0);
    CHECK_THROWS(gauss_legendre(0));
  }

  TEST_CASE("simplex rule integrates monomials and is symmetric") {
    const SimplexRule r = simplex_rule(8);
    // int s^a t^b over the simplex = a! b! / (a + b + 2)!
    auto exact = [](int a, int b) { return std::tgamma(a + 1) * std::tgamma(b + 1) / std::tgamma(a + b + 3); };
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < r.size(); ++q) s += r.weights[q] * std::pow(r.nodes[q][0], a) * std::pow(r.nodes[q][1], b);
        CHECK(s == doctest::Approx(exact(a, b)).epsilon(1e-13));
      }
  }

  TEST_CASE("tensor rule orders the first axis slowest") {
    const TensorRule t = tensor_rule(gauss_legendre(3, -0.5, 0.5), 2);
    CHECK(t.size() == 9);
    CHECK(t.point(1)[0] == t.point(0)[0]);
    CHECK(t.point(3)[0] > t.point(0)[0]);
    double s = 0.0;
    for (double w : t.weights) s += w;
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_SUITE("magnetic_geometry") {
  TEST_CASE("vector potential examples") {
    const MagneticField f = MagneticField::constant(unit_matrix());
    const std::vector<double> x{1.0, 0.0}, o{0.0, 0.0};
    CHECK(vector_potential(f, 0, x, o) == 0.0);
    const std::vector<double> p{0.3, -1.7};
    CHECK(vector_potential(f, 1, p, p) == 0.0);
    CHECK(vector_potential(cos_x1_field(), 0, p, p) == 0.0);
    CHECK_THROWS_AS(vector_potential(f, 2, x, o), std::invalid_argument);
    CHECK_THROWS_AS(vector_potential(f, 0, std::vector<double>{1.0}, o), std::invalid_argument);
  }

  TEST_CASE("smooth vector potential converges under order refinement") {
    const MagneticField f = cos_x1_field();
    const std::vector<double> x{std::numbers::pi / 2.0, 0.0}, o{0.0, 0.0};
    // Axis 2 picks up B_21 (x_1 - x0_1); axis 1 vanishes here since x_2 = x0_2.
    double prev = vector_potential(f, 1, x, o, {4, 12});
    double cur = prev;
    for (int order = 8; order <= 64; order *= 2) {
      prev = cur;
      cur = vector_potential(f, 1, x, o, {order, 12});
    }
    CHECK(std::abs(cur - prev) < 1e-10);
    CHECK(std::abs(vector_potential(f, 1, x, o) - cur) < 1e-10);
    CHECK(vector_potential(f, 0, x, o) == 0.0);
  }

  TEST_CASE("phi examples") {
    const MagneticField f = MagneticField::constant(unit_matrix());
    const std::vector<double> x{1.0, 0.0}, y{0.0, 1.0};
    CHECK(phi(f, x, y) == 0.5);
    CHECK(phi(f, x, x) == 0.0);
    const MagneticField w = MagneticField::wrap_as_smooth(unit_matrix());
    CHECK(std::abs(phi(w, x, y) - 0.5) < 1e-12);
    CHECK(std::abs(phi(w, x, x)) < 1e-15);
  }

  TEST_CASE("triangle flux examples") {
    const MagneticField f = MagneticField::constant(unit_matrix());
    const std::vector<double> a{0.0, 0.0}, b{1.0, 0.0}, c{1.0, 1.0};
    CHECK(triangle_flux(f, a, a, c) == 0.0);
    CHECK(std::abs(std::abs(triangle_flux(f, a, b, c)) - 0.5) < 1e-15);
    const std::vector<double> p{0.3, 0.6}, q{0.7, 1.4}, r{-0.2, -0.4};
    CHECK(std::abs(triangle_flux(f, p, q, r)) < 1e-12);
  }

  TEST_CASE("fl_gamma examples") {
    const MagneticField f = MagneticField::constant(unit_matrix());
    const std::vector<double> zero{0.0, 0.0};
    for (const MagneticField& field : {f, cos_x1_field()}) {
      CHECK(std::abs(fl_gamma(field, std::vector<int>{2, -1}, std::vector<int>{0, 3}, zero, zero)) < 1e-12);
    }

    const std::vector<int> g0{0, 0};
    const std::vector<double> x{0.2, -0.3}, xp{-0.4, 0.1};
    const double direct = triangle_flux(f, x, zero, zero) + triangle_flux(f, x, xp, zero);
    CHECK(std::abs(fl_gamma(f, g0, g0, x, xp) - direct) < 1e-12);
    CHECK(std::abs(fl_gamma(f, g0, g0, x, xp) - (phi(f, x, xp) - phi(f, x, zero))) < 1e-12);

    const std::vector<int> g{1, 0};
    const std::vector<double> q{0.25, 0.25}, diff{-1.0, 0.0};
    CHECK(std::abs(fl_gamma(f, g, g0, q, q) - 2.0 * phi(f, q, diff)) < 1e-12);
  }

  TEST_CASE("antisymmetry and vanishing diagonal over random pairs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-5.0, 5.0);
    const MagneticField c = MagneticField::constant(random_antisymmetric(3, rng));
    const MagneticField s = curl_field_3d();
    double worst_c = 0.0, worst_s = 0.0, diag_s = 0.0;
    std::vector<double> x(3), y(3);
    for (int n = 0; n < 1000; ++n) {
      for (auto& v : x) v = uni(rng);
      for (auto& v : y) v = uni(rng);
      worst_c = std::max(worst_c, std::abs(phi(c, x, y) + phi(c, y, x)));
      worst_s = std::max(worst_s, std::abs(phi(s, x, y) + phi(s, y, x)));
      CHECK(phi(c, x, x) == 0.0);
      diag_s = std::max(diag_s, std::abs(phi(s, x, x)));
    }
    CHECK(worst_c <= 1e-12);
    CHECK(worst_s <= 1e-8);
    CHECK(diag_s <= 1e-12);
  }

  TEST_CASE("constant-field bilinearity identity") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> uni(-5.0, 5.0);
    const MagneticField f = MagneticField::constant(random_antisymmetric(4, rng));
    std::vector<double> x(4), y(4), z(4), u(4), v(4);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      for (int k = 0; k < 4; ++k) {
        x[k] = uni(rng);
        y[k] = uni(rng);
        z[k] = uni(rng);
        u[k] = x[k] - y[k];
        v[k] = y[k] - z[k];
      }
      worst = std::max(worst, std::abs(phi(f, x, y) + phi(f, y, z) - phi(f, x, z) - phi(f, u, v)));
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("smooth flux agrees with the closed form on a wrapped constant field") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(-5.0, 5.0);
    const Eigen::MatrixXd b = random_antisymmetric(3, rng);
    const MagneticField c = MagneticField::constant(b);
    const MagneticField s = MagneticField::wrap_as_smooth(b);
    std::vector<double> x(3), y(3);
    double worst = 0.0;
    for (int n = 0; n < 200; ++n) {
      for (auto& v : x) v = uni(rng);
      for (auto& v : y) v = uni(rng);
      worst = std::max(worst, std::abs(phi(c, x, y) - phi(s, x, y)));
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("growth and triangle constants are finite and bound every sample") {
    for (const MagneticField& f : {MagneticField::unit_2d(), MagneticField::cosine_2d(1.0, 0.5, 1.0), curl_field_3d()}) {
      const FluxConstants k = fit_flux_constants(f, 1000, 5);
      CHECK(std::isfinite(k.growth));
      CHECK(std::isfinite(k.triangle));
      CHECK(k.growth > 0.0);
      const FluxConstants again = fit_flux_constants(f, 1000, 6);
      // Sup over a different sample stays in the same range.
      CHECK(again.triangle <= 2.0 * k.triangle);
    }
    const FluxConstants unit = fit_flux_constants(MagneticField::unit_2d(), 1000, 5);
    CHECK(unit.growth <= 0.5 + 1e-12);
    CHECK(unit.triangle == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("gauge relation d_j phi(x, x') = A_j(x, x') - A_j(x, 0)") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    const MagneticField f = MagneticField::constant(random_antisymmetric(3, rng));
    const std::vector<double> origin(3, 0.0);
    std::vector<double> x(3), xp(3), xh(3);
    const double h = 1e-5;
    for (int n = 0; n < 50; ++n) {
      for (auto& v : x) v = uni(rng);
      for (auto& v : xp) v = uni(rng);
      for (int j = 0; j < 3; ++j) {
        xh = x;
        xh[j] += h;
        const double up = phi(f, xh, xp);
        xh[j] -= 2.0 * h;
        const double dn = phi(f, xh, xp);
        const double deriv = (up - dn) / (2.0 * h);
        CHECK(std::abs(deriv - (vector_potential(f, j, x, xp) - vector_potential(f, j, x, origin))) < 1e-6);
      }
    }
  }

  TEST_CASE("field validation") {
    const FieldReport good = validate_field(curl_field_3d(), 200, 3);
    CHECK(good.max_antisymmetry == 0.0);
    CHECK(good.max_closedness < 1e-6);

    auto open = [](std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out) {
      out.setZero();
      out(0, 1) = x[2];
      out(1, 0) = -x[2];
    };
    const FieldReport bad = validate_field(MagneticField::smooth(3, open, 1.0, "open"), 50, 3);
    CHECK(bad.max_closedness > 0.5);

    Eigen::MatrixXd sym(2, 2);
    sym << 0.0, 1.0, 1.0, 0.0;
    CHECK_THROWS_AS(MagneticField::constant(sym), std::invalid_argument);
  }

  TEST_CASE("triangle area by Gram determinant") {
    const std::vector<double> a{0.0, 0.0, 0.0, 0.0}, b{1.0, 0.0, 0.0, 0.0}, c{0.0, 0.0, 0.0, 2.0};
    CHECK(triangle_area(a, b, c) == doctest::Approx(1.0));
    CHECK(triangle_area(a, b, b) == 0.0);
  }
}

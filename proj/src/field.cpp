#include "hofmat/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hofmat/util.hpp"

namespace hofmat {

namespace {

void check_dims(const MagneticField& field, std::span<const double> a, std::span<const double> b) {
  const auto d = static_cast<std::size_t>(field.dimension());
  if (a.size() != d || b.size() != d) {
    throw std::invalid_argument("dimension mismatch between field and points");
  }
}

// Cached rules; construction is deterministic so a per-thread cache is safe.
const Rule1D& line_rule(int order) {
  thread_local int cached_order = -1;
  thread_local Rule1D cached;
  if (cached_order != order) {
    cached = gauss_legendre(order, 0.0, 1.0);
    cached_order = order;
  }
  return cached;
}

const SimplexRule& triangle_rule(int order) {
  thread_local int cached_order = -1;
  thread_local SimplexRule cached;
  if (cached_order != order) {
    cached = simplex_rule(order);
    cached_order = order;
  }
  return cached;
}

}  // namespace

MagneticField::MagneticField(int dim, std::variant<Constant, Smooth> data, std::string name)
    : dim_(dim), data_(std::move(data)), name_(std::move(name)) {}

MagneticField MagneticField::constant(Eigen::MatrixXd matrix, std::string name) {
  if (matrix.rows() != matrix.cols() || matrix.rows() < 2) {
    throw std::invalid_argument("constant field needs a square matrix with d >= 2");
  }
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  if ((matrix + matrix.transpose()).cwiseAbs().maxCoeff() > 1e-14 * scale) {
    throw std::invalid_argument("constant field matrix must be antisymmetric");
  }
  const int d = static_cast<int>(matrix.rows());
  return MagneticField(d, Constant{std::move(matrix)}, std::move(name));
}

MagneticField MagneticField::smooth(int dim, FieldEvaluator evaluator, double derivative_bound,
                                    std::string name) {
  if (dim < 2) throw std::invalid_argument("smooth field needs d >= 2");
  if (!evaluator) throw std::invalid_argument("smooth field needs an evaluator");
  return MagneticField(dim, Smooth{std::move(evaluator), derivative_bound}, std::move(name));
}

MagneticField MagneticField::unit_2d() {
  Eigen::MatrixXd b(2, 2);
  b << 0.0, 1.0, -1.0, 0.0;
  return constant(b, "unit_2d");
}

MagneticField MagneticField::cosine_2d(double base, double amplitude, double frequency) {
  auto eval = [=](std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out) {
    const double v = base + amplitude * std::cos(frequency * x[0]);
    out(0, 0) = 0.0;
    out(0, 1) = v;
    out(1, 0) = -v;
    out(1, 1) = 0.0;
  };
  const std::string name = "cosine_2d(" + format_double(base) + "," + format_double(amplitude) + "," +
                           format_double(frequency) + ")";
  return smooth(2, eval, std::abs(amplitude * frequency), name);
}

MagneticField MagneticField::wrap_as_smooth(const Eigen::MatrixXd& matrix) {
  const MagneticField checked = constant(matrix);
  auto eval = [m = checked.constant_matrix()](std::span<const double>, Eigen::Ref<Eigen::MatrixXd> out) {
    out = m;
  };
  return smooth(checked.dimension(), eval, 0.0, "wrapped_constant");
}

const Eigen::MatrixXd& MagneticField::constant_matrix() const {
  if (const auto* c = std::get_if<Constant>(&data_)) return c->matrix;
  throw std::logic_error("constant_matrix() called on a smooth field");
}

double MagneticField::derivative_bound() const {
  if (const auto* s = std::get_if<Smooth>(&data_)) return s->derivative_bound;
  return 0.0;
}

void MagneticField::evaluate(std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out) const {
  if (const auto* c = std::get_if<Constant>(&data_)) {
    out = c->matrix;
  } else {
    std::get<Smooth>(data_).evaluator(x, out);
  }
}

Eigen::MatrixXd MagneticField::at(std::span<const double> x) const {
  Eigen::MatrixXd out(dim_, dim_);
  evaluate(x, out);
  return out;
}

std::uint64_t MagneticField::hash() const {
  Fnv1a h;
  h.add(name_);
  h.add(static_cast<std::int64_t>(dim_));
  if (const auto* c = std::get_if<Constant>(&data_)) {
    for (Eigen::Index i = 0; i < c->matrix.size(); ++i) h.add(c->matrix.data()[i]);
  } else {
    std::vector<double> probe(static_cast<std::size_t>(dim_));
    Eigen::MatrixXd m(dim_, dim_);
    for (int k = 0; k < 3; ++k) {
      for (int j = 0; j < dim_; ++j) probe[static_cast<std::size_t>(j)] = 0.37 * (k + 1) - 0.21 * j;
      evaluate(probe, m);
      for (Eigen::Index i = 0; i < m.size(); ++i) h.add(m.data()[i]);
    }
  }
  return h.value();
}

double vector_potential(const MagneticField& field, int axis, std::span<const double> x,
                        std::span<const double> x0, const QuadratureSpec& quad) {
  check_dims(field, x, x0);
  const int d = field.dimension();
  if (axis < 0 || axis >= d) throw std::invalid_argument("vector_potential: invalid axis index");
  const auto j = static_cast<Eigen::Index>(axis);
  if (field.is_constant()) {
    const Eigen::MatrixXd& b = field.constant_matrix();
    double sum = 0.0;
    for (int k = 0; k < d; ++k) sum += (x[k] - x0[k]) * b(j, k);
    return -0.5 * sum;
  }
  quad.validate();
  const Rule1D& rule = line_rule(quad.order_1d);
  std::vector<double> y(static_cast<std::size_t>(d));
  Eigen::MatrixXd b(d, d);
  double total = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const double s = rule.nodes[q];
    for (int k = 0; k < d; ++k) y[k] = x0[k] + s * (x[k] - x0[k]);
    field.evaluate(y, b);
    double inner = 0.0;
    for (int k = 0; k < d; ++k) inner += (x[k] - x0[k]) * b(j, k);
    total += rule.weights[q] * s * inner;
  }
  return -total;
}

double phi(const MagneticField& field, std::span<const double> x, std::span<const double> x0,
           const QuadratureSpec& quad) {
  check_dims(field, x, x0);
  const int d = field.dimension();
  if (field.is_constant()) {
    const Eigen::MatrixXd& b = field.constant_matrix();
    // Pairwise form: exactly antisymmetric and exactly zero on the diagonal.
    double sum = 0.0;
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) sum += b(j, k) * (x[j] * x0[k] - x[k] * x0[j]);
    return 0.5 * sum;
  }
  quad.validate();
  const SimplexRule& rule = triangle_rule(quad.simplex_order);
  std::vector<double> y(static_cast<std::size_t>(d));
  Eigen::MatrixXd b(d, d);
  Eigen::MatrixXd integral = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const double s = rule.nodes[q][0];
    const double t = rule.nodes[q][1];
    for (int k = 0; k < d; ++k) y[k] = s * x[k] + t * x0[k];
    field.evaluate(y, b);
    integral += rule.weights[q] * b;
  }
  double sum = 0.0;
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) sum += (x[j] * x0[k] - x[k] * x0[j]) * integral(j, k);
  }
  return sum;
}

double triangle_flux(const MagneticField& field, std::span<const double> x, std::span<const double> y,
                     std::span<const double> z, const QuadratureSpec& quad) {
  check_dims(field, x, y);
  check_dims(field, x, z);
  return phi(field, x, y, quad) + phi(field, y, z, quad) - phi(field, x, z, quad);
}

double fl_gamma(const MagneticField& field, std::span<const int> gamma, std::span<const int> gamma0,
                std::span<const double> x, std::span<const double> x0, const QuadratureSpec& quad) {
  const auto d = static_cast<std::size_t>(field.dimension());
  if (gamma.size() != d || gamma0.size() != d) {
    throw std::invalid_argument("fl_gamma: lattice point dimension mismatch");
  }
  check_dims(field, x, x0);
  std::vector<double> xg(d), xg0(d), g(d), g0(d);
  for (std::size_t k = 0; k < d; ++k) {
    g[k] = gamma[k];
    g0[k] = gamma0[k];
    xg[k] = x[k] + g[k];
    xg0[k] = x0[k] + g0[k];
  }
  return triangle_flux(field, xg, g0, g, quad) + triangle_flux(field, xg, xg0, g0, quad);
}

double triangle_area(std::span<const double> x, std::span<const double> y, std::span<const double> z) {
  if (x.size() != y.size() || x.size() != z.size()) {
    throw std::invalid_argument("triangle_area: dimension mismatch");
  }
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double u = y[k] - x[k];
    const double v = z[k] - x[k];
    uu += u * u;
    vv += v * v;
    uv += u * v;
  }
  return 0.5 * std::sqrt(std::max(0.0, uu * vv - uv * uv));
}

FieldReport validate_field(const MagneticField& field, int samples, std::uint64_t seed, double box) {
  const int d = field.dimension();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-box, box);
  FieldReport report;
  report.samples = samples;
  std::vector<double> x(static_cast<std::size_t>(d)), xp(static_cast<std::size_t>(d));
  Eigen::MatrixXd b(d, d), bp(d, d), bm(d, d);
  const double h = 1e-4;
  for (int n = 0; n < samples; ++n) {
    for (auto& v : x) v = uni(rng);
    field.evaluate(x, b);
    report.max_antisymmetry = std::max(report.max_antisymmetry, (b + b.transpose()).cwiseAbs().maxCoeff());
    if (field.is_constant() || d < 3) continue;
    // dB[i][j][k] = d_k B_ij by central differences.
    std::vector<Eigen::MatrixXd> grad(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
      xp = x;
      xp[k] += h;
      field.evaluate(xp, bp);
      xp[k] -= 2.0 * h;
      field.evaluate(xp, bm);
      grad[k] = (bp - bm) / (2.0 * h);
    }
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
          const double c = grad[k](i, j) + grad[j](k, i) + grad[i](j, k);
          report.max_closedness = std::max(report.max_closedness, std::abs(c));
        }
  }
  return report;
}

FluxConstants fit_flux_constants(const MagneticField& field, int samples, std::uint64_t seed,
                                 const QuadratureSpec& quad, double box) {
  const auto d = static_cast<std::size_t>(field.dimension());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-box, box);
  FluxConstants c;
  std::vector<double> x(d), y(d), z(d);
  for (int n = 0; n < samples; ++n) {
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = uni(rng);
      y[k] = uni(rng);
      z[k] = uni(rng);
    }
    const double nx = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
    const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    const double p = phi(field, x, y, quad);
    if (nx * ny > 1e-12) c.growth = std::max(c.growth, std::abs(p) / (nx * ny));
    const double area = triangle_area(x, y, z);
    const double f = triangle_flux(field, x, y, z, quad);
    if (area > 1e-12) c.triangle = std::max(c.triangle, std::abs(f) / area);
  }
  return c;
}

}  // namespace hofmat

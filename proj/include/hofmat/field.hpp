#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "hofmat/quadrature.hpp"

namespace hofmat {

/// Evaluates the full antisymmetric matrix B(x) into `out` (d x d).
using FieldEvaluator = std::function<void(std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out)>;

/// A closed 2-form on R^d, either constant or given by a smooth evaluator.
///
/// The flux function uses the transverse gauge; its orientation is fixed so
/// that a constant field gives phi(x, x') = x^T B x' / 2.
class MagneticField {
 public:
  struct Constant {
    Eigen::MatrixXd matrix;
  };
  struct Smooth {
    FieldEvaluator evaluator;
    double derivative_bound = 1.0;  // caller-declared sup of |dB|
  };

  static MagneticField constant(Eigen::MatrixXd matrix, std::string name = "constant");
  static MagneticField smooth(int dim, FieldEvaluator evaluator, double derivative_bound,
                              std::string name);

  /// B_12 = 1 in d = 2, the default used throughout the experiments.
  static MagneticField unit_2d();

  /// Smooth d = 2 field B_12(x) = base + amplitude * cos(frequency * x_1).
  static MagneticField cosine_2d(double base, double amplitude, double frequency);

  /// A constant matrix exposed through the smooth code path.
  static MagneticField wrap_as_smooth(const Eigen::MatrixXd& matrix);

  int dimension() const { return dim_; }
  bool is_constant() const { return std::holds_alternative<Constant>(data_); }
  const Eigen::MatrixXd& constant_matrix() const;
  const std::string& name() const { return name_; }
  double derivative_bound() const;

  void evaluate(std::span<const double> x, Eigen::Ref<Eigen::MatrixXd> out) const;
  Eigen::MatrixXd at(std::span<const double> x) const;

  /// Stable identifier for caches and provenance. Smooth fields hash their
  /// name and a fixed set of probe values.
  std::uint64_t hash() const;

 private:
  MagneticField(int dim, std::variant<Constant, Smooth> data, std::string name);

  int dim_ = 0;
  std::variant<Constant, Smooth> data_;
  std::string name_;
};

/// Transverse-gauge vector potential A_j(x, x0); `axis` is 0-based.
double vector_potential(const MagneticField& field, int axis, std::span<const double> x,
                        std::span<const double> x0, const QuadratureSpec& quad = {});

/// Flux through the oriented triangle (0, x, x0).
double phi(const MagneticField& field, std::span<const double> x, std::span<const double> x0,
           const QuadratureSpec& quad = {});

/// fl(x, y, z) = phi(x, y) + phi(y, z) - phi(x, z).
double triangle_flux(const MagneticField& field, std::span<const double> x, std::span<const double> y,
                     std::span<const double> z, const QuadratureSpec& quad = {});

/// fl_{gamma, gamma'}(x, x') = fl(x + gamma, gamma', gamma) + fl(x + gamma, x' + gamma', gamma').
double fl_gamma(const MagneticField& field, std::span<const int> gamma, std::span<const int> gamma0,
                std::span<const double> x, std::span<const double> x0, const QuadratureSpec& quad = {});

/// Area of the triangle (x, y, z) from the Gram determinant; valid in any d.
double triangle_area(std::span<const double> x, std::span<const double> y, std::span<const double> z);

/// Sampled soundness checks of a field: antisymmetry and, via central
/// differences, closedness dB = 0.
struct FieldReport {
  double max_antisymmetry = 0.0;
  double max_closedness = 0.0;
  int samples = 0;
};

FieldReport validate_field(const MagneticField& field, int samples, std::uint64_t seed,
                           double box = 5.0);

/// Empirical constants for |phi(x,x')| <= C |x||x'| and |fl| <= C Delta.
struct FluxConstants {
  double growth = 0.0;
  double triangle = 0.0;
};

FluxConstants fit_flux_constants(const MagneticField& field, int samples, std::uint64_t seed,
                                 const QuadratureSpec& quad = {}, double box = 5.0);

}  // namespace hofmat

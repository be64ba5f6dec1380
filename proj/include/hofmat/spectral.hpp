#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hofmat/lattice.hpp"

namespace hofmat {

struct SpectrumResult {
  std::vector<double> eigenvalues;  // ascending
  std::size_t matrix_dim = 0;
  double residual_bound = 0.0;      // max ||Mv - lambda v|| / ||M|| over checked pairs
  double b = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t params_hash = 0;
};

struct EigenDecomposition {
  Eigen::VectorXd values;    // ascending
  Eigen::MatrixXcd vectors;  // columns
  double residual_bound = 0.0;
};

/// Full Hermitian eigendecomposition with the residual contract checked on
/// min(n, 16) seeded pairs. Throws on non-Hermitian input (relative 1e-10)
/// or when the residual exceeds tol * ||M||.
EigenDecomposition eigen_hermitian(const Eigen::MatrixXcd& m, double tol = 1e-9, std::uint64_t seed = 1);

SpectrumResult eigenvalues_hermitian(const Eigen::MatrixXcd& m, double tol = 1e-9, std::uint64_t seed = 1);

/// Eigenvalues whose eigenvector carries at least `factor` times the uniform
/// share of its weight on the inner sites |gamma|_inf <= inner_radius. Drops
/// states localized at the open boundary of the truncated lattice.
SpectrumResult bulk_spectrum(const EigenDecomposition& eig, const IndexCube& sites, std::size_t block_size,
                             int inner_radius, double factor = 0.5);

/// Exact Hausdorff distance of two sorted finite sets.
double hausdorff(const std::vector<double>& x, const std::vector<double>& y);

/// Largest singular value; max |lambda| for Hermitian input.
double operator_norm(const Eigen::MatrixXcd& m);

struct Gap {
  double left = 0.0;
  double right = 0.0;
  double width = 0.0;
};

using GapList = std::vector<Gap>;

GapList find_gaps(const SpectrumResult& spec, double min_width);

struct SweepResult {
  std::vector<double> b;
  std::vector<SpectrumResult> spectra;
  std::vector<double> e_min;
  std::vector<double> e_max;
};

using SpectrumAt = std::function<SpectrumResult(double b)>;

/// One spectrum per grid point, grid points distributed over an OpenMP team.
/// `spectrum_at` must be reentrant.
SweepResult sweep(const std::vector<double>& grid, const SpectrumAt& spectrum_at, int threads = 0);
SweepResult sweep_serial(const std::vector<double>& grid, const SpectrumAt& spectrum_at);

/// Builds a SweepResult from precomputed spectra; grid must be increasing.
SweepResult make_sweep(std::vector<double> grid, std::vector<SpectrumResult> spectra);

enum class EdgeSide { Lower, Upper };

struct EdgeTrack {
  std::vector<double> b;       // grid points where the gap was open
  std::vector<double> edges;   // e_b
  std::vector<Gap> gaps;
  std::vector<double> quotients;  // |e_{i+1} - e_i| / (b_{i+1} - b_i)
  bool closed = false;
  std::optional<std::size_t> closed_at;  // grid index where tracking stopped
};

/// Follows the gap with maximal overlap with `window` at the first grid
/// point, then the gap with maximal overlap with its predecessor.
EdgeTrack track_gap_edge(const SweepResult& sweep, double window_lo, double window_hi, EdgeSide side,
                         double min_width);

std::vector<double> difference_quotients(const std::vector<double>& b, const std::vector<double>& values);

struct RieszOptions {
  int n_quad = 256;
  double dist_tol_rel = 1e-6;  // relative to ||M||
  bool contour = true;
};

struct RieszResult {
  Eigen::MatrixXcd t_filter;
  Eigen::MatrixXcd p_filter;
  Eigen::MatrixXcd t_contour;
  Eigen::MatrixXcd p_contour;
  std::vector<double> window_eigenvalues;
  double min_distance = 0.0;   // distance of the spectrum to the window boundary
  double agreement = 0.0;      // ||T_filter - T_contour||
  double idempotence = 0.0;    // ||P_contour^2 - P_contour||
};

/// T = (i / 2 pi) oint z (M - z)^{-1} dz on the circle |z - center| = radius,
/// by eigen-filter and by trapezoidal contour quadrature.
RieszResult riesz_project(const Eigen::MatrixXcd& m, double center, double radius, const RieszOptions& options = {});

struct HolderFit {
  double alpha = 0.0;
  double constant = 0.0;
  double residual = 0.0;  // rms of the log-log residuals
  double c_star = 0.0;    // max d_H / sqrt(delta b)
};

HolderFit holder_fit(const std::vector<std::pair<double, double>>& pairs);

/// True when every quotient is at most `factor` times the first (largest
/// step) one. An all-zero sequence is stable.
bool quotients_bounded(const std::vector<double>& q, double factor = 2.0);

/// True when consecutive quotients differ by at most `factor` either way.
bool quotients_stable(const std::vector<double>& q, double factor = 2.0);

}  // namespace hofmat

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hofmat/field.hpp"
#include "hofmat/lattice.hpp"
#include "hofmat/quadrature.hpp"
#include "hofmat/symbol.hpp"

namespace hofmat {

/// Finite truncation of the generalized matrix.
///
/// Sites gamma with |gamma|_inf <= lattice_radius; blocks kept when
/// |gamma - gamma'|_inf <= band_cut; Fourier modes k in {-K..K}^d on
/// Omega = ]-1/2, 1/2[^d; space_quad Gauss-Legendre nodes per axis of Omega.
struct TruncationParams {
  int lattice_radius = 2;
  int band_cut = 2;
  int fourier_cutoff = 1;
  double epsilon = 0.0;
  int space_quad = 12;

  void validate() const;
  void validate_for(const Symbol& symbol) const;
  std::uint64_t hash() const;
};

using Block = Eigen::MatrixXcd;

struct BlockEntry {
  std::size_t row = 0;  // site index of gamma
  std::size_t col = 0;  // site index of gamma'
  cplx phase{1.0, 0.0};  // exp(i b phi(gamma, gamma'))
  Block block;
};

/// Banded map (gamma, gamma') -> (phase, block). Entries are sorted by
/// (row, col); blocks outside the band are absent.
struct GeneralizedMatrix {
  double b = 0.0;
  TruncationParams params;
  int dim = 0;
  std::string symbol_id;
  std::uint64_t field_hash = 0;
  bool hermitian = false;
  std::vector<BlockEntry> entries;

  IndexCube sites() const { return IndexCube(dim, params.lattice_radius); }
  IndexCube modes() const { return IndexCube(dim, params.fourier_cutoff); }
  std::size_t site_count() const;
  std::size_t block_size() const;
  std::size_t flat_dim() const { return site_count() * block_size(); }

  const BlockEntry* find(std::size_t row, std::size_t col) const;
  BlockEntry* find(std::size_t row, std::size_t col);
};

struct AssemblyOptions {
  int threads = 0;               // 0: HOFMAT_THREADS or the OpenMP default
  bool force_tensor_xi = false;  // skip the separable 1-D transform path
  QuadratureSpec quad;
};

/// K_{gamma,gamma'}(x, x') by tensor Gauss-Legendre in xi. Throws for
/// Hopping symbols and for General symbols at epsilon = 0.
cplx kernel_K(const Symbol& symbol, const MagneticField& field, double b, double epsilon,
              std::span<const int> gamma, std::span<const int> gamma0, std::span<const double> x,
              std::span<const double> x0, const QuadratureSpec& quad = {});

/// Galerkin block <A e_{k'}, e_k> in the Fourier basis of L^2(Omega).
Block assemble_block(const Symbol& symbol, const MagneticField& field, double b, std::span<const int> gamma,
                     std::span<const int> gamma0, const TruncationParams& params,
                     const AssemblyOptions& options = {});

/// All banded blocks, distributed over an OpenMP team. Bitwise independent
/// of the thread count.
GeneralizedMatrix assemble(const Symbol& symbol, const MagneticField& field, double b,
                           const TruncationParams& params, const AssemblyOptions& options = {});

/// Same result as `assemble`, one block after another on the calling thread.
GeneralizedMatrix assemble_serial(const Symbol& symbol, const MagneticField& field, double b,
                                  const TruncationParams& params, const AssemblyOptions& options = {});

/// Dense matrix, site-major lexicographic in gamma, then mode-lexicographic in k.
Eigen::MatrixXcd flatten(const GeneralizedMatrix& h);

/// Inverse bookkeeping of `flatten`: reads each banded sub-block of `m` into a
/// generalized matrix with unit phases shaped like `like`.
GeneralizedMatrix unflatten(const Eigen::MatrixXcd& m, const GeneralizedMatrix& like);

/// Drops blocks with |gamma - gamma'|_2 >= |t|^{-1/2}; t = 0 keeps everything.
GeneralizedMatrix truncate_band(const GeneralizedMatrix& h, double t);

/// Multiplies each phase by exp(i s phi(gamma, gamma')); blocks untouched.
GeneralizedMatrix rephase(const GeneralizedMatrix& h, double s, const MagneticField& field,
                          const QuadratureSpec& quad = {});

/// Classical Peierls matrix exp(i b phi(gamma, gamma')) c_{gamma' - gamma}
/// on |gamma|_inf <= radius, in the same site ordering as `flatten`.
Eigen::MatrixXcd peierls_matrix(const std::vector<Hop>& hops, const MagneticField& field, double b, int radius,
                                const QuadratureSpec& quad = {});

// ---------------------------------------------------------------------------
// Gauge transform U_b on sampled functions.

using ScalarFunction = std::function<cplx(std::span<const double>)>;

/// (U_b f)_gamma sampled on the space_quad tensor grid of Omega, per site.
struct SampledFunction {
  int dim = 0;
  int lattice_radius = 0;
  int quad_order = 0;
  std::vector<std::vector<cplx>> values;  // [site][grid point]
};

/// Samples of f(x + gamma) at the physical points, site-major.
struct PhysicalSamples {
  int dim = 0;
  std::vector<double> points;  // flattened, dim per point
  std::vector<cplx> values;
};

SampledFunction apply_Ub(const MagneticField& field, double b, const ScalarFunction& f, double support_radius,
                         const TruncationParams& params, const QuadratureSpec& quad = {});
PhysicalSamples apply_Ub_inverse(const MagneticField& field, double b, const SampledFunction& u,
                                 const QuadratureSpec& quad = {});

/// Fourier coefficients c_{gamma,k} = int_Omega u_gamma(x) conj(e_k(x)) dx,
/// in `flatten` ordering.
Eigen::VectorXcd fourier_coefficients(const SampledFunction& u, int fourier_cutoff);

/// Discrete l2 norm with the grid weights.
double grid_norm(const SampledFunction& u);

// ---------------------------------------------------------------------------
// Brute-force quadratic form <Op(a_b) f, g> on a box.

struct OracleGrid {
  std::vector<double> lower;  // per axis
  std::vector<double> upper;
  int nodes_per_axis = 24;
  int xi_points = 0;  // 0: symbol's own xi grid
};

cplx quadratic_form_oracle(const Symbol& symbol, const MagneticField& field, double b, double epsilon,
                           const ScalarFunction& f, const ScalarFunction& g, const OracleGrid& grid,
                           const QuadratureSpec& quad = {}, int threads = 0);

// ---------------------------------------------------------------------------
// Diagnostics.

struct BlockNorm {
  double value = 0.0;
  bool exact = true;  // largest singular value; false means Frobenius bound
};

/// Exact spectral norm for blocks up to 64 x 64, Frobenius bound above.
BlockNorm block_norm(const Block& block);

double japanese_bracket(std::span<const int> delta);

struct DecayShell {
  int shell = 0;             // |gamma - gamma'|_inf
  double max_norm = 0.0;     // max ||Block|| on the shell
  double max_weighted = 0.0; // max ||Block|| <gamma - gamma'>^N on the shell
};

struct DecayProfile {
  int power = 0;
  std::vector<DecayShell> shells;
  double diagonal_norm = 0.0;
  double max_weighted = 0.0;
  bool exact_norms = true;
  /// Least-squares slope of -log max||Block|| against log <gamma - gamma'>
  /// over the distinct off-diagonal separations; 0 with fewer than two.
  double fitted_exponent = 0.0;
};

DecayProfile block_decay(const GeneralizedMatrix& h, int power);

/// max over shared entries of ||Block_b - Block_b'|| <gamma - gamma'>^N / |b - b'|.
double block_lipschitz(const GeneralizedMatrix& h1, const GeneralizedMatrix& h2, int power);

struct EpsilonReport {
  std::vector<double> epsilons;
  std::vector<double> differences;  // ||H_eps - H_0|| or successive Cauchy differences
  bool against_zero = true;         // false: successive differences (General symbols)
  bool epsilon_ignored = false;     // Hopping fast path
  bool decreasing = true;
  std::string note;
};

EpsilonReport epsilon_convergence_check(const Symbol& symbol, const MagneticField& field, double b,
                                        const TruncationParams& params, const std::vector<double>& epsilons,
                                        const AssemblyOptions& options = {});

/// First-order Richardson step 2 H_{eps/2} - H_eps toward eps = 0.
Eigen::MatrixXcd richardson_extrapolate(const Eigen::MatrixXcd& h_eps, const Eigen::MatrixXcd& h_half_eps);

}  // namespace hofmat

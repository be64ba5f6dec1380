#include "hofmat/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>
#include <stdexcept>

#include "hofmat/parallel.hpp"
#include "hofmat/util.hpp"

namespace hofmat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// int_{-1/2}^{1/2} e^{i w x} dx
double sinc_half(double w) {
  const double h = 0.5 * w;
  return std::abs(h) < 1e-6 ? 1.0 - h * h / 6.0 : std::sin(h) / h;
}

int inf_distance(std::span<const int> a, std::span<const int> b) {
  int m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

cplx hop_coefficient(const HoppingClass& hc, std::span<const int> delta) {
  cplx c{0.0, 0.0};
  for (const Hop& h : hc.hops) {
    if (std::equal(h.shift.begin(), h.shift.end(), delta.begin(), delta.end())) c += h.coeff;
  }
  return c;
}

bool in_hop_set(const HoppingClass& hc, std::span<const int> delta) {
  return std::any_of(hc.hops.begin(), hc.hops.end(), [&](const Hop& h) {
    return std::equal(h.shift.begin(), h.shift.end(), delta.begin(), delta.end());
  });
}

// xi quadrature for the tensor path: box half-width and node count.
struct XiBox {
  double half = 0.0;
  int points = 0;
};

// Nodes needed to resolve exp(i xi r) on [-half, half] for |r| <= r_max.
int resolving_points(double half, double r_max) {
  return static_cast<int>(std::ceil(0.8 * half * r_max)) + 16;
}

XiBox xi_box(const Symbol& symbol, double epsilon, double r_max) {
  if (symbol.is_xi_integrable()) {
    const auto& c = symbol.xi_integrable();
    return {c.box_halfwidth, std::max(c.grid_points, resolving_points(c.box_halfwidth, r_max))};
  }
  if (symbol.is_general()) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("General symbols need epsilon > 0");
    const auto& c = std::get<GeneralClass>(symbol.xi_class);
    // exp(-eps <xi>) < 1e-12 outside the box.
    const double bracket = std::log(1e12) / epsilon;
    const double half = std::sqrt(std::max(0.0, bracket * bracket - 1.0));
    const int points = std::max({c.min_grid_points, static_cast<int>(std::ceil(2.0 * half * c.nodes_per_unit)),
                                 resolving_points(half, r_max)});
    return {half, points};
  }
  throw std::invalid_argument("kernel_K is not defined for Hopping symbols; use the block fast path");
}

// Tensor xi rule with the (2 pi)^{-d} e^{-eps <xi>} factor folded into weights.
struct XiTensor {
  Rule1D line;
  TensorRule tensor;
  std::vector<double> weights;
};

XiTensor make_xi_tensor(const Symbol& symbol, double epsilon, double r_max) {
  const XiBox box = xi_box(symbol, epsilon, r_max);
  XiTensor t;
  t.line = gauss_legendre(box.points, -box.half, box.half);
  t.tensor = tensor_rule(t.line, symbol.dim);
  t.weights.resize(t.tensor.size());
  const double norm = std::pow(kTwoPi, -symbol.dim);
  for (std::size_t q = 0; q < t.tensor.size(); ++q) {
    double r2 = 0.0;
    const double* xi = t.tensor.point(q);
    for (int j = 0; j < symbol.dim; ++j) r2 += xi[j] * xi[j];
    const double reg = epsilon > 0.0 ? std::exp(-epsilon * std::sqrt(1.0 + r2)) : 1.0;
    t.weights[q] = norm * t.tensor.weights[q] * reg;
  }
  return t;
}

// (2 pi)^{-d} int e^{i xi.(y - y')} e^{-eps<xi>} a(y, y', xi) dxi on the tensor grid.
cplx xi_integral_tensor(const Symbol& symbol, const XiTensor& xt, std::span<const double> y,
                        std::span<const double> yp, std::vector<cplx>& axis_phase) {
  const int d = symbol.dim;
  const std::size_t n = xt.line.size();
  axis_phase.resize(n * static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    const double r = y[j] - yp[j];
    for (std::size_t q = 0; q < n; ++q) axis_phase[j * n + q] = std::polar(1.0, xt.line.nodes[q] * r);
  }
  cplx sum{0.0, 0.0};
  const std::size_t total = xt.tensor.size();
  for (std::size_t q = 0; q < total; ++q) {
    cplx ph{1.0, 0.0};
    std::size_t rest = q;
    for (int j = d - 1; j >= 0; --j) {
      ph *= axis_phase[static_cast<std::size_t>(j) * n + rest % n];
      rest /= n;
    }
    const std::span<const double> xi(xt.tensor.point(q), static_cast<std::size_t>(d));
    sum += xt.weights[q] * ph * symbol(y, yp, xi);
  }
  return sum;
}

// Everything about one assembly that does not depend on the block.
struct Context {
  const Symbol& symbol;
  const MagneticField& field;
  double b;
  TruncationParams params;
  AssemblyOptions options;
  int d;
  std::size_t grid_size;   // Q^d
  std::size_t mode_count;  // (2K+1)^d
  Rule1D omega_line;
  TensorRule omega;
  std::vector<std::size_t> axis_index;  // [p * d + j] -> 1-D node index
  Eigen::MatrixXcd left;                // m x P: conj(e_k(x_p)) w_p
  Eigen::MatrixXcd right;               // P x m: e_k'(x_p') w_p'
  Eigen::MatrixXcd basis;               // P x m: e_k(x_p)
  bool separable = false;
  std::vector<double> profile_weights;  // w_q g(t_q) / (2 pi), separable path
  Rule1D profile_line;
  XiTensor xi;                          // tensor path

  Context(const Symbol& s, const MagneticField& f, double bb, const TruncationParams& p, const AssemblyOptions& o)
      : symbol(s), field(f), b(bb), params(p), options(o), d(s.dim) {
    if (field.dimension() != d) throw std::invalid_argument("symbol and field dimensions differ");
    params.validate_for(symbol);
    options.quad.validate();
    omega_line = gauss_legendre(params.space_quad, -0.5, 0.5);
    omega = tensor_rule(omega_line, d);
    grid_size = omega.size();
    const IndexCube modes(d, params.fourier_cutoff);
    mode_count = modes.size();
    const auto q = static_cast<std::size_t>(params.space_quad);
    axis_index.resize(grid_size * static_cast<std::size_t>(d));
    for (std::size_t pt = 0; pt < grid_size; ++pt) {
      std::size_t rest = pt;
      for (int j = d - 1; j >= 0; --j) {
        axis_index[pt * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = rest % q;
        rest /= q;
      }
    }
    basis.resize(static_cast<Eigen::Index>(grid_size), static_cast<Eigen::Index>(mode_count));
    for (std::size_t pt = 0; pt < grid_size; ++pt) {
      const double* x = omega.point(pt);
      for (std::size_t k = 0; k < mode_count; ++k) {
        double arg = 0.0;
        const auto mode = modes[k];
        for (int j = 0; j < d; ++j) arg += mode[static_cast<std::size_t>(j)] * x[j];
        basis(static_cast<Eigen::Index>(pt), static_cast<Eigen::Index>(k)) = std::polar(1.0, kTwoPi * arg);
      }
    }
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(omega.weights.data(), static_cast<Eigen::Index>(grid_size));
    right = w.asDiagonal() * basis;
    left = basis.adjoint() * w.asDiagonal();

    if (!symbol.is_hopping()) {
      separable = symbol.separable.has_value() && symbol.is_xi_integrable() && params.epsilon == 0.0 &&
                  !options.force_tensor_xi;
      if (separable) {
        const auto& c = symbol.xi_integrable();
        const int n = std::max(c.grid_points, resolving_points(c.box_halfwidth, params.band_cut + 1.0));
        profile_line = gauss_legendre(n, -c.box_halfwidth, c.box_halfwidth);
        profile_weights.resize(profile_line.size());
        for (std::size_t t = 0; t < profile_line.size(); ++t) {
          profile_weights[t] = profile_line.weights[t] * symbol.separable->profile(profile_line.nodes[t]) / kTwoPi;
        }
      } else {
        xi = make_xi_tensor(symbol, params.epsilon, params.band_cut + 1.0);
      }
    }
  }
};

// fl_{gamma,gamma'}(x, x') = phi(gamma', gamma) - phi(y, gamma) + phi(y, y') + phi(y', gamma')
// with y = x + gamma, y' = x' + gamma'. The per-point terms are precomputed.
struct FluxTables {
  std::vector<double> y;       // P x d
  std::vector<double> yp;      // P x d
  std::vector<double> row;     // -phi(y_p, gamma) + phi(gamma', gamma)
  std::vector<double> col;     // phi(y'_p', gamma')
  std::vector<double> half_bt_y;  // constant field: (B^T y_p) / 2, P x d
};

FluxTables flux_tables(const Context& c, std::span<const int> gamma, std::span<const int> gamma0) {
  const auto d = static_cast<std::size_t>(c.d);
  FluxTables t;
  t.y.resize(c.grid_size * d);
  t.yp.resize(c.grid_size * d);
  t.row.resize(c.grid_size);
  t.col.resize(c.grid_size);
  std::vector<double> g(d), g0(d);
  for (std::size_t j = 0; j < d; ++j) {
    g[j] = gamma[j];
    g0[j] = gamma0[j];
  }
  const double base = phi(c.field, g0, g, c.options.quad);
  for (std::size_t p = 0; p < c.grid_size; ++p) {
    const double* x = c.omega.point(p);
    for (std::size_t j = 0; j < d; ++j) {
      t.y[p * d + j] = x[j] + g[j];
      t.yp[p * d + j] = x[j] + g0[j];
    }
    const std::span<const double> yv(&t.y[p * d], d);
    const std::span<const double> ypv(&t.yp[p * d], d);
    t.row[p] = base - phi(c.field, yv, g, c.options.quad);
    t.col[p] = phi(c.field, ypv, g0, c.options.quad);
  }
  if (c.field.is_constant()) {
    const Eigen::MatrixXd& bm = c.field.constant_matrix();
    t.half_bt_y.resize(c.grid_size * d);
    for (std::size_t p = 0; p < c.grid_size; ++p) {
      for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += t.y[p * d + i] * bm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        t.half_bt_y[p * d + k] = 0.5 * s;
      }
    }
  }
  return t;
}

double pair_flux(const Context& c, const FluxTables& t, std::size_t p, std::size_t pp) {
  const auto d = static_cast<std::size_t>(c.d);
  double mid = 0.0;
  if (!t.half_bt_y.empty()) {
    for (std::size_t k = 0; k < d; ++k) mid += t.half_bt_y[p * d + k] * t.yp[pp * d + k];
  } else {
    mid = phi(c.field, std::span<const double>(&t.y[p * d], d), std::span<const double>(&t.yp[pp * d], d),
              c.options.quad);
  }
  return t.row[p] + mid + t.col[pp];
}

Block hopping_block(const Context& c, std::span<const int> gamma, std::span<const int> gamma0) {
  const auto d = static_cast<std::size_t>(c.d);
  std::vector<int> delta(d);
  for (std::size_t j = 0; j < d; ++j) delta[j] = gamma0[j] - gamma[j];
  const auto m = static_cast<Eigen::Index>(c.mode_count);
  if (!in_hop_set(c.symbol.hopping(), delta)) return Block::Zero(m, m);
  const cplx coeff = hop_coefficient(c.symbol.hopping(), delta);
  if (c.field.is_constant()) {
    // fl_{gamma,gamma'}(x, x) = x^T B delta: the fiber integral is a product of sincs.
    const Eigen::MatrixXd& bm = c.field.constant_matrix();
    std::vector<double> v(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) v[i] += c.b * bm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * delta[k];
    const IndexCube modes(c.d, c.params.fourier_cutoff);
    Block out(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index col = 0; col < m; ++col) {
        double prod = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double w = v[j] + kTwoPi * (modes[static_cast<std::size_t>(col)][j] - modes[static_cast<std::size_t>(r)][j]);
          prod *= sinc_half(w);
        }
        out(r, col) = coeff * prod;
      }
    }
    return out;
  }
  // Smooth fields: Gauss-Legendre fine enough for the mode frequencies.
  const int order = std::max(c.params.space_quad, 4 * c.params.fourier_cutoff + 20);
  const TensorRule grid = tensor_rule(gauss_legendre(order, -0.5, 0.5), c.d);
  const IndexCube modes(c.d, c.params.fourier_cutoff);
  std::vector<double> x(d);
  Eigen::MatrixXcd basis(static_cast<Eigen::Index>(grid.size()), m);
  Eigen::VectorXcd mult(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    x.assign(grid.point(p), grid.point(p) + d);
    const double flux = fl_gamma(c.field, gamma, gamma0, x, x, c.options.quad);
    mult(static_cast<Eigen::Index>(p)) = coeff * grid.weights[p] * std::polar(1.0, c.b * flux);
    for (Eigen::Index k = 0; k < m; ++k) {
      double arg = 0.0;
      for (std::size_t j = 0; j < d; ++j) arg += modes[static_cast<std::size_t>(k)][j] * x[j];
      basis(static_cast<Eigen::Index>(p), k) = std::polar(1.0, kTwoPi * arg);
    }
  }
  return basis.adjoint() * mult.asDiagonal() * basis;
}

Block integral_block(const Context& c, std::span<const int> gamma, std::span<const int> gamma0) {
  const auto d = static_cast<std::size_t>(c.d);
  const FluxTables t = flux_tables(c, gamma, gamma0);
  const auto P = static_cast<Eigen::Index>(c.grid_size);
  Eigen::MatrixXcd kmat(P, P);

  if (c.separable) {
    // Per-axis transforms T_j[i][i'] = (1/2pi) int e^{i t r} g(t) dt, r = x_i - x_i' + gamma_j - gamma'_j.
    const std::size_t q = c.omega_line.size();
    const std::size_t n = c.profile_line.size();
    std::vector<cplx> table(d * q * q);
    for (std::size_t j = 0; j < d; ++j) {
      const double shift = static_cast<double>(gamma[j] - gamma0[j]);
      for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t ip = 0; ip < q; ++ip) {
          const double r = c.omega_line.nodes[i] - c.omega_line.nodes[ip] + shift;
          cplx s{0.0, 0.0};
          for (std::size_t k = 0; k < n; ++k) s += c.profile_weights[k] * std::polar(1.0, c.profile_line.nodes[k] * r);
          table[(j * q + i) * q + ip] = s;
        }
      }
    }
    for (std::size_t p = 0; p < c.grid_size; ++p) {
      const std::span<const double> y(&t.y[p * d], d);
      for (std::size_t pp = 0; pp < c.grid_size; ++pp) {
        const std::span<const double> yp(&t.yp[pp * d], d);
        cplx k = c.symbol.separable->spatial(y, yp);
        for (std::size_t j = 0; j < d; ++j) {
          k *= table[(j * q + c.axis_index[p * d + j]) * q + c.axis_index[pp * d + j]];
        }
        kmat(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(pp)) =
            k * std::polar(1.0, c.b * pair_flux(c, t, p, pp));
      }
    }
  } else {
    std::vector<cplx> scratch;
    for (std::size_t p = 0; p < c.grid_size; ++p) {
      const std::span<const double> y(&t.y[p * d], d);
      for (std::size_t pp = 0; pp < c.grid_size; ++pp) {
        const std::span<const double> yp(&t.yp[pp * d], d);
        const cplx k = xi_integral_tensor(c.symbol, c.xi, y, yp, scratch);
        kmat(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(pp)) =
            k * std::polar(1.0, c.b * pair_flux(c, t, p, pp));
      }
    }
  }
  return c.left * kmat * c.right;
}

Block compute_block(const Context& c, std::span<const int> gamma, std::span<const int> gamma0) {
  if (inf_distance(gamma, gamma0) > c.params.band_cut) {
    throw std::invalid_argument("assemble_block: |gamma - gamma'|_inf exceeds band_cut");
  }
  return c.symbol.is_hopping() ? hopping_block(c, gamma, gamma0) : integral_block(c, gamma, gamma0);
}

struct Job {
  std::size_t row;
  std::size_t col;
};

std::vector<Job> band_jobs(const Context& c, const IndexCube& sites) {
  std::vector<Job> jobs;
  const auto d = static_cast<std::size_t>(c.d);
  std::vector<int> delta(d);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (std::size_t j = 0; j < sites.size(); ++j) {
      if (c.symbol.hermitian && j < i) continue;
      if (inf_distance(sites[i], sites[j]) > c.params.band_cut) continue;
      if (c.symbol.is_hopping()) {
        for (std::size_t k = 0; k < d; ++k) delta[k] = sites[j][k] - sites[i][k];
        if (!in_hop_set(c.symbol.hopping(), delta)) continue;
      }
      jobs.push_back({i, j});
    }
  }
  return jobs;
}

cplx lattice_phase(const Context& c, std::span<const int> gamma, std::span<const int> gamma0) {
  std::vector<double> g(gamma.begin(), gamma.end()), g0(gamma0.begin(), gamma0.end());
  return std::polar(1.0, c.b * phi(c.field, g, g0, c.options.quad));
}

GeneralizedMatrix finish(const Context& c, const IndexCube& sites, const std::vector<Job>& jobs,
                         std::vector<Block>& blocks) {
  GeneralizedMatrix h;
  h.b = c.b;
  h.params = c.params;
  h.dim = c.d;
  h.symbol_id = c.symbol.id;
  h.field_hash = c.field.hash();
  h.hermitian = c.symbol.hermitian;
  h.entries.reserve(c.symbol.hermitian ? 2 * jobs.size() : jobs.size());
  for (std::size_t n = 0; n < jobs.size(); ++n) {
    const Job& job = jobs[n];
    const cplx ph = lattice_phase(c, sites[job.row], sites[job.col]);
    if (c.symbol.hermitian && job.row == job.col) {
      Block sym = 0.5 * (blocks[n] + blocks[n].adjoint());
      h.entries.push_back({job.row, job.col, ph, std::move(sym)});
      continue;
    }
    if (c.symbol.hermitian) {
      h.entries.push_back({job.col, job.row, std::conj(ph), blocks[n].adjoint()});
    }
    h.entries.push_back({job.row, job.col, ph, std::move(blocks[n])});
  }
  std::sort(h.entries.begin(), h.entries.end(), [](const BlockEntry& a, const BlockEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------

void TruncationParams::validate() const {
  if (lattice_radius < 0) throw std::invalid_argument("lattice_radius must be >= 0");
  if (band_cut < 0) throw std::invalid_argument("band_cut must be >= 0");
  if (band_cut > 2 * lattice_radius) throw std::invalid_argument("band_cut must not exceed 2 * lattice_radius");
  if (fourier_cutoff < 0) throw std::invalid_argument("fourier_cutoff must be >= 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (space_quad < 2) throw std::invalid_argument("space_quad must be >= 2");
}

void TruncationParams::validate_for(const Symbol& symbol) const {
  validate();
  if (symbol.is_general() && epsilon == 0.0) {
    throw std::invalid_argument("epsilon = 0 is only allowed for Hopping and XiIntegrable symbols");
  }
}

std::uint64_t TruncationParams::hash() const {
  Fnv1a h;
  h.add(static_cast<std::int64_t>(lattice_radius));
  h.add(static_cast<std::int64_t>(band_cut));
  h.add(static_cast<std::int64_t>(fourier_cutoff));
  h.add(epsilon);
  h.add(static_cast<std::int64_t>(space_quad));
  return h.value();
}

std::size_t GeneralizedMatrix::site_count() const {
  std::size_t n = 1;
  for (int j = 0; j < dim; ++j) n *= static_cast<std::size_t>(2 * params.lattice_radius + 1);
  return n;
}

std::size_t GeneralizedMatrix::block_size() const {
  std::size_t n = 1;
  for (int j = 0; j < dim; ++j) n *= static_cast<std::size_t>(2 * params.fourier_cutoff + 1);
  return n;
}

const BlockEntry* GeneralizedMatrix::find(std::size_t row, std::size_t col) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{row, col},
                                   [](const BlockEntry& e, const std::pair<std::size_t, std::size_t>& key) {
                                     return e.row != key.first ? e.row < key.first : e.col < key.second;
                                   });
  if (it == entries.end() || it->row != row || it->col != col) return nullptr;
  return &*it;
}

BlockEntry* GeneralizedMatrix::find(std::size_t row, std::size_t col) {
  return const_cast<BlockEntry*>(std::as_const(*this).find(row, col));
}

cplx kernel_K(const Symbol& symbol, const MagneticField& field, double b, double epsilon,
              std::span<const int> gamma, std::span<const int> gamma0, std::span<const double> x,
              std::span<const double> x0, const QuadratureSpec& quad) {
  if (symbol.is_hopping()) {
    throw std::invalid_argument("kernel_K is not defined for Hopping symbols; use the block fast path");
  }
  if (symbol.dim != field.dimension()) throw std::invalid_argument("symbol and field dimensions differ");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  const auto d = static_cast<std::size_t>(symbol.dim);
  if (gamma.size() != d || gamma0.size() != d || x.size() != d || x0.size() != d) {
    throw std::invalid_argument("kernel_K: dimension mismatch");
  }
  std::vector<double> y(d), yp(d);
  double r_max = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    y[j] = x[j] + gamma[j];
    yp[j] = x0[j] + gamma0[j];
    r_max = std::max(r_max, std::abs(y[j] - yp[j]));
  }
  const XiTensor xt = make_xi_tensor(symbol, epsilon, r_max);
  std::vector<cplx> scratch;
  const cplx k = xi_integral_tensor(symbol, xt, y, yp, scratch);
  return k * std::polar(1.0, b * fl_gamma(field, gamma, gamma0, x, x0, quad));
}

Block assemble_block(const Symbol& symbol, const MagneticField& field, double b, std::span<const int> gamma,
                     std::span<const int> gamma0, const TruncationParams& params, const AssemblyOptions& options) {
  const Context c(symbol, field, b, params, options);
  if (gamma.size() != static_cast<std::size_t>(c.d) || gamma0.size() != static_cast<std::size_t>(c.d)) {
    throw std::invalid_argument("assemble_block: lattice point dimension mismatch");
  }
  return compute_block(c, gamma, gamma0);
}

GeneralizedMatrix assemble(const Symbol& symbol, const MagneticField& field, double b,
                           const TruncationParams& params, const AssemblyOptions& options) {
  const Context c(symbol, field, b, params, options);
  const IndexCube sites(c.d, params.lattice_radius);
  const std::vector<Job> jobs = band_jobs(c, sites);
  std::vector<Block> blocks(jobs.size());
  const int threads = resolve_threads(options.threads);
  const auto njobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t n = 0; n < njobs; ++n) {
    const Job& job = jobs[static_cast<std::size_t>(n)];
    blocks[static_cast<std::size_t>(n)] = compute_block(c, sites[job.row], sites[job.col]);
  }
  return finish(c, sites, jobs, blocks);
}

GeneralizedMatrix assemble_serial(const Symbol& symbol, const MagneticField& field, double b,
                                  const TruncationParams& params, const AssemblyOptions& options) {
  const Context c(symbol, field, b, params, options);
  const IndexCube sites(c.d, params.lattice_radius);
  const std::vector<Job> jobs = band_jobs(c, sites);
  std::vector<Block> blocks;
  blocks.reserve(jobs.size());
  for (const Job& job : jobs) blocks.push_back(compute_block(c, sites[job.row], sites[job.col]));
  return finish(c, sites, jobs, blocks);
}

Eigen::MatrixXcd flatten(const GeneralizedMatrix& h) {
  const auto m = static_cast<Eigen::Index>(h.block_size());
  const auto n = static_cast<Eigen::Index>(h.flat_dim());
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  for (const BlockEntry& e : h.entries) {
    out.block(static_cast<Eigen::Index>(e.row) * m, static_cast<Eigen::Index>(e.col) * m, m, m) = e.phase * e.block;
  }
  return out;
}

GeneralizedMatrix unflatten(const Eigen::MatrixXcd& mat, const GeneralizedMatrix& like) {
  const auto m = static_cast<Eigen::Index>(like.block_size());
  if (mat.rows() != static_cast<Eigen::Index>(like.flat_dim()) || mat.cols() != mat.rows()) {
    throw std::invalid_argument("unflatten: matrix shape does not match the template");
  }
  GeneralizedMatrix out = like;
  for (BlockEntry& e : out.entries) {
    e.phase = cplx{1.0, 0.0};
    e.block = mat.block(static_cast<Eigen::Index>(e.row) * m, static_cast<Eigen::Index>(e.col) * m, m, m);
  }
  return out;
}

GeneralizedMatrix truncate_band(const GeneralizedMatrix& h, double t) {
  if (t == 0.0) return h;
  const double radius = 1.0 / std::sqrt(std::abs(t));
  const IndexCube sites = h.sites();
  GeneralizedMatrix out = h;
  out.entries.clear();
  for (const BlockEntry& e : h.entries) {
    double r2 = 0.0;
    for (int j = 0; j < h.dim; ++j) {
      const double dj = sites[e.row][static_cast<std::size_t>(j)] - sites[e.col][static_cast<std::size_t>(j)];
      r2 += dj * dj;
    }
    if (std::sqrt(r2) < radius) out.entries.push_back(e);
  }
  return out;
}

GeneralizedMatrix rephase(const GeneralizedMatrix& h, double s, const MagneticField& field,
                          const QuadratureSpec& quad) {
  if (s == 0.0) return h;
  if (field.dimension() != h.dim) throw std::invalid_argument("rephase: field dimension mismatch");
  const IndexCube sites = h.sites();
  GeneralizedMatrix out = h;
  for (BlockEntry& e : out.entries) {
    if (h.hermitian && e.col < e.row) continue;
    std::vector<double> g(sites[e.row].begin(), sites[e.row].end());
    std::vector<double> g0(sites[e.col].begin(), sites[e.col].end());
    e.phase *= std::polar(1.0, s * phi(field, g, g0, quad));
  }
  if (h.hermitian) {
    // Lower triangle mirrors the upper one exactly.
    for (BlockEntry& e : out.entries) {
      if (e.col < e.row) {
        const BlockEntry* up = out.find(e.col, e.row);
        if (up != nullptr) e.phase = std::conj(up->phase);
      }
    }
  }
  return out;
}

Eigen::MatrixXcd peierls_matrix(const std::vector<Hop>& hops, const MagneticField& field, double b, int radius,
                                const QuadratureSpec& quad) {
  if (radius < 0) throw std::invalid_argument("peierls_matrix: radius must be >= 0");
  const int d = field.dimension();
  const IndexCube sites(d, radius);
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  std::vector<int> target(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto g = sites[i];
    for (const Hop& hop : hops) {
      if (static_cast<int>(hop.shift.size()) != d) throw std::invalid_argument("peierls_matrix: hop dimension");
      for (int j = 0; j < d; ++j) target[j] = g[j] + hop.shift[j];
      const auto col = sites.index_of(target);
      if (!col) continue;
      std::vector<double> x(g.begin(), g.end()), y(target.begin(), target.end());
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*col)) +=
          std::polar(1.0, b * phi(field, x, y, quad)) * hop.coeff;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SampledFunction apply_Ub(const MagneticField& field, double b, const ScalarFunction& f, double support_radius,
                         const TruncationParams& params, const QuadratureSpec& quad) {
  params.validate();
  if (support_radius > params.lattice_radius + 0.5) {
    throw std::invalid_argument("apply_Ub: function support exceeds the lattice box");
  }
  const int d = field.dimension();
  const IndexCube sites(d, params.lattice_radius);
  const TensorRule grid = tensor_rule(gauss_legendre(params.space_quad, -0.5, 0.5), d);
  SampledFunction u;
  u.dim = d;
  u.lattice_radius = params.lattice_radius;
  u.quad_order = params.space_quad;
  u.values.resize(sites.size());
  std::vector<double> y(static_cast<std::size_t>(d)), g(static_cast<std::size_t>(d));
  for (std::size_t s = 0; s < sites.size(); ++s) {
    for (int j = 0; j < d; ++j) g[j] = sites[s][static_cast<std::size_t>(j)];
    u.values[s].resize(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) {
      for (int j = 0; j < d; ++j) y[j] = grid.point(p)[j] + g[j];
      u.values[s][p] = std::polar(1.0, -b * phi(field, y, g, quad)) * f(y);
    }
  }
  return u;
}

PhysicalSamples apply_Ub_inverse(const MagneticField& field, double b, const SampledFunction& u,
                                 const QuadratureSpec& quad) {
  const int d = u.dim;
  if (field.dimension() != d) throw std::invalid_argument("apply_Ub_inverse: dimension mismatch");
  const IndexCube sites(d, u.lattice_radius);
  const TensorRule grid = tensor_rule(gauss_legendre(u.quad_order, -0.5, 0.5), d);
  if (u.values.size() != sites.size()) throw std::invalid_argument("apply_Ub_inverse: site count mismatch");
  PhysicalSamples out;
  out.dim = d;
  std::vector<double> y(static_cast<std::size_t>(d)), g(static_cast<std::size_t>(d));
  for (std::size_t s = 0; s < sites.size(); ++s) {
    if (u.values[s].size() != grid.size()) throw std::invalid_argument("apply_Ub_inverse: grid mismatch");
    for (int j = 0; j < d; ++j) g[j] = sites[s][static_cast<std::size_t>(j)];
    for (std::size_t p = 0; p < grid.size(); ++p) {
      for (int j = 0; j < d; ++j) y[j] = grid.point(p)[j] + g[j];
      out.points.insert(out.points.end(), y.begin(), y.end());
      out.values.push_back(std::polar(1.0, b * phi(field, y, g, quad)) * u.values[s][p]);
    }
  }
  return out;
}

Eigen::VectorXcd fourier_coefficients(const SampledFunction& u, int fourier_cutoff) {
  const int d = u.dim;
  const TensorRule grid = tensor_rule(gauss_legendre(u.quad_order, -0.5, 0.5), d);
  const IndexCube modes(d, fourier_cutoff);
  const std::size_t m = modes.size();
  Eigen::VectorXcd out(static_cast<Eigen::Index>(u.values.size() * m));
  for (std::size_t s = 0; s < u.values.size(); ++s) {
    if (u.values[s].size() != grid.size()) throw std::invalid_argument("fourier_coefficients: grid mismatch");
    for (std::size_t k = 0; k < m; ++k) {
      cplx acc{0.0, 0.0};
      for (std::size_t p = 0; p < grid.size(); ++p) {
        double arg = 0.0;
        for (int j = 0; j < d; ++j) arg += modes[k][static_cast<std::size_t>(j)] * grid.point(p)[j];
        acc += grid.weights[p] * u.values[s][p] * std::polar(1.0, -kTwoPi * arg);
      }
      out(static_cast<Eigen::Index>(s * m + k)) = acc;
    }
  }
  return out;
}

double grid_norm(const SampledFunction& u) {
  const TensorRule grid = tensor_rule(gauss_legendre(u.quad_order, -0.5, 0.5), u.dim);
  double s = 0.0;
  for (const auto& site : u.values) {
    for (std::size_t p = 0; p < site.size(); ++p) s += grid.weights[p] * std::norm(site[p]);
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

cplx quadratic_form_oracle(const Symbol& symbol, const MagneticField& field, double b, double epsilon,
                           const ScalarFunction& f, const ScalarFunction& g, const OracleGrid& grid,
                           const QuadratureSpec& quad, int threads) {
  if (symbol.is_hopping()) throw std::invalid_argument("quadratic_form_oracle: Hopping symbols have no kernel");
  if (symbol.is_general() && !(epsilon > 0.0)) {
    throw std::invalid_argument("quadratic_form_oracle: General symbols need epsilon > 0");
  }
  const int d = symbol.dim;
  if (field.dimension() != d || static_cast<int>(grid.lower.size()) != d || static_cast<int>(grid.upper.size()) != d) {
    throw std::invalid_argument("quadratic_form_oracle: dimension mismatch");
  }
  if (symbol.is_xi_integrable()) {
    const auto& c = symbol.xi_integrable();
    if (!(c.tail_tol <= 1e-6)) throw std::invalid_argument("quadratic_form_oracle: xi tail tolerance too loose");
  }

  // Space grid: tensor of per-axis Gauss-Legendre rules on the box.
  std::vector<Rule1D> axes;
  for (int j = 0; j < d; ++j) axes.push_back(gauss_legendre(grid.nodes_per_axis, grid.lower[j], grid.upper[j]));
  const auto nx = static_cast<std::size_t>(grid.nodes_per_axis);
  std::size_t total = 1;
  for (int j = 0; j < d; ++j) total *= nx;
  std::vector<double> pts(total * static_cast<std::size_t>(d));
  std::vector<double> wts(total);
  for (std::size_t p = 0; p < total; ++p) {
    std::size_t rest = p;
    double w = 1.0;
    for (int j = d - 1; j >= 0; --j) {
      const std::size_t i = rest % nx;
      rest /= nx;
      pts[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = axes[static_cast<std::size_t>(j)].nodes[i];
      w *= axes[static_cast<std::size_t>(j)].weights[i];
    }
    wts[p] = w;
  }
  std::vector<cplx> fv(total), gv(total);
  for (std::size_t p = 0; p < total; ++p) {
    const std::span<const double> x(&pts[p * static_cast<std::size_t>(d)], static_cast<std::size_t>(d));
    fv[p] = wts[p] * f(x);
    gv[p] = wts[p] * std::conj(g(x));
  }

  Symbol integrand = symbol;
  if (symbol.is_xi_integrable() && grid.xi_points > 0) {
    auto c = symbol.xi_integrable();
    c.grid_points = grid.xi_points;
    integrand.xi_class = c;
  }
  double r_max = 0.0;
  for (int j = 0; j < d; ++j) r_max = std::max(r_max, grid.upper[j] - grid.lower[j]);
  // Separable symbols at epsilon = 0 use per-axis 1-D transforms on the box grid.
  const bool separable = integrand.separable.has_value() && integrand.is_xi_integrable() && epsilon == 0.0;
  std::vector<cplx> table;
  std::vector<std::size_t> axis_index;
  XiTensor xt;
  if (separable) {
    const auto& c = integrand.xi_integrable();
    const Rule1D line =
        gauss_legendre(std::max(c.grid_points, resolving_points(c.box_halfwidth, r_max)), -c.box_halfwidth, c.box_halfwidth);
    std::vector<double> pw(line.size());
    for (std::size_t k = 0; k < line.size(); ++k) pw[k] = line.weights[k] * integrand.separable->profile(line.nodes[k]) / kTwoPi;
    table.resize(static_cast<std::size_t>(d) * nx * nx);
    for (int j = 0; j < d; ++j) {
      const Rule1D& ax = axes[static_cast<std::size_t>(j)];
      for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t ip = 0; ip < nx; ++ip) {
          const double r = ax.nodes[i] - ax.nodes[ip];
          cplx acc{0.0, 0.0};
          for (std::size_t k = 0; k < line.size(); ++k) acc += pw[k] * std::polar(1.0, line.nodes[k] * r);
          table[(static_cast<std::size_t>(j) * nx + i) * nx + ip] = acc;
        }
      }
    }
    axis_index.resize(total * static_cast<std::size_t>(d));
    for (std::size_t p = 0; p < total; ++p) {
      std::size_t rest = p;
      for (int j = d - 1; j >= 0; --j) {
        axis_index[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = rest % nx;
        rest /= nx;
      }
    }
  } else {
    xt = make_xi_tensor(integrand, epsilon, r_max);
  }
  const auto kernel = [&](std::size_t p, std::size_t pp, std::span<const double> x, std::span<const double> xp,
                          std::vector<cplx>& scratch) {
    if (!separable) return xi_integral_tensor(integrand, xt, x, xp, scratch);
    cplx k = integrand.separable->spatial(x, xp);
    for (int j = 0; j < d; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      k *= table[(jj * nx + axis_index[p * static_cast<std::size_t>(d) + jj]) * nx +
                 axis_index[pp * static_cast<std::size_t>(d) + jj]];
    }
    return k;
  };

  std::vector<cplx> partial(total, cplx{0.0, 0.0});
  const int nthreads = resolve_threads(threads);
  const auto ntotal = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel num_threads(nthreads)
  {
    std::vector<cplx> scratch;
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t pi = 0; pi < ntotal; ++pi) {
      const auto p = static_cast<std::size_t>(pi);
      if (gv[p] == cplx{0.0, 0.0}) continue;
      const std::span<const double> x(&pts[p * static_cast<std::size_t>(d)], static_cast<std::size_t>(d));
      cplx acc{0.0, 0.0};
      for (std::size_t pp = 0; pp < total; ++pp) {
        if (fv[pp] == cplx{0.0, 0.0}) continue;
        const std::span<const double> xp(&pts[pp * static_cast<std::size_t>(d)], static_cast<std::size_t>(d));
        acc += kernel(p, pp, x, xp, scratch) * std::polar(1.0, b * phi(field, x, xp, quad)) * fv[pp];
      }
      partial[p] = acc * gv[p];
    }
  }
  cplx sum{0.0, 0.0};
  for (const cplx& v : partial) sum += v;
  return sum;
}

// ---------------------------------------------------------------------------

BlockNorm block_norm(const Block& block) {
  if (block.size() == 0) return {0.0, true};
  if (block.rows() <= 64 && block.cols() <= 64) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(block);
    return {svd.singularValues()(0), true};
  }
  return {block.norm(), false};
}

double japanese_bracket(std::span<const int> delta) {
  double s = 1.0;
  for (int v : delta) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

DecayProfile block_decay(const GeneralizedMatrix& h, int power) {
  const IndexCube sites = h.sites();
  DecayProfile out;
  out.power = power;
  out.shells.resize(static_cast<std::size_t>(h.params.band_cut + 1));
  for (int s = 0; s <= h.params.band_cut; ++s) out.shells[static_cast<std::size_t>(s)].shell = s;
  std::vector<int> delta(static_cast<std::size_t>(h.dim));
  std::map<int, double> envelope;  // |delta|^2 -> max block norm
  for (const BlockEntry& e : h.entries) {
    for (int j = 0; j < h.dim; ++j) {
      delta[j] = sites[e.row][static_cast<std::size_t>(j)] - sites[e.col][static_cast<std::size_t>(j)];
    }
    int shell = 0;
    for (int v : delta) shell = std::max(shell, std::abs(v));
    const BlockNorm bn = block_norm(e.block);
    out.exact_norms = out.exact_norms && bn.exact;
    const double weighted = bn.value * std::pow(japanese_bracket(delta), power);
    DecayShell& sh = out.shells[static_cast<std::size_t>(shell)];
    sh.max_norm = std::max(sh.max_norm, bn.value);
    sh.max_weighted = std::max(sh.max_weighted, weighted);
    out.max_weighted = std::max(out.max_weighted, weighted);
    if (shell == 0) out.diagonal_norm = std::max(out.diagonal_norm, bn.value);
    if (shell > 0) {
      int r2 = 0;
      for (int v : delta) r2 += v * v;
      double& env = envelope[r2];
      env = std::max(env, bn.value);
    }
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (const auto& [r2, norm] : envelope) {
    if (!(norm > 0.0)) continue;
    const double x = 0.5 * std::log1p(static_cast<double>(r2));
    const double y = std::log(norm);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n >= 2) out.fitted_exponent = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  return out;
}

double block_lipschitz(const GeneralizedMatrix& h1, const GeneralizedMatrix& h2, int power) {
  const double db = std::abs(h1.b - h2.b);
  if (db == 0.0) throw std::invalid_argument("block_lipschitz: needs distinct field strengths");
  const IndexCube sites = h1.sites();
  std::vector<int> delta(static_cast<std::size_t>(h1.dim));
  double worst = 0.0;
  for (const BlockEntry& e : h1.entries) {
    const BlockEntry* other = h2.find(e.row, e.col);
    if (other == nullptr) continue;
    for (int j = 0; j < h1.dim; ++j) {
      delta[j] = sites[e.row][static_cast<std::size_t>(j)] - sites[e.col][static_cast<std::size_t>(j)];
    }
    const double diff = block_norm(e.block - other->block).value;
    worst = std::max(worst, diff * std::pow(japanese_bracket(delta), power) / db);
  }
  return worst;
}

EpsilonReport epsilon_convergence_check(const Symbol& symbol, const MagneticField& field, double b,
                                        const TruncationParams& params, const std::vector<double>& epsilons,
                                        const AssemblyOptions& options) {
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) throw std::invalid_argument("epsilon list must be positive");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw std::invalid_argument("epsilon list must be decreasing");
  }
  EpsilonReport r;
  r.epsilons = epsilons;
  if (symbol.is_hopping()) {
    r.epsilon_ignored = true;
    r.note = "epsilon ignored: Hopping fast path has no xi integral";
    r.differences.assign(epsilons.size(), 0.0);
    return r;
  }
  auto at = [&](double eps) {
    TruncationParams p = params;
    p.epsilon = eps;
    return flatten(assemble(symbol, field, b, p, options));
  };
  if (symbol.is_xi_integrable()) {
    r.against_zero = true;
    const Eigen::MatrixXcd h0 = at(0.0);
    for (double eps : epsilons) r.differences.push_back((at(eps) - h0).norm());
    r.note = "Frobenius norm of H_eps - H_0";
  } else {
    r.against_zero = false;
    Eigen::MatrixXcd prev;
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      Eigen::MatrixXcd cur = at(epsilons[i]);
      if (i > 0) r.differences.push_back((cur - prev).norm());
      prev = std::move(cur);
    }
    r.note = "Frobenius norm of successive differences H_eps[i] - H_eps[i-1]";
  }
  if (r.differences.size() < 2) {
    r.decreasing = true;
    r.note += "; fewer than two differences, no monotonicity assertion";
  } else {
    for (std::size_t i = 1; i < r.differences.size(); ++i) {
      if (!(r.differences[i] < r.differences[i - 1])) r.decreasing = false;
    }
  }
  return r;
}

Eigen::MatrixXcd richardson_extrapolate(const Eigen::MatrixXcd& h_eps, const Eigen::MatrixXcd& h_half_eps) {
  if (h_eps.rows() != h_half_eps.rows() || h_eps.cols() != h_half_eps.cols()) {
    throw std::invalid_argument("richardson_extrapolate: shape mismatch");
  }
  return 2.0 * h_half_eps - h_eps;
}

}  // namespace hofmat

#include "hofmat/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "hofmat/parallel.hpp"

namespace hofmat {

namespace {

void require_hermitian(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) throw std::invalid_argument("matrix is not Hermitian");
}

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

EigenDecomposition eigen_hermitian(const Eigen::MatrixXcd& m, double tol, std::uint64_t seed) {
  require_hermitian(m);
  EigenDecomposition out;
  const auto n = m.rows();
  if (n == 0) return out;
  const Eigen::MatrixXcd sym = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver did not converge");
  out.values = solver.eigenvalues();
  out.vectors = solver.eigenvectors();

  const double norm = std::max(max_abs(out.values), std::numeric_limits<double>::min());
  const auto checks = std::min<Eigen::Index>(n, 16);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (Eigen::Index c = 0; c < checks; ++c) {
    const Eigen::Index k = idx[static_cast<std::size_t>(c)];
    const double r = (m * out.vectors.col(k) - out.values(k) * out.vectors.col(k)).norm() / norm;
    out.residual_bound = std::max(out.residual_bound, r);
  }
  if (out.residual_bound > tol) throw std::runtime_error("eigensolver residual exceeds tolerance");
  return out;
}

SpectrumResult eigenvalues_hermitian(const Eigen::MatrixXcd& m, double tol, std::uint64_t seed) {
  const EigenDecomposition eig = eigen_hermitian(m, tol, seed);
  SpectrumResult r;
  r.eigenvalues.assign(eig.values.data(), eig.values.data() + eig.values.size());
  r.matrix_dim = static_cast<std::size_t>(m.rows());
  r.residual_bound = eig.residual_bound;
  return r;
}

SpectrumResult bulk_spectrum(const EigenDecomposition& eig, const IndexCube& sites, std::size_t block_size,
                             int inner_radius, double factor) {
  const std::size_t n = sites.size() * block_size;
  if (static_cast<std::size_t>(eig.vectors.rows()) != n) throw std::invalid_argument("bulk_spectrum: size mismatch");
  std::vector<bool> inner(sites.size());
  std::size_t inner_count = 0;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    bool in = true;
    for (int v : sites[s]) in = in && std::abs(v) <= inner_radius;
    inner[s] = in;
    inner_count += in ? 1 : 0;
  }
  const double share = static_cast<double>(inner_count) / static_cast<double>(sites.size());
  SpectrumResult r;
  r.matrix_dim = n;
  r.residual_bound = eig.residual_bound;
  for (Eigen::Index k = 0; k < eig.vectors.cols(); ++k) {
    double w = 0.0;
    for (std::size_t s = 0; s < sites.size(); ++s) {
      if (!inner[s]) continue;
      w += eig.vectors.col(k)
               .segment(static_cast<Eigen::Index>(s * block_size), static_cast<Eigen::Index>(block_size))
               .squaredNorm();
    }
    if (w >= factor * share) r.eigenvalues.push_back(eig.values(k));
  }
  return r;
}

// Largest distance from a point of x to the set y; both sorted.
static double directed(const std::vector<double>& x, const std::vector<double>& y) {
  double worst = 0.0;
  std::size_t j = 0;
  for (double v : x) {
    while (j + 1 < y.size() && y[j + 1] <= v) ++j;
    double d = std::abs(v - y[j]);
    if (j + 1 < y.size()) d = std::min(d, std::abs(y[j + 1] - v));
    worst = std::max(worst, d);
  }
  return worst;
}

double hausdorff(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("hausdorff: empty set");
  return std::max(directed(x, y), directed(y, x));
}

double operator_norm(const Eigen::MatrixXcd& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == m.cols()) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-14 * scale) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
      return max_abs(solver.eigenvalues());
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
  return svd.singularValues()(0);
}

GapList find_gaps(const SpectrumResult& spec, double min_width) {
  if (!(min_width > 0.0)) throw std::invalid_argument("find_gaps: min_width must be positive");
  GapList gaps;
  const auto& ev = spec.eigenvalues;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    const double w = ev[i + 1] - ev[i];
    if (w >= min_width) gaps.push_back({ev[i], ev[i + 1], w});
  }
  return gaps;
}

SweepResult make_sweep(std::vector<double> grid, std::vector<SpectrumResult> spectra) {
  if (grid.size() != spectra.size()) throw std::invalid_argument("sweep: one spectrum per grid point");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("sweep: grid must be strictly increasing");
  }
  SweepResult r;
  r.b = std::move(grid);
  r.spectra = std::move(spectra);
  for (const auto& s : r.spectra) {
    if (s.eigenvalues.empty()) throw std::invalid_argument("sweep: empty spectrum");
    r.e_min.push_back(s.eigenvalues.front());
    r.e_max.push_back(s.eigenvalues.back());
  }
  return r;
}

SweepResult sweep(const std::vector<double>& grid, const SpectrumAt& spectrum_at, int threads) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SpectrumResult> spectra(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    spectra[static_cast<std::size_t>(i)] = spectrum_at(grid[static_cast<std::size_t>(i)]);
  }
  return make_sweep(grid, std::move(spectra));
}

SweepResult sweep_serial(const std::vector<double>& grid, const SpectrumAt& spectrum_at) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SpectrumResult> spectra;
  for (double b : grid) spectra.push_back(spectrum_at(b));
  return make_sweep(grid, std::move(spectra));
}

std::vector<double> difference_quotients(const std::vector<double>& b, const std::vector<double>& values) {
  if (b.size() != values.size()) throw std::invalid_argument("difference_quotients: size mismatch");
  std::vector<double> q;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) q.push_back(std::abs(values[i + 1] - values[i]) / (b[i + 1] - b[i]));
  return q;
}

static double overlap(const Gap& g, double lo, double hi) { return std::min(g.right, hi) - std::max(g.left, lo); }

EdgeTrack track_gap_edge(const SweepResult& sweep, double window_lo, double window_hi, EdgeSide side,
                         double min_width) {
  if (!(window_hi > window_lo)) throw std::invalid_argument("track_gap_edge: empty window");
  EdgeTrack t;
  double lo = window_lo;
  double hi = window_hi;
  for (std::size_t i = 0; i < sweep.b.size(); ++i) {
    const GapList gaps = find_gaps(sweep.spectra[i], min_width);
    const Gap* best = nullptr;
    double best_overlap = 0.0;
    for (const Gap& g : gaps) {
      const double o = overlap(g, lo, hi);
      if (o > best_overlap) {
        best_overlap = o;
        best = &g;
      }
    }
    if (best == nullptr) {
      t.closed = true;
      t.closed_at = i;
      break;
    }
    t.b.push_back(sweep.b[i]);
    t.gaps.push_back(*best);
    t.edges.push_back(side == EdgeSide::Lower ? best->left : best->right);
    lo = best->left;
    hi = best->right;
  }
  t.quotients = difference_quotients(t.b, t.edges);
  return t;
}

RieszResult riesz_project(const Eigen::MatrixXcd& m, double center, double radius, const RieszOptions& options) {
  if (!(radius > 0.0)) throw std::invalid_argument("riesz_project: radius must be positive");
  if (options.n_quad < 4 || options.n_quad % 2 != 0) throw std::invalid_argument("riesz_project: n_quad must be even");
  const EigenDecomposition eig = eigen_hermitian(m);
  const auto n = m.rows();
  const double norm = std::max(max_abs(eig.values), 1.0);
  RieszResult r;
  r.min_distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    r.min_distance = std::min(r.min_distance, std::abs(std::abs(eig.values(k) - center) - radius));
  }
  if (r.min_distance < options.dist_tol_rel * norm) {
    throw std::invalid_argument("riesz_project: eigenvalue on or near the contour");
  }

  r.t_filter = Eigen::MatrixXcd::Zero(n, n);
  r.p_filter = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    if (std::abs(eig.values(k) - center) >= radius) continue;
    const Eigen::MatrixXcd proj = eig.vectors.col(k) * eig.vectors.col(k).adjoint();
    r.p_filter += proj;
    r.t_filter += eig.values(k) * proj;
    r.window_eigenvalues.push_back(eig.values(k));
  }
  if (!options.contour) return r;

  // Trapezoid nodes theta_j = 2 pi (j + 1/2) / n: pairs j, n-1-j are complex
  // conjugates, so only the upper half-circle is solved.
  using cplx = std::complex<double>;
  r.t_contour = Eigen::MatrixXcd::Zero(n, n);
  r.p_contour = Eigen::MatrixXcd::Zero(n, n);
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);
  const int half = options.n_quad / 2;
  for (int j = 0; j < half; ++j) {
    const double theta = 2.0 * std::numbers::pi * (j + 0.5) / options.n_quad;
    const cplx e = std::polar(1.0, theta);
    const cplx z = center + radius * e;
    const Eigen::MatrixXcd res = (m - z * id).partialPivLu().solve(id);
    const Eigen::MatrixXcd pj = e * res;
    const Eigen::MatrixXcd tj = z * pj;
    r.p_contour += pj + pj.adjoint();
    r.t_contour += tj + tj.adjoint();
  }
  const double scale = -radius / options.n_quad;
  r.p_contour *= scale;
  r.t_contour *= scale;
  r.agreement = operator_norm(r.t_filter - r.t_contour);
  r.idempotence = operator_norm(r.p_contour * r.p_contour - r.p_contour);
  return r;
}

HolderFit holder_fit(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) throw std::invalid_argument("holder_fit: needs at least 3 pairs");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  HolderFit f;
  for (const auto& [db, dh] : pairs) {
    if (!(db > 0.0) || !(dh > 0.0)) throw std::invalid_argument("holder_fit: entries must be positive");
    const double x = std::log(db);
    const double y = std::log(dh);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    f.c_star = std::max(f.c_star, dh / std::sqrt(db));
  }
  const double n = static_cast<double>(pairs.size());
  const double denom = n * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw std::invalid_argument("holder_fit: degenerate delta b values");
  f.alpha = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - f.alpha * sx) / n;
  f.constant = std::exp(intercept);
  double ss = 0.0;
  for (const auto& [db, dh] : pairs) {
    const double e = std::log(dh) - intercept - f.alpha * std::log(db);
    ss += e * e;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

bool quotients_bounded(const std::vector<double>& q, double factor) {
  if (q.empty()) return true;
  const double ref = q.front();
  return std::all_of(q.begin(), q.end(), [&](double v) { return v <= factor * ref; });
}

bool quotients_stable(const std::vector<double>& q, double factor) {
  for (std::size_t i = 1; i < q.size(); ++i) {
    const double a = q[i - 1];
    const double b = q[i];
    if (a == 0.0 && b == 0.0) continue;
    if (!(b <= factor * a && a <= factor * b)) return false;
  }
  return true;
}

}  // namespace hofmat

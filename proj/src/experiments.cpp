#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "hofmat/cache.hpp"
#include "hofmat/experiments.hpp"
#include "hofmat/parallel.hpp"
#include "hofmat/util.hpp"

namespace hofmat {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Model

Eigen::MatrixXcd Model::matrix(double b, int threads) const {
  if (peierls) return peierls_matrix(symbol.hopping().hops, field, b, params.lattice_radius);
  return flatten(generalized(b, threads));
}

GeneralizedMatrix Model::generalized(double b, int threads) const {
  AssemblyOptions o;
  o.threads = threads;
  return assemble(symbol, field, b, params, o);
}

std::size_t Model::block_size() const {
  return peierls ? 1 : IndexCube(symbol.dim, params.fourier_cutoff).size();
}

Model make_model(const ExperimentConfig& cfg) {
  Model m{make_symbol(cfg.symbol), make_field(cfg.field, cfg.symbol.dim), cfg.truncation, false};
  if (m.field.dimension() != m.symbol.dim) throw ConfigError("$.field: dimension differs from the symbol");
  m.peierls = cfg.path == "peierls" || (cfg.path == "auto" && m.symbol.is_hopping());
  try {
    m.params.validate_for(m.symbol);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("$.truncation: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Four-step chain

std::vector<ChainRow> chain_rows(const Model& model, double b0, const std::vector<double>& deltas, int threads,
                                 bool bulk, double bulk_factor) {
  const auto spec = [&](const GeneralizedMatrix& h) {
    const EigenDecomposition eig = eigen_hermitian(flatten(h));
    if (bulk) {
      return bulk_spectrum(eig, h.sites(), h.block_size(), h.params.lattice_radius / 2, bulk_factor).eigenvalues;
    }
    return std::vector<double>(eig.values.data(), eig.values.data() + eig.values.size());
  };
  const GeneralizedMatrix h0 = model.generalized(b0, 1);
  const std::vector<double> s0 = spec(h0);
  std::vector<ChainRow> rows(deltas.size());
  const auto n = static_cast<std::ptrdiff_t>(deltas.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double db = deltas[static_cast<std::size_t>(i)];
    const GeneralizedMatrix shifted = rephase(h0, db, model.field);
    const std::vector<double> s_next = spec(model.generalized(b0 + db, 1));
    const std::vector<double> s_shift = spec(shifted);
    const std::vector<double> s_shift_t = spec(truncate_band(shifted, db));
    const std::vector<double> s0_t = spec(truncate_band(h0, db));
    ChainRow& r = rows[static_cast<std::size_t>(i)];
    r.delta_b = db;
    r.d[0] = hausdorff(s_next, s_shift);
    r.d[1] = hausdorff(s_shift, s_shift_t);
    r.d[2] = hausdorff(s_shift_t, s0_t);
    r.d[3] = hausdorff(s0_t, s0);
    if (db > 0.0) {
      r.q[0] = r.d[0] / db;
      r.q[1] = r.d[1] / db;
      r.q[2] = r.d[2] / std::sqrt(db);
      r.q[3] = r.d[3] / db;
    }
  }
  return rows;
}

bool chain_stable(const std::vector<ChainRow>& rows) {
  std::vector<const ChainRow*> order;
  for (const ChainRow& r : rows) {
    if (r.delta_b > 0.0) order.push_back(&r);
  }
  std::sort(order.begin(), order.end(), [](const ChainRow* a, const ChainRow* b) { return a->delta_b > b->delta_b; });
  for (int k = 0; k < 4; ++k) {
    std::vector<double> q;
    for (const ChainRow* r : order) q.push_back(r->q[k]);
    if (!quotients_bounded(q, 2.0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// CSV

void CsvTable::write(const std::filesystem::path& path, std::uint64_t hash) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "# config_hash=" << hex64(hash) << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

namespace {

std::string fmt(double v) { return format_double(v); }

struct Run {
  const ExperimentConfig& cfg;
  const RunContext& ctx;
  std::uint64_t hash;
  json summary = json::object();
  std::vector<std::string> files;

  void write(const std::string& name, const CsvTable& t) {
    t.write(ctx.out_dir / name, hash);
    files.push_back(name);
  }
};

void need_grid(const ExperimentConfig& cfg) {
  if (cfg.b_grid.empty()) throw ConfigError("$.b_grid: empty grid");
}

void need_deltas(const ExperimentConfig& cfg, bool positive) {
  if (cfg.delta_b.empty()) throw ConfigError("$.delta_b: empty list");
  for (double d : cfg.delta_b) {
    if (positive && !(d > 0.0)) throw ConfigError("$.delta_b: entries must be positive");
  }
}

std::vector<double> descending(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Full and boundary-filtered spectra from one eigendecomposition.
struct Spectra {
  SpectrumResult full;
  SpectrumResult bulk;
};

Spectra spectra_at(const Model& m, double b, const EdgeSpec& e, int threads) {
  const EigenDecomposition eig = eigen_hermitian(m.matrix(b, threads));
  Spectra s;
  s.full.eigenvalues.assign(eig.values.data(), eig.values.data() + eig.values.size());
  s.full.matrix_dim = static_cast<std::size_t>(eig.values.size());
  s.full.residual_bound = eig.residual_bound;
  s.full.b = b;
  const int r = m.params.lattice_radius;
  s.bulk = e.bulk ? bulk_spectrum(eig, IndexCube(m.symbol.dim, r), m.block_size(), r / 2, e.bulk_factor) : s.full;
  s.bulk.b = b;
  return s;
}

std::vector<Spectra> spectra_on(const Model& m, const std::vector<double>& grid, const EdgeSpec& e, int threads) {
  std::vector<Spectra> out(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = spectra_at(m, grid[static_cast<std::size_t>(i)], e, 1);
  return out;
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

// ---------------------------------------------------------------------------

int cmd_butterfly(Run& run) {
  need_grid(run.cfg);
  const Model m = make_model(run.cfg);
  const SweepResult s = sweep(
      run.cfg.b_grid,
      [&](double b) {
        SpectrumResult r = eigenvalues_hermitian(m.matrix(b, 1));
        r.b = b;
        return r;
      },
      run.ctx.threads);
  CsvTable t{{"b", "index", "eigenvalue"}, {}};
  double residual = 0.0;
  for (std::size_t i = 0; i < s.b.size(); ++i) {
    residual = std::max(residual, s.spectra[i].residual_bound);
    for (std::size_t k = 0; k < s.spectra[i].eigenvalues.size(); ++k) {
      t.add({fmt(s.b[i]), std::to_string(k), fmt(s.spectra[i].eigenvalues[k])});
    }
  }
  run.write("butterfly.csv", t);
  run.summary["grid_points"] = s.b.size();
  run.summary["matrix_dim"] = s.spectra.front().matrix_dim;
  run.summary["path"] = m.peierls ? "peierls" : "galerkin";
  run.summary["max_residual"] = residual;
  return 0;
}

int cmd_holder(Run& run) {
  need_deltas(run.cfg, true);
  const Model m = make_model(run.cfg);
  const std::vector<double> deltas = descending(run.cfg.delta_b);
  std::vector<double> grid{run.cfg.b0};
  for (double d : deltas) grid.push_back(run.cfg.b0 + d);
  const std::vector<Spectra> sp = spectra_on(m, grid, run.cfg.edges, run.ctx.threads);

  CsvTable t{{"delta_b", "d_H", "C_star", "d_H_over_delta_b"}, {}};
  std::vector<std::pair<double, double>> pairs;
  std::vector<double> cstar;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double dh = hausdorff(sp[0].full.eigenvalues, sp[i + 1].full.eigenvalues);
    pairs.emplace_back(deltas[i], dh);
    cstar.push_back(dh / std::sqrt(deltas[i]));
    t.add({fmt(deltas[i]), fmt(dh), fmt(cstar.back()), fmt(dh / deltas[i])});
  }
  run.write("holder.csv", t);
  const double cmin = *std::min_element(cstar.begin(), cstar.end());
  const double cmax = max_of(cstar);
  run.summary["c_star"] = cmax;
  run.summary["c_star_ratio"] = cmin > 0.0 ? cmax / cmin : std::numeric_limits<double>::infinity();
  run.summary["path"] = m.peierls ? "peierls" : "galerkin";
  if (cmin > 0.0) {
    const HolderFit f = holder_fit(pairs);
    run.summary["alpha"] = f.alpha;
    run.summary["constant"] = f.constant;
    run.summary["fit_residual"] = f.residual;
  } else {
    run.summary["alpha"] = nullptr;
    run.summary["note"] = "zero Hausdorff distance at some delta b; fit skipped";
  }
  return 0;
}

json track_json(const EdgeTrack& tr) {
  json j;
  j["closed"] = tr.closed;
  j["closed_at"] = tr.closed_at ? json(*tr.closed_at) : json(nullptr);
  return j;
}

int cmd_edges(Run& run) {
  const ExperimentConfig& cfg = run.cfg;
  if (cfg.b_grid.empty() && cfg.delta_b.empty()) throw ConfigError("$: edges needs b_grid or b0 with delta_b");
  const Model m = make_model(cfg);
  if (!m.field.is_constant()) run.summary["warning"] = "smooth field: outside the constant-field hypothesis";
  const EdgeSpec& e = cfg.edges;

  if (!cfg.b_grid.empty()) {
    // Finest grid: `refinements` rounds of midpoint insertion; coarser levels subsample it.
    std::vector<double> fine = cfg.b_grid;
    for (int l = 0; l < e.refinements; ++l) {
      std::vector<double> next;
      for (std::size_t i = 0; i < fine.size(); ++i) {
        next.push_back(fine[i]);
        if (i + 1 < fine.size()) next.push_back(0.5 * (fine[i] + fine[i + 1]));
      }
      fine = std::move(next);
    }
    const std::vector<Spectra> sp = spectra_on(m, fine, e, run.ctx.threads);
    json levels = json::array();
    CsvTable ref{{"level", "grid_points", "max_q_E_min", "max_q_E_max", "max_q_edge", "edge_status"}, {}};
    std::vector<double> qmax_top, qmax_edge;
    for (int l = 0; l <= e.refinements; ++l) {
      const std::size_t stride = std::size_t{1} << (e.refinements - l);
      std::vector<SpectrumResult> full, bulk;
      std::vector<double> b;
      for (std::size_t i = 0; i < fine.size(); i += stride) {
        b.push_back(fine[i]);
        full.push_back(sp[i].full);
        bulk.push_back(sp[i].bulk);
      }
      const SweepResult sw = make_sweep(b, full);
      const double q_lo = max_of(difference_quotients(sw.b, sw.e_min));
      const double q_hi = max_of(difference_quotients(sw.b, sw.e_max));
      qmax_top.push_back(q_hi);
      std::string status = "none";
      double q_edge = 0.0;
      std::optional<EdgeTrack> tr;
      if (e.window) {
        tr = track_gap_edge(make_sweep(b, bulk), e.window->first, e.window->second, e.side, e.min_width);
        q_edge = max_of(tr->quotients);
        status = tr->closed ? "closed" : "open";
        qmax_edge.push_back(q_edge);
      }
      ref.add({std::to_string(l), std::to_string(b.size()), fmt(q_lo), fmt(q_hi), fmt(q_edge), status});
      if (l == 0) {
        CsvTable t{{"b", "E_min", "E_max", "gap_edge"}, {}};
        for (std::size_t i = 0; i < b.size(); ++i) {
          std::string edge = "";
          if (tr) edge = i < tr->edges.size() ? fmt(tr->edges[i]) : "closed";
          t.add({fmt(b[i]), fmt(sw.e_min[i]), fmt(sw.e_max[i]), edge});
        }
        run.write("edges.csv", t);
        if (tr) run.summary["edge_track"] = track_json(*tr);
      }
    }
    run.write("edges_refinement.csv", ref);
    run.summary["E_max_quotients_stable"] = quotients_stable(qmax_top, 2.0);
    if (e.window) run.summary["edge_quotients_stable"] = quotients_stable(qmax_edge, 2.0);
  }

  if (!cfg.delta_b.empty()) {
    need_deltas(cfg, true);
    const std::vector<double> deltas = descending(cfg.delta_b);
    std::vector<double> grid{cfg.b0};
    for (auto it = deltas.rbegin(); it != deltas.rend(); ++it) grid.push_back(cfg.b0 + *it);
    const std::vector<Spectra> sp = spectra_on(m, grid, e, run.ctx.threads);
    const Spectra& base = sp[0];
    CsvTable t{{"delta_b", "q_E_min", "q_E_max", "q_edge", "d_H_over_delta_b", "d_H_over_sqrt_delta_b"}, {}};
    std::vector<double> q_top, q_edge, lin, half;
    bool closed = false;
    for (double d : deltas) {
      const auto at = static_cast<std::size_t>(std::find(grid.begin(), grid.end(), cfg.b0 + d) - grid.begin());
      const Spectra& s = sp[at];
      const double qlo = std::abs(s.full.eigenvalues.front() - base.full.eigenvalues.front()) / d;
      const double qhi = std::abs(s.full.eigenvalues.back() - base.full.eigenvalues.back()) / d;
      const double dh = hausdorff(base.full.eigenvalues, s.full.eigenvalues);
      std::string edge = "";
      if (e.window) {
        const EdgeTrack tr = track_gap_edge(make_sweep({cfg.b0, cfg.b0 + d}, {base.bulk, s.bulk}), e.window->first,
                                            e.window->second, e.side, e.min_width);
        if (tr.closed) {
          edge = "closed";
          closed = true;
        } else {
          q_edge.push_back(tr.quotients.front());
          edge = fmt(tr.quotients.front());
        }
      }
      q_top.push_back(qhi);
      lin.push_back(dh / d);
      half.push_back(dh / std::sqrt(d));
      t.add({fmt(d), fmt(qlo), fmt(qhi), edge, fmt(lin.back()), fmt(half.back())});
    }
    run.write("edges_quotients.csv", t);
    json q;
    q["E_max_stable"] = quotients_stable(q_top, 2.0);
    q["E_max_max"] = max_of(q_top);
    if (e.window) {
      q["edge_stable"] = !closed && quotients_stable(q_edge, 2.0);
      q["edge_max"] = max_of(q_edge);
      q["edge_closed"] = closed;
    }
    q["d_H_over_delta_b_growth"] = lin.front() > 0.0 ? lin.back() / lin.front() : 0.0;
    q["d_H_over_sqrt_delta_b_stable"] = quotients_stable(half, 2.0);
    run.summary["quotients"] = q;
  }
  return 0;
}

int cmd_chain(Run& run) {
  need_deltas(run.cfg, false);
  Model m = make_model(run.cfg);
  m.peierls = false;
  const std::vector<double> deltas = descending(run.cfg.delta_b);
  const EdgeSpec& e = run.cfg.edges;
  const std::vector<ChainRow> rows = chain_rows(m, run.cfg.b0, deltas, run.ctx.threads, e.bulk, e.bulk_factor);
  CsvTable t{{"delta_b", "d1", "d2", "d3", "d4", "q1", "q2", "q3", "q4"}, {}};
  double c[4] = {0.0, 0.0, 0.0, 0.0};
  for (const ChainRow& r : rows) {
    t.add({fmt(r.delta_b), fmt(r.d[0]), fmt(r.d[1]), fmt(r.d[2]), fmt(r.d[3]), fmt(r.q[0]), fmt(r.q[1]), fmt(r.q[2]),
           fmt(r.q[3])});
    for (int k = 0; k < 4; ++k) c[k] = std::max(c[k], r.q[k]);
  }
  run.write("chain.csv", t);
  const bool stable = chain_stable(rows);
  run.summary["constants"] = {c[0], c[1], c[2], c[3]};
  run.summary["stable"] = stable;
  run.summary["spectra"] = e.bulk ? "bulk" : "full";
  if (e.bulk) run.summary["stable_full_spectrum"] = chain_stable(chain_rows(m, run.cfg.b0, deltas, run.ctx.threads));
  return stable ? 0 : 1;
}

struct Check {
  std::string name;
  bool hard = true;
  bool pass = true;
  double value = 0.0;
  double tolerance = 0.0;
};

int cmd_verify(Run& run) {
  const ExperimentConfig& cfg = run.cfg;
  const Model m = make_model(cfg);
  std::vector<Check> checks;
  const auto add = [&](std::string name, double value, double tol, bool hard = true) {
    checks.push_back({std::move(name), hard, value <= tol, value, tol});
  };
  std::mt19937_64 rng(cfg.seed);
  const int d = m.symbol.dim;
  const int samples = cfg.verify.samples;

  {
    std::uniform_real_distribution<double> box(-5.0, 5.0);
    std::vector<double> x(static_cast<std::size_t>(d)), y(x.size()), z(x.size()), xy(x.size());
    double anti = 0.0, diag = 0.0, bilin = 0.0;
    for (int n = 0; n < samples; ++n) {
      for (int j = 0; j < d; ++j) {
        x[j] = box(rng);
        y[j] = box(rng);
        z[j] = box(rng);
        xy[j] = x[j] + y[j];
      }
      anti = std::max(anti, std::abs(phi(m.field, x, y) + phi(m.field, y, x)));
      diag = std::max(diag, std::abs(phi(m.field, x, x)));
      if (m.field.is_constant()) {
        bilin = std::max(bilin, std::abs(phi(m.field, xy, z) - phi(m.field, x, z) - phi(m.field, y, z)));
      }
    }
    const double tol = m.field.is_constant() ? 1e-12 : 1e-8;
    add("flux_antisymmetry", anti, tol);
    add("flux_diagonal_zero", diag, tol);
    if (m.field.is_constant()) add("flux_bilinearity", bilin, 1e-12);
    const FieldReport fr = validate_field(m.field, std::min(samples, 100), cfg.seed);
    add("field_antisymmetric", fr.max_antisymmetry, 1e-12);
    add("field_closed", fr.max_closedness, 1e-6);
  }

  if (m.symbol.hermitian) {
    const SymbolReport sr = validate_symbol(m.symbol, std::min(samples, 200), cfg.seed);
    add("symbol_hermitian", sr.hermitian_violation, 1e-12);
  }

  Eigen::MatrixXcd h;
  if (m.peierls) {
    h = m.matrix(cfg.b, run.ctx.threads);
    if (cfg.verify.corrupt_block && h.rows() > 1) h(0, 1) += 1.0;
  } else {
    GeneralizedMatrix g = m.generalized(cfg.b, run.ctx.threads);
    if (cfg.verify.corrupt_block) {
      for (BlockEntry& e : g.entries) {
        if (e.row != e.col) {
          e.block(0, 0) += 1.0;
          break;
        }
      }
    }
    const DecayProfile prof = block_decay(g, 5);
    bool monotone = true;
    for (std::size_t s = 1; s < prof.shells.size(); ++s) monotone = monotone && prof.shells[s].max_norm < prof.shells[s - 1].max_norm;
    add("block_decay_monotone", monotone ? 0.0 : 1.0, 0.0, false);
    h = flatten(g);
  }
  const double hnorm = std::max(h.cwiseAbs().maxCoeff(), 1.0);
  const double defect = (h - h.adjoint()).cwiseAbs().maxCoeff() / hnorm;
  add("matrix_hermitian", defect, 1e-12);
  double residual = std::numeric_limits<double>::infinity();
  try {
    residual = eigen_hermitian(h, 1e-9, cfg.seed).residual_bound;
  } catch (const std::exception&) {
  }
  add("eigen_residual", residual, 1e-9);

  {
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> len(1, 30);
    const auto random_set = [&] {
      std::vector<double> v(static_cast<std::size_t>(len(rng)));
      for (double& x : v) x = g(rng);
      std::sort(v.begin(), v.end());
      return v;
    };
    double sym = 0.0, tri = 0.0;
    for (int n = 0; n < samples; ++n) {
      const auto a = random_set(), b = random_set(), c = random_set();
      sym = std::max(sym, std::abs(hausdorff(a, b) - hausdorff(b, a)));
      tri = std::max(tri, hausdorff(a, c) - hausdorff(a, b) - hausdorff(b, c));
    }
    add("hausdorff_symmetry", sym, 0.0);
    add("hausdorff_triangle", std::max(tri, 0.0), 1e-15);

    double excess = 0.0;
    const int trials = std::min(samples, 200);
    for (int n = 0; n < trials; ++n) {
      Eigen::MatrixXcd a(20, 20), b(20, 20);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a(i) = cplx(g(rng), g(rng));
        b(i) = cplx(g(rng), g(rng));
      }
      const Eigen::MatrixXcd s = 0.5 * (a + a.adjoint());
      const Eigen::MatrixXcd t = 0.5 * (b + b.adjoint());
      const double dh = hausdorff(eigenvalues_hermitian(s).eigenvalues, eigenvalues_hermitian(t).eigenvalues);
      excess = std::max(excess, dh - operator_norm(s - t));
    }
    add("hausdorff_below_operator_norm", std::max(excess, 0.0), 1e-10);
  }

  if (!cfg.epsilons.empty()) {
    AssemblyOptions o;
    o.threads = run.ctx.threads;
    const EpsilonReport er = epsilon_convergence_check(m.symbol, m.field, cfg.b, m.params, cfg.epsilons, o);
    for (std::size_t i = 0; i < er.differences.size(); ++i) {
      const std::string label = er.against_zero ? "epsilon_difference_" + fmt(er.epsilons[i])
                                                : "epsilon_cauchy_" + fmt(er.epsilons[i]);
      checks.push_back({label, false, true, er.differences[i], 0.0});
    }
    add("epsilon_decreasing", er.decreasing ? 0.0 : 1.0, 0.0, false);
    if (!er.note.empty()) run.summary["epsilon_note"] = er.note;
  }

  CsvTable t{{"check", "kind", "status", "value", "tolerance"}, {}};
  bool hard_ok = true;
  json arr = json::array();
  for (const Check& c : checks) {
    const std::string status = c.pass ? "pass" : (c.hard ? "fail" : "warn");
    if (c.hard && !c.pass) hard_ok = false;
    t.add({c.name, c.hard ? "hard" : "soft", status, fmt(c.value), fmt(c.tolerance)});
    arr.push_back({{"check", c.name}, {"hard", c.hard}, {"status", status}, {"value", c.value}});
  }
  run.write("verify.csv", t);
  run.summary["checks"] = arr;
  run.summary["pass"] = hard_ok;
  return hard_ok ? 0 : 1;
}

cplx bump(std::span<const double> x, const std::vector<double>& c, double s) {
  double r2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - c[j]) * (x[j] - c[j]);
  return {std::exp(-r2 / (2.0 * s * s)), 0.0};
}

cplx flattened_form(const Model& m, const TruncationParams& p, double b, const ScalarFunction& f,
                    const ScalarFunction& g, int threads) {
  AssemblyOptions o;
  o.threads = threads;
  const Eigen::MatrixXcd h = flatten(assemble(m.symbol, m.field, b, p, o));
  const double support = p.lattice_radius + 0.5;
  const Eigen::VectorXcd cf = fourier_coefficients(apply_Ub(m.field, b, f, support, p), p.fourier_cutoff);
  const Eigen::VectorXcd cg = fourier_coefficients(apply_Ub(m.field, b, g, support, p), p.fourier_cutoff);
  return cg.dot(h * cf);
}

int cmd_oracle_check(Run& run) {
  const ExperimentConfig& cfg = run.cfg;
  Model m = make_model(cfg);
  if (!m.symbol.is_xi_integrable()) throw ConfigError("$.symbol: oracle-check needs an xi-integrable symbol");
  const OracleSpec& o = cfg.oracle;
  const int d = m.symbol.dim;
  const double s = o.bump_width;
  const double edge = cfg.truncation.lattice_radius + 0.5;
  const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
  std::vector<double> left = origin, right = origin;
  left[0] = -o.far_center;
  right[0] = o.far_center;
  const ScalarFunction centred = [&](std::span<const double> x) { return bump(x, origin, s); };
  const ScalarFunction fl = [&](std::span<const double> x) { return bump(x, left, s); };
  const ScalarFunction fr = [&](std::span<const double> x) { return bump(x, right, s); };

  OracleGrid near;
  near.lower.assign(static_cast<std::size_t>(d), std::max(-6.0 * s, -edge));
  near.upper.assign(static_cast<std::size_t>(d), std::min(6.0 * s, edge));
  near.nodes_per_axis = o.nodes;
  OracleGrid far = near;
  far.lower[0] = std::max(-o.far_center - 6.0 * s, -edge);
  far.upper[0] = std::min(o.far_center + 6.0 * s, edge);
  far.nodes_per_axis = o.far_nodes;

  CsvTable t{{"b", "case", "R", "K", "Q", "flat_re", "flat_im", "oracle_re", "oracle_im", "rel_error", "abs_error"}, {}};
  bool ok = true;
  json per_b = json::array();
  for (double b : o.b_values) {
    const cplx ref = quadratic_form_oracle(m.symbol, m.field, b, 0.0, centred, centred, near, {}, run.ctx.threads);
    double rel[2];
    const TruncationParams* ps[2] = {&cfg.truncation, &o.refine};
    for (int k = 0; k < 2; ++k) {
      const TruncationParams& p = *ps[k];
      const cplx v = flattened_form(m, p, b, centred, centred, run.ctx.threads);
      rel[k] = std::abs(v - ref) / std::abs(ref);
      t.add({fmt(b), k == 0 ? "base" : "refined", std::to_string(p.lattice_radius), std::to_string(p.fourier_cutoff),
             std::to_string(p.space_quad), fmt(v.real()), fmt(v.imag()), fmt(ref.real()), fmt(ref.imag()), fmt(rel[k]),
             fmt(std::abs(v - ref))});
    }
    const cplx far_ref = quadratic_form_oracle(m.symbol, m.field, b, 0.0, fl, fr, far, {}, run.ctx.threads);
    const cplx far_v = flattened_form(m, cfg.truncation, b, fl, fr, run.ctx.threads);
    const double far_abs = std::abs(far_v - far_ref);
    const TruncationParams& p = cfg.truncation;
    t.add({fmt(b), "far", std::to_string(p.lattice_radius), std::to_string(p.fourier_cutoff),
           std::to_string(p.space_quad), fmt(far_v.real()), fmt(far_v.imag()), fmt(far_ref.real()),
           fmt(far_ref.imag()), fmt(std::abs(far_ref) > 0.0 ? far_abs / std::abs(far_ref) : 0.0), fmt(far_abs)});
    const bool pass = rel[0] <= 1e-2 && rel[1] < rel[0] && far_abs <= 1e-6;
    ok = ok && pass;
    per_b.push_back({{"b", b}, {"rel_base", rel[0]}, {"rel_refined", rel[1]}, {"far_abs", far_abs}, {"pass", pass}});
  }
  run.write("oracle_check.csv", t);
  run.summary["cases"] = per_b;
  run.summary["pass"] = ok;
  return ok ? 0 : 1;
}

int cmd_assemble(Run& run) {
  const ExperimentConfig& cfg = run.cfg;
  const Model m = make_model(cfg);
  const GeneralizedMatrix g = m.generalized(cfg.b, run.ctx.threads);
  const IndexCube sites = g.sites();
  std::vector<std::string> header{"row", "col"};
  for (int j = 0; j < g.dim; ++j) header.push_back("gamma_" + std::to_string(j + 1));
  for (int j = 0; j < g.dim; ++j) header.push_back("gammap_" + std::to_string(j + 1));
  for (const char* c : {"phase_re", "phase_im", "block_norm"}) header.emplace_back(c);
  CsvTable t{header, {}};
  for (const BlockEntry& e : g.entries) {
    std::vector<std::string> row{std::to_string(e.row), std::to_string(e.col)};
    for (int j = 0; j < g.dim; ++j) row.push_back(std::to_string(sites[e.row][static_cast<std::size_t>(j)]));
    for (int j = 0; j < g.dim; ++j) row.push_back(std::to_string(sites[e.col][static_cast<std::size_t>(j)]));
    row.push_back(fmt(e.phase.real()));
    row.push_back(fmt(e.phase.imag()));
    row.push_back(fmt(block_norm(e.block).value));
    t.add(std::move(row));
  }
  run.write("assemble.csv", t);
  const std::string key = cache_key(g.symbol_id, g.field_hash, g.b, g.params);
  write_cache(g, run.ctx.out_dir / key);
  run.files.push_back(key);
  const Eigen::MatrixXcd h = flatten(g);
  run.summary["entries"] = g.entries.size();
  run.summary["flat_dim"] = g.flat_dim();
  run.summary["hermitian_defect"] = (h - h.adjoint()).cwiseAbs().maxCoeff();
  return 0;
}

int cmd_spectrum(Run& run) {
  const ExperimentConfig& cfg = run.cfg;
  const Model m = make_model(cfg);
  const Spectra s = spectra_at(m, cfg.b, cfg.edges, run.ctx.threads);
  const std::set<double> bulk(s.bulk.eigenvalues.begin(), s.bulk.eigenvalues.end());
  CsvTable t{{"index", "eigenvalue", "bulk"}, {}};
  for (std::size_t k = 0; k < s.full.eigenvalues.size(); ++k) {
    const double v = s.full.eigenvalues[k];
    t.add({std::to_string(k), fmt(v), bulk.count(v) ? "1" : "0"});
  }
  run.write("spectrum.csv", t);
  json gaps = json::array();
  for (const Gap& g : find_gaps(s.bulk, cfg.edges.min_width)) gaps.push_back({g.left, g.right});
  run.summary["matrix_dim"] = s.full.matrix_dim;
  run.summary["residual"] = s.full.residual_bound;
  run.summary["bulk_gaps"] = gaps;
  return 0;
}

using CommandFn = int (*)(Run&);

const std::vector<std::pair<std::string, CommandFn>>& registry() {
  static const std::vector<std::pair<std::string, CommandFn>> r{
      {"butterfly", cmd_butterfly}, {"holder", cmd_holder},       {"edges", cmd_edges},
      {"chain", cmd_chain},         {"verify", cmd_verify},       {"oracle-check", cmd_oracle_check},
      {"assemble", cmd_assemble},   {"spectrum", cmd_spectrum}};
  return r;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, f] : registry()) n.push_back(k);
    return n;
  }();
  return names;
}

CommandResult run_command(const std::string& name, const ExperimentConfig& cfg, const RunContext& ctx) {
  const auto it = std::find_if(registry().begin(), registry().end(), [&](const auto& p) { return p.first == name; });
  if (it == registry().end()) throw ConfigError("unknown command '" + name + "'");
  std::filesystem::create_directories(ctx.out_dir);
  Run run{cfg, ctx, config_hash(cfg), json::object(), {}};
  const auto start = std::chrono::steady_clock::now();
  CommandResult r;
  r.exit_code = it->second(run);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  run.summary["command"] = name;
  run.summary["config_hash"] = hex64(run.hash);
  run.summary["exit_code"] = r.exit_code;
  run.summary["threads"] = resolve_threads(ctx.threads);
  run.summary["timing_ms"] = ms;
  run.summary["files"] = run.files;
  std::ofstream os(ctx.out_dir / (name + "_summary.json"), std::ios::trunc);
  os << run.summary.dump(2) << '\n';
  r.summary = run.summary;
  return r;
}

}  // namespace hofmat

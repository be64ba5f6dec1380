// Acceptance run: one PASS/FAIL line per criterion. With arguments, runs only
// the listed criterion numbers. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hofmat/assembly.hpp"
#include "hofmat/experiments.hpp"
#include "hofmat/field.hpp"
#include "hofmat/spectral.hpp"
#include "hofmat/symbol.hpp"
#include "oracles/bloch.hpp"
#include "oracles/brute.hpp"

using namespace hofmat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

fs::path out_dir(const std::string& name) {
  const fs::path p = fs::path(HOFMAT_ACCEPT_OUT) / name;
  fs::remove_all(p);
  return p;
}

ExperimentConfig config(const std::string& name) {
  return load_config(fs::path(HOFMAT_SOURCE_DIR) / "configs" / (name + ".json"));
}

Eigen::MatrixXcd random_hermitian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
  return 0.5 * (a + a.adjoint());
}

TruncationParams params(int r, int band, int k, int q) {
  TruncationParams p;
  p.lattice_radius = r;
  p.band_cut = band;
  p.fourier_cutoff = k;
  p.space_quad = q;
  return p;
}

std::vector<std::vector<double>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);  // hash
  std::getline(is, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell.empty() || cell == "closed" ? NAN : std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

Outcome flux_identities() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> uni(-5.0, 5.0);
  Eigen::MatrixXd bm = Eigen::MatrixXd::Zero(2, 2);
  bm(0, 1) = 1.7;
  bm(1, 0) = -1.7;
  const MagneticField c = MagneticField::constant(bm);
  const MagneticField s = MagneticField::cosine_2d(1.0, 0.5, 1.0);
  const MagneticField w = MagneticField::wrap_as_smooth(bm);
  const double c_bound = 1.7;        // |B_12|
  const double s_bound = 1.0 + 0.5;  // sup |B_12(x)|
  double anti_c = 0, anti_s = 0, diag_c = 0, diag_s = 0, bilin = 0, tri_c = 0, tri_s = 0, wrapped = 0;
  std::vector<double> x(2), y(2), z(2), u(2), v(2);
  for (int n = 0; n < 1000; ++n) {
    for (int k = 0; k < 2; ++k) {
      x[k] = uni(rng);
      y[k] = uni(rng);
      z[k] = uni(rng);
      u[k] = x[k] - y[k];
      v[k] = y[k] - z[k];
    }
    anti_c = std::max(anti_c, std::abs(phi(c, x, y) + phi(c, y, x)));
    anti_s = std::max(anti_s, std::abs(phi(s, x, y) + phi(s, y, x)));
    diag_c = std::max(diag_c, std::abs(phi(c, x, x)));
    diag_s = std::max(diag_s, std::abs(phi(s, x, x)));
    bilin = std::max(bilin, std::abs(phi(c, x, y) + phi(c, y, z) - phi(c, x, z) - phi(c, u, v)));
    const double area = 0.5 * std::abs((y[0] - x[0]) * (z[1] - x[1]) - (y[1] - x[1]) * (z[0] - x[0]));
    tri_c = std::max(tri_c, std::abs(triangle_flux(c, x, y, z)) - c_bound * area);
    tri_s = std::max(tri_s, std::abs(triangle_flux(s, x, y, z)) - s_bound * area);
    const double closed = 0.5 * (x[0] * bm(0, 1) * y[1] + x[1] * bm(1, 0) * y[0]);
    wrapped = std::max(wrapped, std::abs(phi(w, x, y) - closed));
  }
  const bool pass = anti_c <= 1e-12 && diag_c <= 1e-12 && bilin <= 1e-12 && tri_c <= 1e-12 && anti_s <= 1e-8 &&
                    diag_s <= 1e-8 && tri_s <= 1e-8 && wrapped <= 1e-12;
  return {pass, "antisym " + num(anti_c) + "/" + num(anti_s) + ", diag " + num(diag_c) + "/" + num(diag_s) +
                    ", bilinearity " + num(bilin) + ", |fl|-C*area " + num(tri_c) + "/" + num(tri_s) +
                    ", wrapped vs closed form " + num(wrapped)};
}

Outcome hermiticity() {
  const MagneticField f = MagneticField::unit_2d();
  const std::vector<Symbol> symbols{harper(2), gaussian_xi(2, 1.0), modulated(2, cos2pi_x1(), 1.0)};
  double worst = 0.0;
  for (const Symbol& s : symbols) {
    for (double b : {0.0, 0.3, 1.0}) {
      const Eigen::MatrixXcd m = flatten(assemble(s, f, b, params(3, 6, 2, 12)));
      worst = std::max(worst, (m - m.adjoint()).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-12, "max |M - M^*| " + num(worst) + " over 3 symbols x 3 fields"};
}

Outcome block_decay_check() {
  const GeneralizedMatrix h = assemble(gaussian_xi(2, 1.0), MagneticField::unit_2d(), 0.5, params(2, 4, 1, 8));
  const DecayProfile prof = block_decay(h, 5);
  bool monotone = true;
  for (std::size_t i = 1; i < prof.shells.size(); ++i) monotone = monotone && prof.shells[i].max_norm < prof.shells[i - 1].max_norm;
  const double constant = prof.max_weighted / prof.diagonal_norm;
  return {monotone && std::isfinite(constant) && prof.exact_norms,
          "weighted max / diagonal " + num(constant) + ", shells " + std::to_string(prof.shells.size()) +
              (monotone ? ", monotone" : ", NOT monotone") + ", fitted exponent " + num(prof.fitted_exponent)};
}

Outcome block_lipschitz_check() {
  const Symbol s = gaussian_xi(2, 1.0);
  const MagneticField f = MagneticField::unit_2d();
  const TruncationParams p = params(2, 4, 1, 8);
  const GeneralizedMatrix h0 = assemble(s, f, 0.5, p);
  std::vector<double> q;
  for (double db : {0.1, 0.05, 0.025}) q.push_back(block_lipschitz(h0, assemble(s, f, 0.5 + db, p), 3));
  return {quotients_stable(q, 2.0), "quotients " + num(q[0]) + ", " + num(q[1]) + ", " + num(q[2])};
}

Outcome oracle_equivalence() {
  const CommandResult r = run_command("oracle-check", config("oracle_check"), {out_dir("oracle_check"), 0});
  std::string detail;
  for (const auto& c : r.summary["cases"]) detail += c.dump() + " ";
  return {r.exit_code == 0 && r.summary["pass"] == true, detail};
}

Outcome hausdorff_below_norm() {
  std::mt19937_64 rng(106);
  int violations = 0;
  double worst = -1e300, tightest = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Eigen::MatrixXcd s = random_hermitian(40, rng);
    // Perturbation scales from 1 down to 1e-6, so both regimes are hit.
    const Eigen::MatrixXcd u = s + std::pow(10.0, -(t % 7)) * random_hermitian(40, rng);
    const double dh = hausdorff(eigenvalues_hermitian(s).eigenvalues, eigenvalues_hermitian(u).eigenvalues);
    const double gap = dh - operator_norm(s - u);
    worst = std::max(worst, gap);
    tightest = std::max(tightest, dh / operator_norm(s - u));
    if (gap > 1e-10) ++violations;
  }
  return {violations == 0, std::to_string(violations) + " violations, max d_H - ||S-T|| " + num(worst) +
                               ", max d_H / ||S-T|| " + num(tightest)};
}

Outcome hausdorff_oracle() {
  std::mt19937_64 rng(107);
  std::uniform_int_distribution<int> size(1, 40);
  std::uniform_real_distribution<double> uni(-10.0, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    for (auto& v : a) v = uni(rng);
    for (auto& v : b) v = uni(rng);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    worst = std::max(worst, std::abs(hausdorff(a, b) - oracle::hausdorff_brute(a, b)));
  }
  return {worst <= 1e-15, "max difference " + num(worst)};
}

// Max deviation of the bulk spectrum's hull and gap edges from the Bloch bands.
double bloch_error(int p, int q, int r, bool& structure_ok) {
  const Eigen::MatrixXcd m = peierls_matrix(harper(2).hopping().hops, MagneticField::unit_2d(), 2.0 * kPi * p / q, r);
  const SpectrumResult bulk = bulk_spectrum(eigen_hermitian(m), IndexCube(2, r), 1, r / 2);
  const auto bands = oracle::harper_bands(p, q);
  double lo = 1e300, hi = -1e300;
  for (const auto& band : bands) {
    lo = std::min(lo, band.lo);
    hi = std::max(hi, band.hi);
  }
  double err = std::max(std::abs(bulk.eigenvalues.front() - lo), std::abs(bulk.eigenvalues.back() - hi));
  const GapList gaps = find_gaps(bulk, 0.3);
  const auto ref = oracle::band_gaps(bands, 0.3);
  structure_ok = gaps.size() == ref.size();
  for (std::size_t i = 0; structure_ok && i < gaps.size(); ++i) {
    err = std::max(err, std::abs(gaps[i].left - ref[i].lo));
    err = std::max(err, std::abs(gaps[i].right - ref[i].hi));
  }
  return err;
}

Outcome bloch_oracle() {
  bool pass = true;
  std::string detail;
  for (auto [p, q] : {std::pair{1, 2}, std::pair{1, 3}}) {
    bool ok16 = false, ok8 = false;
    const double e16 = bloch_error(p, q, 16, ok16);
    const double e8 = bloch_error(p, q, 8, ok8);
    pass = pass && ok16 && e16 <= 0.15 && e16 < e8;
    detail += std::to_string(p) + "/" + std::to_string(q) + ": R=16 " + num(e16) + ", R=8 " + num(e8) +
              (ok16 ? "" : " (gap count mismatch)") + "; ";
  }
  return {pass, detail};
}

Outcome holder() {
  const CommandResult r = run_command("holder", config("holder"), {out_dir("holder"), 0});
  const json& s = r.summary;
  if (s["alpha"].is_null()) return {false, "fit skipped"};
  const double c = s["c_star"], ratio = s["c_star_ratio"], alpha = s["alpha"];
  return {std::isfinite(c) && ratio <= 3.0 && alpha >= 0.4,
          "C* " + num(c) + ", max/min " + num(ratio) + ", alpha " + num(alpha)};
}

Outcome lipschitz_edges() {
  const fs::path dir = out_dir("edges");
  const CommandResult r = run_command("edges", config("edges"), {dir, 0});
  const json& q = r.summary["quotients"];
  const auto rows = read_csv(dir / "edges_quotients.csv");
  bool growing = true;
  double half_lo = 1e300, half_hi = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) growing = growing && rows[i][4] > rows[i - 1][4];
    half_lo = std::min(half_lo, rows[i][5]);
    half_hi = std::max(half_hi, rows[i][5]);
  }
  const bool pass = q["E_max_stable"] == true && q["edge_stable"] == true && q["d_H_over_sqrt_delta_b_stable"] == true &&
                    growing;
  return {pass, "E_max stable " + q["E_max_stable"].dump() + ", edge stable " + q["edge_stable"].dump() +
                    ", d_H/db growth " + num(q["d_H_over_delta_b_growth"]) + (growing ? " (monotone)" : " (not monotone)") +
                    ", d_H/sqrt(db) spread " + num(half_hi / half_lo)};
}

Outcome chain() {
  const CommandResult r = run_command("chain", config("chain"), {out_dir("chain"), 0});
  return {r.exit_code == 0 && r.summary["stable"] == true,
          "constants " + r.summary["constants"].dump() + ", spectra " + r.summary["spectra"].get<std::string>()};
}

// Agreement, and spectrum of the filtered T against {0} plus the window eigenvalues.
void riesz_case(const Eigen::MatrixXcd& m, double lo, double hi, double& agree, double& spec) {
  RieszOptions opt;
  opt.n_quad = 1024;
  const RieszResult r = riesz_project(m, 0.5 * (lo + hi), 0.5 * (hi - lo), opt);
  agree = std::max(agree, r.agreement);
  std::vector<double> expect(static_cast<std::size_t>(m.rows()) - r.window_eigenvalues.size(), 0.0);
  expect.insert(expect.end(), r.window_eigenvalues.begin(), r.window_eigenvalues.end());
  std::sort(expect.begin(), expect.end());
  const auto got = eigenvalues_hermitian(r.t_filter).eigenvalues;
  const double norm = operator_norm(m);
  for (std::size_t i = 0; i < got.size(); ++i) spec = std::max(spec, std::abs(got[i] - expect[i]) / norm);
}

Outcome riesz() {
  std::mt19937_64 rng(7);
  double agree = 0.0, spec = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXcd m = random_hermitian(20, rng);
    const auto ev = eigenvalues_hermitian(m).eigenvalues;
    const double margin = 0.5 * (ev[15] - ev[14]);
    riesz_case(m, ev[15] - margin, ev[19] + margin, agree, spec);
  }
  const double random_agree = agree;
  // Peierls matrix: window from the widest spectral gap to past the top.
  const Eigen::MatrixXcd m = peierls_matrix(harper(2).hopping().hops, MagneticField::unit_2d(), 2.0 * kPi / 3.0, 6);
  const auto ev = eigenvalues_hermitian(m).eigenvalues;
  std::size_t at = 1;
  for (std::size_t i = 1; i < ev.size(); ++i)
    if (ev[i] - ev[i - 1] > ev[at] - ev[at - 1]) at = i;
  const double margin = 0.5 * (ev[at] - ev[at - 1]);
  double peierls_agree = 0.0;
  riesz_case(m, ev[at] - margin, ev.back() + margin, peierls_agree, spec);
  return {random_agree <= 1e-6 && peierls_agree <= 1e-6 && spec <= 1e-12,
          "random max " + num(random_agree) + ", Peierls (gap " + num(2.0 * margin) + ") " + num(peierls_agree) +
              ", sigma(T) deviation " + num(spec)};
}

Outcome epsilon() {
  const EpsilonReport r =
      epsilon_convergence_check(gaussian_xi(2, 1.0, 32), MagneticField::unit_2d(), 0.5, params(1, 1, 0, 5), {0.2, 0.1, 0.05});
  bool strict = r.against_zero && r.differences.size() == 3;
  for (std::size_t i = 1; strict && i < r.differences.size(); ++i) strict = r.differences[i] < r.differences[i - 1];
  std::string detail = "||H_eps - H_0||:";
  for (double d : r.differences) detail += " " + num(d);
  return {strict, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const std::string cfg = (fs::path(HOFMAT_SOURCE_DIR) / "configs" / "determinism.json").string();
  const std::vector<std::string> commands{"butterfly", "assemble", "spectrum"};
  std::vector<fs::path> runs;
  for (int threads : {1, 1, 4, 4}) {
    const fs::path dir = out_dir("determinism_" + std::to_string(runs.size()));
    for (const auto& c : commands) {
      const std::string cmd = std::string("\"") + HOFMAT_CLI + "\" " + c + " --config \"" + cfg + "\" --out \"" +
                              dir.string() + "\" --threads " + std::to_string(threads) + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    runs.push_back(dir);
  }
  int files = 0;
  for (const auto& entry : fs::directory_iterator(runs[0])) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    const std::string ref = slurp(entry.path());
    for (std::size_t i = 1; i < runs.size(); ++i) {
      if (slurp(runs[i] / entry.path().filename()) != ref)
        return {false, entry.path().filename().string() + " differs in run " + std::to_string(i)};
    }
  }
  return {files == 3, std::to_string(files) + " CSV files identical over 2 reruns x threads {1, 4}"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"flux identities", flux_identities},
      {"hermiticity", hermiticity},
      {"block decay", block_decay_check},
      {"block Lipschitz", block_lipschitz_check},
      {"oracle equivalence", oracle_equivalence},
      {"d_H <= operator norm", hausdorff_below_norm},
      {"Hausdorff oracle", hausdorff_oracle},
      {"Bloch oracle", bloch_oracle},
      {"Hoelder continuity", holder},
      {"Lipschitz edges", lipschitz_edges},
      {"four-step chain", chain},
      {"Riesz projection", riesz},
      {"epsilon convergence", epsilon},
      {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  int failures = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "no criterion " << id << "\n";
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), sec);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures;
}

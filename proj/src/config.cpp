#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hofmat/experiments.hpp"
#include "hofmat/util.hpp"

namespace hofmat {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path, "expected a finite number");
  return x;
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::vector<double> as_doubles(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// Visits the known keys of an object and rejects the rest.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <class F>
  void take(const std::string& key, F&& f) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it != j_.end()) f(*it, path_ + "." + key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!known_.count(k)) fail(path_ + "." + k, "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

TruncationParams parse_truncation(const json& j, const std::string& path, TruncationParams p) {
  Fields f(j, path);
  f.take("R", [&](const json& v, const std::string& at) { p.lattice_radius = as_int(v, at); });
  f.take("N_band", [&](const json& v, const std::string& at) { p.band_cut = as_int(v, at); });
  f.take("K", [&](const json& v, const std::string& at) { p.fourier_cutoff = as_int(v, at); });
  f.take("Q", [&](const json& v, const std::string& at) { p.space_quad = as_int(v, at); });
  f.take("epsilon", [&](const json& v, const std::string& at) { p.epsilon = as_double(v, at); });
  f.finish();
  if (!f.has("N_band")) p.band_cut = std::min(p.band_cut, 2 * p.lattice_radius);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return p;
}

SymbolSpec parse_symbol(const json& j, const std::string& path) {
  SymbolSpec s;
  Fields f(j, path);
  f.take("name", [&](const json& v, const std::string& at) { s.name = as_string(v, at); });
  f.take("dim", [&](const json& v, const std::string& at) { s.dim = as_int(v, at); });
  f.take("width", [&](const json& v, const std::string& at) { s.width = as_double(v, at); });
  f.take("grid_points", [&](const json& v, const std::string& at) { s.grid_points = as_int(v, at); });
  f.take("tail_tol", [&](const json& v, const std::string& at) { s.tail_tol = as_double(v, at); });
  f.take("potential", [&](const json& v, const std::string& at) { s.potential = as_string(v, at); });
  f.take("hops", [&](const json& v, const std::string& at) {
    if (!v.is_array()) fail(at, "expected an array of hops");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string hp = at + "[" + std::to_string(i) + "]";
      Hop hop;
      double re = 0.0, im = 0.0;
      Fields hf(v[i], hp);
      hf.take("shift", [&](const json& sv, const std::string& sat) {
        if (!sv.is_array()) fail(sat, "expected an integer array");
        for (std::size_t k = 0; k < sv.size(); ++k) hop.shift.push_back(as_int(sv[k], sat + "[" + std::to_string(k) + "]"));
      });
      hf.take("re", [&](const json& cv, const std::string& cat) { re = as_double(cv, cat); });
      hf.take("im", [&](const json& cv, const std::string& cat) { im = as_double(cv, cat); });
      hf.finish();
      hop.coeff = cplx{re, im};
      s.hops.push_back(std::move(hop));
    }
  });
  f.finish();
  static const std::set<std::string> names{"harper", "gaussian_xi", "modulated", "hopping"};
  if (!names.count(s.name)) fail(path + ".name", "unknown symbol '" + s.name + "'");
  if (s.dim < 1) fail(path + ".dim", "must be >= 1");
  if (s.name == "hopping" && s.hops.empty()) fail(path + ".hops", "required for hopping symbols");
  if (s.name == "modulated" && s.potential != "cos2pi_x1" && s.potential != "one") {
    fail(path + ".potential", "unknown potential '" + s.potential + "'");
  }
  return s;
}

FieldSpec parse_field(const json& j, const std::string& path, int dim) {
  FieldSpec s;
  std::optional<double> b12;
  Fields f(j, path);
  f.take("kind", [&](const json& v, const std::string& at) { s.kind = as_string(v, at); });
  f.take("B12", [&](const json& v, const std::string& at) { b12 = as_double(v, at); });
  f.take("matrix", [&](const json& v, const std::string& at) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(dim)) fail(at, "expected a dim x dim array");
    s.matrix.resize(dim, dim);
    for (int r = 0; r < dim; ++r) {
      const std::vector<double> row = as_doubles(v[static_cast<std::size_t>(r)], at + "[" + std::to_string(r) + "]");
      if (row.size() != static_cast<std::size_t>(dim)) fail(at, "expected a dim x dim array");
      for (int c = 0; c < dim; ++c) s.matrix(r, c) = row[static_cast<std::size_t>(c)];
    }
  });
  f.take("base", [&](const json& v, const std::string& at) { s.base = as_double(v, at); });
  f.take("amplitude", [&](const json& v, const std::string& at) { s.amplitude = as_double(v, at); });
  f.take("frequency", [&](const json& v, const std::string& at) { s.frequency = as_double(v, at); });
  f.finish();
  if (s.kind != "constant" && s.kind != "cosine" && s.kind != "wrapped") fail(path + ".kind", "unknown field kind");
  if (s.kind == "cosine" && dim != 2) fail(path + ".kind", "cosine fields are two-dimensional");
  if (b12 && s.matrix.size() > 0) fail(path, "give either B12 or matrix");
  if (b12 && dim != 2) fail(path + ".B12", "only for dim = 2");
  if (s.matrix.size() == 0) {
    s.matrix = Eigen::MatrixXd::Zero(dim, dim);
    if (dim >= 2) {
      s.matrix(0, 1) = b12.value_or(1.0);
      s.matrix(1, 0) = -s.matrix(0, 1);
    }
  }
  if ((s.matrix + s.matrix.transpose()).cwiseAbs().maxCoeff() > 0.0) fail(path + ".matrix", "must be antisymmetric");
  return s;
}

std::vector<double> parse_grid(const json& v, const std::string& path) {
  if (v.is_array()) return as_doubles(v, path);
  double start = 0.0, stop = 0.0;
  int count = 0;
  Fields f(v, path);
  f.take("start", [&](const json& x, const std::string& at) { start = as_double(x, at); });
  f.take("stop", [&](const json& x, const std::string& at) { stop = as_double(x, at); });
  f.take("count", [&](const json& x, const std::string& at) { count = as_int(x, at); });
  f.finish();
  if (count < 1) fail(path + ".count", "must be >= 1");
  std::vector<double> g;
  for (int i = 0; i < count; ++i) {
    g.push_back(count == 1 ? start : start + (stop - start) * static_cast<double>(i) / (count - 1));
  }
  return g;
}

void check_b(double b, double b_max, const std::string& path) {
  if (!(b >= 0.0 && b <= b_max)) fail(path, "b = " + format_double(b) + " outside [0, b_max]");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  c.source = j;
  Fields f(j, "$");
  f.take("symbol", [&](const json& v, const std::string& at) { c.symbol = parse_symbol(v, at); });
  f.take("field", [&](const json& v, const std::string& at) { c.field = parse_field(v, at, c.symbol.dim); });
  if (!f.has("field")) c.field = parse_field(json::object(), "$.field", c.symbol.dim);
  f.take("path", [&](const json& v, const std::string& at) {
    c.path = as_string(v, at);
    if (c.path != "auto" && c.path != "peierls" && c.path != "galerkin") fail(at, "expected auto, peierls or galerkin");
  });
  f.take("b_max", [&](const json& v, const std::string& at) {
    c.b_max = as_double(v, at);
    if (!(c.b_max > 0.0)) fail(at, "must be positive");
  });
  f.take("b_grid", [&](const json& v, const std::string& at) { c.b_grid = parse_grid(v, at); });
  f.take("b", [&](const json& v, const std::string& at) { c.b = as_double(v, at); });
  f.take("b0", [&](const json& v, const std::string& at) { c.b0 = as_double(v, at); });
  f.take("delta_b", [&](const json& v, const std::string& at) { c.delta_b = as_doubles(v, at); });
  f.take("truncation", [&](const json& v, const std::string& at) { c.truncation = parse_truncation(v, at, c.truncation); });
  f.take("output", [&](const json& v, const std::string& at) { c.output = as_string(v, at); });
  f.take("seed", [&](const json& v, const std::string& at) {
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(at, "expected a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  });
  f.take("threads", [&](const json& v, const std::string& at) {
    c.threads = as_int(v, at);
    if (c.threads < 0) fail(at, "must be >= 0");
  });
  f.take("epsilons", [&](const json& v, const std::string& at) {
    c.epsilons = as_doubles(v, at);
    for (double e : c.epsilons) {
      if (!(e > 0.0)) fail(at, "entries must be positive");
    }
    for (std::size_t i = 1; i < c.epsilons.size(); ++i) {
      if (!(c.epsilons[i] < c.epsilons[i - 1])) fail(at, "must be strictly decreasing");
    }
  });
  f.take("edges", [&](const json& v, const std::string& at) {
    Fields e(v, at);
    e.take("window", [&](const json& w, const std::string& wat) {
      const std::vector<double> lim = as_doubles(w, wat);
      if (lim.size() != 2 || !(lim[1] > lim[0])) fail(wat, "expected [lo, hi] with lo < hi");
      c.edges.window = std::make_pair(lim[0], lim[1]);
    });
    e.take("side", [&](const json& s, const std::string& sat) {
      const std::string side = as_string(s, sat);
      if (side == "lower") c.edges.side = EdgeSide::Lower;
      else if (side == "upper") c.edges.side = EdgeSide::Upper;
      else fail(sat, "expected lower or upper");
    });
    e.take("min_width", [&](const json& x, const std::string& xat) { c.edges.min_width = as_double(x, xat); });
    e.take("bulk", [&](const json& x, const std::string& xat) { c.edges.bulk = as_bool(x, xat); });
    e.take("bulk_factor", [&](const json& x, const std::string& xat) { c.edges.bulk_factor = as_double(x, xat); });
    e.take("refinements", [&](const json& x, const std::string& xat) {
      c.edges.refinements = as_int(x, xat);
      if (c.edges.refinements < 0) fail(xat, "must be >= 0");
    });
    e.finish();
  });
  c.oracle.refine = c.truncation;
  f.take("oracle", [&](const json& v, const std::string& at) {
    Fields o(v, at);
    o.take("bump_width", [&](const json& x, const std::string& xat) {
      c.oracle.bump_width = as_double(x, xat);
      if (!(c.oracle.bump_width > 0.0)) fail(xat, "must be positive");
    });
    o.take("far_center", [&](const json& x, const std::string& xat) { c.oracle.far_center = as_double(x, xat); });
    o.take("nodes", [&](const json& x, const std::string& xat) { c.oracle.nodes = as_int(x, xat); });
    o.take("far_nodes", [&](const json& x, const std::string& xat) { c.oracle.far_nodes = as_int(x, xat); });
    o.take("refine", [&](const json& x, const std::string& xat) { c.oracle.refine = parse_truncation(x, xat, c.truncation); });
    o.take("b_values", [&](const json& x, const std::string& xat) { c.oracle.b_values = as_doubles(x, xat); });
    o.finish();
  });
  f.take("verify", [&](const json& v, const std::string& at) {
    Fields o(v, at);
    o.take("corrupt_block", [&](const json& x, const std::string& xat) { c.verify.corrupt_block = as_bool(x, xat); });
    o.take("samples", [&](const json& x, const std::string& xat) {
      c.verify.samples = as_int(x, xat);
      if (c.verify.samples < 1) fail(xat, "must be >= 1");
    });
    o.finish();
  });
  f.finish();

  for (std::size_t i = 0; i < c.b_grid.size(); ++i) {
    check_b(c.b_grid[i], c.b_max, "$.b_grid[" + std::to_string(i) + "]");
    if (i > 0 && !(c.b_grid[i] > c.b_grid[i - 1])) fail("$.b_grid", "must be strictly increasing");
  }
  check_b(c.b, c.b_max, "$.b");
  check_b(c.b0, c.b_max, "$.b0");
  for (std::size_t i = 0; i < c.delta_b.size(); ++i) {
    const std::string at = "$.delta_b[" + std::to_string(i) + "]";
    if (!(c.delta_b[i] >= 0.0)) fail(at, "must be >= 0");
    check_b(c.b0 + c.delta_b[i], c.b_max, at);
  }
  for (std::size_t i = 0; i < c.oracle.b_values.size(); ++i) {
    check_b(c.oracle.b_values[i], c.b_max, "$.oracle.b_values[" + std::to_string(i) + "]");
  }
  if (c.symbol.name == "harper" && c.symbol.dim < 2) fail("$.symbol.dim", "harper needs dim >= 2");
  for (const Hop& h : c.symbol.hops) {
    if (h.shift.size() != static_cast<std::size_t>(c.symbol.dim)) fail("$.symbol.hops", "shift length must equal dim");
  }
  if (c.path == "peierls" && c.symbol.name != "harper" && c.symbol.name != "hopping") {
    fail("$.path", "the Peierls path needs a hopping symbol");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at > 0 ? at - 1 : 0), '\n');
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  return parse_config(j);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = cfg.source;
  if (j.is_object()) {
    j.erase("output");
    j.erase("threads");
  }
  Fnv1a h;
  h.add(std::string_view(j.dump()));
  h.add(cfg.seed);
  return h.value();
}

Symbol make_symbol(const SymbolSpec& s) {
  if (s.name == "harper") return harper(s.dim);
  if (s.name == "gaussian_xi") return gaussian_xi(s.dim, s.width, s.grid_points, s.tail_tol);
  if (s.name == "modulated") {
    const Potential pot =
        s.potential == "one" ? Potential{"one", [](std::span<const double>) { return 1.0; }} : cos2pi_x1();
    return modulated(s.dim, pot, s.width, s.grid_points, s.tail_tol);
  }
  return hopping_symbol(s.dim, s.hops, "hopping");
}

MagneticField make_field(const FieldSpec& s, int dim) {
  if (s.kind == "cosine") return MagneticField::cosine_2d(s.base, s.amplitude, s.frequency);
  if (s.kind == "wrapped") return MagneticField::wrap_as_smooth(s.matrix);
  if (s.matrix.rows() != dim) throw ConfigError("$.field: dimension mismatch");
  return MagneticField::constant(s.matrix);
}

}  // namespace hofmat

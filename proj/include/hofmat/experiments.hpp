#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hofmat/assembly.hpp"
#include "hofmat/field.hpp"
#include "hofmat/spectral.hpp"
#include "hofmat/symbol.hpp"

namespace hofmat {

/// Bad configuration file or value; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SymbolSpec {
  std::string name = "harper";  // harper | gaussian_xi | modulated | hopping
  int dim = 2;
  double width = 1.0;
  int grid_points = 64;
  double tail_tol = 1e-12;
  std::string potential = "cos2pi_x1";
  std::vector<Hop> hops;
};

struct FieldSpec {
  std::string kind = "constant";  // constant | cosine | wrapped
  Eigen::MatrixXd matrix;
  double base = 1.0;
  double amplitude = 0.2;
  double frequency = 1.0;
};

struct EdgeSpec {
  std::optional<std::pair<double, double>> window;
  EdgeSide side = EdgeSide::Lower;
  double min_width = 0.05;
  bool bulk = true;
  double bulk_factor = 0.5;
  int refinements = 2;
};

struct OracleSpec {
  double bump_width = 0.2;
  double far_center = 2.5;
  int nodes = 48;
  int far_nodes = 96;
  TruncationParams refine;
  std::vector<double> b_values{0.0, 0.3};
};

struct VerifySpec {
  bool corrupt_block = false;
  int samples = 200;
};

struct ExperimentConfig {
  SymbolSpec symbol;
  FieldSpec field;
  std::string path = "auto";  // auto | peierls | galerkin
  double b_max = 8.0;
  std::vector<double> b_grid;
  double b = 0.0;
  double b0 = 0.0;
  std::vector<double> delta_b;
  TruncationParams truncation;
  std::string output = "out";
  std::uint64_t seed = 1;
  int threads = 0;
  EdgeSpec edges;
  OracleSpec oracle;
  VerifySpec verify;
  std::vector<double> epsilons;

  nlohmann::json source;  // parsed input, for hashing
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical dump without `output` and `threads`, plus the seed.
std::uint64_t config_hash(const ExperimentConfig& cfg);

Symbol make_symbol(const SymbolSpec& spec);
MagneticField make_field(const FieldSpec& spec, int dim);

/// Symbol, field and truncation of one experiment, with the matrix path resolved.
struct Model {
  Symbol symbol;
  MagneticField field;
  TruncationParams params;
  bool peierls = false;

  Eigen::MatrixXcd matrix(double b, int threads = 1) const;
  GeneralizedMatrix generalized(double b, int threads = 1) const;
  std::size_t block_size() const;
};

Model make_model(const ExperimentConfig& cfg);

/// Rows of the four-step comparison at b0 for each delta b:
///   d[0] = d_H(H_{b0+db}, rephase(H_{b0}, db))
///   d[1] = d_H(rephase(H_{b0}, db), truncate(rephase(H_{b0}, db), db))
///   d[2] = d_H(truncate(rephase(H_{b0}, db), db), truncate(H_{b0}, db))
///   d[3] = d_H(truncate(H_{b0}, db), H_{b0})
/// q divides by db, db, sqrt(db), db (0 when db = 0). With `bulk`, spectra
/// are restricted to eigenvectors living on the inner half of the box.
struct ChainRow {
  double delta_b = 0.0;
  double d[4] = {0.0, 0.0, 0.0, 0.0};
  double q[4] = {0.0, 0.0, 0.0, 0.0};
};

std::vector<ChainRow> chain_rows(const Model& model, double b0, const std::vector<double>& deltas, int threads = 1,
                                 bool bulk = false, double bulk_factor = 0.5);

/// Every step's quotients stay within a factor 2 of their first value.
bool chain_stable(const std::vector<ChainRow>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  /// "# config_hash=<hex>" line, header row, then rows; LF line ends.
  void write(const std::filesystem::path& path, std::uint64_t hash) const;
};

struct RunContext {
  std::filesystem::path out_dir = "out";
  int threads = 0;
};

struct CommandResult {
  int exit_code = 0;
  nlohmann::json summary;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand, writes its CSV files and `<name>_summary.json` into
/// ctx.out_dir. Exit codes: 0 success, 1 invariant failure. ConfigError
/// propagates.
CommandResult run_command(const std::string& name, const ExperimentConfig& cfg, const RunContext& ctx);

}  // namespace hofmat

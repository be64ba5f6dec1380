#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "hofmat/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generalized Hofstadter matrices: assembly, spectra and regularity in b"};
  app.require_subcommand(1, 1);
  std::string config;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  for (const std::string& name : hofmat::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON experiment file")->required();
    sub->add_option("--out", out, "output directory (default: config 'output')");
    sub->add_option("--threads", threads, "worker threads; overrides HOFMAT_THREADS")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "seed for randomized checks");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    hofmat::ExperimentConfig cfg = hofmat::load_config(config);
    if (seed) cfg.seed = *seed;
    hofmat::RunContext ctx;
    ctx.out_dir = out ? *out : cfg.output;
    if (threads) {
      ctx.threads = *threads;
    } else if (const char* env = std::getenv("HOFMAT_THREADS"); env && *env) {
      ctx.threads = 0;  // resolved from the environment
    } else {
      ctx.threads = cfg.threads;
    }
    const hofmat::CommandResult r = hofmat::run_command(name, cfg, ctx);
    std::cout << r.summary.dump() << '\n';
    return r.exit_code;
  } catch (const hofmat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

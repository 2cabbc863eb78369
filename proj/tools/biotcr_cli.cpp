// biotcr: command line front end for the experiment drivers.

#include <CLI11.hpp>
#include <iostream>

#include "biotcr/app.hpp"

using namespace biotcr;

namespace {

ExperimentConfig load_with_override(const std::string& path, const std::string& out) {
  ExperimentConfig cfg = load_config(path);
  if (!out.empty()) cfg.out_dir = out;
  return cfg;
}

void list_files(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cerr << "wrote " << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locking-free Biot discretization with Crouzeix-Raviart displacements and dG pressures"};
  app.require_subcommand(1);

  std::string config, out;
  auto* solve = app.add_subcommand("solve", "solve one manufactured problem and export the fields");
  solve->add_option("--config", config, "INI configuration")->required()->check(CLI::ExistingFile);
  solve->add_option("--out", out, "output directory (overrides [output] dir)");

  auto* conv = app.add_subcommand("convergence", "ERR and rates over mesh levels");
  conv->add_option("--config", config, "INI configuration")->required()->check(CLI::ExistingFile);
  conv->add_option("--out", out, "output directory (overrides [output] dir)");

  auto* sweep = app.add_subcommand("sweep", "ERR, quasi-optimality and inf-sup over a parameter grid");
  sweep->add_option("--config", config, "INI configuration")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "output directory (overrides [output] dir)");

  std::string pair, mesh_kind;
  int levels = 0, n = 0;
  auto* infsup = app.add_subcommand("infsup", "discrete inf-sup constants on levels 1..n");
  infsup->add_option("--pair", pair, "div_CR_P0, div_contP1_P0, mass_P0_dG, mass_P0_P0dGnorm, global_B_weighted")
      ->required();
  infsup->add_option("--mesh", mesh_kind, "right-split or crisscross")->required();
  infsup->add_option("--levels", levels, "finest level (n = 2^level)")->required();
  infsup->add_option("--config", config, "optional INI file for [params] and [dg]")->check(CLI::ExistingFile);
  infsup->add_option("--out", out, "CSV file for the table");

  auto* modes = app.add_subcommand("modes", "checkerboard mode on a crisscross mesh");
  modes->add_option("--mesh", mesh_kind, "crisscross")->required();
  modes->add_option("--n", n, "cells per side")->required();
  modes->add_option("--out", out, "output directory for CSV and VTK files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) {
      const SolveOutcome r = run_solve(load_with_override(config, out));
      write_csv(r.summary, std::cout);
      list_files(r.files);
    } else if (*conv) {
      const ConvergenceOutcome r = run_convergence(load_with_override(config, out));
      write_csv(r.table, std::cout);
      list_files(r.files);
    } else if (*sweep) {
      const SweepOutcome r = run_sweep(load_with_override(config, out));
      write_csv(r.table, std::cout);
      list_files(r.files);
      if (r.failures) std::cerr << r.failures << " grid point(s) failed, see the status column\n";
    } else if (*infsup) {
      ExperimentConfig cfg;
      if (!config.empty()) cfg = load_config(config);
      const Table t =
          run_infsup(parse_infsup_pair(pair), parse_structured_kind(mesh_kind), levels, cfg.params, cfg.dg);
      write_csv(t, std::cout);
      if (!out.empty()) {
        write_csv(t, out);
        list_files({out});
      }
    } else if (*modes) {
      if (parse_structured_kind(mesh_kind) != StructuredKind::crisscross)
        throw ConfigError("modes: the checkerboard mode needs --mesh crisscross");
      const ModesOutcome r = run_modes(n, out);
      write_csv(r.diagnostics, std::cout);
      list_files(r.files);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

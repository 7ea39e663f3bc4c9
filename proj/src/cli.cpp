#include "layerstack/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "layerstack/config.hpp"
#include "layerstack/errors.hpp"
#include "layerstack/output.hpp"
#include "layerstack/studies.hpp"

namespace layerstack {

namespace {

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct CommonOptions {
  std::string config_path;
  bool serial = false;
  std::optional<double> theta;
  std::optional<double> tol;
  std::optional<double> tol_sub;
  std::optional<int> max_iter;
  std::optional<double> h;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON problem configuration")->required();
  cmd->add_flag("--serial", o.serial, "Single-threaded, deterministic run");
  cmd->add_option("--theta", o.theta, "Override solver.theta");
  cmd->add_option("--tol", o.tol, "Override solver.tol");
  cmd->add_option("--tol-sub", o.tol_sub, "Override solver.tol_sub");
  cmd->add_option("--max-iter", o.max_iter, "Override solver.max_iter");
  cmd->add_option("--mesh-h", o.h, "Override the mesh size h");
}

ProblemConfig load(const CommonOptions& o) {
  ProblemConfig c = load_config(o.config_path);
  if (o.serial) c.serial = true;
  if (o.theta) c.solver.theta = *o.theta;
  if (o.tol) c.solver.tol = *o.tol;
  if (o.tol_sub) c.solver.tol_sub = *o.tol_sub;
  if (o.max_iter) c.solver.max_iter = *o.max_iter;
  if (o.h) c.problem.geometry.h = *o.h;
  if (!(c.solver.theta > 0.0) || !(c.solver.tol > 0.0) || !(c.solver.tol_sub > 0.0) || c.solver.max_iter < 1 ||
      !(c.problem.geometry.h > 0.0)) {
    throw ConfigError("command line", "overrides must be positive");
  }
  return c;
}

int command_run(const CommonOptions& o, const std::optional<std::string>& out_dir, std::ostream& out) {
  const ProblemConfig config = load(o);
  const std::filesystem::path dir = out_dir ? *out_dir : config.output_directory;
  const StudyRun run = run_study(config);
  std::vector<std::string> files;
  for (const auto& p : write_vtk(run.problem.mesh, run.result.fields, dir)) files.push_back(p.filename().string());
  write_history_csv(run.result.history, run.problem.interface_count(), run.problem.layer_count(), dir / "history.csv");
  files.push_back("history.csv");
  write_text_file(dir / "summary.json", summary_json(config, run, files));

  const auto& h = run.result.history;
  out << (h.converged ? "converged" : h.diverged ? "diverged" : "not converged") << " after " << h.iterations.size()
      << " iterations";
  if (!h.iterations.empty()) out << ", rel_change " << format(h.iterations.back().rel_change);
  out << '\n';
  for (std::size_t i = 0; i < run.stick_slip.size(); ++i) {
    out << "interface " << i + 1 << ": slip area fraction " << format(run.stick_slip[i].slip_area_fraction) << '\n';
  }
  if (!h.note.empty()) out << "note: " << h.note << '\n';
  out << "wrote " << dir.string() << '\n';
  return h.converged ? kExitOk : kExitNotConverged;
}

int command_sweep(const CommonOptions& o, const std::vector<double>& thetas, const std::string& path,
                  std::ostream& out) {
  const ProblemConfig config = load(o);
  const auto rows = sweep_theta(config, thetas);
  write_text_file(path, theta_sweep_csv(rows));
  for (const auto& row : rows) {
    out << "theta " << format(row.theta) << ": "
        << (row.converged ? std::to_string(row.iterations) + " iterations"
                          : std::string(row.diverged ? "diverged" : "no convergence"))
        << '\n';
  }
  return kExitOk;
}

int command_mesh(const CommonOptions& o, const std::vector<double>& hs, double reference_h, const std::string& path,
                 std::ostream& out) {
  const ProblemConfig config = load(o);
  const MeshConvergence study = mesh_convergence(config, hs, reference_h);
  write_text_file(path, mesh_convergence_csv(study));
  for (const auto& row : study.rows) {
    out << "h " << format(row.h) << ": relative energy error " << format(row.total_error) << '\n';
  }
  return kExitOk;
}

int command_oracle(const CommonOptions& o, std::ostream& out) {
  const ProblemConfig config = load(o);
  const OracleComparison cmp = oracle_compare(config);
  out << "LD iterations " << cmp.iterations << (cmp.converged ? " (converged)" : " (not converged)") << '\n';
  out << "relative energy-norm difference " << format(cmp.relative_difference) << '\n';
  out << "certificates: LD " << format(cmp.ld_certificate) << ", monolithic " << format(cmp.monolithic_certificate)
      << '\n';
  return cmp.converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layered elastic contact solver with friction (layer decomposition)", "layerstack"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, mesh_opts, oracle_opts;
  std::optional<std::string> run_out;
  std::vector<double> thetas;
  std::string sweep_out, mesh_out;
  std::vector<double> h_list;
  double reference_h = 0.0;

  CLI::App* run = app.add_subcommand("run", "Solve one configuration; write VTK, history CSV and summary JSON");
  add_common(run, run_opts);
  run->add_option("--out", run_out, "Output directory (default: output.directory of the config)");

  CLI::App* sweep = app.add_subcommand("sweep-theta", "Iterations to converge for each relaxation parameter");
  add_common(sweep, sweep_opts);
  sweep->add_option("--thetas", thetas, "Comma-separated theta values")->required()->delimiter(',');
  sweep->add_option("--out", sweep_out, "CSV output file")->required();

  CLI::App* mesh = app.add_subcommand("mesh-convergence", "Relative energy errors against a fine reference mesh");
  add_common(mesh, mesh_opts);
  mesh->add_option("--h-list", h_list, "Comma-separated mesh sizes")->required()->delimiter(',');
  mesh->add_option("--reference-h", reference_h, "Reference mesh size")->required();
  mesh->add_option("--out", mesh_out, "CSV output file")->required();

  CLI::App* oracle = app.add_subcommand("oracle-compare", "Compare LD against the monolithic contact solve");
  add_common(oracle, oracle_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (run->parsed()) return command_run(run_opts, run_out, out);
    if (sweep->parsed()) return command_sweep(sweep_opts, thetas, sweep_out, out);
    if (mesh->parsed()) {
      if (!(reference_h > 0.0)) throw ConfigError("--reference-h", "must be > 0");
      return command_mesh(mesh_opts, h_list, reference_h, mesh_out, out);
    }
    if (oracle->parsed()) return command_oracle(oracle_opts, out);
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitNotConverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace layerstack

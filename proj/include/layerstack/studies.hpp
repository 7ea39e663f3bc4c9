#pragma once

#include <span>
#include <string>
#include <vector>

#include "layerstack/config.hpp"
#include "layerstack/ld.hpp"

namespace layerstack {

// Jumps at or below this fraction of the domain diameter count as stick.
inline constexpr double kStickSlipTolerance = 1e-8;

// Threads for a config: 1 when serial, config.solver.threads when positive, else the default.
int resolve_threads(const ProblemConfig& config);

struct StudyRun {
  LayeredProblem problem;
  LdResult result;
  std::vector<StickSlipReport> stick_slip;  // per interface
  double seconds = 0.0;
};

StudyRun run_study(const ProblemConfig& config);

// Summary document for a finished run; `files` lists the artifacts written alongside it.
std::string summary_json(const ProblemConfig& config, const StudyRun& run, const std::vector<std::string>& files);

struct ThetaSweepRow {
  double theta = 0.0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  double seconds = 0.0;
};

// One LD run per theta on the same assembled problem.
std::vector<ThetaSweepRow> sweep_theta(const ProblemConfig& config, std::span<const double> thetas);
// theta,iterations,converged,diverged,seconds; iterations is "inf" for runs that did not converge.
std::string theta_sweep_csv(const std::vector<ThetaSweepRow>& rows);

struct MeshConvergenceRow {
  double h = 0.0;
  int nodes = 0;
  int iterations = 0;
  double total_error = 0.0;
  std::vector<double> layer_errors;
};

struct MeshConvergence {
  double reference_h = 0.0;
  int reference_nodes = 0;
  std::vector<MeshConvergenceRow> rows;
};

// Coarse-mesh P1 field evaluated at the nodes of a finer layer mesh covering the same box.
std::vector<double> transfer_field(const LayerMesh& from, std::span<const double> field, const LayerMesh& to);

// Relative energy errors ||u_h - u_ref||_E / ||u_ref||_E, measured on the reference mesh after
// transferring u_h to it. Throws SolverError when a run does not converge.
MeshConvergence mesh_convergence(const ProblemConfig& config, std::span<const double> h_list, double reference_h);
// h,nodes,iterations,error_total,error_layer_1..n
std::string mesh_convergence_csv(const MeshConvergence& study);

struct OracleComparison {
  double relative_difference = 0.0;  // energy norm of (LD - monolithic) over that of monolithic
  int iterations = 0;
  bool converged = false;
  double ld_certificate = 0.0;
  double monolithic_certificate = 0.0;
  double seconds = 0.0;
};

OracleComparison oracle_compare(const ProblemConfig& config);

}  // namespace layerstack

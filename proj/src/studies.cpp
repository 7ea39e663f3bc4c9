#include "layerstack/studies.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "layerstack/errors.hpp"
#include "layerstack/parallel.hpp"

namespace layerstack {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

LdConfig solver_config(const ProblemConfig& config) {
  LdConfig s = config.solver;
  s.threads = resolve_threads(config);
  return s;
}

}  // namespace

int resolve_threads(const ProblemConfig& config) {
  if (config.serial) return 1;
  if (config.solver.threads > 0) return config.solver.threads;
  return default_thread_count();
}

StudyRun run_study(const ProblemConfig& config) {
  const auto start = Clock::now();
  const LdConfig solver = solver_config(config);
  StudyRun run{build_layered_problem(config.problem, solver.threads), {}, {}, 0.0};
  run.result = ld_run(run.problem, solver);
  const double tol_slip = kStickSlipTolerance * run.problem.domain_scale();
  for (int i = 0; i < run.problem.interface_count(); ++i) {
    run.stick_slip.push_back(
        classify_stick_slip(run.problem, run.result.fields[i], run.result.fields[i + 1], i, tol_slip));
  }
  run.seconds = seconds_since(start);
  return run;
}

std::string summary_json(const ProblemConfig& config, const StudyRun& run, const std::vector<std::string>& files) {
  const LayeredProblem& p = run.problem;
  const LdResult& r = run.result;
  json doc;
  doc["description"] = config.description;
  doc["converged"] = r.history.converged;
  doc["diverged"] = r.history.diverged;
  doc["note"] = r.history.note;
  doc["iterations"] = r.history.iterations.size();
  doc["final_rel_change"] = r.history.iterations.empty() ? 0.0 : r.history.iterations.back().rel_change;
  doc["theta"] = config.solver.theta;
  doc["tol"] = config.solver.tol;
  doc["tol_sub"] = config.solver.tol_sub;
  doc["tol_lin"] = config.solver.tol_lin;
  doc["stopping_norm"] =
      "concatenated nodal l2 norm of the interface increment over that of lambda; absolute test "
      "(increment < tol * domain diameter) when ||lambda|| < 1e-14";
  doc["subproblem_solver"] = "block Gauss-Seidel with nodal proximal steps and active-set Newton polish";
  doc["inner_tolerances_reported_by_source"] = false;
  doc["total_sweeps"] = r.total_sweeps;
  std::vector<long long> per_layer(static_cast<std::size_t>(p.layer_count()), 0);
  for (const auto& it : r.history.iterations) {
    for (std::size_t l = 0; l < it.sweeps.size() && l < per_layer.size(); ++l) per_layer[l] += it.sweeps[l];
  }
  doc["sweeps_per_layer"] = per_layer;
  doc["min_certificate"] = r.min_certificate;
  doc["certified_solves"] = r.certified_solves;

  json mesh;
  const LayerMesh& first = p.mesh.layers.front();
  mesh["h_requested"] = config.problem.geometry.h;
  mesh["h_x"] = (first.x_extent[1] - first.x_extent[0]) / first.cells[0];
  mesh["h_y"] = (first.y_extent[1] - first.y_extent[0]) / first.cells[1];
  json hz = json::array();
  for (const auto& layer : p.mesh.layers) hz.push_back((layer.z_top - layer.z_bottom) / layer.cells[2]);
  mesh["h_z_per_layer"] = hz;
  mesh["nodes"] = p.mesh.total_nodes();
  int tets = 0;
  for (const auto& layer : p.mesh.layers) tets += static_cast<int>(layer.tets.size());
  mesh["tetrahedra"] = tets;
  doc["mesh"] = mesh;

  json contact = json::array();
  for (std::size_t i = 0; i < run.stick_slip.size(); ++i) {
    const auto& s = run.stick_slip[i];
    int slip = 0;
    for (auto status : s.status) slip += status == ContactStatus::kSlip ? 1 : 0;
    contact.push_back({{"interface", i + 1},
                       {"slip_area_fraction", s.slip_area_fraction},
                       {"stick_area_fraction", 1.0 - s.slip_area_fraction},
                       {"slip_nodes", slip},
                       {"stick_nodes", static_cast<int>(s.status.size()) - slip}});
  }
  doc["stick_slip"] = contact;
  doc["stick_slip_tolerance"] = kStickSlipTolerance * p.domain_scale();

  doc["energy_norm"] = energy_norm(p, r.fields);
  doc["potential_energy"] = potential_energy(p, r.fields);
  double umax = 0.0;
  Vec3 where = Vec3::Zero();
  for (int l = 0; l < p.layer_count(); ++l) {
    const auto& u = r.fields[l];
    for (int k = 0; k < p.mesh.layers[l].node_count(); ++k) {
      const double m = std::sqrt(u[3 * k] * u[3 * k] + u[3 * k + 1] * u[3 * k + 1] + u[3 * k + 2] * u[3 * k + 2]);
      if (m > umax) {
        umax = m;
        where = p.mesh.layers[l].nodes[k];
      }
    }
  }
  doc["max_displacement"] = {{"magnitude", umax}, {"at", {where[0], where[1], where[2]}}};
  doc["seconds"] = run.seconds;
  doc["files"] = files;
  return doc.dump(2) + "\n";
}

std::vector<ThetaSweepRow> sweep_theta(const ProblemConfig& config, std::span<const double> thetas) {
  LdConfig solver = solver_config(config);
  const LayeredProblem problem = build_layered_problem(config.problem, solver.threads);
  std::vector<ThetaSweepRow> rows;
  for (double theta : thetas) {
    if (!(theta > 0.0)) throw InvalidInputError("theta must be > 0");
    const auto start = Clock::now();
    solver.theta = theta;
    const LdResult r = ld_run(problem, solver);
    rows.push_back({theta, static_cast<int>(r.history.iterations.size()), r.history.converged, r.history.diverged,
                    seconds_since(start)});
  }
  return rows;
}

std::string theta_sweep_csv(const std::vector<ThetaSweepRow>& rows) {
  std::ostringstream out;
  out << "theta,iterations,converged,diverged,seconds\n";
  for (const auto& row : rows) {
    out << format(row.theta) << ',' << (row.converged ? std::to_string(row.iterations) : std::string("inf")) << ','
        << (row.converged ? 1 : 0) << ',' << (row.diverged ? 1 : 0) << ',' << format(row.seconds) << '\n';
  }
  return out.str();
}

std::vector<double> transfer_field(const LayerMesh& from, std::span<const double> field, const LayerMesh& to) {
  if (field.size() != static_cast<std::size_t>(from.dof_count())) {
    throw InvalidInputError("field size does not match the source mesh");
  }
  std::vector<double> out(static_cast<std::size_t>(to.dof_count()), 0.0);
  for (int k = 0; k < to.node_count(); ++k) {
    const PointLocation loc = locate_point(from, to.nodes[k]);
    for (int v = 0; v < 4; ++v) {
      for (int c = 0; c < 3; ++c) out[3 * k + c] += loc.weights[v] * field[3 * loc.nodes[v] + c];
    }
  }
  return out;
}

MeshConvergence mesh_convergence(const ProblemConfig& config, std::span<const double> h_list, double reference_h) {
  const LdConfig solver = solver_config(config);
  const auto solve_at = [&](double h, LayeredProblem& problem) {
    ProblemDefinition def = config.problem;
    def.geometry.h = h;
    problem = build_layered_problem(def, solver.threads);
    LdResult r = ld_run(problem, solver);
    if (!r.history.converged) {
      throw SolverError("LD did not converge at h = " + format(h) + (r.history.note.empty() ? "" : ": " + r.history.note),
                        {});
    }
    return r;
  };

  MeshConvergence study;
  study.reference_h = reference_h;
  LayeredProblem ref_problem;
  const LdResult ref = solve_at(reference_h, ref_problem);
  study.reference_nodes = ref_problem.mesh.total_nodes();
  const int n = ref_problem.layer_count();
  std::vector<double> ref_norms(static_cast<std::size_t>(n));
  double ref_total = 0.0;
  for (int l = 0; l < n; ++l) {
    ref_norms[l] = layer_energy_norm(ref_problem.layers[l], ref.fields[l]);
    ref_total += ref_norms[l] * ref_norms[l];
  }
  ref_total = std::sqrt(ref_total);

  for (double h : h_list) {
    LayeredProblem problem;
    const LdResult r = solve_at(h, problem);
    MeshConvergenceRow row;
    row.h = h;
    row.nodes = problem.mesh.total_nodes();
    row.iterations = static_cast<int>(r.history.iterations.size());
    double total = 0.0;
    for (int l = 0; l < n; ++l) {
      std::vector<double> diff = transfer_field(problem.mesh.layers[l], r.fields[l], ref_problem.mesh.layers[l]);
      for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = ref.fields[l][k] - diff[k];
      const double e = layer_energy_norm(ref_problem.layers[l], diff);
      total += e * e;
      row.layer_errors.push_back(ref_norms[l] > 0.0 ? e / ref_norms[l] : e);
    }
    row.total_error = ref_total > 0.0 ? std::sqrt(total) / ref_total : std::sqrt(total);
    study.rows.push_back(std::move(row));
  }
  return study;
}

std::string mesh_convergence_csv(const MeshConvergence& study) {
  std::ostringstream out;
  out << "# reference h " << format(study.reference_h) << ", " << study.reference_nodes << " nodes\n";
  out << "h,nodes,iterations,error_total";
  const std::size_t n = study.rows.empty() ? 0 : study.rows.front().layer_errors.size();
  for (std::size_t l = 1; l <= n; ++l) out << ",error_layer_" << l;
  out << '\n';
  for (const auto& row : study.rows) {
    out << format(row.h) << ',' << row.nodes << ',' << row.iterations << ',' << format(row.total_error);
    for (double e : row.layer_errors) out << ',' << format(e);
    out << '\n';
  }
  return out.str();
}

OracleComparison oracle_compare(const ProblemConfig& config) {
  const auto start = Clock::now();
  const LdConfig solver = solver_config(config);
  const LayeredProblem problem = build_layered_problem(config.problem, solver.threads);
  const CoupledSolution mono = solve_monolithic(problem, solver.tol_sub, solver.max_sweeps);
  const LdResult ld = ld_run(problem, solver);
  OracleComparison out;
  std::vector<std::vector<double>> diff = ld.fields;
  for (std::size_t l = 0; l < diff.size(); ++l) {
    for (std::size_t k = 0; k < diff[l].size(); ++k) diff[l][k] -= mono.fields[l][k];
  }
  const double scale = energy_norm(problem, mono.fields);
  out.relative_difference = scale > 0.0 ? energy_norm(problem, diff) / scale : energy_norm(problem, diff);
  out.iterations = static_cast<int>(ld.history.iterations.size());
  out.converged = ld.history.converged;
  out.ld_certificate = ld.min_certificate;
  out.monolithic_certificate = certify_coupled(problem, mono.fields);
  out.seconds = seconds_since(start);
  return out;
}

}  // namespace layerstack

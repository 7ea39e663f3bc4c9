#include "layerstack/ld.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "layerstack/errors.hpp"
#include "layerstack/parallel.hpp"

namespace layerstack {

InterfaceState InterfaceState::zeros(const LayeredProblem& problem) {
  InterfaceState s;
  for (int i = 0; i < problem.interface_count(); ++i) {
    s.lambda.emplace_back(problem.pinned[i].size(), Vec3::Zero());
    s.pinned.push_back(problem.pinned[i]);
  }
  return s;
}

std::vector<double> InterfaceState::interface_norms() const {
  std::vector<double> norms;
  for (const auto& field : lambda) {
    double sum = 0.0;
    for (const auto& v : field) sum += v.squaredNorm();
    norms.push_back(std::sqrt(sum));
  }
  return norms;
}

double InterfaceState::norm() const {
  double sum = 0.0;
  for (const auto& field : lambda) {
    for (const auto& v : field) sum += v.squaredNorm();
  }
  return std::sqrt(sum);
}

double distance(const InterfaceState& a, const InterfaceState& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.lambda.size(); ++i) {
    for (std::size_t q = 0; q < a.lambda[i].size(); ++q) sum += (a.lambda[i][q] - b.lambda[i][q]).squaredNorm();
  }
  return std::sqrt(sum);
}

namespace {

const std::vector<int>& side_nodes(const LayerSystem& system, InterfaceSide side) {
  return side == InterfaceSide::kBottom ? system.bottom_interface_nodes : system.top_interface_nodes;
}

}  // namespace

std::vector<Vec3> residual_traction(const LayerSystem& system, std::span<const double> u,
                                    std::span<const double> load, InterfaceSide side) {
  const auto& nodes = side_nodes(system, side);
  std::vector<Vec3> r(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    for (int i = 0; i < 3; ++i) {
      const int dof = 3 * nodes[q] + i;
      r[q][i] = system.stiffness.row_dot(dof, u) - load[dof];
    }
  }
  return r;
}

std::vector<Vec3> interface_trace(const LayerSystem& system, std::span<const double> u, InterfaceSide side) {
  const auto& nodes = side_nodes(system, side);
  std::vector<Vec3> t(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) t[q] = Vec3(u[3 * nodes[q]], u[3 * nodes[q] + 1], u[3 * nodes[q] + 2]);
  return t;
}

AuxiliaryProblem::AuxiliaryProblem(const LayerSystem& system, std::vector<int> pinned_nodes,
                                   std::vector<int> loaded_nodes, bool direct, double tol_lin)
    : loaded_nodes_(std::move(loaded_nodes)), direct_(direct), tol_lin_(tol_lin) {
  std::vector<int> dofs = system.dirichlet_dofs;
  for (int node : pinned_nodes) {
    for (int i = 0; i < 3; ++i) dofs.push_back(3 * node + i);
  }
  const std::vector<double> zeros_d(dofs.size(), 0.0);
  const std::vector<double> zeros_n(static_cast<std::size_t>(system.stiffness.size()), 0.0);
  split_ = apply_dirichlet(system.stiffness, zeros_n, dofs, zeros_d);
  if (direct_) factor_ = SparseCholesky(split_.matrix);
}

std::vector<double> AuxiliaryProblem::solve(std::span<const Vec3> nodal_loads) const {
  if (nodal_loads.size() != loaded_nodes_.size()) throw InvalidInputError("one load per loaded node");
  std::vector<double> b(split_.matrix.size(), 0.0);
  for (std::size_t q = 0; q < loaded_nodes_.size(); ++q) {
    for (int i = 0; i < 3; ++i) {
      const int k = split_.reduced_index[3 * loaded_nodes_[q] + i];
      if (k >= 0) b[k] += nodal_loads[q][i];
    }
  }
  std::vector<double> x = direct_ ? factor_.solve(b) : solve_spd(split_.matrix, b, tol_lin_).x;
  return split_.expand(x);
}

namespace {

std::vector<Vec3> half_sum(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) throw InvalidInputError("traction sizes differ");
  std::vector<Vec3> out(a.size());
  for (std::size_t q = 0; q < a.size(); ++q) out[q] = 0.5 * (a[q] + b[q]);
  return out;
}

void check_interface(const LayeredProblem& problem, int interface) {
  if (interface < 0 || interface >= problem.interface_count()) throw InvalidInputError("interface index out of range");
}

AuxiliaryProblem make_p_aux(const LayeredProblem& problem, int i, double tol_lin) {
  const LayerSystem& sys = problem.layers[i + 1];
  return AuxiliaryProblem(sys, sys.bottom_interface_nodes, sys.top_interface_nodes, true, tol_lin);
}

AuxiliaryProblem make_q_aux(const LayeredProblem& problem, int i, double tol_lin) {
  const LayerSystem& sys = problem.layers[i];
  return AuxiliaryProblem(sys, sys.top_interface_nodes, sys.bottom_interface_nodes, true, tol_lin);
}

}  // namespace

std::vector<double> solve_p_aux(const LayeredProblem& problem, int interface, std::span<const Vec3> r_upper,
                                std::span<const Vec3> r_lower) {
  check_interface(problem, interface);
  return make_p_aux(problem, interface, 1e-10).solve(half_sum(r_upper, r_lower));
}

std::vector<double> solve_q_aux(const LayeredProblem& problem, int interface, std::span<const Vec3> r_upper,
                                std::span<const Vec3> r_lower) {
  check_interface(problem, interface);
  return make_q_aux(problem, interface, 1e-10).solve(half_sum(r_upper, r_lower));
}

InterfaceState update_lambda(const InterfaceState& state, const std::vector<std::vector<Vec3>>& p_traces,
                             const std::vector<std::vector<Vec3>>& q_traces, double theta) {
  InterfaceState next = state;
  for (std::size_t i = 0; i < next.lambda.size(); ++i) {
    for (std::size_t q = 0; q < next.lambda[i].size(); ++q) {
      if (next.pinned[i][q]) {
        next.lambda[i][q].setZero();
      } else {
        next.lambda[i][q] -= theta * (p_traces[i][q] + q_traces[i][q]);
      }
    }
  }
  return next;
}

std::vector<double> discrete_extension(const LayeredProblem& problem, std::span<const Vec3> phi, int layer,
                                       int interface) {
  check_interface(problem, interface);
  if (layer != interface && layer != interface + 1) throw InvalidInputError("layer does not touch the interface");
  const LayerSystem& sys = problem.layers[layer];
  const auto& nodes = layer == interface ? sys.bottom_interface_nodes : sys.top_interface_nodes;
  if (phi.size() != nodes.size()) throw InvalidInputError("one value per interface pair is required");
  std::vector<int> dofs = sys.dirichlet_dofs;
  std::vector<double> values = sys.dirichlet_values;
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    if (problem.pinned[interface][q]) continue;
    for (int i = 0; i < 3; ++i) {
      dofs.push_back(3 * nodes[q] + i);
      values.push_back(phi[q][i]);
    }
  }
  const std::vector<double> zeros(static_cast<std::size_t>(sys.stiffness.size()), 0.0);
  const ReducedSystem split = apply_dirichlet(sys.stiffness, zeros, dofs, values);
  return split.expand(SparseCholesky(split.matrix).solve(split.rhs));
}

double trace_norm(const LayeredProblem& problem, std::span<const Vec3> phi, int interface, int layer) {
  const auto u = discrete_extension(problem, phi, layer, interface);
  const auto ku = problem.layers[layer].stiffness.multiply(u);
  double e = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) e += u[k] * ku[k];
  return std::sqrt(std::max(e, 0.0));
}

StickSlipReport classify_stick_slip(const LayeredProblem& problem, std::span<const double> u_upper,
                                    std::span<const double> u_lower, int interface, double tol_slip) {
  check_interface(problem, interface);
  const auto& pairs = problem.mesh.interfaces[interface];
  const auto area = friction_weights(problem.mesh, interface, FrictionBound{1.0, {}});
  StickSlipReport report;
  double slip_area = 0.0;
  double total_area = 0.0;
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const int a = pairs[q].first;
    const int b = pairs[q].second;
    const double s = std::hypot(u_upper[3 * a] - u_lower[3 * b], u_upper[3 * a + 1] - u_lower[3 * b + 1]);
    const bool slipping = s > tol_slip;
    report.slip.push_back(s);
    report.status.push_back(slipping ? ContactStatus::kSlip : ContactStatus::kStick);
    total_area += area[q];
    if (slipping) slip_area += area[q];
  }
  report.slip_area_fraction = total_area > 0.0 ? slip_area / total_area : 0.0;
  return report;
}

double layer_energy_norm(const LayerSystem& system, std::span<const double> u) {
  const auto ku = system.stiffness.multiply(u);
  double e = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) e += u[k] * ku[k];
  return std::sqrt(std::max(e, 0.0) / 2.0);
}

double energy_norm(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields) {
  double sum = 0.0;
  for (int l = 0; l < problem.layer_count(); ++l) {
    const double e = layer_energy_norm(problem.layers[l], fields[l]);
    sum += e * e;
  }
  return std::sqrt(sum);
}

double potential_energy(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields) {
  double energy = 0.0;
  for (int l = 0; l < problem.layer_count(); ++l) {
    const auto& u = fields[l];
    const auto ku = problem.layers[l].stiffness.multiply(u);
    const auto load = problem.layers[l].total_load();
    for (std::size_t k = 0; k < u.size(); ++k) energy += 0.5 * u[k] * ku[k] - load[k] * u[k];
  }
  for (int i = 0; i < problem.interface_count(); ++i) {
    const auto& pairs = problem.mesh.interfaces[i];
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      const int a = pairs[q].first;
      const int b = pairs[q].second;
      energy += problem.friction[i][q] * std::hypot(fields[i][3 * a] - fields[i + 1][3 * b],
                                                    fields[i][3 * a + 1] - fields[i + 1][3 * b + 1]);
    }
  }
  return energy;
}

namespace {

// Per-run solver state: factorized layer subproblems and auxiliary problems.
class Decomposition {
 public:
  Decomposition(const LayeredProblem& problem, const LdConfig& config) : problem_(problem), config_(config) {
    const int n = problem.layer_count();
    free_pairs_.resize(static_cast<std::size_t>(problem.interface_count()));
    for (int i = 0; i < problem.interface_count(); ++i) {
      for (std::size_t q = 0; q < problem.pinned[i].size(); ++q) {
        if (!problem.pinned[i][q]) free_pairs_[i].push_back(static_cast<int>(q));
      }
    }
    for (int l = 0; l < n; ++l) {
      const LayerSystem& sys = problem.layers[l];
      loads_.push_back(sys.total_load());
      std::vector<int> contact, prescribed;
      std::vector<double> weights;
      if (l < n - 1) {
        for (int q : free_pairs_[l]) {
          contact.push_back(sys.bottom_interface_nodes[q]);
          weights.push_back(problem.friction[l][q]);
        }
      }
      if (l > 0) {
        for (int q : free_pairs_[l - 1]) prescribed.push_back(sys.top_interface_nodes[q]);
      }
      subproblems_.push_back(std::make_unique<LayerSubproblem>(sys, contact, weights, prescribed));
    }
    for (int i = 0; i < problem.interface_count(); ++i) {
      p_aux_.push_back(make_p_aux(problem, i, config.tol_lin));
      q_aux_.push_back(make_q_aux(problem, i, config.tol_lin));
    }
  }

  // Solves all layer subproblems for the given interface data; returns per-layer sweep counts.
  std::vector<int> solve_layers(const InterfaceState& state, std::vector<std::vector<double>>& fields) {
    const int n = problem_.layer_count();
    fields.resize(static_cast<std::size_t>(n));
    std::vector<int> sweeps(static_cast<std::size_t>(n), 0);
    ContactSolveOptions options;
    options.tol = config_.tol_sub;
    options.max_sweeps = config_.max_sweeps;
    parallel_for(n, config_.threads, [&](int l) {
      std::vector<Vec3> below, above;
      if (l < n - 1) {
        for (int q : free_pairs_[l]) below.push_back(state.lambda[l][q]);
      }
      if (l > 0) {
        for (int q : free_pairs_[l - 1]) above.push_back(state.lambda[l - 1][q]);
      }
      SubproblemResult r = subproblems_[l]->solve(loads_[l], below, above, options);
      fields[l] = std::move(r.u);
      sweeps[l] = r.stats.sweeps;
    });
    return sweeps;
  }

  double certify(const std::vector<std::vector<double>>& fields) const {
    double worst = 0.0;
    for (int l = 0; l < problem_.layer_count(); ++l) {
      const auto& sub = *subproblems_[l];
      worst = std::min(worst, certify_vi(sub.last_problem(), sub.reduce(fields[l])));
    }
    return worst;
  }

  // Traces of p and q on every interface.
  void corrections(const std::vector<std::vector<double>>& fields, std::vector<std::vector<Vec3>>& p_traces,
                   std::vector<std::vector<Vec3>>& q_traces) const {
    const int m = problem_.interface_count();
    p_traces.assign(static_cast<std::size_t>(m), {});
    q_traces.assign(static_cast<std::size_t>(m), {});
    std::vector<std::vector<Vec3>> loads(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const auto r_upper = residual_traction(problem_.layers[i], fields[i], loads_[i], InterfaceSide::kBottom);
      const auto r_lower =
          residual_traction(problem_.layers[i + 1], fields[i + 1], loads_[i + 1], InterfaceSide::kTop);
      loads[i] = half_sum(r_upper, r_lower);
    }
    parallel_for(2 * m, config_.threads, [&](int task) {
      const int i = task / 2;
      if (task % 2 == 0) {
        const auto p = p_aux_[i].solve(loads[i]);
        p_traces[i] = interface_trace(problem_.layers[i + 1], p, InterfaceSide::kTop);
      } else {
        const auto q = q_aux_[i].solve(loads[i]);
        q_traces[i] = interface_trace(problem_.layers[i], q, InterfaceSide::kBottom);
      }
    });
  }

 private:
  const LayeredProblem& problem_;
  const LdConfig& config_;
  std::vector<std::vector<int>> free_pairs_;
  std::vector<std::vector<double>> loads_;
  std::vector<std::unique_ptr<LayerSubproblem>> subproblems_;
  std::vector<AuxiliaryProblem> p_aux_;
  std::vector<AuxiliaryProblem> q_aux_;
};

bool finite(const InterfaceState& s) {
  for (const auto& field : s.lambda) {
    for (const auto& v : field) {
      if (!v.allFinite()) return false;
    }
  }
  return true;
}

}  // namespace

LdResult ld_run(const LayeredProblem& problem, const LdConfig& config, const std::optional<InterfaceState>& initial) {
  if (!(config.theta > 0.0)) throw InvalidInputError("theta must be positive");
  if (!(config.tol > 0.0)) throw InvalidInputError("tol must be positive");
  if (config.max_iter < 1) throw InvalidInputError("max_iter must be at least 1");

  Decomposition ld(problem, config);
  LdResult result;
  result.state = initial ? *initial : InterfaceState::zeros(problem);
  auto& history = result.history;
  const double scale = problem.domain_scale();
  int growth_streak = 0;
  double last_increment = std::numeric_limits<double>::infinity();

  for (int k = 1; k <= config.max_iter; ++k) {
    LdIteration it;
    it.iter = k;
    try {
      it.sweeps = ld.solve_layers(result.state, result.fields);
    } catch (const SolverError& e) {
      history.note = std::string("subproblem solve failed at iteration ") + std::to_string(k) + ": " + e.what();
      history.diverged = growth_streak >= 5;
      return result;
    }
    for (int s : it.sweeps) result.total_sweeps += s;

    std::vector<std::vector<Vec3>> p_traces, q_traces;
    ld.corrections(result.fields, p_traces, q_traces);
    InterfaceState next = update_lambda(result.state, p_traces, q_traces, config.theta);

    it.increment = distance(next, result.state);
    const double next_norm = next.norm();
    const bool tiny = next_norm < 1e-14;
    it.rel_change = tiny ? it.increment / scale : it.increment / next_norm;
    it.energy = potential_energy(problem, result.fields);
    it.interface_norms = next.interface_norms();

    const bool converged = tiny ? it.increment < config.tol * scale : it.rel_change < config.tol;
    if (converged || k == config.max_iter || config.certify_every_iteration) {
      result.min_certificate = std::min(result.min_certificate, ld.certify(result.fields));
      ++result.certified_solves;
    }
    growth_streak = it.increment > last_increment ? growth_streak + 1 : 0;
    last_increment = it.increment;
    history.iterations.push_back(std::move(it));
    result.state = std::move(next);

    if (converged) {
      history.converged = true;
      return result;
    }
    if (!finite(result.state) || !std::isfinite(history.iterations.back().increment)) {
      history.diverged = true;
      history.note = "interface data became non-finite at iteration " + std::to_string(k);
      return result;
    }
    if (growth_streak >= config.divergence_window) {
      history.diverged = true;
      std::ostringstream msg;
      msg << "increment grew for " << growth_streak << " consecutive iterations (iterations "
          << k - growth_streak + 1 << "-" << k << ")";
      history.note = msg.str();
      return result;
    }
  }
  history.note = "max_iter reached without convergence";
  return result;
}

}  // namespace layerstack

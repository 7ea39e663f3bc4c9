#include <algorithm>
#include <string>

#include "layerstack/errors.hpp"
#include "layerstack/vi_solver.hpp"

namespace layerstack {

LayerSubproblem::LayerSubproblem(const LayerSystem& system, std::vector<int> contact_nodes,
                                 std::vector<double> weights, std::vector<int> prescribed_nodes)
    : system_(&system),
      contact_nodes_(std::move(contact_nodes)),
      weights_(std::move(weights)),
      prescribed_nodes_(std::move(prescribed_nodes)) {
  if (weights_.size() != contact_nodes_.size()) throw InvalidInputError("one friction weight per contact node");
  const int n = system.stiffness.size();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (int d : system.dirichlet_dofs) fixed[d] = 1;
  std::vector<int> dofs = system.dirichlet_dofs;
  for (int node : prescribed_nodes_) {
    for (int i = 0; i < 3; ++i) {
      if (fixed[3 * node + i]) {
        throw InvalidInputError("node " + std::to_string(node) + " already carries homogeneous Dirichlet data");
      }
      fixed[3 * node + i] = 1;
      dofs.push_back(3 * node + i);
    }
  }
  for (int node : contact_nodes_) {
    if (fixed[3 * node]) throw InvalidInputError("contact node " + std::to_string(node) + " is prescribed");
  }
  const std::vector<double> zeros_n(static_cast<std::size_t>(n), 0.0);
  const std::vector<double> zeros_d(dofs.size(), 0.0);
  split_ = apply_dirichlet(system.stiffness, zeros_n, dofs, zeros_d);
  reduced_ = std::make_shared<const SparseMatrix>(split_.matrix);
  std::vector<ContactNodeLayout> layout;
  layout.reserve(contact_nodes_.size());
  for (int node : contact_nodes_) {
    ContactNodeLayout l;
    for (int i = 0; i < 3; ++i) l.dofs[i] = split_.reduced_index[3 * node + i];
    layout.push_back(l);
  }
  solver_ = std::make_unique<ContactSolver>(reduced_, std::move(layout));
}

SubproblemResult LayerSubproblem::solve(std::span<const double> load, std::span<const Vec3> contact_lambda,
                                        std::span<const Vec3> prescribed_values, const ContactSolveOptions& options) {
  if (contact_lambda.size() != contact_nodes_.size()) throw InvalidInputError("one lambda per contact node");
  if (prescribed_values.size() != prescribed_nodes_.size()) throw InvalidInputError("one value per prescribed node");
  std::vector<double> prescribed(static_cast<std::size_t>(system_->stiffness.size()), 0.0);
  for (std::size_t k = 0; k < prescribed_nodes_.size(); ++k) {
    for (int i = 0; i < 3; ++i) prescribed[3 * prescribed_nodes_[k] + i] = prescribed_values[k][i];
  }
  last_rhs_ = split_.reduce_rhs(system_->stiffness, load, prescribed);
  last_constraints_.resize(contact_nodes_.size());
  for (std::size_t q = 0; q < contact_nodes_.size(); ++q) {
    last_constraints_[q].weight = weights_[q];
    last_constraints_[q].anchor = contact_lambda[q].head<2>();
    last_constraints_[q].gap = contact_lambda[q][2];
  }
  ContactSolveResult solved = solver_->solve(last_rhs_, last_constraints_, warm_, options);
  warm_ = solved.x;

  SubproblemResult out;
  out.u = std::move(prescribed);
  for (std::size_t k = 0; k < split_.free_dofs.size(); ++k) out.u[split_.free_dofs[k]] = solved.x[k];
  out.stats = std::move(solved.stats);
  return out;
}

ContactProblem LayerSubproblem::last_problem() const {
  return {reduced_, last_rhs_, solver_->nodes(), last_constraints_};
}

std::vector<double> LayerSubproblem::reduce(std::span<const double> u) const {
  std::vector<double> x(split_.free_dofs.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = u[split_.free_dofs[k]];
  return x;
}

SubproblemResult solve_subproblem(const SubproblemSpec& spec, double tol_sub, int max_sweeps) {
  if (spec.system == nullptr) throw InvalidInputError("subproblem has no layer system");
  LayerSubproblem sub(*spec.system, spec.contact_nodes, spec.weights, spec.prescribed_nodes);
  const std::vector<double> load = spec.load.empty() ? spec.system->total_load() : spec.load;
  ContactSolveOptions options;
  options.tol = tol_sub;
  options.max_sweeps = max_sweeps;
  return sub.solve(load, spec.contact_lambda, spec.prescribed_values, options);
}

}  // namespace layerstack

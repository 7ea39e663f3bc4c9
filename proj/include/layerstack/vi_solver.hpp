#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "layerstack/assembly.hpp"
#include "layerstack/sparse.hpp"

namespace layerstack {

// Constraint data of one contact node: x_z >= gap and friction weight * ||x_T - anchor||.
struct NodeConstraint {
  double weight = 0.0;
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  double gap = -std::numeric_limits<double>::infinity();
};

// argmin_v 1/2 v'Dv - c'v + weight ||v_T - anchor|| subject to v_z >= gap, for SPD D.
// Throws SolverError if the result fails its subgradient check (treated as a bug).
Vec3 nodal_prox(const Eigen::Matrix3d& d, const Vec3& c, double weight, const Eigen::Vector2d& anchor, double gap);

struct ContactNodeLayout {
  std::array<int, 3> dofs{-1, -1, -1};
  // Optional unconstrained node relaxed jointly with this one (coupled jump formulation).
  std::array<int, 3> partner{-1, -1, -1};

  bool has_partner() const { return partner[0] >= 0; }
};

// minimize 1/2 x'Ax - rhs'x + sum_q w_q ||x_T(q) - anchor_q||  subject to  x_z(q) >= gap_q.
struct ContactProblem {
  std::shared_ptr<const SparseMatrix> matrix;
  std::vector<double> rhs;
  std::vector<ContactNodeLayout> nodes;
  std::vector<NodeConstraint> constraints;

  double objective(std::span<const double> x) const;
  // max(|(Ax - rhs)_k| over unconstrained DOFs, ||D_q (prox_q(x) - x_q)|| over contact nodes) / force_scale(x).
  double kkt_residual(std::span<const double> x) const;
  // max_k (sum_j |A_kj x_j| + |rhs_k|) + max_q w_q, or 1 when that is zero.
  double force_scale(std::span<const double> x) const;
};

struct ContactSolveOptions {
  double tol = 1e-10;     // on kkt_residual
  int max_sweeps = 5000;
  bool polish = true;     // active-set Newton refinement between sweeps
  bool check_monotone = true;
};

struct ContactSolveStats {
  int sweeps = 0;
  int polish_attempts = 0;
  int polish_accepted = 0;
  int newton_steps = 0;
  double residual = 0.0;
  std::vector<double> residual_trace;
};

struct ContactSolveResult {
  std::vector<double> x;
  ContactSolveStats stats;
};

// Nonsmooth block Gauss-Seidel: an exact solve over all unconstrained DOFs, then an exact nodal
// prox per contact node (jointly with its partner when present). Converged iterates are optionally
// accelerated by a primal-dual active-set Newton step that is kept only when it lowers the residual.
// The solver owns factorizations of A and is reused across right-hand sides and constraint data.
class ContactSolver {
 public:
  ContactSolver(std::shared_ptr<const SparseMatrix> matrix, std::vector<ContactNodeLayout> nodes);
  ~ContactSolver();
  ContactSolver(ContactSolver&&) noexcept;
  ContactSolver& operator=(ContactSolver&&) noexcept;

  // Throws SolverError (with the residual trace) when max_sweeps is exhausted.
  ContactSolveResult solve(std::span<const double> rhs, std::span<const NodeConstraint> constraints,
                           std::span<const double> x0, const ContactSolveOptions& options);

  const std::shared_ptr<const SparseMatrix>& matrix() const;
  const std::vector<ContactNodeLayout>& nodes() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct CertifyOptions {
  int random_fields = 64;
  std::uint64_t seed = 0x5eed1e55ULL;
  double feasibility_tol = 1e-12;  // relative to max(1, ||x||_inf)
};

// Minimum over a fixed battery of feasible trial directions d of
//   [d'(Ax - rhs) + j(x + d) - j(x)] / (force_scale * ||d||),
// using descent-signed coordinate moves at every contact node, seeded random fields and d = 0.
// Values >= -tol certify approximate optimality. Throws InvalidInputError for infeasible x.
double certify_vi(const ContactProblem& problem, std::span<const double> x, const CertifyOptions& options = {});

// One layer's subproblem: contact (gap and friction anchored at lambda) on the bottom interface,
// Dirichlet data on selected nodes, homogeneous Dirichlet from the layer system.
struct SubproblemSpec {
  const LayerSystem* system = nullptr;
  std::vector<double> load;               // full DOF vector; empty means system->total_load()
  std::vector<int> contact_nodes;         // layer node ids carrying gap and friction
  std::vector<double> weights;            // per contact node
  std::vector<Vec3> contact_lambda;       // per contact node: gap = z, anchor = (x, y)
  std::vector<int> prescribed_nodes;      // layer node ids with Dirichlet data
  std::vector<Vec3> prescribed_values;
};

struct SubproblemResult {
  std::vector<double> u;  // full layer DOF vector
  ContactSolveStats stats;
};

// Reusable solver for a fixed subproblem structure; data (lambda, prescribed values, load) may change
// between solves. The previous solution warm-starts the next one.
class LayerSubproblem {
 public:
  LayerSubproblem(const LayerSystem& system, std::vector<int> contact_nodes, std::vector<double> weights,
                  std::vector<int> prescribed_nodes);

  SubproblemResult solve(std::span<const double> load, std::span<const Vec3> contact_lambda,
                         std::span<const Vec3> prescribed_values, const ContactSolveOptions& options);
  // Reduced problem of the most recent solve, for certification.
  ContactProblem last_problem() const;
  std::vector<double> reduce(std::span<const double> u) const;

 private:
  const LayerSystem* system_;
  std::vector<int> contact_nodes_;
  std::vector<double> weights_;
  std::vector<int> prescribed_nodes_;
  ReducedSystem split_;
  std::shared_ptr<const SparseMatrix> reduced_;
  std::unique_ptr<ContactSolver> solver_;
  std::vector<double> warm_;
  std::vector<double> last_rhs_;
  std::vector<NodeConstraint> last_constraints_;
};

SubproblemResult solve_subproblem(const SubproblemSpec& spec, double tol_sub, int max_sweeps);

// Monolithic coupled problem over all layers. Each non-lateral interface pair (a, b) is written in
// jump variables: the upper node's slot holds j = u_a - u_b, so non-penetration reads j_z >= 0 and
// friction acts on j_T; the lower node b is the jump block's partner.
struct CoupledForm {
  ContactProblem problem;
  std::vector<int> layer_offset;  // first full DOF of each layer
  std::vector<int> full_to_reduced;
  std::vector<int> reduced_to_full;
  std::vector<int> jump_partner;  // per full DOF: partner DOF for jump slots, else -1

  std::vector<double> to_reduced(const std::vector<std::vector<double>>& fields) const;
  std::vector<std::vector<double>> to_fields(std::span<const double> y) const;
};

CoupledForm build_coupled_form(const LayeredProblem& problem);

struct CoupledSolution {
  std::vector<std::vector<double>> fields;
  ContactSolveStats stats;
};

CoupledSolution solve_monolithic(const LayeredProblem& problem, double tol_sub, int max_sweeps);

// certify_vi of the coupled problem at the given layer fields.
double certify_coupled(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields,
                       const CertifyOptions& options = {});

}  // namespace layerstack

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerstack/assembly.hpp"
#include "layerstack/vi_solver.hpp"

namespace layerstack {

struct LdConfig {
  double theta = 0.04;
  double tol = 1e-4;
  int max_iter = 20000;
  double tol_sub = 1e-10;
  double tol_lin = 1e-10;
  int max_sweeps = 2000;
  // Divergence: the increment ||lambda_k - lambda_{k-1}|| grows this many iterations in a row.
  int divergence_window = 20;
  // Certify every subproblem solution, not only those of the final iteration.
  bool certify_every_iteration = false;
  int threads = 1;

  bool operator==(const LdConfig&) const = default;
};

// Interface displacement data: one 3-vector per interface pair, zero on lateral (pinned) pairs.
struct InterfaceState {
  std::vector<std::vector<Vec3>> lambda;
  std::vector<std::vector<char>> pinned;

  static InterfaceState zeros(const LayeredProblem& problem);
  // Concatenated nodal l2 norm over all interfaces.
  double norm() const;
  std::vector<double> interface_norms() const;
};

double distance(const InterfaceState& a, const InterfaceState& b);

struct LdIteration {
  int iter = 0;
  double rel_change = 0.0;
  double increment = 0.0;
  double energy = 0.0;  // coupled potential energy of the iterate's fields
  std::vector<double> interface_norms;
  std::vector<int> sweeps;  // per layer
};

struct LdHistory {
  std::vector<LdIteration> iterations;
  bool converged = false;
  bool diverged = false;
  std::string note;  // reason for divergence or failure
};

struct LdResult {
  std::vector<std::vector<double>> fields;  // full DOF vector per layer
  InterfaceState state;
  LdHistory history;
  double min_certificate = 0.0;  // over all certified subproblem solutions
  int certified_solves = 0;
  long long total_sweeps = 0;
};

enum class InterfaceSide { kBottom, kTop };

// (K u - load) at the layer's bottom or top interface nodes, in pairing order.
std::vector<Vec3> residual_traction(const LayerSystem& system, std::span<const double> u,
                                    std::span<const double> load, InterfaceSide side);

// Linear solve on one layer with homogeneous Dirichlet data on the layer's own set plus `pinned_nodes`,
// nodal loads applied at `loaded_nodes`. Factorized once; a PCG path is used when direct = false.
class AuxiliaryProblem {
 public:
  AuxiliaryProblem(const LayerSystem& system, std::vector<int> pinned_nodes, std::vector<int> loaded_nodes,
                   bool direct = true, double tol_lin = 1e-10);
  std::vector<double> solve(std::span<const Vec3> nodal_loads) const;
  const std::vector<int>& loaded_nodes() const { return loaded_nodes_; }

 private:
  std::vector<int> loaded_nodes_;
  ReducedSystem split_;
  SparseCholesky factor_;
  bool direct_;
  double tol_lin_;
};

// Field on layer i+1 driven by 1/2 (r_upper + r_lower) on interface i, zero on its other boundary.
std::vector<double> solve_p_aux(const LayeredProblem& problem, int interface, std::span<const Vec3> r_upper,
                                std::span<const Vec3> r_lower);
// Field on layer i, mirror of solve_p_aux.
std::vector<double> solve_q_aux(const LayeredProblem& problem, int interface, std::span<const Vec3> r_upper,
                                std::span<const Vec3> r_lower);

// Values of a layer field at the nodes of one interface side, in pairing order.
std::vector<Vec3> interface_trace(const LayerSystem& system, std::span<const double> u, InterfaceSide side);

// lambda <- lambda - theta (p + q); pinned entries stay zero.
InterfaceState update_lambda(const InterfaceState& state, const std::vector<std::vector<Vec3>>& p_traces,
                             const std::vector<std::vector<Vec3>>& q_traces, double theta);

// Minimum-energy field on `layer` (interface or interface + 1) equal to phi on the interface,
// zero on the layer's Dirichlet set and free elsewhere. phi is ignored on lateral pairs.
std::vector<double> discrete_extension(const LayeredProblem& problem, std::span<const Vec3> phi, int layer,
                                       int interface);
double trace_norm(const LayeredProblem& problem, std::span<const Vec3> phi, int interface, int layer);

enum class ContactStatus { kStick, kSlip };

struct StickSlipReport {
  std::vector<ContactStatus> status;  // per pair
  std::vector<double> slip;           // tangential jump magnitude per pair
  double slip_area_fraction = 0.0;    // lumped-area weighted
};

StickSlipReport classify_stick_slip(const LayeredProblem& problem, std::span<const double> u_upper,
                                    std::span<const double> u_lower, int interface, double tol_slip);

// (1/sqrt 2) sqrt(sum_l u_l' K_l u_l).
double energy_norm(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields);
double layer_energy_norm(const LayerSystem& system, std::span<const double> u);
// Coupled potential energy: sum_l (1/2 u'Ku - b'u) + sum over pairs of w ||[u_T]||.
double potential_energy(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields);

LdResult ld_run(const LayeredProblem& problem, const LdConfig& config,
                const std::optional<InterfaceState>& initial = std::nullopt);

}  // namespace layerstack

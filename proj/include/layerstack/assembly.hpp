#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "layerstack/mesh.hpp"
#include "layerstack/sparse.hpp"

namespace layerstack {

struct Material {
  double youngs_modulus = 1.0;
  double poisson_ratio = 0.0;

  bool operator==(const Material&) const = default;
};

struct LameParameters {
  double lambda = 0.0;
  double mu = 0.0;
};

// Throws InvalidInputError unless E > 0 and 0 <= nu < 0.5 (nu = 0.5 is reported as incompressible).
LameParameters lame_parameters(const Material& material);

using ElementMatrix = Eigen::Matrix<double, 12, 12>;

// Constant-strain stiffness of one tetrahedron; DOF order (node 0: x, y, z), (node 1: ...), ...
// Throws AssemblyError for non-positive volume.
ElementMatrix element_stiffness(const std::array<Vec3, 4>& vertices, const LameParameters& lame);

// threads > 1 assembles contiguous element chunks concurrently; output is bitwise independent of threads.
SparseMatrix assemble_stiffness(const LayerMesh& layer, const Material& material, int threads = 1);

std::vector<double> assemble_body_load(const LayerMesh& layer, const Vec3& force_density);

// Uniform traction on the part of the top surface inside [x0, x1] x [y0, y1].
struct TractionPatch {
  std::array<double, 2> x{0.0, 0.0};
  std::array<double, 2> y{0.0, 0.0};
  Vec3 traction = Vec3::Zero();

  bool operator==(const TractionPatch&) const = default;
};

// Exact integration of the traction against P1 shape functions over each top triangle clipped to
// the patch. A patch that misses the top surface yields a zero vector and a warning.
std::vector<double> assemble_traction_load(const LayerMesh& layer, const TractionPatch& patch);

// Friction bound g on one interface: a constant, or per-node values keyed by exact (x, y) coordinates.
struct FrictionBound {
  double constant = 0.0;
  std::vector<std::array<double, 3>> table;  // (x, y, g); used when nonempty

  bool tabulated() const { return !table.empty(); }
  bool operator==(const FrictionBound&) const = default;
};

// Lumped weights w_q = g(x_q) * (sum of incident interface triangle areas) / 3, in pairing order.
// Throws InvalidInputError for negative g or a table missing an interface node.
std::vector<double> friction_weights(const MultiLayerMesh& mesh, int interface, const FrictionBound& bound);

struct LayerSystem {
  SparseMatrix stiffness;  // before any Dirichlet elimination
  std::vector<double> body_load;
  std::vector<double> traction_load;
  // Homogeneous Dirichlet DOFs: lateral nodes, plus the bottom face of the last layer.
  std::vector<int> dirichlet_dofs;
  std::vector<double> dirichlet_values;
  // Interface node lists in pairing order; empty where the layer has no such interface.
  std::vector<int> bottom_interface_nodes;
  std::vector<int> top_interface_nodes;

  std::vector<double> total_load() const;
};

struct ProblemDefinition {
  LayeredBoxSpec geometry;
  std::vector<Material> materials;           // one per layer, top to bottom
  std::vector<FrictionBound> friction;       // one per interface
  Vec3 body_force = Vec3::Zero();
  std::vector<TractionPatch> tractions;      // applied on the top of layer 1

  bool operator==(const ProblemDefinition&) const = default;
};

struct LayeredProblem {
  MultiLayerMesh mesh;
  std::vector<Material> materials;
  std::vector<LayerSystem> layers;
  std::vector<std::vector<double>> friction;  // per interface, per pair
  std::vector<std::vector<char>> pinned;      // per interface, per pair: pair lies on the lateral boundary

  int layer_count() const { return static_cast<int>(layers.size()); }
  int interface_count() const { return static_cast<int>(friction.size()); }
  double domain_scale() const { return mesh.diameter; }
};

LayeredProblem build_layered_problem(const ProblemDefinition& definition, int threads = 1);

}  // namespace layerstack

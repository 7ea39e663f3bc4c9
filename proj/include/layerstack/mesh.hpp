#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace layerstack {

using Vec3 = Eigen::Vector3d;

struct LayeredBoxSpec {
  std::array<double, 2> x_extent{0.0, 1.0};
  std::array<double, 2> y_extent{0.0, 1.0};
  // Top-to-bottom, strictly decreasing; layer i spans [layer_z[i+1], layer_z[i]].
  std::vector<double> layer_z;
  double h = 1.0;

  int layer_count() const { return static_cast<int>(layer_z.size()) - 1; }
  bool operator==(const LayeredBoxSpec&) const = default;
};

// Number of cells along an extent so that the realized spacing is <= h.
int cells_for_extent(double extent, double h);

enum class FaceTag : std::uint8_t {
  kLateral,       // Dirichlet zero for every layer
  kTop,           // top of layer 1, carries surface traction
  kBottom,        // bottom of the last layer, Dirichlet zero
  kContactUpper,  // bottom face of layer i on interface i
  kContactLower,  // top face of layer i+1 on interface i
  kFree,
};

const char* to_string(FaceTag tag);

struct BoundaryFace {
  std::array<int, 3> nodes;  // counter-clockwise seen from outside
  FaceTag tag = FaceTag::kFree;
  int interface = -1;  // set for contact tags
};

// Node membership flags; a node may carry several.
enum NodeFlag : std::uint8_t {
  kOnLateral = 1u << 0,
  kOnTop = 1u << 1,
  kOnBottom = 1u << 2,
  kOnInterfaceAbove = 1u << 3,
  kOnInterfaceBelow = 1u << 4,
};

struct LayerMesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;
  std::vector<BoundaryFace> faces;
  std::vector<std::uint8_t> node_flags;

  // Structured grid data; node (ix, iy, iz) has index ix + (nx+1)*(iy + (ny+1)*iz), iz = 0 at the bottom.
  std::array<int, 3> cells{0, 0, 0};
  std::array<double, 2> x_extent{0.0, 0.0};
  std::array<double, 2> y_extent{0.0, 0.0};
  double z_bottom = 0.0;
  double z_top = 0.0;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int dof_count() const { return 3 * node_count(); }
  int node_index(int ix, int iy, int iz) const {
    return ix + (cells[0] + 1) * (iy + (cells[1] + 1) * iz);
  }
  // Nodes of the top (iz = nz) or bottom (iz = 0) face, ordered by (iy, ix).
  std::vector<int> face_nodes(bool top) const;
  bool has_flag(int node, NodeFlag flag) const { return (node_flags[node] & flag) != 0; }
  double signed_volume(int tet) const;
};

// Pair (node on the bottom face of the upper layer, node on the top face of the lower layer).
using NodePair = std::pair<int, int>;

struct MultiLayerMesh {
  std::vector<LayerMesh> layers;
  std::vector<std::vector<NodePair>> interfaces;  // interface i couples layers i and i+1
  double diameter = 0.0;

  int layer_count() const { return static_cast<int>(layers.size()); }
  int interface_count() const { return static_cast<int>(interfaces.size()); }
  int total_nodes() const;
};

MultiLayerMesh build_layered_box_mesh(const LayeredBoxSpec& spec);

struct MeshReport {
  int nodes = 0;
  int tets = 0;
  std::array<int, 6> faces_per_tag{};
  int boundary_faces = 0;
  double min_volume = 0.0;
  double max_volume = 0.0;
  bool pairing_bijective = true;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

MeshReport validate_mesh(const MultiLayerMesh& mesh);

// P1 interpolation weights of a point inside a structured layer mesh.
struct PointLocation {
  std::array<int, 4> nodes;
  std::array<double, 4> weights;
};

// Throws InvalidInputError when the point lies outside the layer box (beyond a 1e-9 relative slack).
PointLocation locate_point(const LayerMesh& layer, const Vec3& point);

}  // namespace layerstack

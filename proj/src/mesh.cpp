#include "layerstack/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "layerstack/errors.hpp"

namespace layerstack {

namespace {

// Local corner offsets of the Kuhn tetrahedra of the unit cube: each walks 000 -> e_p0 -> e_p0+e_p1 -> 111.
constexpr std::array<std::array<int, 3>, 6> kAxisOrders = {{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
}};

std::array<std::array<int, 3>, 4> kuhn_corners(const std::array<int, 3>& order) {
  std::array<std::array<int, 3>, 4> corners{};
  corners[0] = {0, 0, 0};
  corners[1] = corners[0];
  corners[1][order[0]] = 1;
  corners[2] = corners[1];
  corners[2][order[1]] = 1;
  corners[3] = {1, 1, 1};
  return corners;
}

// Cells in the upper half of each lateral axis use the mirrored pattern, so the mesh is
// reflection-symmetric whenever the cell count along that axis is even.
bool mirrored(int index, int count) { return index >= count / 2; }

double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

LayerMesh build_layer(const LayeredBoxSpec& spec, int layer, int nx, int ny) {
  const int n_layers = spec.layer_count();
  LayerMesh mesh;
  mesh.z_top = spec.layer_z[layer];
  mesh.z_bottom = spec.layer_z[layer + 1];
  const int nz = cells_for_extent(mesh.z_top - mesh.z_bottom, spec.h);
  mesh.cells = {nx, ny, nz};
  mesh.x_extent = spec.x_extent;
  mesh.y_extent = spec.y_extent;

  const auto coord = [](double lo, double hi, int i, int n) {
    if (i == n) return hi;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
  };

  mesh.nodes.resize(static_cast<std::size_t>((nx + 1) * (ny + 1) * (nz + 1)));
  mesh.node_flags.assign(mesh.nodes.size(), 0);
  for (int iz = 0; iz <= nz; ++iz) {
    for (int iy = 0; iy <= ny; ++iy) {
      for (int ix = 0; ix <= nx; ++ix) {
        const int id = mesh.node_index(ix, iy, iz);
        mesh.nodes[id] = Vec3(coord(spec.x_extent[0], spec.x_extent[1], ix, nx),
                              coord(spec.y_extent[0], spec.y_extent[1], iy, ny),
                              coord(mesh.z_bottom, mesh.z_top, iz, nz));
        std::uint8_t flags = 0;
        if (ix == 0 || ix == nx || iy == 0 || iy == ny) flags |= kOnLateral;
        if (iz == nz) flags |= kOnTop;
        if (iz == 0) flags |= kOnBottom;
        if (iz == nz && layer > 0) flags |= kOnInterfaceAbove;
        if (iz == 0 && layer < n_layers - 1) flags |= kOnInterfaceBelow;
        mesh.node_flags[id] = flags;
      }
    }
  }

  mesh.tets.reserve(static_cast<std::size_t>(6 * nx * ny * nz));
  for (int iz = 0; iz < nz; ++iz) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const bool rx = mirrored(ix, nx);
        const bool ry = mirrored(iy, ny);
        for (const auto& order : kAxisOrders) {
          std::array<int, 4> tet{};
          const auto corners = kuhn_corners(order);
          for (int k = 0; k < 4; ++k) {
            const int a = rx ? 1 - corners[k][0] : corners[k][0];
            const int b = ry ? 1 - corners[k][1] : corners[k][1];
            tet[k] = mesh.node_index(ix + a, iy + b, iz + corners[k][2]);
          }
          if (tet_volume(mesh.nodes[tet[0]], mesh.nodes[tet[1]], mesh.nodes[tet[2]],
                         mesh.nodes[tet[3]]) < 0.0) {
            std::swap(tet[2], tet[3]);
          }
          mesh.tets.push_back(tet);
        }
      }
    }
  }

  // A tet face is on the boundary iff its three nodes share an extreme grid index.
  const auto grid = [&](int id) {
    const int ix = id % (nx + 1);
    const int iy = (id / (nx + 1)) % (ny + 1);
    const int iz = id / ((nx + 1) * (ny + 1));
    return std::array<int, 3>{ix, iy, iz};
  };
  for (const auto& tet : mesh.tets) {
    for (int opposite = 0; opposite < 4; ++opposite) {
      std::array<int, 3> tri{};
      for (int k = 0, m = 0; k < 4; ++k) {
        if (k != opposite) tri[m++] = tet[k];
      }
      const auto g0 = grid(tri[0]);
      const auto g1 = grid(tri[1]);
      const auto g2 = grid(tri[2]);
      const auto on = [&](int axis, int value) {
        return g0[axis] == value && g1[axis] == value && g2[axis] == value;
      };
      BoundaryFace face;
      if (on(0, 0) || on(0, nx) || on(1, 0) || on(1, ny)) {
        face.tag = FaceTag::kLateral;
      } else if (on(2, nz)) {
        face.tag = layer == 0 ? FaceTag::kTop : FaceTag::kContactLower;
        if (layer > 0) face.interface = layer - 1;
      } else if (on(2, 0)) {
        face.tag = layer == n_layers - 1 ? FaceTag::kBottom : FaceTag::kContactUpper;
        if (layer < n_layers - 1) face.interface = layer;
      } else {
        continue;
      }
      const Vec3& p0 = mesh.nodes[tri[0]];
      const Vec3 normal = (mesh.nodes[tri[1]] - p0).cross(mesh.nodes[tri[2]] - p0);
      if (normal.dot(p0 - mesh.nodes[tet[opposite]]) < 0.0) std::swap(tri[1], tri[2]);
      face.nodes = tri;
      mesh.faces.push_back(face);
    }
  }
  return mesh;
}

void check_spec(const LayeredBoxSpec& spec) {
  const auto interval_ok = [](const std::array<double, 2>& e) {
    return std::isfinite(e[0]) && std::isfinite(e[1]) && e[1] > e[0];
  };
  if (!interval_ok(spec.x_extent)) throw InvalidInputError("x extent must be a nonempty interval");
  if (!interval_ok(spec.y_extent)) throw InvalidInputError("y extent must be a nonempty interval");
  if (spec.layer_z.size() < 2) throw InvalidInputError("at least one layer (two z-planes) is required");
  for (std::size_t i = 0; i + 1 < spec.layer_z.size(); ++i) {
    if (!std::isfinite(spec.layer_z[i]) || !std::isfinite(spec.layer_z[i + 1]) ||
        !(spec.layer_z[i + 1] < spec.layer_z[i])) {
      throw InvalidInputError("layer z-planes must be strictly decreasing");
    }
  }
  if (!(spec.h > 0.0) || !std::isfinite(spec.h)) throw InvalidInputError("mesh size h must be positive");
}

}  // namespace

int cells_for_extent(double extent, double h) {
  // The slack absorbs ratios such as 3/0.3 = 10.000000000000002.
  const double ratio = extent / h;
  return std::max(1, static_cast<int>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio))));
}

const char* to_string(FaceTag tag) {
  switch (tag) {
    case FaceTag::kLateral: return "lateral";
    case FaceTag::kTop: return "top";
    case FaceTag::kBottom: return "bottom";
    case FaceTag::kContactUpper: return "contact_upper";
    case FaceTag::kContactLower: return "contact_lower";
    case FaceTag::kFree: return "free";
  }
  return "unknown";
}

std::vector<int> LayerMesh::face_nodes(bool top) const {
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>((cells[0] + 1) * (cells[1] + 1)));
  const int iz = top ? cells[2] : 0;
  for (int iy = 0; iy <= cells[1]; ++iy) {
    for (int ix = 0; ix <= cells[0]; ++ix) ids.push_back(node_index(ix, iy, iz));
  }
  return ids;
}

double LayerMesh::signed_volume(int tet) const {
  const auto& t = tets[tet];
  return tet_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
}

int MultiLayerMesh::total_nodes() const {
  int total = 0;
  for (const auto& layer : layers) total += layer.node_count();
  return total;
}

MultiLayerMesh build_layered_box_mesh(const LayeredBoxSpec& spec) {
  check_spec(spec);
  const int nx = cells_for_extent(spec.x_extent[1] - spec.x_extent[0], spec.h);
  const int ny = cells_for_extent(spec.y_extent[1] - spec.y_extent[0], spec.h);

  MultiLayerMesh mesh;
  for (int layer = 0; layer < spec.layer_count(); ++layer) {
    mesh.layers.push_back(build_layer(spec, layer, nx, ny));
  }
  const double lx = spec.x_extent[1] - spec.x_extent[0];
  const double ly = spec.y_extent[1] - spec.y_extent[0];
  const double lz = spec.layer_z.front() - spec.layer_z.back();
  mesh.diameter = std::sqrt(lx * lx + ly * ly + lz * lz);

  // Pair nodes by coordinate identity after sorting both faces lexicographically in (x, y).
  const double match_tol = 1e-12 * mesh.diameter;
  for (int i = 0; i + 1 < mesh.layer_count(); ++i) {
    const LayerMesh& upper = mesh.layers[i];
    const LayerMesh& lower = mesh.layers[i + 1];
    auto up = upper.face_nodes(false);
    auto lo = lower.face_nodes(true);
    const auto by_xy = [](const LayerMesh& m) {
      return [&m](int a, int b) {
        const Vec3& pa = m.nodes[a];
        const Vec3& pb = m.nodes[b];
        return pa.y() != pb.y() ? pa.y() < pb.y() : pa.x() < pb.x();
      };
    };
    std::sort(up.begin(), up.end(), by_xy(upper));
    std::sort(lo.begin(), lo.end(), by_xy(lower));
    if (up.size() != lo.size()) throw InvalidInputError("interface node counts differ");
    std::vector<NodePair> pairs;
    pairs.reserve(up.size());
    for (std::size_t k = 0; k < up.size(); ++k) {
      if ((upper.nodes[up[k]] - lower.nodes[lo[k]]).norm() > match_tol) {
        throw InvalidInputError("interface nodes do not coincide");
      }
      pairs.emplace_back(up[k], lo[k]);
    }
    mesh.interfaces.push_back(std::move(pairs));
  }
  return mesh;
}

MeshReport validate_mesh(const MultiLayerMesh& mesh) {
  MeshReport report;
  report.min_volume = std::numeric_limits<double>::infinity();
  report.max_volume = -std::numeric_limits<double>::infinity();
  const auto fail = [&report](const std::string& message) { report.violations.push_back(message); };

  for (int l = 0; l < mesh.layer_count(); ++l) {
    const LayerMesh& layer = mesh.layers[l];
    report.nodes += layer.node_count();
    report.tets += static_cast<int>(layer.tets.size());
    int negative = 0;
    for (int t = 0; t < static_cast<int>(layer.tets.size()); ++t) {
      const double v = layer.signed_volume(t);
      report.min_volume = std::min(report.min_volume, v);
      report.max_volume = std::max(report.max_volume, v);
      if (!(v > 0.0)) ++negative;
    }
    if (negative > 0) {
      fail("layer " + std::to_string(l) + ": " + std::to_string(negative) +
           " tet(s) with non-positive volume");
    }

    // Faces seen once among all tet faces form the true boundary.
    std::map<std::array<int, 3>, int> seen;
    for (const auto& tet : layer.tets) {
      for (int opposite = 0; opposite < 4; ++opposite) {
        std::array<int, 3> key{};
        for (int k = 0, m = 0; k < 4; ++k) {
          if (k != opposite) key[m++] = tet[k];
        }
        std::sort(key.begin(), key.end());
        ++seen[key];
      }
    }
    std::map<std::array<int, 3>, int> tagged;
    for (const auto& face : layer.faces) {
      auto key = face.nodes;
      std::sort(key.begin(), key.end());
      ++tagged[key];
      ++report.faces_per_tag[static_cast<int>(face.tag)];
    }
    int boundary = 0;
    for (const auto& [key, count] : seen) {
      if (count > 2) fail("layer " + std::to_string(l) + ": non-manifold face");
      if (count != 1) continue;
      ++boundary;
      const auto it = tagged.find(key);
      if (it == tagged.end()) {
        fail("layer " + std::to_string(l) + ": untagged boundary face");
      } else if (it->second != 1) {
        fail("layer " + std::to_string(l) + ": boundary face tagged more than once");
      }
    }
    report.boundary_faces += boundary;
    if (static_cast<int>(layer.faces.size()) != boundary) {
      fail("layer " + std::to_string(l) + ": tagged face count " + std::to_string(layer.faces.size()) +
           " differs from boundary face count " + std::to_string(boundary));
    }
  }

  const double tol = 1e-12 * mesh.diameter;
  for (int i = 0; i < mesh.interface_count(); ++i) {
    const LayerMesh& upper = mesh.layers[i];
    const LayerMesh& lower = mesh.layers[i + 1];
    const auto& pairs = mesh.interfaces[i];
    std::vector<char> used_up(upper.nodes.size(), 0), used_lo(lower.nodes.size(), 0);
    bool bijective = pairs.size() == upper.face_nodes(false).size() &&
                     pairs.size() == lower.face_nodes(true).size();
    for (const auto& [a, b] : pairs) {
      if (a < 0 || a >= upper.node_count() || b < 0 || b >= lower.node_count() || used_up[a] ||
          used_lo[b] || !upper.has_flag(a, kOnInterfaceBelow) || !lower.has_flag(b, kOnInterfaceAbove)) {
        bijective = false;
        continue;
      }
      used_up[a] = used_lo[b] = 1;
      if ((upper.nodes[a] - lower.nodes[b]).norm() > tol) {
        fail("interface " + std::to_string(i) + ": paired nodes do not coincide");
      }
      const bool lateral_up = upper.has_flag(a, kOnLateral);
      const bool lateral_lo = lower.has_flag(b, kOnLateral);
      if (lateral_up != lateral_lo) fail("interface " + std::to_string(i) + ": lateral flags disagree");
    }
    if (!bijective) {
      report.pairing_bijective = false;
      fail("interface " + std::to_string(i) + ": pairing is not a bijection");
    }
  }
  return report;
}

PointLocation locate_point(const LayerMesh& layer, const Vec3& point) {
  const int nx = layer.cells[0];
  const int ny = layer.cells[1];
  const int nz = layer.cells[2];
  const std::array<double, 3> lo{layer.x_extent[0], layer.y_extent[0], layer.z_bottom};
  const std::array<double, 3> hi{layer.x_extent[1], layer.y_extent[1], layer.z_top};
  const std::array<int, 3> counts{nx, ny, nz};
  std::array<int, 3> cell{};
  std::array<double, 3> local{};
  for (int axis = 0; axis < 3; ++axis) {
    const double span = hi[axis] - lo[axis];
    double s = (point[axis] - lo[axis]) / span;
    if (s < -1e-9 || s > 1.0 + 1e-9) {
      std::ostringstream msg;
      msg << "point (" << point.x() << ", " << point.y() << ", " << point.z() << ") lies outside the layer";
      throw InvalidInputError(msg.str());
    }
    s = std::clamp(s, 0.0, 1.0) * counts[axis];
    cell[axis] = std::min(static_cast<int>(std::floor(s)), counts[axis] - 1);
    local[axis] = std::clamp(s - cell[axis], 0.0, 1.0);
  }
  const bool rx = mirrored(cell[0], nx);
  const bool ry = mirrored(cell[1], ny);
  if (rx) local[0] = 1.0 - local[0];
  if (ry) local[1] = 1.0 - local[1];

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return local[a] > local[b]; });
  const auto corners = kuhn_corners(order);
  PointLocation loc{};
  loc.weights = {1.0 - local[order[0]], local[order[0]] - local[order[1]],
                 local[order[1]] - local[order[2]], local[order[2]]};
  for (int k = 0; k < 4; ++k) {
    const int a = rx ? 1 - corners[k][0] : corners[k][0];
    const int b = ry ? 1 - corners[k][1] : corners[k][1];
    loc.nodes[k] = layer.node_index(cell[0] + a, cell[1] + b, cell[2] + corners[k][2]);
  }
  return loc;
}

}  // namespace layerstack

#include "layerstack/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "layerstack/errors.hpp"
#include "layerstack/log.hpp"
#include "layerstack/parallel.hpp"

namespace layerstack {

LameParameters lame_parameters(const Material& m) {
  if (!(m.youngs_modulus > 0.0) || !std::isfinite(m.youngs_modulus)) {
    throw InvalidInputError("Young's modulus must be positive");
  }
  if (m.poisson_ratio == 0.5) throw InvalidInputError("Poisson ratio 0.5 is incompressible; not supported");
  if (!(m.poisson_ratio >= 0.0 && m.poisson_ratio < 0.5)) {
    throw InvalidInputError("Poisson ratio must lie in [0, 0.5)");
  }
  const double e = m.youngs_modulus;
  const double nu = m.poisson_ratio;
  return {e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu))};
}

ElementMatrix element_stiffness(const std::array<Vec3, 4>& v, const LameParameters& lame) {
  Eigen::Matrix3d jac;
  jac.col(0) = v[1] - v[0];
  jac.col(1) = v[2] - v[0];
  jac.col(2) = v[3] - v[0];
  const double volume = jac.determinant() / 6.0;
  if (!(volume > 0.0)) throw AssemblyError("element with non-positive volume");
  const Eigen::Matrix3d inv = jac.inverse();
  // Rows of inv are the gradients of barycentric coordinates 1..3.
  std::array<Vec3, 4> grad;
  for (int a = 1; a < 4; ++a) grad[a] = inv.row(a - 1).transpose();
  grad[0] = -(grad[1] + grad[2] + grad[3]);

  ElementMatrix k;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const double gg = grad[a].dot(grad[b]);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          double value = lame.lambda * grad[a][i] * grad[b][j] + lame.mu * grad[a][j] * grad[b][i];
          if (i == j) value += lame.mu * gg;
          k(3 * a + i, 3 * b + j) = volume * value;
        }
      }
    }
  }
  return k;
}

SparseMatrix assemble_stiffness(const LayerMesh& layer, const Material& material, int threads) {
  const LameParameters lame = lame_parameters(material);
  const int n_tets = static_cast<int>(layer.tets.size());
  const int chunks = std::max(1, std::min(threads, n_tets));
  std::vector<std::vector<Triplet>> parts(static_cast<std::size_t>(chunks));
  parallel_for(chunks, threads, [&](int c) {
    const int begin = static_cast<int>(static_cast<long long>(n_tets) * c / chunks);
    const int end = static_cast<int>(static_cast<long long>(n_tets) * (c + 1) / chunks);
    auto& out = parts[c];
    out.reserve(static_cast<std::size_t>(end - begin) * 144);
    for (int t = begin; t < end; ++t) {
      const auto& tet = layer.tets[t];
      const std::array<Vec3, 4> v{layer.nodes[tet[0]], layer.nodes[tet[1]], layer.nodes[tet[2]],
                                  layer.nodes[tet[3]]};
      ElementMatrix k;
      try {
        k = element_stiffness(v, lame);
      } catch (const AssemblyError&) {
        throw AssemblyError("element " + std::to_string(t) + " is inverted or degenerate");
      }
      for (int a = 0; a < 4; ++a) {
        for (int i = 0; i < 3; ++i) {
          for (int b = 0; b < 4; ++b) {
            for (int j = 0; j < 3; ++j) out.push_back({3 * tet[a] + i, 3 * tet[b] + j, k(3 * a + i, 3 * b + j)});
          }
        }
      }
    }
  });
  std::vector<Triplet> all;
  all.reserve(static_cast<std::size_t>(n_tets) * 144);
  for (auto& part : parts) all.insert(all.end(), part.begin(), part.end());
  return SparseMatrix::from_triplets(layer.dof_count(), std::move(all));
}

std::vector<double> assemble_body_load(const LayerMesh& layer, const Vec3& force_density) {
  std::vector<double> f(static_cast<std::size_t>(layer.dof_count()), 0.0);
  for (int t = 0; t < static_cast<int>(layer.tets.size()); ++t) {
    const double share = layer.signed_volume(t) / 4.0;
    for (int node : layer.tets[t]) {
      for (int i = 0; i < 3; ++i) f[3 * node + i] += share * force_density[i];
    }
  }
  return f;
}

namespace {

using Point2 = Eigen::Vector2d;

// Clips a convex polygon against the half-plane sign * (p[axis] - bound) >= 0.
std::vector<Point2> clip(const std::vector<Point2>& poly, int axis, double bound, double sign) {
  std::vector<Point2> out;
  const std::size_t n = poly.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Point2& a = poly[k];
    const Point2& b = poly[(k + 1) % n];
    const double da = sign * (a[axis] - bound);
    const double db = sign * (b[axis] - bound);
    if (da >= 0.0) out.push_back(a);
    if ((da >= 0.0) != (db >= 0.0)) {
      const double s = da / (da - db);
      Point2 p = a + s * (b - a);
      p[axis] = bound;
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace

std::vector<double> assemble_traction_load(const LayerMesh& layer, const TractionPatch& patch) {
  std::vector<double> f(static_cast<std::size_t>(layer.dof_count()), 0.0);
  double loaded_area = 0.0;
  for (const auto& face : layer.faces) {
    if (face.tag != FaceTag::kTop) continue;
    std::array<Point2, 3> tri;
    for (int k = 0; k < 3; ++k) tri[k] = layer.nodes[face.nodes[k]].head<2>();
    std::vector<Point2> poly(tri.begin(), tri.end());
    poly = clip(poly, 0, patch.x[0], 1.0);
    if (poly.size() >= 3) poly = clip(poly, 0, patch.x[1], -1.0);
    if (poly.size() >= 3) poly = clip(poly, 1, patch.y[0], 1.0);
    if (poly.size() >= 3) poly = clip(poly, 1, patch.y[1], -1.0);
    if (poly.size() < 3) continue;

    // Integral of a linear function over a polygon = area * value at the centroid.
    double twice_area = 0.0;
    Point2 moment = Point2::Zero();
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Point2& a = poly[k];
      const Point2& b = poly[(k + 1) % poly.size()];
      const double cross = a.x() * b.y() - b.x() * a.y();
      twice_area += cross;
      moment += cross * (a + b);
    }
    if (std::abs(twice_area) <= 0.0) continue;
    const double area = std::abs(twice_area) / 2.0;
    const Point2 centroid = moment / (3.0 * twice_area);

    Eigen::Matrix2d m;
    m.col(0) = tri[1] - tri[0];
    m.col(1) = tri[2] - tri[0];
    const Point2 st = m.inverse() * (centroid - tri[0]);
    const std::array<double, 3> phi{1.0 - st.x() - st.y(), st.x(), st.y()};
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < 3; ++i) f[3 * face.nodes[k] + i] += area * phi[k] * patch.traction[i];
    }
    loaded_area += area;
  }
  if (loaded_area == 0.0 && patch.traction.norm() > 0.0) {
    std::ostringstream msg;
    msg << "traction patch [" << patch.x[0] << ", " << patch.x[1] << "] x [" << patch.y[0] << ", " << patch.y[1]
        << "] does not intersect the top surface; load is empty";
    log_warning(msg.str());
  }
  return f;
}

std::vector<double> friction_weights(const MultiLayerMesh& mesh, int interface, const FrictionBound& bound) {
  if (interface < 0 || interface >= mesh.interface_count()) throw InvalidInputError("interface index out of range");
  const LayerMesh& upper = mesh.layers[interface];
  const auto& pairs = mesh.interfaces[interface];
  std::vector<int> pair_of(static_cast<std::size_t>(upper.node_count()), -1);
  for (int q = 0; q < static_cast<int>(pairs.size()); ++q) pair_of[pairs[q].first] = q;

  std::vector<double> area(pairs.size(), 0.0);
  for (const auto& face : upper.faces) {
    if (face.tag != FaceTag::kContactUpper || face.interface != interface) continue;
    const Vec3& a = upper.nodes[face.nodes[0]];
    const double share = (upper.nodes[face.nodes[1]] - a).cross(upper.nodes[face.nodes[2]] - a).norm() / 6.0;
    for (int node : face.nodes) area[pair_of[node]] += share;
  }

  std::vector<double> w(pairs.size());
  if (!bound.tabulated()) {
    if (!(bound.constant >= 0.0) || !std::isfinite(bound.constant)) {
      throw InvalidInputError("friction bound must be finite and non-negative");
    }
    for (std::size_t q = 0; q < pairs.size(); ++q) w[q] = bound.constant * area[q];
    return w;
  }

  const double tol = 1e-9 * mesh.diameter;
  std::vector<std::array<double, 3>> table = bound.table;
  std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });
  for (const auto& row : table) {
    if (!(row[2] >= 0.0) || !std::isfinite(row[2])) throw InvalidInputError("friction bound must be non-negative");
  }
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const Vec3& x = upper.nodes[pairs[q].first];
    auto it = std::lower_bound(table.begin(), table.end(), x.x() - tol,
                               [](const auto& row, double value) { return row[0] < value; });
    const std::array<double, 3>* hit = nullptr;
    for (; it != table.end() && (*it)[0] <= x.x() + tol; ++it) {
      if (std::abs((*it)[1] - x.y()) <= tol) {
        hit = &*it;
        break;
      }
    }
    if (hit == nullptr) {
      std::ostringstream msg;
      msg << "friction table for interface " << interface << " has no entry at (" << x.x() << ", " << x.y() << ")";
      throw InvalidInputError(msg.str());
    }
    w[q] = (*hit)[2] * area[q];
  }
  return w;
}

std::vector<double> LayerSystem::total_load() const {
  std::vector<double> f = body_load;
  for (std::size_t k = 0; k < f.size(); ++k) f[k] += traction_load[k];
  return f;
}

LayeredProblem build_layered_problem(const ProblemDefinition& def, int threads) {
  const int n = def.geometry.layer_count();
  if (n < 1) throw InvalidInputError("at least one layer is required");
  if (static_cast<int>(def.materials.size()) != n) throw InvalidInputError("one material per layer is required");
  if (static_cast<int>(def.friction.size()) != n - 1) {
    throw InvalidInputError("one friction bound per interface is required");
  }

  LayeredProblem problem;
  problem.mesh = build_layered_box_mesh(def.geometry);
  problem.materials = def.materials;
  problem.layers.resize(static_cast<std::size_t>(n));
  for (int l = 0; l < n; ++l) {
    const LayerMesh& mesh = problem.mesh.layers[l];
    LayerSystem& sys = problem.layers[l];
    sys.stiffness = assemble_stiffness(mesh, def.materials[l], threads);
    sys.body_load = assemble_body_load(mesh, def.body_force);
    sys.traction_load.assign(static_cast<std::size_t>(mesh.dof_count()), 0.0);
    if (l == 0) {
      for (const auto& patch : def.tractions) {
        const auto t = assemble_traction_load(mesh, patch);
        for (std::size_t k = 0; k < t.size(); ++k) sys.traction_load[k] += t[k];
      }
    }
    for (int node = 0; node < mesh.node_count(); ++node) {
      const bool fixed = mesh.has_flag(node, kOnLateral) || (l == n - 1 && mesh.has_flag(node, kOnBottom));
      if (!fixed) continue;
      for (int i = 0; i < 3; ++i) {
        sys.dirichlet_dofs.push_back(3 * node + i);
        sys.dirichlet_values.push_back(0.0);
      }
    }
  }
  for (int i = 0; i < n - 1; ++i) {
    const auto& pairs = problem.mesh.interfaces[i];
    auto& below = problem.layers[i].bottom_interface_nodes;
    auto& above = problem.layers[i + 1].top_interface_nodes;
    std::vector<char> pinned(pairs.size());
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      below.push_back(pairs[q].first);
      above.push_back(pairs[q].second);
      pinned[q] = problem.mesh.layers[i].has_flag(pairs[q].first, kOnLateral) ? 1 : 0;
    }
    problem.friction.push_back(friction_weights(problem.mesh, i, def.friction[i]));
    problem.pinned.push_back(std::move(pinned));
  }
  return problem;
}

}  // namespace layerstack

#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "layerstack/ld.hpp"

namespace layerstack::oracle {

Eigen::VectorXd dense_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index pivot = k;
    for (Eigen::Index r = k + 1; r < n; ++r) {
      if (std::abs(a(r, k)) > std::abs(a(pivot, k))) pivot = r;
    }
    if (a(pivot, k) == 0.0) throw std::runtime_error("singular matrix in dense_solve");
    a.row(k).swap(a.row(pivot));
    std::swap(b[k], b[pivot]);
    for (Eigen::Index r = k + 1; r < n; ++r) {
      const double f = a(r, k) / a(k, k);
      if (f == 0.0) continue;
      a.row(r).tail(n - k) -= f * a.row(k).tail(n - k);
      b[r] -= f * b[k];
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    double s = b[k];
    for (Eigen::Index c = k + 1; c < n; ++c) s -= a(k, c) * x[c];
    x[k] = s / a(k, k);
  }
  return x;
}

Eigen::MatrixXd dense_schur(const Eigen::MatrixXd& a, const std::vector<int>& boundary) {
  const Eigen::Index n = a.rows();
  std::vector<char> is_boundary(static_cast<std::size_t>(n), 0);
  for (int b : boundary) is_boundary[b] = 1;
  std::vector<int> interior;
  for (int k = 0; k < n; ++k) {
    if (!is_boundary[k]) interior.push_back(k);
  }
  const Eigen::Index nb = static_cast<Eigen::Index>(boundary.size());
  const Eigen::Index ni = static_cast<Eigen::Index>(interior.size());
  Eigen::MatrixXd aii(ni, ni), aib(ni, nb), abb(nb, nb);
  for (Eigen::Index r = 0; r < ni; ++r) {
    for (Eigen::Index c = 0; c < ni; ++c) aii(r, c) = a(interior[r], interior[c]);
    for (Eigen::Index c = 0; c < nb; ++c) aib(r, c) = a(interior[r], boundary[c]);
  }
  for (Eigen::Index r = 0; r < nb; ++r) {
    for (Eigen::Index c = 0; c < nb; ++c) abb(r, c) = a(boundary[r], boundary[c]);
  }
  Eigen::MatrixXd s = abb;
  for (Eigen::Index c = 0; c < nb; ++c) {
    const Eigen::VectorXd z = ni > 0 ? dense_solve(aii, aib.col(c)) : Eigen::VectorXd();
    if (ni > 0) s.col(c) -= aib.transpose() * z;
  }
  return s;
}

std::vector<double> dense_pinned_solve(const Eigen::MatrixXd& a, const std::vector<double>& b,
                                       const std::vector<int>& dofs, const std::vector<double>& values) {
  const Eigen::Index n = a.rows();
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (std::size_t k = 0; k < dofs.size(); ++k) {
    fixed[dofs[k]] = 1;
    x[dofs[k]] = values[k];
  }
  std::vector<int> free;
  for (int k = 0; k < n; ++k) {
    if (!fixed[k]) free.push_back(k);
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
  if (nf == 0) return x;
  Eigen::MatrixXd af(nf, nf);
  Eigen::VectorXd bf(nf);
  for (Eigen::Index r = 0; r < nf; ++r) {
    double s = b[free[r]];
    for (int c = 0; c < n; ++c) {
      if (fixed[c]) s -= a(free[r], c) * x[c];
    }
    bf[r] = s;
    for (Eigen::Index c = 0; c < nf; ++c) af(r, c) = a(free[r], free[c]);
  }
  const Eigen::VectorXd xf = dense_solve(af, bf);
  for (Eigen::Index r = 0; r < nf; ++r) x[free[r]] = xf[r];
  return x;
}

namespace {

double largest_eigenvalue(const Eigen::SparseMatrix<double>& a) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.rows()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = a * v;
    const double next = v.dot(w);
    v = w.normalized();
    if (std::abs(next - lambda) <= 1e-10 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return 1.05 * lambda;  // margin for the power-iteration underestimate
}

Eigen::Vector2d shrink(const Eigen::Vector2d& v, double t) {
  const double n = v.norm();
  return n <= t ? Eigen::Vector2d::Zero() : Eigen::Vector2d((1.0 - t / n) * v);
}

// Generic restarted FISTA loop. grad(x) returns the smooth gradient, prox(x, step) projects in place.
template <class Grad, class Prox>
Eigen::VectorXd fista(Eigen::VectorXd x, double lipschitz, int iterations, Grad&& grad, Prox&& prox) {
  const double step = 1.0 / lipschitz;
  Eigen::VectorXd y = x;
  double t = 1.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd next = y - step * grad(y);
    prox(next, step);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if ((y - next).dot(next - x) > 0.0) {
      y = next;
      t = 1.0;
    } else {
      y = next + ((t - 1.0) / t_next) * (next - x);
      t = t_next;
    }
    x = next;
  }
  return x;
}

}  // namespace

std::vector<double> fista_contact(const ContactProblem& problem, int iterations) {
  const Eigen::SparseMatrix<double> a = problem.matrix->to_eigen();
  const Eigen::Map<const Eigen::VectorXd> rhs(problem.rhs.data(), static_cast<Eigen::Index>(problem.rhs.size()));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(a.rows());
  const auto prox = [&](Eigen::VectorXd& v, double step) {
    for (std::size_t q = 0; q < problem.nodes.size(); ++q) {
      const auto& d = problem.nodes[q].dofs;
      const auto& c = problem.constraints[q];
      const Eigen::Vector2d t = Eigen::Vector2d(v[d[0]], v[d[1]]) - c.anchor;
      const Eigen::Vector2d s = shrink(t, step * c.weight) + c.anchor;
      v[d[0]] = s[0];
      v[d[1]] = s[1];
      v[d[2]] = std::max(v[d[2]], c.gap);
    }
  };
  prox(x, 0.0);
  x = fista(x, largest_eigenvalue(a), iterations, [&](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(a * v - rhs);
  }, prox);
  return {x.data(), x.data() + x.size()};
}

std::vector<std::vector<double>> fista_coupled(const LayeredProblem& problem, int iterations) {
  const int n_layers = problem.layer_count();
  std::vector<int> offset(static_cast<std::size_t>(n_layers) + 1, 0);
  for (int l = 0; l < n_layers; ++l) offset[l + 1] = offset[l] + problem.layers[l].stiffness.size();
  const int total = offset.back();
  std::vector<Triplet> t;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(total);
  std::vector<char> fixed(static_cast<std::size_t>(total), 0);
  for (int l = 0; l < n_layers; ++l) {
    const auto& sys = problem.layers[l];
    const auto& rows = sys.stiffness.row_offsets();
    const auto& cols = sys.stiffness.columns();
    const auto& vals = sys.stiffness.values();
    for (int r = 0; r < sys.stiffness.size(); ++r) {
      for (int e = rows[r]; e < rows[r + 1]; ++e) t.push_back({offset[l] + r, offset[l] + cols[e], vals[e]});
    }
    const auto load = sys.total_load();
    for (std::size_t k = 0; k < load.size(); ++k) b[offset[l] + static_cast<Eigen::Index>(k)] = load[k];
    for (int d : sys.dirichlet_dofs) fixed[offset[l] + d] = 1;
  }
  Eigen::SparseMatrix<double> a(total, total);
  std::vector<Eigen::Triplet<double>> et;
  for (const auto& x : t) et.emplace_back(x.row, x.col, x.value);
  a.setFromTriplets(et.begin(), et.end());

  const auto prox = [&](Eigen::VectorXd& v, double step) {
    for (int k = 0; k < total; ++k) {
      if (fixed[k]) v[k] = 0.0;
    }
    for (int i = 0; i < problem.interface_count(); ++i) {
      const auto& pairs = problem.mesh.interfaces[i];
      for (std::size_t q = 0; q < pairs.size(); ++q) {
        if (problem.pinned[i][q]) continue;
        const int ua = offset[i] + 3 * pairs[q].first;
        const int ub = offset[i + 1] + 3 * pairs[q].second;
        const Eigen::Vector2d xa(v[ua], v[ua + 1]);
        const Eigen::Vector2d xb(v[ub], v[ub + 1]);
        const Eigen::Vector2d mid = 0.5 * (xa + xb);
        const Eigen::Vector2d d = shrink(xa - xb, 2.0 * step * problem.friction[i][q]);
        v[ua] = mid[0] + 0.5 * d[0];
        v[ua + 1] = mid[1] + 0.5 * d[1];
        v[ub] = mid[0] - 0.5 * d[0];
        v[ub + 1] = mid[1] - 0.5 * d[1];
        if (v[ua + 2] < v[ub + 2]) v[ua + 2] = v[ub + 2] = 0.5 * (v[ua + 2] + v[ub + 2]);
      }
    }
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(total);
  x = fista(x, largest_eigenvalue(a), iterations, [&](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(a * v - b);
  }, prox);
  std::vector<std::vector<double>> fields(static_cast<std::size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) fields[l].assign(x.data() + offset[l], x.data() + offset[l + 1]);
  return fields;
}

std::vector<std::vector<double>> tied_solve(const LayeredProblem& problem) {
  const int n_layers = problem.layer_count();
  // Global node id per (layer, node); the lower node of a pair reuses the upper node's id.
  std::vector<std::vector<int>> id(static_cast<std::size_t>(n_layers));
  int next = 0;
  for (int l = 0; l < n_layers; ++l) {
    id[l].assign(static_cast<std::size_t>(problem.mesh.layers[l].node_count()), -1);
    if (l > 0) {
      for (const auto& [a, b] : problem.mesh.interfaces[l - 1]) id[l][b] = id[l - 1][a];
    }
    for (int& v : id[l]) {
      if (v < 0) v = next++;
    }
  }
  const int dofs = 3 * next;
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dofs);
  std::vector<char> fixed(static_cast<std::size_t>(dofs), 0);
  const auto global = [&](int l, int dof) { return 3 * id[l][dof / 3] + dof % 3; };
  for (int l = 0; l < n_layers; ++l) {
    const auto& sys = problem.layers[l];
    const auto& rows = sys.stiffness.row_offsets();
    const auto& cols = sys.stiffness.columns();
    const auto& vals = sys.stiffness.values();
    for (int r = 0; r < sys.stiffness.size(); ++r) {
      for (int e = rows[r]; e < rows[r + 1]; ++e) t.emplace_back(global(l, r), global(l, cols[e]), vals[e]);
    }
    const auto load = sys.total_load();
    for (int k = 0; k < static_cast<int>(load.size()); ++k) b[global(l, k)] += load[k];
    for (int d : sys.dirichlet_dofs) fixed[global(l, d)] = 1;
  }
  std::vector<int> reduced(static_cast<std::size_t>(dofs), -1);
  int nf = 0;
  for (int k = 0; k < dofs; ++k) {
    if (!fixed[k]) reduced[k] = nf++;
  }
  std::vector<Eigen::Triplet<double>> tf;
  for (const auto& e : t) {
    if (reduced[e.row()] >= 0 && reduced[e.col()] >= 0) tf.emplace_back(reduced[e.row()], reduced[e.col()], e.value());
  }
  Eigen::SparseMatrix<double> a(nf, nf);
  a.setFromTriplets(tf.begin(), tf.end());
  Eigen::VectorXd bf(nf);
  for (int k = 0; k < dofs; ++k) {
    if (reduced[k] >= 0) bf[reduced[k]] = b[k];
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw std::runtime_error("tied system factorization failed");
  const Eigen::VectorXd xf = lu.solve(bf);
  std::vector<std::vector<double>> fields(static_cast<std::size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    fields[l].assign(static_cast<std::size_t>(problem.layers[l].stiffness.size()), 0.0);
    for (int k = 0; k < problem.layers[l].stiffness.size(); ++k) {
      const int g = global(l, k);
      fields[l][k] = reduced[g] >= 0 ? xf[reduced[g]] : 0.0;
    }
  }
  return fields;
}

ProblemDefinition pavement_definition(double h, double ty) {
  ProblemDefinition d;
  d.geometry.x_extent = {0.0, 3.0};
  d.geometry.y_extent = {0.0, 6.0};
  d.geometry.layer_z = {2.3, 1.9, 1.2, 0.0};
  d.geometry.h = h;
  d.materials = {{5000.0, 0.25}, {2000.0, 0.25}, {200.0, 0.4}};
  d.friction = {FrictionBound{0.2, {}}, FrictionBound{0.05, {}}};
  d.body_force = Vec3(0.0, 0.0, -0.05);
  d.tractions = {TractionPatch{{1.34, 1.66}, {2.84, 3.16}, Vec3(0.0, ty, -22.5)}};
  return d;
}

ProblemDefinition two_layer_definition(double h) {
  ProblemDefinition d = pavement_definition(h);
  d.geometry.layer_z = {2.3, 1.9, 1.2};
  d.materials.resize(2);
  d.friction.resize(1);
  return d;
}

double reflection_residual(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields,
                           bool reflect_x) {
  const int axis = reflect_x ? 0 : 1;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : problem.mesh.layers[0].nodes) {
    lo = std::min(lo, p[axis]);
    hi = std::max(hi, p[axis]);
  }
  const double mirror = lo + hi;
  const double quantum = 1e-9 * problem.mesh.diameter;
  const auto key = [&](const Vec3& p) {
    return std::array<long long, 3>{std::llround(p.x() / quantum), std::llround(p.y() / quantum),
                                    std::llround(p.z() / quantum)};
  };
  double worst = 0.0;
  double scale = 0.0;
  for (std::size_t l = 0; l < fields.size(); ++l) {
    const auto& nodes = problem.mesh.layers[l].nodes;
    std::map<std::array<long long, 3>, int> index;
    for (int k = 0; k < static_cast<int>(nodes.size()); ++k) index[key(nodes[k])] = k;
    for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
      Vec3 r = nodes[k];
      r[axis] = mirror - r[axis];
      const auto it = index.find(key(r));
      if (it == index.end()) throw std::runtime_error("mesh is not reflection symmetric");
      for (int c = 0; c < 3; ++c) {
        const double own = fields[l][3 * k + c];
        const double image = fields[l][3 * it->second + c];
        worst = std::max(worst, std::abs(image - (c == axis ? -own : own)));
        scale = std::max(scale, std::abs(own));
      }
    }
  }
  return scale > 0.0 ? worst / scale : worst;
}

double relative_energy_difference(const LayeredProblem& problem, const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b) {
  std::vector<std::vector<double>> diff = a;
  for (std::size_t l = 0; l < diff.size(); ++l) {
    for (std::size_t k = 0; k < diff[l].size(); ++k) diff[l][k] -= b[l][k];
  }
  const double scale = energy_norm(problem, b);
  return scale > 0.0 ? energy_norm(problem, diff) / scale : energy_norm(problem, diff);
}

}  // namespace layerstack::oracle

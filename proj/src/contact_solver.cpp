#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "contact_detail.hpp"
#include "layerstack/errors.hpp"
#include "layerstack/vi_solver.hpp"

namespace layerstack {

namespace {

Vec3 gather(std::span<const double> x, const std::array<int, 3>& dofs) {
  return {x[dofs[0]], x[dofs[1]], x[dofs[2]]};
}

void scatter(std::span<double> x, const std::array<int, 3>& dofs, const Vec3& v) {
  for (int i = 0; i < 3; ++i) x[dofs[i]] = v[i];
}

double friction_term(const NodeConstraint& c, std::span<const double> x, const std::array<int, 3>& dofs) {
  if (c.weight <= 0.0) return 0.0;
  return c.weight * std::hypot(x[dofs[0]] - c.anchor[0], x[dofs[1]] - c.anchor[1]);
}

struct ObjectiveParts {
  double value = 0.0;
  double magnitude = 0.0;  // sum of absolute term sizes, for rounding tolerances
};

ObjectiveParts objective_parts(const SparseMatrix& a, std::span<const double> rhs,
                               std::span<const ContactNodeLayout> nodes, std::span<const NodeConstraint> cons,
                               std::span<const double> x) {
  double quad = 0.0;
  double lin = 0.0;
  for (int r = 0; r < a.size(); ++r) {
    quad += x[r] * a.row_dot(r, x);
    lin += rhs[r] * x[r];
  }
  double fric = 0.0;
  for (std::size_t q = 0; q < nodes.size(); ++q) fric += friction_term(cons[q], x, nodes[q].dofs);
  return {0.5 * quad - lin + fric, 0.5 * std::abs(quad) + std::abs(lin) + fric};
}

}  // namespace

namespace detail {

double residual_and_scale(const SparseMatrix& a, std::span<const double> rhs, std::span<const NodeConstraint> cons,
                          std::span<const double> x, std::vector<double>& r) {
  const int n = a.size();
  r.resize(static_cast<std::size_t>(n));
  const auto& offsets = a.row_offsets();
  const auto& cols = a.columns();
  const auto& vals = a.values();
  double scale = 0.0;
  for (int k = 0; k < n; ++k) {
    double sum = 0.0;
    double abs_sum = 0.0;
    for (int e = offsets[k]; e < offsets[k + 1]; ++e) {
      const double term = vals[e] * x[cols[e]];
      sum += term;
      abs_sum += std::abs(term);
    }
    r[k] = sum - rhs[k];
    scale = std::max(scale, abs_sum + std::abs(rhs[k]));
  }
  double w_max = 0.0;
  for (const auto& c : cons) w_max = std::max(w_max, c.weight);
  scale += w_max;
  return scale > 0.0 ? scale : 1.0;
}

}  // namespace detail

namespace {

using detail::residual_and_scale;

// Above this many contact DOFs the dense Schur complement costs more memory than it saves.
constexpr int kMaxSchurDofs = 6000;

double natural_residual(std::span<const double> r, std::span<const ContactNodeLayout> nodes,
                        std::span<const NodeConstraint> cons, std::span<const Eigen::Matrix3d> blocks,
                        std::span<const char> is_node_dof, std::span<const double> x) {
  double res = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!is_node_dof[k]) res = std::max(res, std::abs(r[k]));
  }
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const Vec3 xq = gather(x, nodes[q].dofs);
    const Vec3 c = blocks[q] * xq - gather(r, nodes[q].dofs);
    const Vec3 v = nodal_prox(blocks[q], c, cons[q].weight, cons[q].anchor, cons[q].gap);
    res = std::max(res, (blocks[q] * (v - xq)).norm());
  }
  if (!std::isfinite(res)) return std::numeric_limits<double>::infinity();
  return res;
}

std::vector<char> node_dof_mask(int n, std::span<const ContactNodeLayout> nodes) {
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  for (const auto& node : nodes) {
    for (int d : node.dofs) {
      if (d < 0 || d >= n) throw InvalidInputError("contact node DOF out of range");
      if (mask[d]) throw InvalidInputError("contact node DOF listed twice");
      mask[d] = 1;
    }
  }
  return mask;
}

}  // namespace

double ContactProblem::objective(std::span<const double> x) const {
  return objective_parts(*matrix, rhs, nodes, constraints, x).value;
}

double ContactProblem::force_scale(std::span<const double> x) const {
  std::vector<double> r;
  return residual_and_scale(*matrix, rhs, constraints, x, r);
}

double ContactProblem::kkt_residual(std::span<const double> x) const {
  std::vector<double> r;
  const double scale = residual_and_scale(*matrix, rhs, constraints, x, r);
  std::vector<Eigen::Matrix3d> blocks;
  blocks.reserve(nodes.size());
  for (const auto& node : nodes) {
    Eigen::Matrix3d b;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) b(i, j) = matrix->at(node.dofs[i], node.dofs[j]);
    }
    blocks.push_back(b);
  }
  const auto mask = node_dof_mask(matrix->size(), nodes);
  return natural_residual(r, nodes, constraints, blocks, mask, x) / scale;
}

struct ContactSolver::Impl {
  std::shared_ptr<const SparseMatrix> a;
  std::vector<ContactNodeLayout> nodes;
  int n = 0;
  std::vector<char> is_node_dof;
  std::vector<int> smooth;
  SparseCholesky smooth_factor;

  std::vector<Eigen::Matrix3d> d_qq;
  std::vector<Eigen::Matrix3d> d_qp;
  std::vector<Eigen::Matrix3d> d_pp_inv;
  std::vector<Eigen::Matrix3d> d_reduced;  // D_qq - D_qp D_pp^{-1} D_pq

  // Active-set Newton data: the Hessian shares A's pattern (entry k of both is the same (row, col)).
  Eigen::SparseMatrix<double> hess;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> newton;
  std::vector<int> transpose_entry;
  std::vector<std::array<int, 4>> tangential_entries;
  bool newton_ready = false;

  // Dense Schur complement of A onto contact DOFs, filled one column at a time as DOFs become free.
  std::vector<int> node_slot;
  std::vector<int> node_dof_list;
  std::vector<int> smooth_slot;
  std::vector<Eigen::VectorXd> schur_col;
  bool use_schur = false;

  const Eigen::VectorXd& schur_column(int slot);
  bool newton_direction(std::span<const double> x, std::span<const NodeConstraint> cons,
                        const std::vector<char>& fixed, const std::vector<char>& slip, std::span<const double> grad,
                        Eigen::VectorXd& step);

  Eigen::Matrix3d block(const std::array<int, 3>& rows, const std::array<int, 3>& cols) const {
    Eigen::Matrix3d b;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) b(i, j) = a->at(rows[i], cols[j]);
    }
    return b;
  }

  int entry(int row, int col) const {
    const auto& offsets = a->row_offsets();
    const auto& cols = a->columns();
    const auto first = cols.begin() + offsets[row];
    const auto last = cols.begin() + offsets[row + 1];
    const auto it = std::lower_bound(first, last, col);
    if (it == last || *it != col) return -1;
    return static_cast<int>(it - cols.begin());
  }

  void sweep(std::span<double> x, std::span<const double> rhs, std::span<const NodeConstraint> cons) const;
  bool polish(std::vector<double>& x, std::span<const double> rhs, std::span<const NodeConstraint> cons,
              double scale, double tol, int& newton_steps);
  enum class FaceResult { kConverged, kStateChanged, kFailed };
  FaceResult newton_on_face(std::vector<double>& x, std::span<const double> rhs, std::span<const NodeConstraint> cons,
                            const std::vector<char>& fixed, std::vector<char>& slip, std::vector<char>& stick,
                            double scale, int& newton_steps);
};

ContactSolver::ContactSolver(std::shared_ptr<const SparseMatrix> matrix, std::vector<ContactNodeLayout> nodes)
    : impl_(std::make_unique<Impl>()) {
  Impl& s = *impl_;
  s.a = std::move(matrix);
  s.nodes = std::move(nodes);
  s.n = s.a->size();
  s.is_node_dof = node_dof_mask(s.n, s.nodes);

  std::vector<int> smooth_index(static_cast<std::size_t>(s.n), -1);
  for (int k = 0; k < s.n; ++k) {
    if (!s.is_node_dof[k]) {
      smooth_index[k] = static_cast<int>(s.smooth.size());
      s.smooth.push_back(k);
    }
  }
  std::vector<Triplet> t;
  const auto& offsets = s.a->row_offsets();
  const auto& cols = s.a->columns();
  const auto& vals = s.a->values();
  for (int row : s.smooth) {
    for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
      if (smooth_index[cols[e]] >= 0) t.push_back({smooth_index[row], smooth_index[cols[e]], vals[e]});
    }
  }
  s.smooth_factor = SparseCholesky(SparseMatrix::from_triplets(static_cast<int>(s.smooth.size()), std::move(t)));

  for (const auto& node : s.nodes) {
    const Eigen::Matrix3d dqq = s.block(node.dofs, node.dofs);
    s.d_qq.push_back(dqq);
    if (node.has_partner()) {
      for (int d : node.partner) {
        if (d < 0 || d >= s.n || s.is_node_dof[d]) throw InvalidInputError("invalid partner DOF");
      }
      const Eigen::Matrix3d dqp = s.block(node.dofs, node.partner);
      const Eigen::Matrix3d dpp_inv = s.block(node.partner, node.partner).inverse();
      s.d_qp.push_back(dqp);
      s.d_pp_inv.push_back(dpp_inv);
      Eigen::Matrix3d red = dqq - dqp * dpp_inv * dqp.transpose();
      s.d_reduced.push_back(0.5 * (red + red.transpose()));
    } else {
      s.d_qp.push_back(Eigen::Matrix3d::Zero());
      s.d_pp_inv.push_back(Eigen::Matrix3d::Zero());
      s.d_reduced.push_back(dqq);
    }
  }

  if (!s.nodes.empty()) {
    s.hess = s.a->to_eigen();
    s.hess.makeCompressed();
    bool same = static_cast<std::size_t>(s.hess.nonZeros()) == s.a->nonzeros();
    for (int k = 0; same && k <= s.n; ++k) same = s.hess.outerIndexPtr()[k] == offsets[k];
    for (std::size_t k = 0; same && k < s.a->nonzeros(); ++k) same = s.hess.innerIndexPtr()[k] == cols[k];
    s.transpose_entry.resize(s.a->nonzeros());
    for (int row = 0; same && row < s.n; ++row) {
      for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
        s.transpose_entry[e] = s.entry(cols[e], row);
        if (s.transpose_entry[e] < 0) same = false;
      }
    }
    for (const auto& node : s.nodes) {
      s.tangential_entries.push_back({s.entry(node.dofs[0], node.dofs[0]), s.entry(node.dofs[0], node.dofs[1]),
                                      s.entry(node.dofs[1], node.dofs[0]), s.entry(node.dofs[1], node.dofs[1])});
      for (int e : s.tangential_entries.back()) same = same && e >= 0;
    }
    s.newton_ready = same;
  }
  const int node_dofs = 3 * static_cast<int>(s.nodes.size());
  s.use_schur = s.newton_ready && node_dofs <= kMaxSchurDofs;
  if (s.use_schur) {
    s.node_slot.assign(static_cast<std::size_t>(s.n), -1);
    for (const auto& node : s.nodes) {
      for (int d : node.dofs) {
        s.node_slot[d] = static_cast<int>(s.node_dof_list.size());
        s.node_dof_list.push_back(d);
      }
    }
    s.smooth_slot = std::move(smooth_index);
    s.schur_col.resize(static_cast<std::size_t>(node_dofs));
  } else if (s.newton_ready) {
    s.newton.analyzePattern(s.hess);
  }
}

const Eigen::VectorXd& ContactSolver::Impl::schur_column(int slot) {
  Eigen::VectorXd& col = schur_col[static_cast<std::size_t>(slot)];
  if (col.size() > 0) return col;
  const auto& offsets = a->row_offsets();
  const auto& cols = a->columns();
  const auto& vals = a->values();
  const int k = node_dof_list[static_cast<std::size_t>(slot)];
  // z = A_ss^{-1} A_sk, using the symmetry of A to read column k from row k.
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(smooth.size()));
  for (int e = offsets[k]; e < offsets[k + 1]; ++e) {
    if (smooth_slot[cols[e]] >= 0) z[smooth_slot[cols[e]]] = vals[e];
  }
  if (!smooth.empty()) smooth_factor.solve_in_place(z);
  col.resize(static_cast<Eigen::Index>(node_dof_list.size()));
  for (std::size_t j = 0; j < node_dof_list.size(); ++j) {
    const int row = node_dof_list[j];
    double value = 0.0;
    for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
      const int c = cols[e];
      if (c == k) value += vals[e];
      else if (smooth_slot[c] >= 0) value -= vals[e] * z[smooth_slot[c]];
    }
    col[static_cast<Eigen::Index>(j)] = value;
  }
  return col;
}

bool ContactSolver::Impl::newton_direction(std::span<const double> x, std::span<const NodeConstraint> cons,
                                           const std::vector<char>& fixed, const std::vector<char>& slip,
                                           std::span<const double> grad, Eigen::VectorXd& step) {
  std::vector<Eigen::Matrix2d> curv(nodes.size(), Eigen::Matrix2d::Zero());
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    if (!slip[q]) continue;
    const auto& d = nodes[q].dofs;
    const Eigen::Vector2d t(x[d[0]] - cons[q].anchor[0], x[d[1]] - cons[q].anchor[1]);
    const double tn = t.norm();
    const Eigen::Vector2d u = t / tn;
    curv[q] = (cons[q].weight / tn) * (Eigen::Matrix2d::Identity() - u * u.transpose());
  }
  const auto& vals = a->values();
  const auto& offsets = a->row_offsets();
  const auto& cols = a->columns();

  if (!use_schur) {
    double* h = hess.valuePtr();
    std::copy(vals.begin(), vals.end(), h);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      if (!slip[q]) continue;
      const auto& e = tangential_entries[q];
      h[e[0]] += curv[q](0, 0);
      h[e[1]] += curv[q](0, 1);
      h[e[2]] += curv[q](1, 0);
      h[e[3]] += curv[q](1, 1);
    }
    for (int row = 0; row < n; ++row) {
      if (!fixed[row]) continue;
      for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
        const double v = cols[e] == row ? 1.0 : 0.0;
        h[e] = v;
        h[transpose_entry[e]] = v;
      }
    }
    newton.factorize(hess);
    if (newton.info() != Eigen::Success) return false;
    step = -Eigen::Map<const Eigen::VectorXd>(grad.data(), n);
    step = newton.solve(step);
    return step.allFinite();
  }

  // Eliminate the smooth block: (S_FF + C_FF) dF = -g_F + A_Fs A_ss^{-1} g_s.
  const Eigen::Index ns = static_cast<Eigen::Index>(smooth.size());
  Eigen::VectorXd gs(ns);
  for (Eigen::Index k = 0; k < ns; ++k) gs[k] = grad[smooth[static_cast<std::size_t>(k)]];
  if (ns > 0) smooth_factor.solve_in_place(gs);  // gs now holds A_ss^{-1} g_s

  std::vector<int> free_slots;
  for (std::size_t j = 0; j < node_dof_list.size(); ++j) {
    if (!fixed[node_dof_list[j]]) free_slots.push_back(static_cast<int>(j));
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(free_slots.size());
  Eigen::VectorXd d_free(nf);
  if (nf > 0) {
    Eigen::MatrixXd s(nf, nf);
    for (Eigen::Index c = 0; c < nf; ++c) {
      const Eigen::VectorXd& col = schur_column(free_slots[static_cast<std::size_t>(c)]);
      for (Eigen::Index r = 0; r < nf; ++r) s(r, c) = col[free_slots[static_cast<std::size_t>(r)]];
    }
    for (Eigen::Index r = 0; r < nf; ++r) {
      const int slot = free_slots[static_cast<std::size_t>(r)];
      const std::size_t q = static_cast<std::size_t>(slot / 3);
      const int comp = slot % 3;
      if (comp < 2 && slip[q]) {
        for (Eigen::Index c = 0; c < nf; ++c) {
          const int other = free_slots[static_cast<std::size_t>(c)];
          if (other / 3 == slot / 3 && other % 3 < 2) s(r, c) += curv[q](comp, other % 3);
        }
      }
    }
    Eigen::VectorXd rhs_f(nf);
    for (Eigen::Index r = 0; r < nf; ++r) {
      const int row = node_dof_list[static_cast<std::size_t>(free_slots[static_cast<std::size_t>(r)])];
      double value = -grad[row];
      for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
        if (smooth_slot[cols[e]] >= 0) value += vals[e] * gs[smooth_slot[cols[e]]];
      }
      rhs_f[r] = value;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (s + s.transpose()));
    if (llt.info() != Eigen::Success) return false;
    d_free = llt.solve(rhs_f);
  }

  step = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < nf; ++r) {
    step[node_dof_list[static_cast<std::size_t>(free_slots[static_cast<std::size_t>(r)])]] = d_free[r];
  }
  if (ns > 0) {
    // d_s = -A_ss^{-1} (g_s + A_sF d_F)
    Eigen::VectorXd b(ns);
    for (Eigen::Index k = 0; k < ns; ++k) {
      const int row = smooth[static_cast<std::size_t>(k)];
      double value = 0.0;
      for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
        if (node_slot[cols[e]] >= 0) value += vals[e] * step[cols[e]];
      }
      b[k] = value;
    }
    smooth_factor.solve_in_place(b);
    for (Eigen::Index k = 0; k < ns; ++k) step[smooth[static_cast<std::size_t>(k)]] = -gs[k] - b[k];
  }
  return step.allFinite();
}

ContactSolver::~ContactSolver() = default;
ContactSolver::ContactSolver(ContactSolver&&) noexcept = default;
ContactSolver& ContactSolver::operator=(ContactSolver&&) noexcept = default;

const std::shared_ptr<const SparseMatrix>& ContactSolver::matrix() const { return impl_->a; }
const std::vector<ContactNodeLayout>& ContactSolver::nodes() const { return impl_->nodes; }

void ContactSolver::Impl::sweep(std::span<double> x, std::span<const double> rhs,
                                std::span<const NodeConstraint> cons) const {
  const auto& offsets = a->row_offsets();
  const auto& cols = a->columns();
  const auto& vals = a->values();
  if (!smooth.empty()) {
    Eigen::VectorXd b(static_cast<Eigen::Index>(smooth.size()));
    for (std::size_t k = 0; k < smooth.size(); ++k) {
      const int row = smooth[k];
      double value = rhs[row];
      for (int e = offsets[row]; e < offsets[row + 1]; ++e) {
        if (is_node_dof[cols[e]]) value -= vals[e] * x[cols[e]];
      }
      b[static_cast<Eigen::Index>(k)] = value;
    }
    smooth_factor.solve_in_place(b);
    for (std::size_t k = 0; k < smooth.size(); ++k) x[smooth[k]] = b[static_cast<Eigen::Index>(k)];
  }
  const auto local_rhs = [&](const std::array<int, 3>& dofs) {
    Vec3 c;
    for (int i = 0; i < 3; ++i) c[i] = rhs[dofs[i]] - a->row_dot(dofs[i], x);
    return c;
  };
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const auto& node = nodes[q];
    const Vec3 xq = gather(x, node.dofs);
    Vec3 cq = local_rhs(node.dofs) + d_qq[q] * xq;
    if (!node.has_partner()) {
      scatter(x, node.dofs, nodal_prox(d_qq[q], cq, cons[q].weight, cons[q].anchor, cons[q].gap));
      continue;
    }
    const Vec3 xp = gather(x, node.partner);
    const Eigen::Matrix3d d_pp = d_pp_inv[q].inverse();
    cq += d_qp[q] * xp;
    const Vec3 cp = local_rhs(node.partner) + d_pp * xp + d_qp[q].transpose() * xq;
    const Vec3 c_red = cq - d_qp[q] * (d_pp_inv[q] * cp);
    const Vec3 vq = nodal_prox(d_reduced[q], c_red, cons[q].weight, cons[q].anchor, cons[q].gap);
    scatter(x, node.dofs, vq);
    scatter(x, node.partner, d_pp_inv[q] * (cp - d_qp[q].transpose() * vq));
  }
}

ContactSolver::Impl::FaceResult ContactSolver::Impl::newton_on_face(
    std::vector<double>& x, std::span<const double> rhs, std::span<const NodeConstraint> cons,
    const std::vector<char>& fixed, std::vector<char>& slip, std::vector<char>& stick, double scale,
    int& newton_steps) {
  std::vector<double> r;
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 30; ++it) {
    residual_and_scale(*a, rhs, cons, x, r);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      if (!slip[q]) continue;
      const auto& d = nodes[q].dofs;
      const Eigen::Vector2d t(x[d[0]] - cons[q].anchor[0], x[d[1]] - cons[q].anchor[1]);
      const double tn = t.norm();
      r[d[0]] += cons[q].weight * t[0] / tn;
      r[d[1]] += cons[q].weight * t[1] / tn;
    }
    double gmax = 0.0;
    for (int k = 0; k < n; ++k) {
      if (fixed[k]) r[k] = 0.0;
      gmax = std::max(gmax, std::abs(r[k]));
    }
    if (!std::isfinite(gmax)) return FaceResult::kFailed;
    // Stop at rounding level: tiny gradient, or no progress once the gradient is already small.
    if (gmax <= 1e-15 * scale || (gmax >= 0.9 * previous && gmax <= 1e-11 * scale)) return FaceResult::kConverged;
    previous = gmax;

    Eigen::VectorXd step;
    if (!newton_direction(x, cons, fixed, slip, r, step)) return FaceResult::kFailed;
    ++newton_steps;

    // A full step that reverses a slip direction means the node sticks; the face is wrong.
    bool reversed = false;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      if (!slip[q]) continue;
      const auto& d = nodes[q].dofs;
      const Eigen::Vector2d t(x[d[0]] - cons[q].anchor[0], x[d[1]] - cons[q].anchor[1]);
      const Eigen::Vector2d next = t + Eigen::Vector2d(step[d[0]], step[d[1]]);
      if (next.dot(t) <= 0.0) {
        slip[q] = 0;
        stick[q] = 1;
        reversed = true;
      }
    }
    if (reversed) return FaceResult::kStateChanged;

    const ObjectiveParts base = objective_parts(*a, rhs, nodes, cons, x);
    double slope = 0.0;
    for (int k = 0; k < n; ++k) slope += r[k] * step[k];
    if (!(slope < 0.0)) return FaceResult::kConverged;
    double alpha = 1.0;
    std::vector<double> trial(x.size());
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (int k = 0; k < n; ++k) trial[k] = x[k] + alpha * step[k];
      const double value = objective_parts(*a, rhs, nodes, cons, trial).value;
      if (value <= base.value + 1e-4 * alpha * slope + 1e-15 * base.magnitude) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return FaceResult::kConverged;
    x.swap(trial);
  }
  return FaceResult::kFailed;
}

bool ContactSolver::Impl::polish(std::vector<double>& x_io, std::span<const double> rhs,
                                 std::span<const NodeConstraint> cons, double scale, double tol, int& newton_steps) {
  if (!newton_ready) return false;
  std::vector<double> x = x_io;
  std::vector<double> r;
  residual_and_scale(*a, rhs, cons, x, r);

  const std::size_t m = nodes.size();
  std::vector<char> active(m, 0), stick(m, 0), slip(m, 0);
  const double flip = 0.1 * tol * scale;
  for (std::size_t q = 0; q < m; ++q) {
    const auto& d = nodes[q].dofs;
    const Eigen::Matrix3d& dq = d_qq[q];
    active[q] = x[d[2]] - r[d[2]] / dq(2, 2) < cons[q].gap ? 1 : 0;
    if (cons[q].weight > 0.0) {
      const double c_t = 0.5 * (dq(0, 0) + dq(1, 1));
      const Eigen::Vector2d t(x[d[0]] - cons[q].anchor[0], x[d[1]] - cons[q].anchor[1]);
      const Eigen::Vector2d xi = -Eigen::Vector2d(r[d[0]], r[d[1]]) + c_t * t;
      stick[q] = xi.norm() <= cons[q].weight ? 1 : 0;
      slip[q] = stick[q] ? 0 : 1;
    }
  }

  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (int round = 0; round < 30; ++round) {
    std::fill(fixed.begin(), fixed.end(), 0);
    for (std::size_t q = 0; q < m; ++q) {
      const auto& d = nodes[q].dofs;
      if (active[q]) {
        x[d[2]] = cons[q].gap;
        fixed[d[2]] = 1;
      }
      if (stick[q]) {
        x[d[0]] = cons[q].anchor[0];
        x[d[1]] = cons[q].anchor[1];
        fixed[d[0]] = fixed[d[1]] = 1;
      } else if (slip[q]) {
        const Eigen::Vector2d t(x[d[0]] - cons[q].anchor[0], x[d[1]] - cons[q].anchor[1]);
        const Eigen::Matrix3d& dq = d_qq[q];
        const double c_t = 0.5 * (dq(0, 0) + dq(1, 1));
        if (c_t * t.norm() <= flip) {
          // Seed a slip direction from the tangential residual.
          Eigen::Vector2d rt(r[d[0]], r[d[1]]);
          const double rn = rt.norm();
          Eigen::Vector2d dir = rn > 0.0 ? Eigen::Vector2d(-rt / rn) : Eigen::Vector2d(1.0, 0.0);
          const double len = std::max((rn - cons[q].weight) / c_t, 10.0 * flip / c_t);
          x[d[0]] = cons[q].anchor[0] + len * dir[0];
          x[d[1]] = cons[q].anchor[1] + len * dir[1];
        }
      }
    }
    const FaceResult face = newton_on_face(x, rhs, cons, fixed, slip, stick, scale, newton_steps);
    if (face == FaceResult::kFailed) return false;
    residual_and_scale(*a, rhs, cons, x, r);
    if (face == FaceResult::kStateChanged) continue;

    bool changed = false;
    for (std::size_t q = 0; q < m; ++q) {
      const auto& d = nodes[q].dofs;
      const Eigen::Matrix3d& dq = d_qq[q];
      const bool was_active = active[q];
      const bool was_stick = stick[q];
      if (active[q]) {
        active[q] = r[d[2]] >= -flip;
      } else {
        active[q] = x[d[2]] < cons[q].gap - flip / dq(2, 2);
      }
      if (cons[q].weight > 0.0) {
        if (stick[q]) {
          stick[q] = std::hypot(r[d[0]], r[d[1]]) <= cons[q].weight + flip;
        } else {
          const double c_t = 0.5 * (dq(0, 0) + dq(1, 1));
          stick[q] = c_t * std::hypot(x[d[0]] - cons[q].anchor[0], x[d[1]] - cons[q].anchor[1]) <= flip;
        }
        slip[q] = !stick[q];
      }
      changed = changed || was_active != static_cast<bool>(active[q]) || was_stick != static_cast<bool>(stick[q]);
    }
    if (!changed) {
      for (std::size_t q = 0; q < m; ++q) {
        const int dz = nodes[q].dofs[2];
        x[dz] = std::max(x[dz], cons[q].gap);
      }
      x_io.swap(x);
      return true;
    }
  }
  return false;
}

ContactSolveResult ContactSolver::solve(std::span<const double> rhs, std::span<const NodeConstraint> constraints,
                                        std::span<const double> x0, const ContactSolveOptions& options) {
  Impl& s = *impl_;
  if (static_cast<int>(rhs.size()) != s.n) throw InvalidInputError("right-hand side size mismatch");
  if (constraints.size() != s.nodes.size()) throw InvalidInputError("one constraint per contact node is required");
  for (const auto& c : constraints) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw InvalidInputError("friction weight must be >= 0");
  }

  ContactSolveResult result;
  result.x.assign(static_cast<std::size_t>(s.n), 0.0);
  if (x0.size() == result.x.size()) std::copy(x0.begin(), x0.end(), result.x.begin());
  auto& x = result.x;
  for (std::size_t q = 0; q < s.nodes.size(); ++q) {
    const int dz = s.nodes[q].dofs[2];
    x[dz] = std::max(x[dz], constraints[q].gap);
  }
  auto& stats = result.stats;
  if (s.n == 0) return result;

  std::vector<double> r;
  const auto measure = [&](std::span<const double> v) {
    const double scale = residual_and_scale(*s.a, rhs, constraints, v, r);
    return std::pair{natural_residual(r, s.nodes, constraints, s.d_qq, s.is_node_dof, v) / scale, scale};
  };

  ObjectiveParts obj = objective_parts(*s.a, rhs, s.nodes, constraints, x);
  int next_polish = 1;
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    s.sweep(x, rhs, constraints);
    stats.sweeps = sweep;
    if (options.check_monotone) {
      const ObjectiveParts now = objective_parts(*s.a, rhs, s.nodes, constraints, x);
      if (now.value > obj.value + 1e-12 * std::max(obj.magnitude, now.magnitude)) {
        throw SolverError("Gauss-Seidel sweep increased the objective", stats.residual_trace);
      }
      obj = now;
    }
    auto [res, scale] = measure(x);
    stats.residual_trace.push_back(res);
    if (res <= options.tol) {
      stats.residual = res;
      return result;
    }
    if (options.polish && !s.nodes.empty() && sweep == next_polish) {
      next_polish *= 2;
      ++stats.polish_attempts;
      std::vector<double> candidate = x;
      if (s.polish(candidate, rhs, constraints, scale, options.tol, stats.newton_steps)) {
        const auto [res_p, scale_p] = measure(candidate);
        if (res_p < res) {
          ++stats.polish_accepted;
          x.swap(candidate);
          res = res_p;
          stats.residual_trace.push_back(res);
          obj = objective_parts(*s.a, rhs, s.nodes, constraints, x);
          if (res <= options.tol) {
            stats.residual = res;
            return result;
          }
        }
      }
    }
    stats.residual = res;
  }
  throw SolverError("contact solve did not reach tolerance " + std::to_string(options.tol) + " within " +
                        std::to_string(options.max_sweeps) + " sweeps (residual " +
                        std::to_string(stats.residual) + ")",
                    stats.residual_trace);
}

}  // namespace layerstack

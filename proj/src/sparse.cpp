#include "layerstack/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/SparseCholesky>

#include "layerstack/errors.hpp"

namespace layerstack {

SparseMatrix SparseMatrix::from_triplets(int n, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n) {
      throw InvalidInputError("triplet index out of range");
    }
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.n_ = n;
  m.row_offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::size_t k = 0; k < triplets.size();) {
    const int row = triplets[k].row;
    const int col = triplets[k].col;
    double sum = 0.0;
    while (k < triplets.size() && triplets[k].row == row && triplets[k].col == col) {
      sum += triplets[k].value;
      ++k;
    }
    m.columns_.push_back(col);
    m.values_.push_back(sum);
    ++m.row_offsets_[row + 1];
  }
  std::partial_sum(m.row_offsets_.begin(), m.row_offsets_.end(), m.row_offsets_.begin());
  return m;
}

SparseMatrix SparseMatrix::identity(int n) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, std::move(t));
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int r = 0; r < n_; ++r) {
    double sum = 0.0;
    for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) sum += values_[k] * x[columns_[k]];
    y[r] = sum;
  }
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(static_cast<std::size_t>(n_));
  multiply(x, y);
  return y;
}

double SparseMatrix::row_dot(int row, std::span<const double> x) const {
  double sum = 0.0;
  for (int k = row_offsets_[row]; k < row_offsets_[row + 1]; ++k) sum += values_[k] * x[columns_[k]];
  return sum;
}

double SparseMatrix::at(int row, int col) const {
  const auto first = columns_.begin() + row_offsets_[row];
  const auto last = columns_.begin() + row_offsets_[row + 1];
  const auto it = std::lower_bound(first, last, col);
  if (it == last || *it != col) return 0.0;
  return values_[static_cast<std::size_t>(it - columns_.begin())];
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(n_));
  for (int r = 0; r < n_; ++r) d[r] = at(r, r);
  return d;
}

Eigen::Matrix3d SparseMatrix::block3(int row0, int col0) const {
  Eigen::Matrix3d b;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) b(i, j) = at(row0 + i, col0 + j);
  }
  return b;
}

double SparseMatrix::max_asymmetry() const {
  double worst = 0.0;
  for (int r = 0; r < n_; ++r) {
    for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      worst = std::max(worst, std::abs(values_[k] - at(columns_[k], r)));
    }
  }
  return worst;
}

Eigen::SparseMatrix<double> SparseMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(values_.size());
  for (int r = 0; r < n_; ++r) {
    for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) t.emplace_back(r, columns_[k], values_[k]);
  }
  Eigen::SparseMatrix<double> m(n_, n_);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
  for (int r = 0; r < n_; ++r) {
    for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) m(r, columns_[k]) = values_[k];
  }
  return m;
}

std::vector<double> ReducedSystem::expand(std::span<const double> reduced) const {
  std::vector<double> full = prescribed;
  for (std::size_t k = 0; k < free_dofs.size(); ++k) full[free_dofs[k]] = reduced[k];
  return full;
}

std::vector<double> ReducedSystem::reduce_rhs(const SparseMatrix& full, std::span<const double> b,
                                              std::span<const double> prescribed_full) const {
  const auto& offsets = full.row_offsets();
  const auto& cols = full.columns();
  const auto& vals = full.values();
  std::vector<double> out(free_dofs.size());
  for (std::size_t k = 0; k < free_dofs.size(); ++k) {
    const int r = free_dofs[k];
    double value = b[r];
    for (int e = offsets[r]; e < offsets[r + 1]; ++e) {
      if (reduced_index[cols[e]] < 0) value -= vals[e] * prescribed_full[cols[e]];
    }
    out[k] = value;
  }
  return out;
}

ReducedSystem apply_dirichlet(const SparseMatrix& a, std::span<const double> b, std::span<const int> dofs,
                              std::span<const double> values) {
  const int n = a.size();
  if (static_cast<int>(b.size()) != n) throw InvalidInputError("right-hand side size mismatch");
  if (dofs.size() != values.size()) throw InvalidInputError("prescribed DOF and value counts differ");

  ReducedSystem out;
  out.prescribed.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (std::size_t k = 0; k < dofs.size(); ++k) {
    const int d = dofs[k];
    if (d < 0 || d >= n) throw InvalidInputError("prescribed DOF " + std::to_string(d) + " out of range");
    if (fixed[d] && out.prescribed[d] != values[k]) {
      throw InvalidInputError("DOF " + std::to_string(d) + " prescribed with conflicting values");
    }
    fixed[d] = 1;
    out.prescribed[d] = values[k];
  }
  out.reduced_index.assign(static_cast<std::size_t>(n), -1);
  for (int d = 0; d < n; ++d) {
    if (!fixed[d]) {
      out.reduced_index[d] = static_cast<int>(out.free_dofs.size());
      out.free_dofs.push_back(d);
    }
  }

  std::vector<Triplet> t;
  t.reserve(a.nonzeros());
  const auto& offsets = a.row_offsets();
  const auto& cols = a.columns();
  const auto& vals = a.values();
  for (std::size_t k = 0; k < out.free_dofs.size(); ++k) {
    const int r = out.free_dofs[k];
    for (int e = offsets[r]; e < offsets[r + 1]; ++e) {
      const int c = out.reduced_index[cols[e]];
      if (c >= 0) t.push_back({static_cast<int>(k), c, vals[e]});
    }
  }
  out.matrix = SparseMatrix::from_triplets(static_cast<int>(out.free_dofs.size()), std::move(t));
  out.rhs = out.reduce_rhs(a, b, out.prescribed);
  return out;
}

LinearSolveResult solve_spd(const SparseMatrix& a, std::span<const double> b, double tol_lin, int max_iter,
                            std::span<const double> x0,
                            const std::function<void(std::span<const double>)>& on_iterate) {
  const int n = a.size();
  if (static_cast<int>(b.size()) != n) throw InvalidInputError("right-hand side size mismatch");
  if (max_iter <= 0) max_iter = std::max(100, 10 * n);
  const auto dot = [n](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += u[i] * v[i];
    return s;
  };

  LinearSolveResult result;
  result.x.assign(static_cast<std::size_t>(n), 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), result.x.begin());
  const std::vector<double> bv(b.begin(), b.end());
  const double b_norm = std::sqrt(dot(bv, bv));
  if (b_norm == 0.0) {
    std::fill(result.x.begin(), result.x.end(), 0.0);
    return result;
  }

  std::vector<double> inv_diag = a.diagonal();
  for (double& d : inv_diag) {
    if (!(d > 0.0)) throw SolverError("non-positive diagonal entry; matrix is not SPD", {});
    d = 1.0 / d;
  }
  std::vector<double> r(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n)),
      p(static_cast<std::size_t>(n)), ap(static_cast<std::size_t>(n));
  a.multiply(result.x, r);
  for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
  double res = std::sqrt(dot(r, r)) / b_norm;
  result.residual_history.push_back(res);
  for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  for (int it = 0; it < max_iter && res > tol_lin; ++it) {
    a.multiply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) {
      throw SolverError("conjugate gradients met a non-positive curvature direction", result.residual_history);
    }
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      result.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    if (on_iterate) on_iterate(result.x);
    res = std::sqrt(dot(r, r)) / b_norm;
    result.residual_history.push_back(res);
    result.iterations = it + 1;
    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  result.relative_residual = res;
  if (!(res <= tol_lin)) {
    throw SolverError("conjugate gradients did not reach tol_lin within " + std::to_string(max_iter) +
                          " iterations",
                      result.residual_history);
  }
  return result;
}

struct SparseCholesky::Impl {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
};

SparseCholesky::SparseCholesky(const SparseMatrix& a) : SparseCholesky(a.to_eigen()) {}

SparseCholesky::SparseCholesky(const Eigen::SparseMatrix<double>& a) : n_(static_cast<int>(a.rows())) {
  auto impl = std::make_shared<Impl>();
  if (n_ > 0) {
    impl->ldlt.compute(a);
    if (impl->ldlt.info() != Eigen::Success || (impl->ldlt.vectorD().array() <= 0.0).any()) {
      throw SolverError("sparse factorization failed: matrix is not positive definite", {});
    }
  }
  impl_ = std::move(impl);
}

std::vector<double> SparseCholesky::solve(std::span<const double> b) const {
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  solve_in_place(x);
  return {x.data(), x.data() + x.size()};
}

void SparseCholesky::solve_in_place(Eigen::VectorXd& x) const {
  if (x.size() != n_) throw InvalidInputError("right-hand side size mismatch");
  if (n_ == 0) return;
  x = impl_->ldlt.solve(x);
}

}  // namespace layerstack

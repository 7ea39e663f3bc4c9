#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace layerstack {

struct Triplet {
  int row;
  int col;
  double value;
};

// Square matrix in compressed sparse row form with sorted, unique column indices per row.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  // Duplicates are summed in input order after a stable (row, col) sort, so the result
  // does not depend on how the input was partitioned.
  static SparseMatrix from_triplets(int n, std::vector<Triplet> triplets);
  static SparseMatrix identity(int n);

  int size() const { return n_; }
  std::size_t nonzeros() const { return values_.size(); }
  const std::vector<int>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& columns() const { return columns_; }
  const std::vector<double>& values() const { return values_; }

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> multiply(std::span<const double> x) const;
  double row_dot(int row, std::span<const double> x) const;
  // Returns 0 for entries outside the pattern.
  double at(int row, int col) const;
  std::vector<double> diagonal() const;
  // 3x3 block with rows starting at row0 and columns starting at col0.
  Eigen::Matrix3d block3(int row0, int col0) const;
  double max_asymmetry() const;

  Eigen::SparseMatrix<double> to_eigen() const;
  Eigen::MatrixXd to_dense() const;

 private:
  int n_ = 0;
  std::vector<int> row_offsets_{0};
  std::vector<int> columns_;
  std::vector<double> values_;
};

// Result of eliminating prescribed DOFs from A x = b.
struct ReducedSystem {
  SparseMatrix matrix;
  std::vector<double> rhs;
  std::vector<int> free_dofs;       // reduced index -> full index
  std::vector<int> reduced_index;   // full index -> reduced index, -1 when prescribed
  std::vector<double> prescribed;   // full length, zero on free DOFs

  // Reinserts prescribed values around a reduced solution.
  std::vector<double> expand(std::span<const double> reduced) const;
  // b restricted to free rows minus A[free, fixed] * fixed values, for new data on the same split.
  std::vector<double> reduce_rhs(const SparseMatrix& full, std::span<const double> b,
                                 std::span<const double> prescribed_full) const;
};

// Throws InvalidInputError for out-of-range DOFs or a DOF listed twice with different values.
ReducedSystem apply_dirichlet(const SparseMatrix& a, std::span<const double> b, std::span<const int> dofs,
                              std::span<const double> values);

struct LinearSolveResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;
};

// Jacobi-preconditioned conjugate gradients; stops at ||Ax - b|| <= tol_lin ||b||.
// max_iter <= 0 selects 10 * n. Throws SolverError carrying the residual history on failure.
// on_iterate, when set, sees every iterate after its update.
LinearSolveResult solve_spd(const SparseMatrix& a, std::span<const double> b, double tol_lin = 1e-10,
                            int max_iter = 0, std::span<const double> x0 = {},
                            const std::function<void(std::span<const double>)>& on_iterate = {});

// Direct sparse LDL^T factorization (fill-reducing ordering). Throws SolverError when the
// matrix is not positive definite.
class SparseCholesky {
 public:
  SparseCholesky() = default;
  explicit SparseCholesky(const SparseMatrix& a);
  explicit SparseCholesky(const Eigen::SparseMatrix<double>& a);

  int size() const { return n_; }
  std::vector<double> solve(std::span<const double> b) const;
  void solve_in_place(Eigen::VectorXd& x) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  int n_ = 0;
};

}  // namespace layerstack

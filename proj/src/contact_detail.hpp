#pragma once

#include <span>
#include <vector>

#include "layerstack/vi_solver.hpp"

namespace layerstack::detail {

// Residual r = Ax - rhs; returns the force scale max_k(sum_j |A_kj x_j| + |rhs_k|) + max w (1 if zero).
double residual_and_scale(const SparseMatrix& a, std::span<const double> rhs, std::span<const NodeConstraint> cons,
                          std::span<const double> x, std::vector<double>& r);

}  // namespace layerstack::detail

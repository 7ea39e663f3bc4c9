#include <vector>

#include "layerstack/errors.hpp"
#include "layerstack/vi_solver.hpp"

namespace layerstack {

CoupledForm build_coupled_form(const LayeredProblem& problem) {
  CoupledForm form;
  int total = 0;
  for (const auto& layer : problem.layers) {
    form.layer_offset.push_back(total);
    total += layer.stiffness.size();
  }
  std::vector<char> fixed(static_cast<std::size_t>(total), 0);
  for (int l = 0; l < problem.layer_count(); ++l) {
    for (int d : problem.layers[l].dirichlet_dofs) fixed[form.layer_offset[l] + d] = 1;
  }
  form.full_to_reduced.assign(static_cast<std::size_t>(total), -1);
  for (int k = 0; k < total; ++k) {
    if (!fixed[k]) {
      form.full_to_reduced[k] = static_cast<int>(form.reduced_to_full.size());
      form.reduced_to_full.push_back(k);
    }
  }
  form.jump_partner.assign(static_cast<std::size_t>(total), -1);
  std::vector<ContactNodeLayout> nodes;
  std::vector<NodeConstraint> constraints;
  for (int i = 0; i < problem.interface_count(); ++i) {
    const auto& pairs = problem.mesh.interfaces[i];
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      if (problem.pinned[i][q]) continue;
      ContactNodeLayout layout;
      for (int c = 0; c < 3; ++c) {
        const int a = form.layer_offset[i] + 3 * pairs[q].first + c;
        const int b = form.layer_offset[i + 1] + 3 * pairs[q].second + c;
        if (fixed[a] || fixed[b]) throw InvalidInputError("interior interface node carries Dirichlet data");
        form.jump_partner[a] = b;
        layout.dofs[c] = form.full_to_reduced[a];
        layout.partner[c] = form.full_to_reduced[b];
      }
      nodes.push_back(layout);
      NodeConstraint con;
      con.weight = problem.friction[i][q];
      con.gap = 0.0;
      constraints.push_back(con);
    }
  }

  // x = T y with x_a = y_a + y_b on jump slots, so the reduced operator is T'KT and the load T'f.
  const int m = static_cast<int>(form.reduced_to_full.size());
  std::vector<Triplet> triplets;
  std::vector<double> rhs(static_cast<std::size_t>(m), 0.0);
  const auto images = [&](int full, int* out) {
    int count = 0;
    out[count++] = form.full_to_reduced[full];
    if (form.jump_partner[full] >= 0) out[count++] = form.full_to_reduced[form.jump_partner[full]];
    return count;
  };
  for (int l = 0; l < problem.layer_count(); ++l) {
    const LayerSystem& sys = problem.layers[l];
    const int off = form.layer_offset[l];
    const auto load = sys.total_load();
    const auto& offsets = sys.stiffness.row_offsets();
    const auto& cols = sys.stiffness.columns();
    const auto& vals = sys.stiffness.values();
    for (int r = 0; r < sys.stiffness.size(); ++r) {
      if (fixed[off + r]) continue;
      int ri[2];
      const int nr = images(off + r, ri);
      for (int a = 0; a < nr; ++a) rhs[ri[a]] += load[r];
      for (int e = offsets[r]; e < offsets[r + 1]; ++e) {
        if (fixed[off + cols[e]]) continue;
        int ci[2];
        const int nc = images(off + cols[e], ci);
        for (int a = 0; a < nr; ++a) {
          for (int b = 0; b < nc; ++b) triplets.push_back({ri[a], ci[b], vals[e]});
        }
      }
    }
  }
  form.problem.matrix = std::make_shared<const SparseMatrix>(SparseMatrix::from_triplets(m, std::move(triplets)));
  form.problem.rhs = std::move(rhs);
  form.problem.nodes = std::move(nodes);
  form.problem.constraints = std::move(constraints);
  return form;
}

std::vector<double> CoupledForm::to_reduced(const std::vector<std::vector<double>>& fields) const {
  std::vector<double> full;
  for (const auto& f : fields) full.insert(full.end(), f.begin(), f.end());
  if (full.size() != full_to_reduced.size()) throw InvalidInputError("field sizes do not match the coupled form");
  std::vector<double> y(reduced_to_full.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const int f = reduced_to_full[k];
    y[k] = jump_partner[f] >= 0 ? full[f] - full[jump_partner[f]] : full[f];
  }
  return y;
}

std::vector<std::vector<double>> CoupledForm::to_fields(std::span<const double> y) const {
  std::vector<double> full(full_to_reduced.size(), 0.0);
  for (std::size_t f = 0; f < full.size(); ++f) {
    const int k = full_to_reduced[f];
    if (k < 0) continue;
    full[f] = y[k];
    if (jump_partner[f] >= 0) full[f] += y[full_to_reduced[jump_partner[f]]];
  }
  std::vector<std::vector<double>> fields;
  for (std::size_t l = 0; l < layer_offset.size(); ++l) {
    const std::size_t begin = static_cast<std::size_t>(layer_offset[l]);
    const std::size_t end = l + 1 < layer_offset.size() ? static_cast<std::size_t>(layer_offset[l + 1]) : full.size();
    fields.emplace_back(full.begin() + static_cast<std::ptrdiff_t>(begin), full.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return fields;
}

CoupledSolution solve_monolithic(const LayeredProblem& problem, double tol_sub, int max_sweeps) {
  const CoupledForm form = build_coupled_form(problem);
  ContactSolver solver(form.problem.matrix, form.problem.nodes);
  ContactSolveOptions options;
  options.tol = tol_sub;
  options.max_sweeps = max_sweeps;
  ContactSolveResult solved = solver.solve(form.problem.rhs, form.problem.constraints, {}, options);
  return {form.to_fields(solved.x), std::move(solved.stats)};
}

double certify_coupled(const LayeredProblem& problem, const std::vector<std::vector<double>>& fields,
                       const CertifyOptions& options) {
  const CoupledForm form = build_coupled_form(problem);
  return certify_vi(form.problem, form.to_reduced(fields), options);
}

}  // namespace layerstack

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "contact_detail.hpp"
#include "layerstack/errors.hpp"
#include "layerstack/vi_solver.hpp"

namespace layerstack {

namespace {

// ||t + d|| - ||t|| without cancellation.
double norm_increase(const Eigen::Vector2d& t, const Eigen::Vector2d& d) {
  const double denom = (t + d).norm() + t.norm();
  if (denom == 0.0) return 0.0;
  return (2.0 * t.dot(d) + d.squaredNorm()) / denom;
}

}  // namespace

double certify_vi(const ContactProblem& p, std::span<const double> x, const CertifyOptions& options) {
  const int n = p.matrix->size();
  if (static_cast<int>(x.size()) != n || static_cast<int>(p.rhs.size()) != n) {
    throw InvalidInputError("certify_vi: size mismatch");
  }
  double x_max = 0.0;
  for (double v : x) x_max = std::max(x_max, std::abs(v));
  const double feas_tol = options.feasibility_tol * std::max(1.0, x_max);
  double data_max = 0.0;
  for (std::size_t q = 0; q < p.nodes.size(); ++q) {
    const auto& c = p.constraints[q];
    const double z = x[p.nodes[q].dofs[2]];
    if (z < c.gap - feas_tol) {
      std::ostringstream msg;
      msg << "certify_vi: contact node " << q << " violates its gap by " << c.gap - z;
      throw InvalidInputError(msg.str());
    }
    if (std::isfinite(c.gap)) data_max = std::max(data_max, std::abs(c.gap));
    data_max = std::max(data_max, c.anchor.norm());
  }

  std::vector<double> r;
  const double scale = detail::residual_and_scale(*p.matrix, p.rhs, p.constraints, x, r);
  const double magnitude = std::max(x_max, data_max);
  const double step = 1e-3 * (magnitude > 0.0 ? magnitude : 1.0);

  const auto tangent = [&](std::size_t q) {
    const auto& d = p.nodes[q].dofs;
    return Eigen::Vector2d(x[d[0]] - p.constraints[q].anchor[0], x[d[1]] - p.constraints[q].anchor[1]);
  };

  double worst = 0.0;  // the zero direction
  // Coordinate moves, signed against the residual.
  for (std::size_t q = 0; q < p.nodes.size(); ++q) {
    const auto& dofs = p.nodes[q].dofs;
    const auto& c = p.constraints[q];
    for (int axis = 0; axis < 3; ++axis) {
      const int k = dofs[axis];
      double s = r[k] > 0.0 ? -step : step;
      if (axis == 2) s = std::max(s, c.gap - x[k]);
      if (s == 0.0) continue;
      double value = r[k] * s;
      if (axis < 2 && c.weight > 0.0) {
        Eigen::Vector2d d = Eigen::Vector2d::Zero();
        d[axis] = s;
        value += c.weight * norm_increase(tangent(q), d);
      }
      worst = std::min(worst, value / (scale * std::abs(s)));
    }
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int field = 0; field < options.random_fields; ++field) {
    for (auto& v : d) v = step * uniform(rng);
    for (std::size_t q = 0; q < p.nodes.size(); ++q) {
      const int k = p.nodes[q].dofs[2];
      d[k] = std::max(d[k], p.constraints[q].gap - x[k]);
    }
    double value = 0.0;
    double norm2 = 0.0;
    for (int k = 0; k < n; ++k) {
      value += r[k] * d[k];
      norm2 += d[k] * d[k];
    }
    for (std::size_t q = 0; q < p.nodes.size(); ++q) {
      const auto& c = p.constraints[q];
      if (c.weight <= 0.0) continue;
      const auto& dofs = p.nodes[q].dofs;
      value += c.weight * norm_increase(tangent(q), Eigen::Vector2d(d[dofs[0]], d[dofs[1]]));
    }
    if (norm2 > 0.0) worst = std::min(worst, value / (scale * std::sqrt(norm2)));
  }
  return worst;
}

}  // namespace layerstack

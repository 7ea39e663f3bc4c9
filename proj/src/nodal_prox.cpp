#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "layerstack/errors.hpp"
#include "layerstack/vi_solver.hpp"

namespace layerstack {

namespace {

// argmin_t 1/2 t'Dt - rho't + w ||t|| over R^2 for SPD D.
Eigen::Vector2d group_shrink(const Eigen::Matrix2d& d, const Eigen::Vector2d& rho, double w) {
  if (w <= 0.0) return d.llt().solve(rho);
  const double rho_norm = rho.norm();
  if (rho_norm <= w) return Eigen::Vector2d::Zero();

  // Slip: t = (D + k I)^{-1} rho where k ||t|| = w; k ||(D + k I)^{-1} rho|| increases in k.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(d);
  const Eigen::Vector2d lam = eig.eigenvalues();
  const Eigen::Matrix2d q = eig.eigenvectors();
  const Eigen::Vector2d r = q.transpose() * rho;
  const auto residual = [&](double k, double* slope) {
    double value = -w * w;
    double deriv = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double s = lam[i] + k;
      value += r[i] * r[i] * k * k / (s * s);
      deriv += r[i] * r[i] * 2.0 * k * lam[i] / (s * s * s);
    }
    if (slope != nullptr) *slope = deriv;
    return value;
  };

  double lo = w * lam[0] / (rho_norm - w);
  double hi = w * lam[1] / (rho_norm - w);
  double k = 0.5 * (lo + hi);
  for (int it = 0; it < 50 && hi - lo > 1e-15 * hi; ++it) {
    double slope = 0.0;
    const double f = residual(k, &slope);
    if (std::abs(f) <= 1e-16 * w * w) break;
    if (f > 0.0) {
      hi = k;
    } else {
      lo = k;
    }
    const double newton = slope > 0.0 ? k - f / slope : std::numeric_limits<double>::quiet_NaN();
    k = (newton > lo && newton < hi) ? newton : 0.5 * (lo + hi);
  }
  Eigen::Vector2d t;
  for (int i = 0; i < 2; ++i) t[i] = r[i] / (lam[i] + k);
  return q * t;
}

}  // namespace

Vec3 nodal_prox(const Eigen::Matrix3d& d, const Vec3& c, double w, const Eigen::Vector2d& anchor, double gap) {
  const Eigen::Matrix2d d_tt = d.topLeftCorner<2, 2>();
  const Eigen::Vector2d d_tz = d.topRightCorner<2, 1>();
  const double d_zz = d(2, 2);
  if (!(d_zz > 0.0)) throw SolverError("nodal block is not positive definite", {});

  Vec3 v;
  // Normal component free: eliminate z, shrink the tangential part.
  const Eigen::Matrix2d d_hat = d_tt - d_tz * d_tz.transpose() / d_zz;
  const Eigen::Vector2d rho_hat = c.head<2>() - d_tz * (c[2] / d_zz) - d_hat * anchor;
  Eigen::Vector2d t = group_shrink(d_hat, rho_hat, w);
  double z = (c[2] - d_tz.dot(anchor + t)) / d_zz;
  if (!(z >= gap)) {
    z = gap;
    t = group_shrink(d_tt, c.head<2>() - d_tt * anchor - d_tz * gap, w);
  }
  v << anchor + t, z;

  // Subgradient certificate.
  const Vec3 g = d * v - c;
  // The tangential part is computed relative to the anchor, so its size enters the rounding scale.
  const double scale = c.norm() + d.norm() * (v.norm() + anchor.norm()) + w;
  const double tol = 1e-12 * (scale > 0.0 ? scale : 1.0);
  bool ok = std::isfinite(v.squaredNorm());
  if (v[2] > gap) ok = ok && std::abs(g[2]) <= tol;
  else ok = ok && g[2] >= -tol;
  const Eigen::Vector2d g_t = g.head<2>();
  const double t_norm = t.norm();
  if (w > 0.0 && t_norm > 0.0) ok = ok && (g_t + w * t / t_norm).norm() <= tol;
  else ok = ok && g_t.norm() <= w + tol;
  if (!ok) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "nodal prox failed its subgradient check: D = [" << d.format(Eigen::IOFormat(17, 0, ", ", "; "))
        << "], c = [" << c.transpose() << "], w = " << w << ", anchor = [" << anchor.transpose() << "], gap = " << gap;
    throw SolverError(msg.str(), {});
  }
  return v;
}

}  // namespace layerstack

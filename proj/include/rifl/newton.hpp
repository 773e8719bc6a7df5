#pragma once

#include "rifl/linalg.hpp"

namespace rifl::stats {

struct NewtonOptions {
  double tol = 1e-9;  // on the sup-norm of the residual
  int max_iter = 100;
  int max_halvings = 40;
};

// Damped Newton iteration for residual(x) = 0.  A step is halved while it
// increases the Euclidean residual norm.
template <class Residual, class Jacobian>
Vector newton_solve(Residual&& residual, Jacobian&& jacobian, Vector x, const NewtonOptions& opt = {}) {
  Vector r = residual(x);
  if (!r.allFinite()) throw DomainError("newton_solve: residual is not finite at the initial point");
  for (int it = 0; it < opt.max_iter; ++it) {
    if (r.lpNorm<Eigen::Infinity>() <= opt.tol) return x;
    Matrix J = jacobian(x);
    Eigen::PartialPivLU<Matrix> lu(J);
    if (!J.allFinite() || !(lu.rcond() > 1e-14)) throw NumericError("newton_solve: singular Jacobian");
    Vector step = -lu.solve(r);
    double norm0 = r.norm(), t = 1.0;
    Vector xn = x + step, rn = residual(xn);
    for (int h = 0; h < opt.max_halvings && !(rn.allFinite() && rn.norm() <= norm0); ++h) {
      t *= 0.5;
      xn = x + t * step;
      rn = residual(xn);
    }
    if (!rn.allFinite()) throw NumericError("newton_solve: residual became non-finite");
    x = std::move(xn);
    r = std::move(rn);
  }
  if (r.lpNorm<Eigen::Infinity>() <= opt.tol) return x;
  throw ConvergenceError("newton_solve: maximum iterations exceeded");
}

}  // namespace rifl::stats

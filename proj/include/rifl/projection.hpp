#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rifl/linalg.hpp"

namespace rifl {

// Projection direction for the debiasing step:
//
//   min u' S u  s.t.  |S u - g|_inf <= |g| lambda
//                     |g' S u - |g|^2| <= |g|^2 lambda
//                     max_i |u' x_i| <= |g| tau
//
// The row bound is taken degree-1 homogeneous in g, like the box bound, so
// the program is invariant to rescaling g.  Solved in w = u/|g| through the
// dual  min_v 1/2 v'Qv + c'v + sum r_i |v_i|  (Q = A S^+ A' / 2) by
// coordinate descent; the primal is w = -1/2 S^+ A' v.
struct ProjectionResult {
  Vector u;
  double lambda = 0.0;   // after relaxation
  int relaxations = 0;
  double objective = 0.0;  // u' S u
  double gap = 0.0;        // relative duality gap
  int passes = 0;
};

struct ProjectionOptions {
  double relax_factor = 1.5;
  int max_relaxations = 5;
  double gap_tol = 1e-5;
  int max_passes = 2000;
  double radius_shrink = 1e-6;  // solve with radii (1 - shrink) r so the answer is strictly feasible
};

class ProjectionSolver {
 public:
  // sigma: p x p;  rows: n x p (the x_i of the row bound).
  ProjectionSolver(Matrix sigma, Matrix rows) : S_(std::move(sigma)), X_(std::move(rows)) {
    const Index p = S_.rows();
    if (S_.cols() != p || X_.cols() != p) throw DomainError("projection: shapes disagree");
    Eigen::SelfAdjointEigenSolver<Matrix> es(S_);
    if (es.info() != Eigen::Success) throw SingularDesignError("projection: eigendecomposition failed");
    const Vector& ev = es.eigenvalues();
    double cut = 1e-10 * std::max(ev.maxCoeff(), 1e-300);
    Vector inv = ev.unaryExpr([cut](double e) { return e > cut ? 1.0 / e : 0.0; });
    Matrix pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    const Index n = X_.rows();
    B_.resize(p + n, p + n);
    B_.topLeftCorner(p, p) = S_;
    B_.topRightCorner(p, n) = X_.transpose();
    B_.bottomLeftCorner(n, p) = X_;
    Z_ = pinv * X_.transpose();
    B_.bottomRightCorner(n, n) = X_ * Z_;
  }

  static ProjectionSolver from_rows(const Matrix& rows) {
    return ProjectionSolver(rows.transpose() * rows / static_cast<double>(rows.rows()), rows);
  }

  const Matrix& sigma() const { return S_; }
  const Matrix& rows() const { return X_; }

  ProjectionResult solve(const Vector& gamma, double lambda, double tau, const ProjectionOptions& opt = {}) const {
    if (gamma.size() != S_.rows()) throw DomainError("projection: gamma has the wrong length");
    if (!(lambda > 0) || !(tau > 0)) throw DomainError("projection: lambda and tau must be positive");
    const double s = gamma.norm();
    if (!(s > 0)) throw DegenerateFunctionalError("projection: gamma is zero");
    const Vector g = gamma / s;
    double lam = lambda;
    for (int k = 0; k <= opt.max_relaxations; ++k, lam *= opt.relax_factor) {
      ProjectionResult r;
      if (solve_scaled(g, lam, tau, opt, r)) {
        r.u *= s;
        r.objective *= s * s;
        r.lambda = lam;
        r.relaxations = k;
        return r;
      }
    }
    throw InfeasibleError("projection direction program is infeasible after relaxing lambda", lam / opt.relax_factor);
  }

  // Largest constraint violation of u (<= 0 when feasible).
  double violation(const Vector& u, const Vector& gamma, double lambda, double tau) const {
    const double s = gamma.norm();
    Vector su = S_ * u;
    double v = (su - gamma).lpNorm<Eigen::Infinity>() - s * lambda;
    v = std::max(v, std::fabs(gamma.dot(su) - s * s) - s * s * lambda);
    if (X_.rows() > 0) v = std::max(v, (X_ * u).lpNorm<Eigen::Infinity>() - s * tau);
    return v;
  }

 private:
  // Returns false when the dual diverges or stalls infeasible (primal infeasible at lambda).
  bool solve_scaled(const Vector& g, double lambda, double tau, const ProjectionOptions& opt,
                    ProjectionResult& out) const {
    const Index p = S_.rows(), n = X_.rows(), m = 1 + p + n;
    Vector b(p + n);  // cross terms between the g-row and the others
    b.head(p) = S_ * g;
    b.tail(n) = X_ * g;
    const double b00 = g.dot(b.head(p));

    Vector c = Vector::Zero(m), r(m);
    c(0) = 1.0;
    c.segment(1, p) = g;
    r(0) = lambda;
    r.segment(1, p).setConstant(lambda);
    r.tail(n).setConstant(tau);
    const Vector r_solve = r * (1.0 - opt.radius_shrink);

    Vector qdiag(m);
    qdiag(0) = 0.5 * b00;
    qdiag.tail(p + n) = 0.5 * B_.diagonal();

    Vector v = Vector::Zero(m);
    Vector grad = c;  // 1/2 Q' v + c
    auto update = [&](Index i) {
      double q = qdiag(i);
      if (!(q > 1e-300)) return 0.0;
      double old = v(i);
      double z = q * old - grad(i);
      double nw = z > r_solve(i) ? (z - r_solve(i)) / q : z < -r_solve(i) ? (z + r_solve(i)) / q : 0.0;
      double d = nw - old;
      if (d == 0.0) return 0.0;
      v(i) = nw;
      if (i == 0) {
        grad(0) += 0.5 * b00 * d;
        grad.tail(p + n) += 0.5 * b * d;
      } else {
        grad(0) += 0.5 * b(i - 1) * d;
        grad.tail(p + n) += 0.5 * B_.col(i - 1) * d;
      }
      return std::fabs(d) * std::sqrt(q);
    };

    std::vector<Index> active;
    for (int pass = 1; pass <= opt.max_passes; ++pass) {
      double change = 0.0;
      for (Index i = 0; i < m; ++i) change = std::max(change, update(i));
      active.clear();
      for (Index i = 0; i < m; ++i)
        if (v(i) != 0.0) active.push_back(i);
      for (int inner = 0; inner < 20; ++inner) {
        double ch = 0.0;
        for (Index i : active) ch = std::max(ch, update(i));
        if (ch < 1e-12) break;
      }
      polish(v, active, b, b00, c, r_solve);
      if (!v.allFinite() || v.lpNorm<Eigen::Infinity>() > 1e8) return false;

      // refresh the running gradient, then test primal feasibility and the gap
      Vector qv = q_times(v, b, b00);
      grad = 0.5 * qv + c;
      double infeas = 0.0;
      for (Index i = 0; i < m; ++i) infeas = std::max(infeas, std::fabs(grad(i)) - r(i));
      // the gap is measured on the shrunken radii actually solved; against r
      // it would carry a floor of shrink * sum r|v|
      double quad = 0.5 * v.dot(qv);  // v'Qv; the primal objective w'Sw is half of it
      double gap = quad + c.dot(v) + r_solve.cwiseProduct(v.cwiseAbs()).sum();
      double rel = gap / std::max(0.5 * quad, 1e-300);
      if (infeas <= 0.0 && rel <= opt.gap_tol) {
        out.u = primal(v, g);
        out.objective = out.u.dot(S_ * out.u);
        out.gap = rel;
        out.passes = pass;
        return true;
      }
      if (change < 1e-15 && infeas > 0.0) return false;
    }
    // stalled: accept a feasible point only if the gap is within the contract
    Vector qv = q_times(v, b, b00);
    grad = 0.5 * qv + c;
    double infeas = 0.0;
    for (Index i = 0; i < m; ++i) infeas = std::max(infeas, std::fabs(grad(i)) - r(i));
    if (infeas > 0.0) return false;
    double quad = 0.5 * v.dot(qv);
    double rel = (quad + c.dot(v) + r_solve.cwiseProduct(v.cwiseAbs()).sum()) / std::max(0.5 * quad, 1e-300);
    if (rel > 1e-5) throw ConvergenceError("projection direction: duality gap above 1e-5 after the pass limit");
    out.u = primal(v, g);
    out.objective = out.u.dot(S_ * out.u);
    out.gap = rel;
    out.passes = opt.max_passes;
    return true;
  }

  // Coordinate descent crawls near the optimum, so once a sign pattern is
  // settled solve the stationarity equations on it directly.  Kept only if
  // every active coordinate keeps its sign.
  void polish(Vector& v, const std::vector<Index>& active, const Vector& b, double b00, const Vector& c,
              const Vector& r) const {
    const Index k = static_cast<Index>(active.size());
    if (k == 0) return;
    Matrix Q(k, k);
    Vector rhs(k);
    for (Index a = 0; a < k; ++a) {
      const Index i = active[a];
      for (Index e = 0; e < k; ++e) {
        const Index j = active[e];
        Q(a, e) = i == 0 ? (j == 0 ? b00 : b(j - 1)) : j == 0 ? b(i - 1) : B_(i - 1, j - 1);
      }
      rhs(a) = -2.0 * (c(i) + r(i) * (v(i) > 0 ? 1.0 : -1.0));
    }
    Eigen::LDLT<Matrix> ldlt(Q);
    if (ldlt.info() != Eigen::Success) return;
    Vector w = ldlt.solve(rhs);
    if (!w.allFinite() || (Q * w - rhs).norm() > 1e-9 * std::max(1.0, rhs.norm())) return;
    for (Index a = 0; a < k; ++a)
      if (w(a) * v(active[a]) <= 0.0) return;
    for (Index a = 0; a < k; ++a) v(active[a]) = w(a);
  }

  // Q' v with Q' = [[b00, b'], [b, B]]
  Vector q_times(const Vector& v, const Vector& b, double b00) const {
    const Index k = b.size();
    Vector out(k + 1);
    out(0) = b00 * v(0) + b.dot(v.tail(k));
    out.tail(k) = b * v(0) + B_ * v.tail(k);
    return out;
  }

  Vector primal(const Vector& v, const Vector& g) const {
    const Index p = S_.rows(), n = X_.rows();
    return -0.5 * (v.segment(1, p) + g * v(0) + Z_ * v.tail(n));
  }

  Matrix S_, X_, B_, Z_;
};

inline ProjectionResult projection_direction(const Matrix& sigma, const Vector& gamma, const Matrix& rows,
                                             double lambda, double tau, const ProjectionOptions& opt = {}) {
  return ProjectionSolver(sigma, rows).solve(gamma, lambda, tau, opt);
}

}  // namespace rifl

#pragma once

// Weighted Laplace systems, their solution, the relaxed Kacanov iteration and
// exact evaluation of the (relaxed) energy.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "plfem/errors.hpp"
#include "plfem/fespace.hpp"
#include "plfem/nfunc.hpp"

namespace plfem {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Stiffness matrix and load vector restricted to the free dofs.
struct SparseSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
  std::vector<int> free_to_global;
  const FeSpace* space = nullptr;  // identifies the sparsity pattern
};

/// Assembles  sum_T w_T |T| grad phi_i . grad phi_j  and  f |T| / 3 per local
/// dof, moving the action of the boundary coefficients of `boundary` to the
/// right-hand side.
inline SparseSystem assemble(const FeSpacePtr& space, const P0Field<double>& weights, double f,
                             const DiscreteField& boundary) {
  const Mesh& m = *space->mesh();
  if (weights.mesh != space->mesh()) throw std::invalid_argument("assemble: weights live on another mesh");
  if (boundary.space() != space) throw std::invalid_argument("assemble: boundary data on another space");
  const auto n = static_cast<Eigen::Index>(space->num_free_dofs());
  if (n == 0) throw EmptySystemError("assemble: the space has no free dofs");
  SparseSystem sys;
  sys.space = space.get();
  sys.free_to_global = space->free_dofs();
  sys.rhs = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(m.num_triangles() * 9);
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const double w = weights[t];
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("assemble: weights must be positive and finite");
    const int ti = static_cast<int>(t);
    const double area = m.area(ti);
    const auto g = space->basis_gradients(ti);
    const auto& ld = space->local_dofs(ti);
    for (int i = 0; i < 3; ++i) {
      const int row = space->free_index(ld[i]);
      if (row < 0) continue;
      sys.rhs[row] += f * area / 3.0;
      for (int j = 0; j < 3; ++j) {
        const double k = w * area * dot(g[i], g[j]);
        const int col = space->free_index(ld[j]);
        if (col >= 0)
          trips.emplace_back(row, col, k);
        else
          sys.rhs[row] -= k * boundary[ld[j]];
      }
    }
  }
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  return sys;
}

/// Sparse Cholesky solver that keeps the symbolic analysis while the
/// sparsity pattern stays the same (consecutive Kacanov steps on one mesh).
class SpdSolver {
 public:
  Eigen::VectorXd solve(const SparseSystem& sys) {
    const auto n = sys.matrix.rows();
    if (n == 0) throw EmptySystemError("solve_spd: empty system");
    if (sys.space == nullptr || sys.space != pattern_ || n != size_) {
      llt_.analyzePattern(sys.matrix);
      pattern_ = sys.space;
      size_ = n;
    }
    llt_.factorize(sys.matrix);
    if (llt_.info() != Eigen::Success) {
      pattern_ = nullptr;
      throw SolverError("solve_spd: Cholesky factorization broke down (matrix not SPD)");
    }
    const double bnorm = sys.rhs.norm();
    Eigen::VectorXd x = llt_.solve(sys.rhs);
    if (bnorm == 0.0) return x;
    for (int refine = 0; refine < 4; ++refine) {
      const Eigen::VectorXd r = sys.rhs - sys.matrix * x;
      if (r.norm() <= kTolerance * bnorm) return x;
      x += llt_.solve(r);
    }
    if ((sys.rhs - sys.matrix * x).norm() > kTolerance * bnorm)
      throw SolverError("solve_spd: residual above tolerance after iterative refinement");
    return x;
  }

  static constexpr double kTolerance = 1e-10;

 private:
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  const FeSpace* pattern_ = nullptr;
  Eigen::Index size_ = -1;
};

/// Solves an SPD system to a residual below 1e-10 times the rhs norm.
inline Eigen::VectorXd solve_spd(const SparseSystem& sys) {
  SpdSolver s;
  return s.solve(sys);
}

/// Scatters free-dof values into a copy of `boundary`.
inline DiscreteField expand(const SparseSystem& sys, const Eigen::VectorXd& x, const DiscreteField& boundary) {
  DiscreteField u = boundary;
  for (std::size_t k = 0; k < sys.free_to_global.size(); ++k) u[sys.free_to_global[k]] = x[static_cast<Eigen::Index>(k)];
  return u;
}

/// J_eps(u) = sum_T |T| phi_eps(|grad u|_T|) - f sum_T |T| mean_T(u); exact
/// for constant f since u is affine on each triangle.
inline double energy(const DiscreteField& u, const RelaxedNFunction& phi_eps, double f) {
  const Mesh& m = *u.mesh();
  double e = 0.0;
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const int ti = static_cast<int>(t);
    e += m.area(ti) * (phi_eps.phi(norm(u.gradient(ti))) - f * u.mean(ti));
  }
  return e;
}

/// Unrelaxed energy J(u).
inline double energy(const DiscreteField& u, const NFunction& nf, double f) {
  return energy(u, RelaxedNFunction(nf, RelaxationInterval::none()), f);
}

struct KacanovState {
  DiscreteField u;
  RelaxationInterval eps;
  int iteration = 0;
  std::vector<double> energy_history;
  /// Equilibrated flux a_eps(|grad u_{n-1}|) grad w_n of the last weighted
  /// solve w_n (the undamped Kacanov candidate).
  std::optional<P0Field<Vec2>> sigma;
  /// True while sigma is equilibrated for the space of u (false after a mesh
  /// transfer until the next weighted solve).
  bool sigma_equilibrated = false;
};

/// Solution of the weighted problem with weights w (fixed boundary data of u).
inline DiscreteField solve_weighted(const DiscreteField& boundary, const P0Field<double>& w, double f,
                                    SpdSolver& solver) {
  const auto sys = assemble(boundary.space(), w, f, boundary);
  return expand(sys, solver.solve(sys), boundary);
}

/// p = 2 solve with boundary data g: the starting iterate of the scheme.
inline KacanovState initial_state(const FeSpacePtr& space, const PointFunction& g, double f,
                                  const NFunction& nf, RelaxationInterval eps, SpdSolver* cache = nullptr) {
  SpdSolver local;
  SpdSolver& solver = cache ? *cache : local;
  const P0Field<double> ones(space->mesh(), 1.0);
  KacanovState s;
  s.u = solve_weighted(boundary_interpolate(space, g), ones, f, solver);
  s.eps = eps;
  s.energy_history.push_back(energy(s.u, RelaxedNFunction(nf, eps), f));
  s.sigma = broken_gradient(s.u);
  s.sigma_equilibrated = true;
  return s;
}

namespace detail {

/// Exact minimisation of the convex map alpha -> J_eps(u + alpha d) through
/// the root of its monotone derivative.
class LineSearch {
 public:
  LineSearch(const DiscreteField& u, const DiscreteField& d, const RelaxedNFunction& phi_eps, double f)
      : phi_(phi_eps), f_(f) {
    const Mesh& m = *u.mesh();
    const auto nt = m.num_triangles();
    area_.resize(nt);
    g_.resize(nt);
    dg_.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      const int ti = static_cast<int>(t);
      area_[t] = m.area(ti);
      g_[t] = u.gradient(ti);
      dg_[t] = d.gradient(ti);
      load_ += area_[t] * d.mean(ti);
    }
  }

  double slope(double alpha) const {
    double s = 0.0;
    for (std::size_t t = 0; t < area_.size(); ++t) s += area_[t] * dot(phi_.A(g_[t] + alpha * dg_[t]), dg_[t]);
    return s - f_ * load_;
  }

  double scale() const {
    double s = 0.0;
    for (std::size_t t = 0; t < area_.size(); ++t) s += area_[t] * std::abs(dot(phi_.A(g_[t]), dg_[t]));
    return s + std::abs(f_ * load_);
  }

  double minimise() const {
    const double tiny = 1e-15 * scale();
    const double s0 = slope(0.0);
    if (!(s0 < -tiny)) return 0.0;
    double lo = 0.0, flo = s0;
    double hi = 1.0, fhi = slope(hi);
    while (fhi < 0.0 && hi < 1e6) {
      lo = hi;
      flo = fhi;
      hi *= 2.0;
      fhi = slope(hi);
    }
    if (fhi < 0.0) return hi;
    // Illinois variant of regula falsi
    int side = 0;
    double x = hi;
    for (int it = 0; it < 100; ++it) {
      x = (lo * fhi - hi * flo) / (fhi - flo);
      const double fx = slope(x);
      if (std::abs(fx) <= tiny || hi - lo <= 1e-12 * hi) break;
      if (fx < 0.0) {
        lo = x;
        flo = fx;
        if (side == -1) fhi *= 0.5;
        side = -1;
      } else {
        hi = x;
        fhi = fx;
        if (side == 1) flo *= 0.5;
        side = 1;
      }
    }
    return x;
  }

 private:
  const RelaxedNFunction& phi_;
  double f_;
  double load_ = 0.0;
  std::vector<double> area_;
  std::vector<Vec2> g_, dg_;
};

}  // namespace detail

/// One relaxed Kacanov step: weighted solve, then an exact line search of
/// J_eps along the Kacanov correction.  For p <= 2 the weights are
/// a_eps(|grad u_n|).  For p > 2 they are taken from the flux of the last
/// solve, s / (phi_eps^*)'(s) with s = |sigma_n| (the dual scheme, whose
/// weighted problems are monotone in the dual energy); without a flux on the
/// current mesh the gradient form is used.  The line search is inactive
/// (step length 1) for p = 2 and keeps J_eps nonincreasing otherwise.
inline KacanovState kacanov_step(const KacanovState& state, double f, const NFunction& nf,
                                 SpdSolver* cache = nullptr) {
  SpdSolver local;
  SpdSolver& solver = cache ? *cache : local;
  const RelaxedNFunction phi_eps(nf, state.eps);
  const DiscreteField& u = state.u;
  const Mesh& m = *u.mesh();
  P0Field<double> w(u.mesh());
  const bool dual = nf.p() > 2.0 && state.sigma && state.sigma->mesh == u.mesh();
  for (std::size_t t = 0; t < m.num_triangles(); ++t)
    w[t] = dual ? phi_eps.flux_weight(norm((*state.sigma)[t])) : phi_eps.weight(norm(u.gradient(static_cast<int>(t))));
  const DiscreteField candidate = solve_weighted(u, w, f, solver);

  DiscreteField d(u.space());
  for (std::size_t i = 0; i < d.coeffs().size(); ++i) d[i] = candidate[i] - u[i];
  double alpha = 1.0;
  if (nf.p() != 2.0) alpha = detail::LineSearch(u, d, phi_eps, f).minimise();

  KacanovState next;
  next.eps = state.eps;
  next.iteration = state.iteration + 1;
  next.energy_history = state.energy_history;
  if (alpha == 1.0) {
    next.u = candidate;
  } else {
    next.u = u;
    for (std::size_t i = 0; i < d.coeffs().size(); ++i) next.u[i] += alpha * d[i];
  }
  double e = energy(next.u, phi_eps, f);
  const double e_prev = state.energy_history.empty() ? kInf : state.energy_history.back();
  if (e > e_prev && alpha != 1.0) {
    // roundoff in the line search; keep the old iterate
    next.u = u;
    e = energy(u, phi_eps, f);
  }
  next.energy_history.push_back(e);
  P0Field<Vec2> sigma(u.mesh());
  for (std::size_t t = 0; t < m.num_triangles(); ++t) sigma[t] = w[t] * candidate.gradient(static_cast<int>(t));
  next.sigma = std::move(sigma);
  next.sigma_equilibrated = true;
  return next;
}

}  // namespace plfem

#pragma once

// Error indicators of the adaptive scheme, data oscillation, and exact
// quasi-norm errors against nested reference solutions.

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "plfem/fespace.hpp"
#include "plfem/nfunc.hpp"
#include "plfem/solver.hpp"

namespace plfem {

/// Per-triangle contributions and their sum.
struct LocalIndicator {
  std::vector<double> local;
  double total = 0.0;
};

enum class SpaceEstimator { Residual, DualJump };

inline const char* to_string(SpaceEstimator m) { return m == SpaceEstimator::Residual ? "residual" : "dual_jump"; }

struct IndicatorBreakdown {
  double eta_iter2 = 0.0;
  double eta_minus2 = 0.0;
  double eta_plus2 = 0.0;
  double eta_space2 = 0.0;
  std::vector<double> eta_space_local;
};

struct ErrorReport {
  std::size_t ndof = 0;
  double abs_error2 = 0.0;
  double rel_error2 = 0.0;
  double best_p0_error2 = 0.0;
  double osc2 = 0.0;
};

namespace detail {

/// Core of osc2; sample(t, x) evaluates f restricted to triangle t at x.
template <typename Sampler>
LocalIndicator osc2_sampled(const DiscreteField& u, const NFunction& nf, Sampler&& sample) {
  const Mesh& m = *u.mesh();
  LocalIndicator out;
  out.local.resize(m.num_triangles());
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const int ti = static_cast<int>(t);
    std::array<double, 3> fv;
    for (int i = 0; i < 3; ++i) fv[i] = sample(ti, 0.5 * (m.point(ti, (i + 1) % 3) + m.point(ti, (i + 2) % 3)));
    // centred on one sample so that equal samples give exactly zero
    const double base = fv[0];
    for (double& v : fv) v -= base;
    const double mean = (fv[0] + fv[1] + fv[2]) / 3.0;
    double var = 0.0;
    for (double v : fv) var += (v - mean) * (v - mean);
    const double rms = std::sqrt(var / 3.0);
    const double val = m.area(ti) * nf.shifted_phi_conj(norm(u.gradient(ti)), m.diameter(ti) * rms);
    out.local[t] = val;
    out.total += val;
  }
  return out;
}

}  // namespace detail

/// osc^2(u, f; T) = |T| (phi_{|grad u|})^*(h_T m_T) with m_T the root mean
/// square of f - Pi_0 f over T.  Both moments use the edge-midpoint rule, so
/// m_T is exact for affine f and vanishes for piecewise constant f.
inline LocalIndicator osc2(const DiscreteField& u, const NFunction& nf, const PointFunction& f) {
  return detail::osc2_sampled(u, nf, [&f](int, const Vec2& x) { return f(x); });
}

/// Data given per triangle (piecewise constant on the mesh of u).
inline LocalIndicator osc2(const DiscreteField& u, const NFunction& nf, const P0Field<double>& f) {
  if (f.mesh != u.mesh()) throw std::invalid_argument("osc2: data lives on another mesh");
  return detail::osc2_sampled(u, nf, [&f](int t, const Vec2&) { return f[t]; });
}

inline LocalIndicator osc2(const DiscreteField& u, const NFunction& nf, double f_const) {
  return osc2(u, nf, [f_const](const Vec2&) { return f_const; });
}

namespace detail {

/// Relaxed integrand with its additive offset removed, so that it agrees
/// with phi on [eps_minus, eps_plus].
inline double normalized_relaxed(const RelaxedNFunction& r, double t) { return r.phi(t) - r.offset(); }

inline double relaxation_gap(const DiscreteField& u, const NFunction& nf, const RelaxationInterval& current,
                             const RelaxationInterval& widened) {
  const RelaxedNFunction a(nf, current), b(nf, widened);
  const Mesh& m = *u.mesh();
  double gap = 0.0;
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const int ti = static_cast<int>(t);
    const double s = norm(u.gradient(ti));
    gap += m.area(ti) * (normalized_relaxed(a, s) - normalized_relaxed(b, s));
  }
  return std::abs(gap);
}

}  // namespace detail

/// Energy impact of halving eps_minus (first) and of doubling eps_plus
/// (second) at the current iterate.  Integrands are compared with their
/// constant offsets removed, so only gradients inside a truncated range
/// contribute.
inline std::pair<double, double> eta_relax(const KacanovState& s, const NFunction& nf) {
  const auto& e = s.eps;
  double minus = 0.0, plus = 0.0;
  if (e.lower() > 0.0) minus = detail::relaxation_gap(s.u, nf, e, {0.5 * e.lower(), e.upper()});
  if (std::isfinite(e.upper())) plus = detail::relaxation_gap(s.u, nf, e, {e.lower(), 2.0 * e.upper()});
  return {minus, plus};
}

/// Energy decrease of the last Kacanov step; +inf before the first step.
/// A cheap (lower) proxy of the iteration error, see eta_iter_duality.
inline double eta_iter(const KacanovState& s) {
  const auto& h = s.energy_history;
  if (h.size() < 2) return kInf;
  return std::max(0.0, h[h.size() - 2] - h.back());
}

/// Discrete duality gap J_eps(u) - D_eps(sigma) with
///   D_eps(sigma) = -int phi_eps^*(|sigma|) + int sigma . grad_h u_D - int f u_D,
/// u_D the boundary part of u (interior dofs zero).  For sigma in P0
/// equilibrated against the free basis functions this bounds
/// J_eps(u) - min J_eps over the discrete space from above.  +inf before the
/// first step after a (re)start, like eta_iter, and whenever no equilibrated
/// flux is available.
inline double eta_iter_duality(const KacanovState& s, const NFunction& nf, double f) {
  if (s.energy_history.size() < 2 || !s.sigma || !s.sigma_equilibrated || s.sigma->mesh != s.u.mesh()) return kInf;
  const RelaxedNFunction phi_eps(nf, s.eps);
  const auto& space = s.u.space();
  DiscreteField ud = s.u;
  for (int i : space->free_dofs()) ud[i] = 0.0;
  const Mesh& m = *s.u.mesh();
  double gap = 0.0;
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const int ti = static_cast<int>(t);
    const Vec2 q = (*s.sigma)[t];
    const double primal = phi_eps.phi(norm(s.u.gradient(ti))) - f * s.u.mean(ti);
    const double dual = -phi_eps.phi_conj(norm(q)) + dot(q, ud.gradient(ti)) - f * ud.mean(ti);
    gap += m.area(ti) * (primal - dual);
  }
  return std::max(0.0, gap);
}

/// Spatial error indicator.
///
/// Residual mode per T:
///   |T| (phi_eps)_{|grad u|}^*(h_T |f|) + sum_{interior faces g of T} h_g |g| |[F_eps(grad u)]_g|^2
/// Dual-jump mode per T:
///   sum_{interior faces g of T} h_T |g| |[F*_eps(sigma)]_g|^2
inline LocalIndicator eta_space(const KacanovState& s, const NFunction& nf, double f, SpaceEstimator mode) {
  const DiscreteField& u = s.u;
  const Mesh& m = *u.mesh();
  const RelaxedNFunction phi_eps(nf, s.eps);
  LocalIndicator out;
  out.local.assign(m.num_triangles(), 0.0);
  if (mode == SpaceEstimator::Residual) {
    std::vector<Vec2> Fg(m.num_triangles());
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
      const int ti = static_cast<int>(t);
      const Vec2 g = u.gradient(ti);
      Fg[t] = phi_eps.F(g);
      out.local[t] = m.area(ti) * phi_eps.shifted(norm(g)).conjugate(m.diameter(ti) * std::abs(f));
    }
    for (std::size_t fi = 0; fi < m.num_faces(); ++fi) {
      const Face& fc = m.face(static_cast<int>(fi));
      if (fc.boundary()) continue;
      const double len = m.face_length(static_cast<int>(fi));
      const double c = len * len * norm2(Fg[fc.tplus] - Fg[fc.tminus]);
      out.local[fc.tplus] += c;
      out.local[fc.tminus] += c;
    }
  } else {
    if (!s.sigma || s.sigma->mesh != u.mesh())
      throw std::invalid_argument("eta_space: dual_jump mode needs the flux of the current iterate");
    std::vector<Vec2> Fs(m.num_triangles());
    for (std::size_t t = 0; t < m.num_triangles(); ++t) Fs[t] = phi_eps.Fstar((*s.sigma)[t]);
    for (std::size_t fi = 0; fi < m.num_faces(); ++fi) {
      const Face& fc = m.face(static_cast<int>(fi));
      if (fc.boundary()) continue;
      const double jump = m.face_length(static_cast<int>(fi)) * norm2(Fs[fc.tplus] - Fs[fc.tminus]);
      out.local[fc.tplus] += m.diameter(fc.tplus) * jump;
      out.local[fc.tminus] += m.diameter(fc.tminus) * jump;
    }
  }
  for (double v : out.local) out.total += v;
  return out;
}

/// ||F(grad u_ref) - F(grad_h u_h)||^2 and its ratio to ||F(grad u_ref)||^2,
/// integrated exactly over the mesh of u_ref.  `anc` maps each triangle of
/// u_ref's mesh to its ancestor on u_h's mesh.
inline std::pair<double, double> error_f_distance(const DiscreteField& u_ref, const DiscreteField& u_h,
                                                  const NFunction& nf, const std::vector<int>& anc) {
  const MeshPtr& fine = u_ref.mesh();
  if (anc.size() != fine->num_triangles()) throw std::invalid_argument("error_f_distance: ancestor map size");
  std::vector<Vec2> coarse_F(u_h.mesh()->num_triangles());
  for (std::size_t T = 0; T < coarse_F.size(); ++T) coarse_F[T] = nf.F(u_h.gradient(static_cast<int>(T)));
  double abs2 = 0.0, ref2 = 0.0;
  for (std::size_t t = 0; t < fine->num_triangles(); ++t) {
    const int ti = static_cast<int>(t);
    const Vec2 Fr = nf.F(u_ref.gradient(ti));
    const double a = fine->area(ti);
    abs2 += a * norm2(Fr - coarse_F[anc[t]]);
    ref2 += a * norm2(Fr);
  }
  return {abs2, ref2 > 0.0 ? abs2 / ref2 : 0.0};
}

/// Same, for u_ref on a refinement of u_h's mesh.
inline std::pair<double, double> error_f_distance(const DiscreteField& u_ref, const DiscreteField& u_h,
                                                  const NFunction& nf) {
  return error_f_distance(u_ref, u_h, nf, ancestor_map(u_ref.mesh(), u_h.mesh()));
}

/// min over P0 vector fields chi on `coarse` of ||F(grad u_ref) - chi||^2,
/// attained by the elementwise area-weighted mean.
inline double best_p0_error(const DiscreteField& u_ref, const MeshPtr& coarse, const NFunction& nf,
                            const std::vector<int>& anc) {
  const MeshPtr& fine = u_ref.mesh();
  if (anc.size() != fine->num_triangles()) throw std::invalid_argument("best_p0_error: ancestor map size");
  std::vector<Vec2> Fr(fine->num_triangles());
  std::vector<Vec2> mean(coarse->num_triangles());
  for (std::size_t t = 0; t < Fr.size(); ++t) {
    Fr[t] = nf.F(u_ref.gradient(static_cast<int>(t)));
    mean[anc[t]] += fine->area(static_cast<int>(t)) * Fr[t];
  }
  for (std::size_t T = 0; T < mean.size(); ++T) mean[T] = (1.0 / coarse->area(static_cast<int>(T))) * mean[T];
  double e = 0.0;
  for (std::size_t t = 0; t < Fr.size(); ++t) e += fine->area(static_cast<int>(t)) * norm2(Fr[t] - mean[anc[t]]);
  return e;
}

inline double best_p0_error(const DiscreteField& u_ref, const MeshPtr& coarse, const NFunction& nf) {
  return best_p0_error(u_ref, coarse, nf, ancestor_map(u_ref.mesh(), coarse));
}

}  // namespace plfem

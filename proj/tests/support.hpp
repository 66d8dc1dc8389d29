#pragma once

// Shared fixtures and brute-force oracles of the test programs.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "plfem/fespace.hpp"
#include "plfem/mesh.hpp"
#include "plfem/nfunc.hpp"

namespace plfem::testing {

/// Unit square split by the diagonal (0,0)-(1,1).
inline MeshPtr square_mesh() {
  return Mesh::create({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}});
}

/// L-shape refined `steps` times with a random 20% marking per step.
inline MeshPtr random_refinement(int steps, unsigned seed, MeshPtr start = lshape_mesh()) {
  std::mt19937 rng(seed);
  std::bernoulli_distribution pick(0.2);
  MeshPtr m = std::move(start);
  for (int s = 0; s < steps; ++s) {
    std::vector<int> marked;
    for (std::size_t t = 0; t < m->num_triangles(); ++t)
      if (pick(rng)) marked.push_back(static_cast<int>(t));
    if (marked.empty()) marked.push_back(0);
    m = bisect(m, marked);
  }
  return m;
}

/// Field with independent uniform coefficients in [-1, 1].
inline DiscreteField random_field(const FeSpacePtr& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DiscreteField f(space);
  for (std::size_t i = 0; i < space->num_dofs(); ++i) f[i] = u(rng);
  return f;
}

/// max(r1, r2) for the face normal (1, 0), gradients Q + J (plus side) and Q.
inline double two_case_max(const NFunction& nf, const Vec2& Q, const Vec2& J) {
  const auto r = two_case_ratios({1.0, 0.0}, Q + J, Q, nf);
  return std::max(r.tangential, r.normal_flux);
}

/// Brute-force infimum of max(r1, r2) over all planar jump configurations.
/// Rotation invariance fixes the normal; (p - 1)-homogeneity of A fixes
/// |Q| + |J| = 1, leaving the angles of Q and J and s = |J| / (|Q| + |J|).
/// A grid sweep is followed by a shrinking pattern search around the best
/// grid point.
inline double two_case_threshold(const NFunction& nf) {
  auto eval = [&](double aq, double aj, double s) {
    s = std::clamp(s, 1e-9, 1.0);
    const Vec2 Q{(1 - s) * std::cos(aq), (1 - s) * std::sin(aq)};
    const Vec2 J{s * std::cos(aj), s * std::sin(aj)};
    return two_case_max(nf, Q, J);
  };
  constexpr double pi = std::numbers::pi;
  constexpr int na = 90, ns = 60;
  double best = std::numeric_limits<double>::infinity();
  std::array<double, 3> arg{};
  for (int i = 0; i <= na; ++i) {
    const double aq = pi * i / na;
    for (int j = 0; j < 2 * na; ++j) {
      const double aj = pi * j / na;
      for (int k = 0; k <= ns; ++k) {
        const double s = std::pow(10.0, -6.0 * (1.0 - static_cast<double>(k) / ns));
        const double v = eval(aq, aj, s);
        if (v < best) {
          best = v;
          arg = {aq, aj, s};
        }
      }
    }
  }
  std::array<double, 3> step{pi / na, pi / na, 0.5 * arg[2]};
  for (int it = 0; it < 4000 && step[0] > 1e-13; ++it) {
    bool improved = false;
    for (int d = 0; d < 3; ++d)
      for (double sign : {1.0, -1.0}) {
        auto trial = arg;
        trial[d] += sign * step[d];
        const double v = eval(trial[0], trial[1], trial[2]);
        if (v < best) {
          best = v;
          arg = trial;
          improved = true;
        }
      }
    if (!improved)
      for (double& s : step) s *= 0.5;
  }
  return best;
}

/// Dense Gaussian elimination with partial pivoting; `a` is row-major n x n.
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = a[i * n + k] / a[k * n + k];
      if (l == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= l * a[k * n + j];
      b[i] -= l * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return x;
}

/// Element stiffness from the edge form  K_ij = (e_i . e_j) / (4 |T|), e_i
/// the edge opposite vertex i (scaled by 4 for CR), without barycentric
/// gradients.
inline std::array<std::array<double, 3>, 3> edge_form_stiffness(const Mesh& m, int t, ElementKind kind) {
  const auto& tr = m.triangle(t);
  std::array<Vec2, 3> e;
  for (int i = 0; i < 3; ++i) e[i] = m.vertex(tr[(i + 2) % 3]) - m.vertex(tr[(i + 1) % 3]);
  const Vec2 a = m.vertex(tr[1]) - m.vertex(tr[0]), b = m.vertex(tr[2]) - m.vertex(tr[0]);
  const double area = 0.5 * std::abs(a.x * b.y - a.y * b.x);
  const double scale = kind == ElementKind::CrouzeixRaviart ? 4.0 : 1.0;
  std::array<std::array<double, 3>, 3> k{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k[i][j] = scale * (e[i].x * e[j].x + e[i].y * e[j].y) / (4.0 * area);
  return k;
}

/// Dense oracle for  -div(w grad u) = f  with per-triangle weights and the
/// boundary coefficients of `boundary`: element matrices from
/// edge_form_stiffness, load f |T| / 3, dense elimination.
inline DiscreteField dense_weighted_solve(const DiscreteField& boundary, const std::vector<double>& w, double f) {
  const auto& space = boundary.space();
  const Mesh& m = *space->mesh();
  std::vector<int> idx(space->num_dofs(), -1);
  std::size_t n = 0;
  for (std::size_t i = 0; i < space->num_dofs(); ++i)
    if (!space->is_boundary_dof(static_cast<int>(i))) idx[i] = static_cast<int>(n++);
  std::vector<double> a(n * n, 0.0), b(n, 0.0);
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const int ti = static_cast<int>(t);
    const auto k = edge_form_stiffness(m, ti, space->kind());
    const auto& ld = space->local_dofs(ti);
    for (int i = 0; i < 3; ++i) {
      const int r = idx[ld[i]];
      if (r < 0) continue;
      b[r] += f * m.area(ti) / 3.0;
      for (int j = 0; j < 3; ++j) {
        const int c = idx[ld[j]];
        if (c >= 0)
          a[r * n + c] += w[t] * k[i][j];
        else
          b[r] -= w[t] * k[i][j] * boundary[ld[j]];
      }
    }
  }
  const auto x = dense_solve(std::move(a), std::move(b));
  DiscreteField u = boundary;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (idx[i] >= 0) u[i] = x[idx[i]];
  return u;
}

}  // namespace plfem::testing

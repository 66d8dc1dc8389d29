#pragma once

// Seeded sampling of the empirical constants in the distance equivalences
// and the elementwise Poincare-type bound.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>

#include "plfem/nfunc.hpp"
#include "plfem/vec2.hpp"

namespace plfem {

struct RatioBand {
  double lo = kInf;
  double hi = 0.0;

  void add(double r) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  double spread() const { return hi / lo; }
};

/// Empirical bands of the pairwise ratios of
///   d_F = |F(P) - F(Q)|^2,  d_A = (A(P) - A(Q)).(P - Q),  d_s = phi_{|Q|}(|P - Q|)
/// over random pairs from random_pair on [1e-6, 1e3].
struct DistanceBands {
  RatioBand F_over_A, F_over_shift, A_over_shift;
};

inline Vec2 random_vector(std::mt19937_64& rng, double log_lo, double log_hi) {
  std::uniform_real_distribution<double> lg(log_lo, log_hi), ang(0.0, 2.0 * std::numbers::pi);
  const double r = std::pow(10.0, lg(rng)), a = ang(rng);
  return {r * std::cos(a), r * std::sin(a)};
}

/// Pair (P, Q) with |Q| and |P - Q| log-uniform in [10^log_lo, 10^log_hi],
/// redrawn until |P| lies in the same range.  Drawing the difference
/// directly covers |P - Q| << |Q|, where independent draws are rare.
inline std::pair<Vec2, Vec2> random_pair(std::mt19937_64& rng, double log_lo, double log_hi) {
  const double lo = std::pow(10.0, log_lo), hi = std::pow(10.0, log_hi);
  for (;;) {
    const Vec2 Q = random_vector(rng, log_lo, log_hi);
    const Vec2 P = Q + random_vector(rng, log_lo, log_hi);
    const double r = norm(P);
    if (r >= lo && r <= hi) return {P, Q};
  }
}

inline DistanceBands distance_bands(const NFunction& nf, std::size_t samples, unsigned long seed) {
  std::mt19937_64 rng(seed);
  DistanceBands b;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto [P, Q] = random_pair(rng, -6.0, 3.0);
    const double dF = norm2(nf.F(P) - nf.F(Q));
    const double dA = dot(nf.A(P) - nf.A(Q), P - Q);
    const double ds = nf.shifted_phi(norm(Q), norm(P - Q));
    if (!(dF > 0.0 && dA > 0.0 && ds > 0.0) || !std::isfinite(dF) || !std::isfinite(dA) || !std::isfinite(ds)) continue;
    b.F_over_A.add(dF / dA);
    b.F_over_shift.add(dF / ds);
    b.A_over_shift.add(dA / ds);
  }
  return b;
}

/// Largest sampled value of  int_T phi(|v - Pi_0 v|) / (|T| phi(h_T |grad v|)) over
/// random affine v on random triangles.  The integral is evaluated with
/// the 7-point degree-5 rule.
inline double poincare_constant(const NFunction& nf, std::size_t samples, unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  static constexpr double a1 = 0.059715871789770, b1 = 0.470142064105115;
  static constexpr double a2 = 0.797426985353087, b2 = 0.101286507323456;
  static constexpr double w0 = 0.225, w1 = 0.132394152788506, w2 = 0.125939180544827;
  static constexpr std::array<std::array<double, 4>, 7> rule{{{1.0 / 3, 1.0 / 3, 1.0 / 3, w0},
                                                              {a1, b1, b1, w1},
                                                              {b1, a1, b1, w1},
                                                              {b1, b1, a1, w1},
                                                              {a2, b2, b2, w2},
                                                              {b2, a2, b2, w2},
                                                              {b2, b2, a2, w2}}};
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    std::array<Vec2, 3> x{Vec2{u(rng), u(rng)}, Vec2{u(rng), u(rng)}, Vec2{u(rng), u(rng)}};
    const double area = 0.5 * std::abs(cross(x[1] - x[0], x[2] - x[0]));
    if (area < 1e-3) continue;
    const double h = std::max({norm(x[1] - x[0]), norm(x[2] - x[1]), norm(x[0] - x[2])});
    const Vec2 g = random_vector(rng, -3.0, 2.0);
    const Vec2 c = (1.0 / 3.0) * (x[0] + x[1] + x[2]);
    double integral = 0.0;
    for (const auto& q : rule) {
      const Vec2 pt = q[0] * x[0] + q[1] * x[1] + q[2] * x[2];
      integral += q[3] * nf.phi(std::abs(dot(g, pt - c)));
    }
    integral *= area;
    worst = std::max(worst, integral / (area * nf.phi(h * norm(g))));
  }
  return worst;
}

}  // namespace plfem

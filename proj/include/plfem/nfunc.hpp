#pragma once

// Power-type N-functions phi(t) = t^p / p together with their conjugates,
// shifted versions phi_r, relaxed (truncated) versions phi_eps and the
// nonlinear vector maps F, A and F*.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "plfem/errors.hpp"
#include "plfem/vec2.hpp"

namespace plfem {

namespace detail {

inline void require_nonnegative(double t, const char* what) {
  if (!(t >= 0.0)) {
    std::ostringstream msg;
    msg << what << " must be nonnegative, got " << t;
    throw DomainError(msg.str());
  }
}

}  // namespace detail

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Truncation interval (eps_minus, eps_plus) of the relaxed Kacanov scheme.
/// eps_plus may be +inf; eps_minus == 0 disables the lower truncation.
class RelaxationInterval {
 public:
  constexpr RelaxationInterval() = default;
  RelaxationInterval(double eps_minus, double eps_plus) : lower_(eps_minus), upper_(eps_plus) {
    if (!(eps_minus >= 0.0) || !(eps_plus > eps_minus)) {
      std::ostringstream msg;
      msg << "relaxation interval requires 0 <= eps_minus < eps_plus, got (" << eps_minus << ", "
          << eps_plus << ")";
      throw std::invalid_argument(msg.str());
    }
  }

  /// The interval (0, inf): no relaxation at all.
  static RelaxationInterval none() { return {0.0, kInf}; }

  constexpr double lower() const noexcept { return lower_; }
  constexpr double upper() const noexcept { return upper_; }

  constexpr double clamp(double t) const noexcept { return std::min(std::max(t, lower_), upper_); }

  /// True if this interval contains `other`.
  constexpr bool contains(const RelaxationInterval& other) const noexcept {
    return lower_ <= other.lower_ && other.upper_ <= upper_;
  }

  friend constexpr bool operator==(const RelaxationInterval&, const RelaxationInterval&) = default;

 private:
  double lower_ = 0.0;
  double upper_ = kInf;
};

class NFunction;

/// N-function psi with derivative psi'(s) = a(max(r, s)) s where
/// a(k) = clamp(k, eps_minus, eps_plus)^(p-2).
///
/// Covers the plain power (r = 0, no relaxation), the shifted function phi_r
/// and the relaxed function phi_eps (and their composite).  psi' is a chain of
/// at most four pieces c s^e with e in {1, p-1}, so values, conjugates and
/// inverse derivatives are all evaluated in closed form.
class ShiftedRelaxedNFunction {
 public:
  ShiftedRelaxedNFunction(double p, const RelaxationInterval& eps, double shift);

  double value(double t) const {
    detail::require_nonnegative(t, "argument");
    const Piece& pc = piece_at(t);
    return pc.base + pc.coeff * (std::pow(t, pc.primal_exp) - std::pow(pc.lo, pc.primal_exp)) /
                         pc.primal_exp;
  }

  double derivative(double t) const {
    detail::require_nonnegative(t, "argument");
    const Piece& pc = piece_at(t);
    return pc.coeff * std::pow(t, pc.expo);
  }

  /// Convex conjugate psi*(t) = integral of (psi')^{-1} over [0, t].
  double conjugate(double t) const {
    detail::require_nonnegative(t, "argument");
    const Piece& pc = dual_piece_at(t);
    return pc.dual_base + std::pow(pc.coeff, -1.0 / pc.expo) *
                              (std::pow(t, pc.dual_exp) - std::pow(pc.dual_lo, pc.dual_exp)) /
                              pc.dual_exp;
  }

  /// (psi*)'(t) = (psi')^{-1}(t).
  double conjugate_derivative(double t) const {
    detail::require_nonnegative(t, "argument");
    const Piece& pc = dual_piece_at(t);
    return std::pow(t / pc.coeff, 1.0 / pc.expo);
  }

 private:
  struct Piece {
    double lo = 0.0, hi = kInf;  // primal interval
    double coeff = 1.0;          // psi'(s) = coeff * s^expo
    double expo = 1.0;
    double primal_exp = 2.0;     // expo + 1, stored exactly
    double dual_exp = 2.0;       // 1/expo + 1, stored exactly
    double base = 0.0;           // psi(lo)
    double dual_lo = 0.0, dual_hi = kInf;
    double dual_base = 0.0;      // psi*(dual_lo)
  };

  void push(double lo, double hi, double coeff, bool power);

  const Piece& piece_at(double t) const {
    for (int i = 0; i + 1 < count_; ++i) {
      if (t < pieces_[i].hi) return pieces_[i];
    }
    return pieces_[count_ - 1];
  }
  const Piece& dual_piece_at(double t) const {
    for (int i = 0; i + 1 < count_; ++i) {
      if (t < pieces_[i].dual_hi) return pieces_[i];
    }
    return pieces_[count_ - 1];
  }

  double p_;
  std::array<Piece, 4> pieces_{};
  int count_ = 0;
};

/// The uniformly convex N-function phi(t) = t^p / p, p > 1.
class NFunction {
 public:
  explicit NFunction(double p) : p_(p), conj_(p / (p - 1.0)) {
    if (!(p > 1.0) || !std::isfinite(p)) {
      std::ostringstream msg;
      msg << "N-function exponent must satisfy p > 1, got " << p;
      throw std::invalid_argument(msg.str());
    }
  }

  double p() const noexcept { return p_; }
  /// Conjugate exponent p' = p / (p - 1).
  double conjugate_exponent() const noexcept { return conj_; }

  double phi(double t) const {
    detail::require_nonnegative(t, "phi argument");
    return std::pow(t, p_) / p_;
  }

  double phi_prime(double t) const {
    detail::require_nonnegative(t, "phi' argument");
    return std::pow(t, p_ - 1.0);
  }

  double phi_conj(double t) const {
    detail::require_nonnegative(t, "phi* argument");
    return std::pow(t, conj_) / conj_;
  }

  /// (phi*)'(t) = t^(1/(p-1)), the inverse of phi'.
  double phi_conj_prime(double t) const {
    detail::require_nonnegative(t, "(phi*)' argument");
    return std::pow(t, 1.0 / (p_ - 1.0));
  }

  double shifted_phi(double r, double t) const {
    detail::require_nonnegative(r, "shift");
    return shifted(r).value(t);
  }
  double shifted_phi_prime(double r, double t) const {
    detail::require_nonnegative(r, "shift");
    return shifted(r).derivative(t);
  }
  double shifted_phi_conj(double r, double t) const {
    detail::require_nonnegative(r, "shift");
    return shifted(r).conjugate(t);
  }

  ShiftedRelaxedNFunction shifted(double r) const {
    return ShiftedRelaxedNFunction(p_, RelaxationInterval::none(), r);
  }

  /// Lower uniform convexity constant: min over 0 <= t < s of
  /// (phi'(s)/s) / ((phi'(s) - phi'(t)) / (s - t)).
  double c_uc() const noexcept { return std::min(1.0, 1.0 / (p_ - 1.0)); }
  /// Upper uniform convexity constant (the matching supremum).
  double C_uc() const noexcept { return std::max(1.0, 1.0 / (p_ - 1.0)); }

  /// phi'(t)/t = t^(p-2); zero argument is only admissible for p >= 2.
  double weight(double t) const { return std::pow(t, p_ - 2.0); }

  Vec2 A(const Vec2& q) const {
    const double t = norm(q);
    if (t == 0.0) return {};
    return weight(t) * q;
  }

  Vec2 F(const Vec2& q) const {
    const double t = norm(q);
    if (t == 0.0) return {};
    return std::sqrt(weight(t)) * q;
  }

 private:
  double p_;
  double conj_;
};

inline ShiftedRelaxedNFunction::ShiftedRelaxedNFunction(double p, const RelaxationInterval& eps,
                                                        double shift)
    : p_(p) {
  detail::require_nonnegative(shift, "shift");
  const double lo = eps.lower();
  const double hi = eps.upper();
  double start = 0.0;
  if (shift > 0.0) {
    const double k = eps.clamp(shift);
    push(0.0, shift, std::pow(k, p - 2.0), false);
    start = shift;
  }
  if (start < lo) {
    push(start, lo, std::pow(lo, p - 2.0), false);
    start = lo;
  }
  if (start < hi) {
    push(start, hi, 1.0, true);
    start = hi;
  }
  if (std::isfinite(hi)) push(start, kInf, std::pow(hi, p - 2.0), false);
}

inline void ShiftedRelaxedNFunction::push(double lo, double hi, double coeff, bool power) {
  Piece pc;
  pc.lo = lo;
  pc.hi = hi;
  pc.coeff = coeff;
  if (power) {
    pc.expo = p_ - 1.0;
    pc.primal_exp = p_;
    pc.dual_exp = p_ / (p_ - 1.0);
  }
  if (count_ > 0) {
    const Piece& prev = pieces_[count_ - 1];
    pc.base = prev.base + prev.coeff *
                              (std::pow(lo, prev.primal_exp) - std::pow(prev.lo, prev.primal_exp)) /
                              prev.primal_exp;
    pc.dual_lo = prev.dual_hi;
    pc.dual_base = prev.dual_base + std::pow(prev.coeff, -1.0 / prev.expo) *
                                        (std::pow(pc.dual_lo, prev.dual_exp) -
                                         std::pow(prev.dual_lo, prev.dual_exp)) /
                                        prev.dual_exp;
  }
  pc.dual_hi = std::isfinite(hi) ? coeff * std::pow(hi, pc.expo) : kInf;
  pieces_[count_++] = pc;
}

/// phi together with a relaxation interval: the integrand phi_eps of the
/// relaxed energy, the Kacanov weight a_eps and the relaxed maps.
class RelaxedNFunction {
 public:
  RelaxedNFunction(NFunction nf, RelaxationInterval eps) : nf_(nf), eps_(eps), psi_(nf.p(), eps, 0.0) {}

  const NFunction& base() const noexcept { return nf_; }
  const RelaxationInterval& interval() const noexcept { return eps_; }

  /// a_eps(t) = phi'(k)/k with k = clamp(t, eps_minus, eps_plus).
  double weight(double t) const {
    detail::require_nonnegative(t, "weight argument");
    const double k = eps_.clamp(t);
    const double w = std::pow(k, nf_.p() - 2.0);
    if (!(w > 0.0) || !std::isfinite(w)) {
      std::ostringstream msg;
      msg << "relaxed weight is singular at t = " << t << " for p = " << nf_.p()
          << " and eps = (" << eps_.lower() << ", " << eps_.upper() << ")";
      throw SingularWeightError(msg.str());
    }
    return w;
  }

  /// Weight seen from the dual side: s / (phi_eps^*)'(s), which equals
  /// weight(t) when s = phi_eps'(t).
  double flux_weight(double s) const {
    detail::require_nonnegative(s, "flux weight argument");
    if (s == 0.0) return weight(0.0);
    return s / psi_.conjugate_derivative(s);
  }

  double phi(double t) const { return psi_.value(t); }
  double phi_prime(double t) const { return psi_.derivative(t); }
  double phi_conj(double t) const { return psi_.conjugate(t); }
  double phi_conj_prime(double t) const { return psi_.conjugate_derivative(t); }

  /// phi_eps(t) - phi(t), constant for t in [eps_minus, eps_plus].
  double offset() const {
    const double lo = eps_.lower();
    if (lo == 0.0) return 0.0;
    return std::pow(lo, nf_.p()) * (0.5 - 1.0 / nf_.p());
  }

  /// phi_eps shifted by r, i.e. derivative a_eps(max(r, s)) s.
  ShiftedRelaxedNFunction shifted(double r) const {
    return ShiftedRelaxedNFunction(nf_.p(), eps_, r);
  }

  Vec2 A(const Vec2& q) const {
    const double t = norm(q);
    if (t == 0.0) return {};
    return weight(t) * q;
  }

  Vec2 F(const Vec2& q) const {
    const double t = norm(q);
    if (t == 0.0) return {};
    return std::sqrt(weight(t)) * q;
  }

  /// F-construction applied to the conjugate of phi_eps.
  Vec2 Fstar(const Vec2& q) const {
    const double t = norm(q);
    if (t == 0.0) return {};
    return std::sqrt(phi_conj_prime(t) / t) * q;
  }

 private:
  NFunction nf_;
  RelaxationInterval eps_;
  ShiftedRelaxedNFunction psi_;
};

}  // namespace plfem

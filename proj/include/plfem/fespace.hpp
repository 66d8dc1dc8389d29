#pragma once

// Lowest-order Lagrange and Crouzeix-Raviart spaces over a Mesh, discrete
// fields on them, and the discrete operators coupling the two.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "plfem/errors.hpp"
#include "plfem/mesh.hpp"
#include "plfem/nfunc.hpp"
#include "plfem/vec2.hpp"

namespace plfem {

enum class ElementKind { Lagrange, CrouzeixRaviart };

inline const char* to_string(ElementKind k) {
  return k == ElementKind::Lagrange ? "lagrange" : "cr";
}

using PointFunction = std::function<double(const Vec2&)>;

/// Gradients of the barycentric coordinates of triangle t.
inline std::array<Vec2, 3> barycentric_gradients(const Mesh& m, int t) {
  const auto& tr = m.triangle(t);
  const double two_area = 2.0 * m.area(t);
  std::array<Vec2, 3> g;
  for (int i = 0; i < 3; ++i) {
    const Vec2 e = m.vertex(tr[(i + 2) % 3]) - m.vertex(tr[(i + 1) % 3]);
    g[i] = (1.0 / two_area) * rot90(e);
  }
  return g;
}

/// Barycentric coordinates of point x with respect to triangle t.
inline std::array<double, 3> barycentric(const Mesh& m, int t, const Vec2& x) {
  const auto& tr = m.triangle(t);
  const Vec2 a = m.vertex(tr[0]), b = m.vertex(tr[1]), c = m.vertex(tr[2]);
  const double det = cross(b - a, c - a);
  const double l1 = cross(x - a, c - a) / det;
  const double l2 = cross(b - a, x - a) / det;
  return {1.0 - l1 - l2, l1, l2};
}

class FeSpace;
using FeSpacePtr = std::shared_ptr<const FeSpace>;

/// Dof layout of S^1 (dofs = vertices) or CR (dofs = faces, local dof i on
/// the face opposite vertex i).  Boundary dofs are flagged; the free dofs
/// are the remaining ones in increasing global order.
class FeSpace {
 public:
  static FeSpacePtr create(MeshPtr mesh, ElementKind kind) {
    auto s = std::shared_ptr<FeSpace>(new FeSpace());
    s->mesh_ = std::move(mesh);
    s->kind_ = kind;
    const Mesh& m = *s->mesh_;
    if (kind == ElementKind::Lagrange) {
      s->ndofs_ = m.num_vertices();
      s->local_.assign(m.triangles().begin(), m.triangles().end());
      s->boundary_.resize(s->ndofs_);
      s->anchors_ = m.vertices();
      for (std::size_t v = 0; v < s->ndofs_; ++v) s->boundary_[v] = m.is_boundary_vertex(static_cast<int>(v));
    } else {
      s->ndofs_ = m.num_faces();
      s->local_.resize(m.num_triangles());
      for (std::size_t t = 0; t < m.num_triangles(); ++t) s->local_[t] = m.triangle_faces(static_cast<int>(t));
      s->boundary_.resize(s->ndofs_);
      s->anchors_.resize(s->ndofs_);
      for (std::size_t f = 0; f < s->ndofs_; ++f) {
        s->boundary_[f] = m.face(static_cast<int>(f)).boundary();
        s->anchors_[f] = m.face_midpoint(static_cast<int>(f));
      }
    }
    s->free_index_.assign(s->ndofs_, -1);
    for (std::size_t i = 0; i < s->ndofs_; ++i) {
      if (!s->boundary_[i]) {
        s->free_index_[i] = static_cast<int>(s->free_.size());
        s->free_.push_back(static_cast<int>(i));
      }
    }
    return s;
  }

  ElementKind kind() const noexcept { return kind_; }
  const MeshPtr& mesh() const noexcept { return mesh_; }
  std::size_t num_dofs() const noexcept { return ndofs_; }
  /// Dimension of the space with boundary dofs constrained.
  std::size_t num_free_dofs() const noexcept { return free_.size(); }

  const std::array<int, 3>& local_dofs(int t) const { return local_[t]; }
  bool is_boundary_dof(int i) const { return boundary_[i]; }
  const Vec2& anchor(int i) const { return anchors_[i]; }
  const std::vector<int>& free_dofs() const noexcept { return free_; }
  /// Position of dof i among the free dofs, -1 for boundary dofs.
  int free_index(int i) const { return free_index_[i]; }

  /// Value of local basis function i at barycentric coordinates `lambda`.
  double basis(int i, const std::array<double, 3>& lambda) const {
    return kind_ == ElementKind::Lagrange ? lambda[i] : 1.0 - 2.0 * lambda[i];
  }

  /// Gradients of the three local basis functions on triangle t.
  std::array<Vec2, 3> basis_gradients(int t) const {
    auto g = barycentric_gradients(*mesh_, t);
    if (kind_ == ElementKind::CrouzeixRaviart)
      for (auto& v : g) v *= -2.0;
    return g;
  }

 private:
  FeSpace() = default;

  MeshPtr mesh_;
  ElementKind kind_ = ElementKind::Lagrange;
  std::size_t ndofs_ = 0;
  std::vector<std::array<int, 3>> local_;
  std::vector<bool> boundary_;
  std::vector<Vec2> anchors_;
  std::vector<int> free_;
  std::vector<int> free_index_;
};

/// Coefficient vector over an FeSpace.
class DiscreteField {
 public:
  DiscreteField() = default;
  explicit DiscreteField(FeSpacePtr space)
      : space_(std::move(space)), coeffs_(space_->num_dofs(), 0.0) {}
  DiscreteField(FeSpacePtr space, std::vector<double> coeffs)
      : space_(std::move(space)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != space_->num_dofs())
      throw std::invalid_argument("coefficient vector length does not match dof count");
  }

  const FeSpacePtr& space() const noexcept { return space_; }
  const MeshPtr& mesh() const noexcept { return space_->mesh(); }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  std::span<double> coeffs() noexcept { return coeffs_; }
  double operator[](std::size_t i) const { return coeffs_[i]; }
  double& operator[](std::size_t i) { return coeffs_[i]; }

  /// Restriction to triangle t evaluated at barycentric coordinates.
  double value(int t, const std::array<double, 3>& lambda) const {
    const auto& ld = space_->local_dofs(t);
    double v = 0.0;
    for (int i = 0; i < 3; ++i) v += coeffs_[ld[i]] * space_->basis(i, lambda);
    return v;
  }

  double value_at(int t, const Vec2& x) const { return value(t, barycentric(*mesh(), t, x)); }

  /// Value of the restriction to t at its local vertex i.
  double vertex_value(int t, int i) const {
    const auto& ld = space_->local_dofs(t);
    if (space_->kind() == ElementKind::Lagrange) return coeffs_[ld[i]];
    return coeffs_[ld[0]] + coeffs_[ld[1]] + coeffs_[ld[2]] - 2.0 * coeffs_[ld[i]];
  }

  /// Integral mean over triangle t (the barycenter value).
  double mean(int t) const {
    const auto& ld = space_->local_dofs(t);
    return (coeffs_[ld[0]] + coeffs_[ld[1]] + coeffs_[ld[2]]) / 3.0;
  }

  Vec2 gradient(int t) const {
    const auto g = space_->basis_gradients(t);
    const auto& ld = space_->local_dofs(t);
    return coeffs_[ld[0]] * g[0] + coeffs_[ld[1]] * g[1] + coeffs_[ld[2]] * g[2];
  }

 private:
  FeSpacePtr space_;
  std::vector<double> coeffs_;
};

/// Piecewise constant field: one value of type T per triangle.
template <typename T>
struct P0Field {
  MeshPtr mesh;
  std::vector<T> values;

  P0Field() = default;
  P0Field(MeshPtr m, std::vector<T> v) : mesh(std::move(m)), values(std::move(v)) {
    if (values.size() != mesh->num_triangles())
      throw std::invalid_argument("P0 field needs one value per triangle");
  }
  explicit P0Field(MeshPtr m, T fill = T{}) : mesh(std::move(m)), values(mesh->num_triangles(), fill) {}

  const T& operator[](std::size_t t) const { return values[t]; }
  T& operator[](std::size_t t) { return values[t]; }
  std::size_t size() const noexcept { return values.size(); }
};

/// Jump of a P0 vector field across one interior face.
struct FaceJump {
  int face = -1;
  Vec2 jump;            // g(T+) - g(T-)
  double normal = 0.0;  // jump . nu
  double tangential = 0.0;  // jump . (-nu_2, nu_1)
};

/// Per-triangle gradient of the affine restriction.
inline P0Field<Vec2> broken_gradient(const DiscreteField& u) {
  const auto nt = u.mesh()->num_triangles();
  std::vector<Vec2> g(nt);
  for (std::size_t t = 0; t < nt; ++t) g[t] = u.gradient(static_cast<int>(t));
  return {u.mesh(), std::move(g)};
}

/// Area-weighted mean of a P0 field on `target`, the input living on `target`
/// or a refinement of it.
template <typename T>
P0Field<T> pi0_project(const P0Field<T>& g, const MeshPtr& target) {
  if (g.mesh == target) return g;
  const auto map = ancestor_map(g.mesh, target);
  std::vector<T> sum(target->num_triangles(), T{});
  for (std::size_t t = 0; t < map.size(); ++t) sum[map[t]] += g.mesh->area(static_cast<int>(t)) * g[t];
  for (std::size_t T_ = 0; T_ < sum.size(); ++T_) sum[T_] *= 1.0 / target->area(static_cast<int>(T_));
  return {target, std::move(sum)};
}

/// Mean of a point function per triangle, via the edge-midpoint rule (exact
/// for quadratics).
inline P0Field<double> pi0_project(const PointFunction& f, const MeshPtr& target) {
  std::vector<double> v(target->num_triangles());
  for (std::size_t t = 0; t < v.size(); ++t) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
      s += f(0.5 * (target->point(static_cast<int>(t), (i + 1) % 3) + target->point(static_cast<int>(t), (i + 2) % 3)));
    v[t] = s / 3.0;
  }
  return {target, std::move(v)};
}

/// Nodal interpolation: values at vertices (Lagrange) or face midpoints (CR).
inline DiscreteField interpolate(const FeSpacePtr& space, const PointFunction& f) {
  DiscreteField u(space);
  for (std::size_t i = 0; i < space->num_dofs(); ++i) u[i] = f(space->anchor(static_cast<int>(i)));
  return u;
}

/// Boundary dofs set to g at their anchors, all other coefficients zero.
inline DiscreteField boundary_interpolate(const FeSpacePtr& space, const PointFunction& g) {
  DiscreteField u(space);
  for (std::size_t i = 0; i < space->num_dofs(); ++i)
    if (space->is_boundary_dof(static_cast<int>(i))) u[i] = g(space->anchor(static_cast<int>(i)));
  return u;
}

namespace detail {

/// Average of u along face f of its own mesh.  Well defined for both element
/// kinds: CR traces from either side share their face average.
inline double face_average(const DiscreteField& u, int f) {
  if (u.space()->kind() == ElementKind::CrouzeixRaviart) return u[f];
  const Face& fc = u.mesh()->face(f);
  return 0.5 * (u[fc.v[0]] + u[fc.v[1]]);
}

inline bool on_segment(const Vec2& a, const Vec2& b, const Vec2& x) {
  const Vec2 e = b - a;
  const double len2 = norm2(e);
  if (std::abs(cross(e, x - a)) > 1e-10 * len2) return false;
  const double s = dot(x - a, e) / len2;
  return s >= -1e-10 && s <= 1.0 + 1e-10;
}

/// For every face of `fine`, the face of `coarse` containing it, or -1 when
/// the fine face crosses the interior of a coarse triangle.
inline std::vector<int> fine_to_coarse_faces(const MeshPtr& fine, const MeshPtr& coarse) {
  std::vector<int> out(fine->num_faces(), -1);
  if (fine == coarse) {
    for (std::size_t f = 0; f < out.size(); ++f) out[f] = static_cast<int>(f);
    return out;
  }
  const auto anc = ancestor_map(fine, coarse);
  for (std::size_t f = 0; f < fine->num_faces(); ++f) {
    const Face& fc = fine->face(static_cast<int>(f));
    const Vec2 a = fine->vertex(fc.v[0]);
    const Vec2 b = fine->vertex(fc.v[1]);
    const int T = anc[fc.tplus];
    const auto& tr = coarse->triangle(T);
    for (int i = 0; i < 3; ++i) {
      const Vec2 p = coarse->vertex(tr[(i + 1) % 3]);
      const Vec2 q = coarse->vertex(tr[(i + 2) % 3]);
      if (on_segment(p, q, a) && on_segment(p, q, b)) {
        out[f] = coarse->triangle_faces(T)[i];
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Non-conforming interpolation into CR: each coefficient is the face
/// average of v, v living on the target mesh or on a refinement of it (or,
/// for conforming P1 input, on any mesh the target refines).
/// Boundary coefficients are the face averages of v's boundary trace.
inline DiscreteField interp_nc(const DiscreteField& v, const FeSpacePtr& target) {
  if (target->kind() != ElementKind::CrouzeixRaviart)
    throw std::invalid_argument("interp_nc targets a Crouzeix-Raviart space");
  const MeshPtr& fine = v.mesh();
  const MeshPtr& coarse = target->mesh();
  DiscreteField out(target);
  if (v.space()->kind() == ElementKind::Lagrange && fine != coarse && is_descendant(coarse, fine)) {
    // conforming input on a coarser mesh: it is affine along every target face
    const auto anc = ancestor_map(coarse, fine);
    for (std::size_t f = 0; f < coarse->num_faces(); ++f)
      out[f] = v.value_at(anc[coarse->face(static_cast<int>(f)).tplus], coarse->face_midpoint(static_cast<int>(f)));
    return out;
  }
  if (!is_descendant(fine, coarse)) throw NotNestedError("interp_nc: input mesh is not nested in the target mesh");
  if (fine == coarse) {
    for (std::size_t f = 0; f < coarse->num_faces(); ++f) out[f] = detail::face_average(v, static_cast<int>(f));
    return out;
  }
  const auto map = detail::fine_to_coarse_faces(fine, coarse);
  std::vector<double> acc(coarse->num_faces(), 0.0);
  for (std::size_t f = 0; f < map.size(); ++f) {
    if (map[f] < 0) continue;
    acc[map[f]] += fine->face_length(static_cast<int>(f)) * detail::face_average(v, static_cast<int>(f));
  }
  for (std::size_t f = 0; f < acc.size(); ++f) out[f] = acc[f] / coarse->face_length(static_cast<int>(f));
  return out;
}

/// Enrichment of a CR field into a Lagrange space on the same mesh: interior
/// vertices get the midrange (max + min) / 2 of the element values in their
/// patch; boundary vertex v gets boundary_values[v].
inline DiscreteField enrich(const DiscreteField& v, const FeSpacePtr& lagrange,
                            std::span<const double> boundary_values) {
  if (v.space()->kind() != ElementKind::CrouzeixRaviart || lagrange->kind() != ElementKind::Lagrange)
    throw std::invalid_argument("enrich maps a CR field into a Lagrange space");
  if (lagrange->mesh() != v.mesh()) throw std::invalid_argument("enrich requires a common mesh");
  const Mesh& m = *v.mesh();
  if (boundary_values.size() != m.num_vertices())
    throw std::invalid_argument("enrich: boundary_values must be indexed by vertex");
  DiscreteField out(lagrange);
  for (std::size_t j = 0; j < m.num_vertices(); ++j) {
    const int vj = static_cast<int>(j);
    if (m.is_boundary_vertex(vj)) {
      out[j] = boundary_values[j];
      continue;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int t : m.vertex_patch(vj)) {
      const auto& tr = m.triangle(t);
      const int local = tr[0] == vj ? 0 : (tr[1] == vj ? 1 : 2);
      const double val = v.vertex_value(t, local);
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    out[j] = 0.5 * (hi + lo);
  }
  return out;
}

inline DiscreteField enrich(const DiscreteField& v, const FeSpacePtr& lagrange, const PointFunction& g) {
  const Mesh& m = *v.mesh();
  std::vector<double> bv(m.num_vertices(), 0.0);
  for (std::size_t j = 0; j < bv.size(); ++j)
    if (m.is_boundary_vertex(static_cast<int>(j))) bv[j] = g(m.vertex(static_cast<int>(j)));
  return enrich(v, lagrange, bv);
}

inline FaceJump face_jump(const Mesh& m, int f, const Vec2& plus, const Vec2& minus) {
  const Vec2 nu = m.face_normal(f);
  const Vec2 j = plus - minus;
  return {f, j, dot(j, nu), dot(j, Vec2{-nu.y, nu.x})};
}

/// Jumps g(T+) - g(T-) of a P0 vector field across all interior faces.
inline std::vector<FaceJump> face_jumps(const P0Field<Vec2>& g) {
  const Mesh& m = *g.mesh;
  std::vector<FaceJump> out;
  out.reserve(m.num_faces());
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    const Face& fc = m.face(static_cast<int>(f));
    if (fc.boundary()) continue;
    out.push_back(face_jump(m, static_cast<int>(f), g[fc.tplus], g[fc.tminus]));
  }
  return out;
}

/// Carries a field onto a refinement: Lagrange by affine evaluation at the
/// new vertices, CR by fine-face averages of the coarse field (the mean of
/// both traces where a fine face lies on a coarse face).  When `g` is given
/// the boundary dofs are reset to its nodal interpolation.
inline DiscreteField transfer_iterate(const DiscreteField& u, const FeSpacePtr& fine_space,
                                      const PointFunction* g = nullptr) {
  if (fine_space->kind() != u.space()->kind()) throw std::invalid_argument("transfer_iterate: element kinds differ");
  const MeshPtr& coarse = u.mesh();
  const MeshPtr& fine = fine_space->mesh();
  if (!is_descendant(fine, coarse)) throw NotNestedError("transfer_iterate: target mesh does not refine the source mesh");
  const auto anc = ancestor_map(fine, coarse);
  DiscreteField out(fine_space);
  if (fine_space->kind() == ElementKind::Lagrange) {
    std::vector<char> done(fine->num_vertices(), 0);
    for (std::size_t t = 0; t < fine->num_triangles(); ++t) {
      for (int v : fine->triangle(static_cast<int>(t))) {
        if (done[v]) continue;
        done[v] = 1;
        out[v] = u.value_at(anc[t], fine->vertex(v));
      }
    }
  } else {
    for (std::size_t f = 0; f < fine->num_faces(); ++f) {
      const Face& fc = fine->face(static_cast<int>(f));
      const Vec2 mid = fine->face_midpoint(static_cast<int>(f));
      double val = u.value_at(anc[fc.tplus], mid);
      if (!fc.boundary() && anc[fc.tminus] != anc[fc.tplus])
        val = 0.5 * (val + u.value_at(anc[fc.tminus], mid));
      out[f] = val;
    }
  }
  if (g) {
    for (std::size_t i = 0; i < fine_space->num_dofs(); ++i)
      if (fine_space->is_boundary_dof(static_cast<int>(i))) out[i] = (*g)(fine_space->anchor(static_cast<int>(i)));
  }
  return out;
}

/// Quantities of the two-case alternative at an interior face with
/// gradients g+ and g-:  r1 = |tangential jump of g| / |jump of g| and
/// r2 = |normal jump of A(g)| / |jump of A(g)|.  NaN where a jump vanishes.
struct TwoCaseRatios {
  double tangential = 0.0;
  double normal_flux = 0.0;
};

inline TwoCaseRatios two_case_ratios(const Vec2& normal, const Vec2& g_plus, const Vec2& g_minus,
                                     const NFunction& nf) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Vec2 tau{-normal.y, normal.x};
  const Vec2 jg = g_plus - g_minus;
  const Vec2 ja = nf.A(g_plus) - nf.A(g_minus);
  const double ng = norm(jg), na = norm(ja);
  return {ng > 0.0 ? std::abs(dot(jg, tau)) / ng : nan, na > 0.0 ? std::abs(dot(ja, normal)) / na : nan};
}

}  // namespace plfem

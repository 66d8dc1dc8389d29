#pragma once

// Conforming planar triangulations with face topology, newest-vertex
// bisection and the genealogy needed to integrate across nested meshes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "plfem/errors.hpp"
#include "plfem/vec2.hpp"

namespace plfem {

class Mesh;
using MeshPtr = std::shared_ptr<const Mesh>;

/// Triangle as vertex triple (v0, v1, v2): (v0, v1) is the refinement edge
/// and v2 the newest vertex.  Local face i is the edge opposite vertex i.
using Triangle = std::array<int, 3>;

/// Edge of the triangulation.  Interior faces carry the ordered pair
/// (tplus, tminus) with tplus < tminus; boundary faces have tminus == -1.
struct Face {
  std::array<int, 2> v{};
  int tplus = -1;
  int tminus = -1;

  bool boundary() const noexcept { return tminus < 0; }
};

class Mesh {
 public:
  /// Builds face topology for the given triangles.  Triangles are reoriented
  /// to positive signed area; when `longest_edge_refinement` is set, each
  /// triangle is additionally rotated so that its longest edge becomes the
  /// refinement edge.
  static MeshPtr create(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                        bool longest_edge_refinement = true) {
    auto m = std::shared_ptr<Mesh>(new Mesh());
    m->vertices_ = std::move(vertices);
    m->triangles_ = std::move(triangles);
    for (auto& t : m->triangles_) {
      if (m->signed_area(t) < 0.0) std::swap(t[0], t[1]);
      if (longest_edge_refinement) {
        int longest = 2;
        double best = -1.0;
        for (int i = 0; i < 3; ++i) {
          const double len = norm2(m->vertices_[t[(i + 2) % 3]] - m->vertices_[t[(i + 1) % 3]]);
          if (len > best * (1.0 + 1e-12)) {
            best = len;
            longest = i;
          }
        }
        // rotate so the vertex opposite the longest edge sits in slot 2
        while (longest != 2) {
          t = {t[2], t[0], t[1]};
          longest = (longest + 1) % 3;
        }
      }
    }
    m->build_topology();
    return m;
  }

  const std::vector<Vec2>& vertices() const noexcept { return vertices_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  const std::vector<Face>& faces() const noexcept { return faces_; }

  std::size_t num_vertices() const noexcept { return vertices_.size(); }
  std::size_t num_triangles() const noexcept { return triangles_.size(); }
  std::size_t num_faces() const noexcept { return faces_.size(); }

  const Vec2& vertex(int v) const { return vertices_[v]; }
  const Triangle& triangle(int t) const { return triangles_[t]; }
  const Face& face(int f) const { return faces_[f]; }

  /// Global face indices of triangle t, local face i opposite vertex i.
  const std::array<int, 3>& triangle_faces(int t) const { return tri_faces_[t]; }

  Vec2 point(int t, int local) const { return vertices_[triangles_[t][local]]; }

  double area(int t) const { return 0.5 * signed_area(triangles_[t]); }

  /// h_T: the longest edge.
  double diameter(int t) const {
    const auto& tr = triangles_[t];
    double h = 0.0;
    for (int i = 0; i < 3; ++i) h = std::max(h, norm(vertices_[tr[(i + 1) % 3]] - vertices_[tr[i]]));
    return h;
  }

  Vec2 centroid(int t) const {
    const auto& tr = triangles_[t];
    return (1.0 / 3.0) * (vertices_[tr[0]] + vertices_[tr[1]] + vertices_[tr[2]]);
  }

  double face_length(int f) const {
    return norm(vertices_[faces_[f].v[1]] - vertices_[faces_[f].v[0]]);
  }

  Vec2 face_midpoint(int f) const {
    return 0.5 * (vertices_[faces_[f].v[0]] + vertices_[faces_[f].v[1]]);
  }

  /// Unit normal of face f; for interior faces it points from T+ to T-,
  /// for boundary faces outward.
  Vec2 face_normal(int f) const {
    const Face& fc = faces_[f];
    const Vec2 e = vertices_[fc.v[1]] - vertices_[fc.v[0]];
    Vec2 n{e.y, -e.x};
    n *= 1.0 / norm(e);
    if (dot(n, face_midpoint(f) - centroid(fc.tplus)) < 0.0) n = -n;
    return n;
  }

  bool is_boundary_vertex(int v) const { return boundary_vertex_[v]; }

  /// Triangles sharing vertex v.
  std::span<const int> vertex_patch(int v) const {
    return {patch_tris_.data() + patch_offsets_[v],
            static_cast<std::size_t>(patch_offsets_[v + 1] - patch_offsets_[v])};
  }

  double total_area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) a += area(static_cast<int>(t));
    return a;
  }

  double min_angle() const {
    double m = 4.0;
    for (const auto& tr : triangles_) {
      for (int i = 0; i < 3; ++i) {
        const Vec2 a = vertices_[tr[(i + 1) % 3]] - vertices_[tr[i]];
        const Vec2 b = vertices_[tr[(i + 2) % 3]] - vertices_[tr[i]];
        m = std::min(m, std::atan2(std::abs(cross(a, b)), dot(a, b)));
      }
    }
    return m;
  }

  /// V - E + T; equals 1 for triangulations of simply connected domains.
  long euler_characteristic() const noexcept {
    return static_cast<long>(vertices_.size()) - static_cast<long>(faces_.size()) +
           static_cast<long>(triangles_.size());
  }

  /// Mesh this one was refined from (null for an initial mesh).
  const MeshPtr& parent_mesh() const noexcept { return parent_mesh_; }
  /// Index in parent_mesh() of the triangle containing t (-1 for initial meshes).
  int parent(int t) const { return parents_.empty() ? -1 : parents_[t]; }
  const std::vector<int>& parents() const noexcept { return parents_; }
  /// Number of refinement steps since the initial mesh.
  int generation() const noexcept { return generation_; }

  /// Throws std::logic_error describing the first violated invariant.
  void check_invariants() const {
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      if (!(area(static_cast<int>(t)) > 0.0)) throw std::logic_error("non-positive triangle area");
    }
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const Face& fc = faces_[f];
      if (fc.tplus < 0) throw std::logic_error("face without triangle");
      if (!fc.boundary()) {
        if (fc.tplus >= fc.tminus) throw std::logic_error("face orientation: tplus must be smaller");
        const Vec2 n = face_normal(static_cast<int>(f));
        if (!(dot(n, centroid(fc.tminus) - centroid(fc.tplus)) > 0.0))
          throw std::logic_error("normal does not point from T+ to T-");
      }
    }
    const Mesh* root = this;
    while (root->parent_mesh_) root = root->parent_mesh_.get();
    if (euler_characteristic() != root->euler_characteristic())
      throw std::logic_error("non-conforming mesh: hanging vertex or topology change");
    if (parent_mesh_) {
      const Mesh& pm = *parent_mesh_;
      for (std::size_t t = 0; t < triangles_.size(); ++t) {
        const Triangle& pt = pm.triangle(parents_[t]);
        const Vec2 c = centroid(static_cast<int>(t));
        for (int i = 0; i < 3; ++i) {
          const Vec2 a = pm.vertex(pt[i]);
          const Vec2 b = pm.vertex(pt[(i + 1) % 3]);
          if (cross(b - a, c - a) <= 0.0) throw std::logic_error("child not contained in parent");
        }
      }
    }
  }

 private:
  friend MeshPtr bisect(const MeshPtr&, std::span<const int>);

  Mesh() = default;

  double signed_area(const Triangle& t) const {
    return cross(vertices_[t[1]] - vertices_[t[0]], vertices_[t[2]] - vertices_[t[0]]);
  }

  static std::uint64_t edge_key(int a, int b) noexcept {
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    return (hi << 32) | lo;
  }

  void build_topology() {
    std::unordered_map<std::uint64_t, int> lookup;
    lookup.reserve(triangles_.size() * 2);
    faces_.clear();
    tri_faces_.assign(triangles_.size(), {-1, -1, -1});
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      const auto& tr = triangles_[t];
      for (int i = 0; i < 3; ++i) {
        const int a = tr[(i + 1) % 3];
        const int b = tr[(i + 2) % 3];
        auto [it, inserted] = lookup.try_emplace(edge_key(a, b), static_cast<int>(faces_.size()));
        if (inserted) {
          faces_.push_back(Face{{std::min(a, b), std::max(a, b)}, static_cast<int>(t), -1});
        } else {
          Face& fc = faces_[it->second];
          if (fc.tminus >= 0) throw std::logic_error("edge shared by more than two triangles");
          fc.tminus = static_cast<int>(t);
        }
        tri_faces_[t][i] = it->second;
      }
    }
    boundary_vertex_.assign(vertices_.size(), false);
    for (const auto& fc : faces_) {
      if (fc.boundary()) boundary_vertex_[fc.v[0]] = boundary_vertex_[fc.v[1]] = true;
    }
    patch_offsets_.assign(vertices_.size() + 1, 0);
    for (const auto& tr : triangles_)
      for (int v : tr) ++patch_offsets_[v + 1];
    std::partial_sum(patch_offsets_.begin(), patch_offsets_.end(), patch_offsets_.begin());
    patch_tris_.assign(patch_offsets_.back(), 0);
    std::vector<int> fill(patch_offsets_.begin(), patch_offsets_.end() - 1);
    for (std::size_t t = 0; t < triangles_.size(); ++t)
      for (int v : triangles_[t]) patch_tris_[fill[v]++] = static_cast<int>(t);
  }

  std::vector<Vec2> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Face> faces_;
  std::vector<std::array<int, 3>> tri_faces_;
  std::vector<bool> boundary_vertex_;
  std::vector<int> patch_offsets_;
  std::vector<int> patch_tris_;
  MeshPtr parent_mesh_;
  std::vector<int> parents_;
  int generation_ = 0;
};

/// Coarsest triangulation of (-1,1)^2 \ [0,1)^2: three unit squares, each
/// split along one diagonal.
inline MeshPtr lshape_mesh() {
  std::vector<Vec2> v{{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {0, 0}, {1, 0}, {-1, 1}, {0, 1}};
  std::vector<Triangle> t{
      {0, 1, 4}, {0, 4, 3},  // [-1,0]x[-1,0]
      {1, 2, 5}, {1, 5, 4},  // [0,1]x[-1,0]
      {3, 4, 7}, {3, 7, 6},  // [-1,0]x[0,1]
  };
  return Mesh::create(std::move(v), std::move(t));
}

/// Newest-vertex bisection of the marked triangles plus the closure needed
/// for conformity.  Every triangle of the result records its parent in `mesh`.
inline MeshPtr bisect(const MeshPtr& mesh, std::span<const int> marked) {
  const Mesh& m = *mesh;
  const auto nt = static_cast<int>(m.num_triangles());
  std::vector<char> face_marked(m.num_faces(), 0);
  std::vector<int> work;
  for (int t : marked) {
    if (t < 0 || t >= nt) throw std::out_of_range("marked triangle index out of range");
    const int rf = m.triangle_faces(t)[2];
    if (!face_marked[rf]) {
      face_marked[rf] = 1;
      const Face& fc = m.face(rf);
      work.push_back(fc.tplus);
      if (!fc.boundary()) work.push_back(fc.tminus);
    }
  }
  // closure: a triangle with any bisected edge must bisect its refinement edge
  while (!work.empty()) {
    const int t = work.back();
    work.pop_back();
    const auto& tf = m.triangle_faces(t);
    if (face_marked[tf[2]]) continue;
    if (face_marked[tf[0]] || face_marked[tf[1]]) {
      face_marked[tf[2]] = 1;
      const Face& fc = m.face(tf[2]);
      work.push_back(fc.tplus);
      if (!fc.boundary()) work.push_back(fc.tminus);
    }
  }

  auto out = std::shared_ptr<Mesh>(new Mesh());
  out->vertices_ = m.vertices_;
  std::vector<int> midpoint(m.num_faces(), -1);
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    if (!face_marked[f]) continue;
    midpoint[f] = static_cast<int>(out->vertices_.size());
    out->vertices_.push_back(m.face_midpoint(static_cast<int>(f)));
  }
  out->triangles_.reserve(m.num_triangles() * 2);
  out->parents_.reserve(m.num_triangles() * 2);
  auto emit = [&](const Triangle& tr, int parent) {
    out->triangles_.push_back(tr);
    out->parents_.push_back(parent);
  };
  for (int t = 0; t < nt; ++t) {
    const Triangle& tr = m.triangle(t);
    const auto& tf = m.triangle_faces(t);
    if (!face_marked[tf[2]]) {
      emit(tr, t);
      continue;
    }
    const int v0 = tr[0], v1 = tr[1], v2 = tr[2];
    const int mid = midpoint[tf[2]];
    // child (v2, v0, mid) has refinement edge (v2, v0) = local face 1 of t
    if (face_marked[tf[1]]) {
      const int m1 = midpoint[tf[1]];
      emit({mid, v2, m1}, t);
      emit({v0, mid, m1}, t);
    } else {
      emit({v2, v0, mid}, t);
    }
    // child (v1, v2, mid) has refinement edge (v1, v2) = local face 0 of t
    if (face_marked[tf[0]]) {
      const int m0 = midpoint[tf[0]];
      emit({mid, v1, m0}, t);
      emit({v2, mid, m0}, t);
    } else {
      emit({v1, v2, mid}, t);
    }
  }
  out->parent_mesh_ = mesh;
  out->generation_ = m.generation_ + 1;
  out->build_topology();
  return out;
}

inline MeshPtr bisect(const MeshPtr& mesh, const std::vector<int>& marked) {
  return bisect(mesh, std::span<const int>(marked));
}

/// Marks every triangle `generations` times.
inline MeshPtr uniform_refine(const MeshPtr& mesh, int generations) {
  if (generations < 0) throw std::invalid_argument("generations must be nonnegative");
  MeshPtr current = mesh;
  for (int g = 0; g < generations; ++g) {
    std::vector<int> all(current->num_triangles());
    std::iota(all.begin(), all.end(), 0);
    current = bisect(current, all);
  }
  return current;
}

/// Smallest indicator-ordered set whose indicator sum reaches theta times the
/// total; ties are resolved towards the lower triangle index.  The returned
/// indices are sorted ascending.
inline std::vector<int> doerfler_mark(std::span<const double> indicators, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in (0, 1]");
  std::vector<int> order(indicators.size());
  std::iota(order.begin(), order.end(), 0);
  bool positive = false;
  for (double v : indicators) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("indicators must be finite and nonnegative");
    positive = positive || v > 0.0;
  }
  if (!positive) throw std::invalid_argument("all indicators vanish; nothing to mark");
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return indicators[a] > indicators[b]; });
  double total = 0.0;
  for (int i : order) total += indicators[i];
  const double goal = theta * total;
  std::vector<int> marked;
  double sum = 0.0;
  for (int i : order) {
    marked.push_back(i);
    sum += indicators[i];
    if (sum >= goal) break;
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

/// For each triangle of `fine`, the index of its ancestor in `coarse`.
/// Throws NotNestedError unless `coarse` is `fine` or one of its ancestors.
inline std::vector<int> ancestor_map(const MeshPtr& fine, const MeshPtr& coarse) {
  std::vector<int> map(fine->num_triangles());
  std::iota(map.begin(), map.end(), 0);
  const Mesh* cur = fine.get();
  while (cur != coarse.get()) {
    if (!cur->parent_mesh()) throw NotNestedError("mesh is not a refinement of the given coarse mesh");
    for (int& t : map) t = cur->parent(t);
    cur = cur->parent_mesh().get();
  }
  return map;
}

inline bool is_descendant(const MeshPtr& fine, const MeshPtr& coarse) {
  for (const Mesh* cur = fine.get(); cur; cur = cur->parent_mesh().get())
    if (cur == coarse.get()) return true;
  return false;
}

/// Plain-text dump: header `nv nt nf`, vertex coordinates, triangle triples,
/// then face records `v0 v1 tag tplus tminus` with tag 0 interior, 1 boundary.
inline void write_mesh(std::ostream& os, const Mesh& m) {
  os.precision(17);
  os << m.num_vertices() << ' ' << m.num_triangles() << ' ' << m.num_faces() << '\n';
  for (const auto& v : m.vertices()) os << v.x << ' ' << v.y << '\n';
  for (const auto& t : m.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& f : m.faces())
    os << f.v[0] << ' ' << f.v[1] << ' ' << (f.boundary() ? 1 : 0) << ' ' << f.tplus << ' '
       << f.tminus << '\n';
}

/// Reads write_mesh output.  Triangle order and vertex order are preserved;
/// face records are validated against the rebuilt topology.
inline MeshPtr read_mesh(std::istream& is) {
  std::size_t nv = 0, nt = 0, nf = 0;
  if (!(is >> nv >> nt >> nf)) throw std::runtime_error("mesh dump: bad header");
  std::vector<Vec2> v(nv);
  for (auto& x : v)
    if (!(is >> x.x >> x.y)) throw std::runtime_error("mesh dump: bad vertex record");
  std::vector<Triangle> t(nt);
  for (auto& x : t)
    if (!(is >> x[0] >> x[1] >> x[2])) throw std::runtime_error("mesh dump: bad triangle record");
  auto mesh = Mesh::create(std::move(v), std::move(t), false);
  if (mesh->num_faces() != nf) throw std::runtime_error("mesh dump: face count mismatch");
  for (std::size_t i = 0; i < nf; ++i) {
    Face f;
    int tag = 0;
    if (!(is >> f.v[0] >> f.v[1] >> tag >> f.tplus >> f.tminus))
      throw std::runtime_error("mesh dump: bad face record");
    const Face& g = mesh->face(static_cast<int>(i));
    if (g.v != f.v || g.tplus != f.tplus || g.tminus != f.tminus || (tag == 1) != g.boundary())
      throw std::runtime_error("mesh dump: face record disagrees with topology");
  }
  return mesh;
}

}  // namespace plfem

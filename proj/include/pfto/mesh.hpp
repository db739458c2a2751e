/// @file mesh.hpp
/// @brief Conforming 2D triangulations of rectangular domains.
///
/// Triangles are stored counterclockwise with the convention that the
/// refinement edge (for newest-vertex bisection) is the edge (v0, v1)
/// opposite the peak vertex v2.  Meshes are immutable after construction;
/// refine_marked returns a new mesh together with the prolongation data
/// needed to transfer nodal fields.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace pfto {

using Vec2 = Eigen::Vector2d;

/// Boundary segment tags of the rectangle (0,w) x (0,h).
enum class BoundaryTag : int { left = 0, right = 1, bottom = 2, top = 3 };

inline const char* to_string(BoundaryTag t) {
  switch (t) {
    case BoundaryTag::left: return "left";
    case BoundaryTag::right: return "right";
    case BoundaryTag::bottom: return "bottom";
    case BoundaryTag::top: return "top";
  }
  return "?";
}

struct EdgeInfo {
  std::array<int, 2> verts{-1, -1};  // canonical: verts[0] < verts[1]
  std::array<int, 2> tris{-1, -1};   // adjacent triangles (tris[1] = -1 on boundary)
  int n_tris = 0;
  int boundary_tag = -1;  // -1 for interior edges, else BoundaryTag
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW, refinement edge (v0,v1)
  std::vector<int> generation;                // bisection level per triangle

  // Edge topology, rebuilt after every refinement.
  std::vector<EdgeInfo> edges;
  std::vector<std::array<int, 3>> tri_edges;  // edge id opposite local vertex i
  std::unordered_map<std::uint64_t, int> edge_lookup_;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int n_edges() const { return static_cast<int>(edges.size()); }

  double triangle_area(int t) const;
  Vec2 centroid(int t) const;
  double total_area() const;

  /// Longest edge length over the whole mesh (coarse resolution measure).
  double max_edge_length() const;

  int edge_between(int a, int b) const;  // -1 if absent

  /// Rebuilds edges/tri_edges from the triangle list. `boundary_tag_of`
  /// maps a canonical vertex pair key to its segment tag.
  void build_topology(const std::unordered_map<std::uint64_t, int>& boundary_tag_of);

  /// Audits conformity: positive areas, every edge shared by one or two
  /// triangles, single-triangle edges carry a boundary tag, Euler formula.
  /// Throws std::runtime_error on the first violation.
  void check_conforming() const;
};

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

/// Structured criss-cross triangulation of (0,width) x (0,height) with
/// nx*ny cells, each split along one diagonal with alternating orientation.
Mesh generate_rectangle_mesh(double width, double height, int nx, int ny);

/// Linear-interpolation transfer of P1 nodal fields from a mesh to its
/// refinement. New vertices list their two parent vertices in creation
/// order, so parents may themselves be new vertices.
struct Prolongation {
  int n_coarse = 0;
  std::vector<std::array<int, 2>> parents;  // one entry per new vertex

  Eigen::VectorXd apply(const Eigen::VectorXd& coarse) const;
};

struct RefinedMesh {
  Mesh mesh;
  Prolongation prolongation;
};

/// Newest-vertex bisection with closure. Every marked triangle is bisected
/// at least once; the result is conforming.
RefinedMesh refine_marked(const Mesh& mesh, const std::vector<int>& marked);

/// Per-triangle indicator aggregating |[d(phi)/dn]| * |e| over the interior
/// edges of each triangle. Zero iff grad(phi) is continuous across all of
/// the triangle's interior edges.
Eigen::VectorXd phase_jump_indicator(const Mesh& mesh, const Eigen::VectorXd& phi);

/// Smallest index set whose indicator sum reaches `fraction` of the total
/// (Doerfler bulk marking; ties broken by triangle index).
std::vector<int> dorfler_mark(const Eigen::VectorXd& indicator, double fraction);

struct LevelSetPolyline {
  std::vector<std::array<Vec2, 2>> segments;
  std::vector<Vec2> normals;      // unit, pointing into {phi_h < 0}
  std::vector<int> triangle_ids;  // cut triangle per segment

  double total_length() const;
  bool empty() const { return segments.empty(); }
};

/// Per-triangle linear interpolation of the zero level set of a P1 field.
/// Vertices with phi == 0 are classified with the {phi <= 0} side, so a
/// fully resolved interface is extracted without duplicate segments.
/// Throws if phi vanishes identically on some triangle.
LevelSetPolyline extract_zero_level_set(const Mesh& mesh, const Eigen::VectorXd& phi);

/// Barycentric coordinates of x in triangle t (may be negative outside).
std::array<double, 3> barycentric_coords(const Mesh& mesh, int t, const Vec2& x);

/// Walks from `start` towards the triangle containing x; returns -1 when the
/// walk leaves the mesh or exceeds its step budget.
int locate_triangle(const Mesh& mesh, const Vec2& x, int start);

}  // namespace pfto

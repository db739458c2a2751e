#include "pfto/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pfto {

namespace {

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
}

}  // namespace

double Mesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  return signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
}

Vec2 Mesh::centroid(int t) const {
  const auto& tri = triangles[t];
  return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (int t = 0; t < n_triangles(); ++t) a += triangle_area(t);
  return a;
}

double Mesh::max_edge_length() const {
  double h = 0.0;
  for (const auto& e : edges)
    h = std::max(h, (vertices[e.verts[0]] - vertices[e.verts[1]]).norm());
  return h;
}

int Mesh::edge_between(int a, int b) const {
  // linear scan over the shorter triangle fan would need vertex->edge maps;
  // the mesh keeps a lookup table instead
  const std::uint64_t key = edge_key(a, b);
  auto it = edge_lookup_.find(key);
  return it == edge_lookup_.end() ? -1 : it->second;
}

void Mesh::build_topology(const std::unordered_map<std::uint64_t, int>& boundary_tag_of) {
  edges.clear();
  tri_edges.assign(triangles.size(), {-1, -1, -1});
  edge_lookup_.clear();
  edge_lookup_.reserve(3 * triangles.size());

  for (int t = 0; t < n_triangles(); ++t) {
    const auto& tri = triangles[t];
    for (int i = 0; i < 3; ++i) {
      // edge opposite local vertex i
      const int a = tri[(i + 1) % 3];
      const int b = tri[(i + 2) % 3];
      const std::uint64_t key = edge_key(a, b);
      auto it = edge_lookup_.find(key);
      int id;
      if (it == edge_lookup_.end()) {
        id = static_cast<int>(edges.size());
        EdgeInfo info;
        info.verts = {std::min(a, b), std::max(a, b)};
        info.tris[0] = t;
        info.n_tris = 1;
        edges.push_back(info);
        edge_lookup_.emplace(key, id);
      } else {
        id = it->second;
        EdgeInfo& info = edges[id];
        if (info.n_tris >= 2)
          throw std::runtime_error("mesh: edge shared by more than two triangles");
        info.tris[info.n_tris++] = t;
      }
      tri_edges[t][i] = id;
    }
  }
  for (auto& e : edges) {
    if (e.n_tris == 1) {
      auto it = boundary_tag_of.find(edge_key(e.verts[0], e.verts[1]));
      if (it == boundary_tag_of.end())
        throw std::runtime_error("mesh: untagged boundary edge");
      e.boundary_tag = it->second;
    }
  }
}

void Mesh::check_conforming() const {
  for (int t = 0; t < n_triangles(); ++t) {
    if (triangle_area(t) <= 0.0)
      throw std::runtime_error("mesh: non-positive triangle area at " + std::to_string(t));
  }
  int n_boundary = 0;
  for (const auto& e : edges) {
    if (e.n_tris < 1 || e.n_tris > 2)
      throw std::runtime_error("mesh: edge with invalid triangle count");
    if (e.n_tris == 1) {
      if (e.boundary_tag < 0) throw std::runtime_error("mesh: boundary edge without tag");
      ++n_boundary;
    }
  }
  // Euler formula for a triangulated disk: V - E + T = 1.
  const long euler = static_cast<long>(n_vertices()) - n_edges() + n_triangles();
  if (euler != 1) throw std::runtime_error("mesh: Euler characteristic violated (hanging nodes?)");
  if (n_boundary < 3) throw std::runtime_error("mesh: too few boundary edges");
}

Mesh generate_rectangle_mesh(double width, double height, int nx, int ny) {
  if (!(width > 0.0) || !(height > 0.0))
    throw std::invalid_argument("generate_rectangle_mesh: dimensions must be positive");
  if (nx < 1 || ny < 1)
    throw std::invalid_argument("generate_rectangle_mesh: cell counts must be >= 1");

  Mesh m;
  m.vertices.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.emplace_back(width * i / nx, height * j / ny);

  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };

  m.triangles.reserve(2 * nx * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int p00 = vid(i, j), p10 = vid(i + 1, j);
      const int p01 = vid(i, j + 1), p11 = vid(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        // diagonal p00--p11 is the refinement edge of both triangles
        m.triangles.push_back({p11, p00, p10});
        m.triangles.push_back({p00, p11, p01});
      } else {
        // diagonal p10--p01
        m.triangles.push_back({p10, p01, p00});
        m.triangles.push_back({p01, p10, p11});
      }
    }
  }
  m.generation.assign(m.triangles.size(), 0);

  std::unordered_map<std::uint64_t, int> tags;
  for (int i = 0; i < nx; ++i) {
    tags[edge_key(vid(i, 0), vid(i + 1, 0))] = static_cast<int>(BoundaryTag::bottom);
    tags[edge_key(vid(i, ny), vid(i + 1, ny))] = static_cast<int>(BoundaryTag::top);
  }
  for (int j = 0; j < ny; ++j) {
    tags[edge_key(vid(0, j), vid(0, j + 1))] = static_cast<int>(BoundaryTag::left);
    tags[edge_key(vid(nx, j), vid(nx, j + 1))] = static_cast<int>(BoundaryTag::right);
  }
  m.build_topology(tags);
  return m;
}

Eigen::VectorXd Prolongation::apply(const Eigen::VectorXd& coarse) const {
  if (coarse.size() != n_coarse)
    throw std::invalid_argument("Prolongation: field size does not match coarse mesh");
  Eigen::VectorXd fine(n_coarse + static_cast<int>(parents.size()));
  fine.head(n_coarse) = coarse;
  for (std::size_t k = 0; k < parents.size(); ++k)
    fine[n_coarse + k] = 0.5 * (fine[parents[k][0]] + fine[parents[k][1]]);
  return fine;
}

namespace {

/// Working state for newest-vertex bisection with closure.
struct Bisector {
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> tris;  // refinement edge (v0,v1), peak v2
  std::vector<int> gen;
  std::vector<char> alive;
  std::unordered_map<std::uint64_t, std::array<int, 2>> edge_tris;  // alive triangles per edge
  std::unordered_map<std::uint64_t, int> midpoint;                  // split edge -> new vertex
  std::unordered_map<std::uint64_t, int> boundary_tag;
  Prolongation prolong;

  explicit Bisector(const Mesh& m) {
    verts = m.vertices;
    tris = m.triangles;
    gen = m.generation;
    alive.assign(tris.size(), 1);
    prolong.n_coarse = m.n_vertices();
    for (const auto& e : m.edges)
      if (e.boundary_tag >= 0)
        boundary_tag[edge_key(e.verts[0], e.verts[1])] = e.boundary_tag;
    for (std::size_t t = 0; t < tris.size(); ++t) attach(static_cast<int>(t));
  }

  void attach(int t) {
    for (int i = 0; i < 3; ++i) {
      const std::uint64_t key = edge_key(tris[t][(i + 1) % 3], tris[t][(i + 2) % 3]);
      auto it = edge_tris.find(key);
      if (it == edge_tris.end())
        edge_tris.emplace(key, std::array<int, 2>{t, -1});
      else if (it->second[0] == -1)
        it->second[0] = t;
      else
        it->second[1] = t;
    }
  }

  void detach(int t) {
    for (int i = 0; i < 3; ++i) {
      const std::uint64_t key = edge_key(tris[t][(i + 1) % 3], tris[t][(i + 2) % 3]);
      auto it = edge_tris.find(key);
      if (it == edge_tris.end()) continue;
      if (it->second[0] == t) {
        it->second[0] = it->second[1];
        it->second[1] = -1;
      } else if (it->second[1] == t) {
        it->second[1] = -1;
      }
    }
  }

  int neighbor_across_refinement_edge(int t) const {
    const std::uint64_t key = edge_key(tris[t][0], tris[t][1]);
    auto it = edge_tris.find(key);
    if (it == edge_tris.end()) return -1;
    if (it->second[0] == t) return it->second[1];
    return it->second[0];
  }

  int midpoint_of(int a, int b) {
    const std::uint64_t key = edge_key(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int id = static_cast<int>(verts.size());
    verts.push_back(0.5 * (verts[a] + verts[b]));
    midpoint.emplace(key, id);
    prolong.parents.push_back({a, b});
    // a split boundary edge passes its tag to the two halves
    auto bt = boundary_tag.find(key);
    if (bt != boundary_tag.end()) {
      boundary_tag[edge_key(a, id)] = bt->second;
      boundary_tag[edge_key(id, b)] = bt->second;
      boundary_tag.erase(bt);
    }
    return id;
  }

  /// Bisects t across its refinement edge (v0,v1). Children keep the NVB
  /// convention: new vertex is the peak's successor, refinement edges are
  /// the former flank edges.
  void split(int t) {
    const int v0 = tris[t][0], v1 = tris[t][1], v2 = tris[t][2];
    const int m = midpoint_of(v0, v1);
    detach(t);
    alive[t] = 0;
    const int c1 = static_cast<int>(tris.size());
    tris.push_back({v2, v0, m});
    gen.push_back(gen[t] + 1);
    alive.push_back(1);
    attach(c1);
    const int c2 = static_cast<int>(tris.size());
    tris.push_back({v1, v2, m});
    gen.push_back(gen[t] + 1);
    alive.push_back(1);
    attach(c2);
  }

  /// Refines t, recursively ensuring the neighbor across the refinement
  /// edge is compatible first.
  void refine(int t_start) {
    std::vector<int> stack{t_start};
    std::size_t guard = 0;
    const std::size_t guard_max = 64 * tris.size() + 1024;
    while (!stack.empty()) {
      if (++guard > guard_max)
        throw std::runtime_error("refine_marked: bisection closure did not terminate");
      const int t = stack.back();
      if (!alive[t]) {
        stack.pop_back();
        continue;
      }
      const int n = neighbor_across_refinement_edge(t);
      if (n != -1) {
        const std::uint64_t et = edge_key(tris[t][0], tris[t][1]);
        const std::uint64_t en = edge_key(tris[n][0], tris[n][1]);
        if (et != en) {
          stack.push_back(n);  // make neighbor compatible first
          continue;
        }
        split(t);
        split(n);
      } else {
        split(t);
      }
      stack.pop_back();
    }
  }
};

}  // namespace

RefinedMesh refine_marked(const Mesh& mesh, const std::vector<int>& marked) {
  for (int t : marked)
    if (t < 0 || t >= mesh.n_triangles())
      throw std::out_of_range("refine_marked: triangle index out of range");

  Bisector bis(mesh);
  for (int t : marked)
    if (bis.alive[t]) bis.refine(t);

  RefinedMesh out;
  out.mesh.vertices = std::move(bis.verts);
  for (std::size_t t = 0; t < bis.tris.size(); ++t) {
    if (!bis.alive[t]) continue;
    out.mesh.triangles.push_back(bis.tris[t]);
    out.mesh.generation.push_back(bis.gen[t]);
  }
  out.mesh.build_topology(bis.boundary_tag);
  out.prolongation = std::move(bis.prolong);
  return out;
}

Eigen::VectorXd phase_jump_indicator(const Mesh& mesh, const Eigen::VectorXd& phi) {
  if (phi.size() != mesh.n_vertices())
    throw std::invalid_argument("phase_jump_indicator: field/mesh size mismatch");

  // P1 gradients are constant per triangle
  std::vector<Vec2> grad(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    const double inv2A = 1.0 / (2.0 * mesh.triangle_area(t));
    // grad of barycentric L_i, times nodal values
    const Vec2 gl0 = inv2A * Vec2(b.y() - c.y(), c.x() - b.x());
    const Vec2 gl1 = inv2A * Vec2(c.y() - a.y(), a.x() - c.x());
    const Vec2 gl2 = inv2A * Vec2(a.y() - b.y(), b.x() - a.x());
    grad[t] = phi[tri[0]] * gl0 + phi[tri[1]] * gl1 + phi[tri[2]] * gl2;
  }

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(mesh.n_triangles());
  for (const auto& e : mesh.edges) {
    if (e.n_tris != 2) continue;
    const Vec2 d = mesh.vertices[e.verts[1]] - mesh.vertices[e.verts[0]];
    const double len = d.norm();
    const Vec2 n(-d.y() / len, d.x() / len);
    const double jump = std::abs((grad[e.tris[0]] - grad[e.tris[1]]).dot(n));
    eta[e.tris[0]] += len * jump;
    eta[e.tris[1]] += len * jump;
  }
  return eta;
}

std::vector<int> dorfler_mark(const Eigen::VectorXd& indicator, double fraction) {
  const double total = indicator.sum();
  std::vector<int> order(indicator.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return indicator[a] > indicator[b]; });
  std::vector<int> marked;
  double acc = 0.0;
  for (int t : order) {
    if (acc >= fraction * total || indicator[t] <= 0.0) break;
    marked.push_back(t);
    acc += indicator[t];
  }
  return marked;
}

double LevelSetPolyline::total_length() const {
  double len = 0.0;
  for (const auto& s : segments) len += (s[1] - s[0]).norm();
  return len;
}

LevelSetPolyline extract_zero_level_set(const Mesh& mesh, const Eigen::VectorXd& phi) {
  if (phi.size() != mesh.n_vertices())
    throw std::invalid_argument("extract_zero_level_set: field/mesh size mismatch");

  LevelSetPolyline out;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double f[3] = {phi[tri[0]], phi[tri[1]], phi[tri[2]]};
    if (f[0] == 0.0 && f[1] == 0.0 && f[2] == 0.0)
      throw std::runtime_error("extract_zero_level_set: phi vanishes on triangle " +
                               std::to_string(t));
    // classify phi <= 0 with the object side; crossings sit on class changes
    const bool pos[3] = {f[0] > 0.0, f[1] > 0.0, f[2] > 0.0};
    if (pos[0] == pos[1] && pos[1] == pos[2]) continue;

    std::array<Vec2, 2> pts;
    int n_pts = 0;
    for (int i = 0; i < 3 && n_pts < 2; ++i) {
      const int a = tri[i], b = tri[(i + 1) % 3];
      const bool pa = phi[a] > 0.0, pb = phi[b] > 0.0;
      if (pa == pb) continue;
      const double s = phi[a] / (phi[a] - phi[b]);
      pts[n_pts++] = mesh.vertices[a] + s * (mesh.vertices[b] - mesh.vertices[a]);
    }
    if (n_pts != 2) continue;
    if ((pts[1] - pts[0]).norm() < 1e-300) continue;

    const Vec2 &va = mesh.vertices[tri[0]], &vb = mesh.vertices[tri[1]],
               &vc = mesh.vertices[tri[2]];
    const double inv2A = 1.0 / (2.0 * mesh.triangle_area(t));
    const Vec2 g = inv2A * (f[0] * Vec2(vb.y() - vc.y(), vc.x() - vb.x()) +
                            f[1] * Vec2(vc.y() - va.y(), va.x() - vc.x()) +
                            f[2] * Vec2(va.y() - vb.y(), vb.x() - va.x()));
    out.segments.push_back(pts);
    out.normals.push_back(-g.normalized());  // into {phi < 0}
    out.triangle_ids.push_back(t);
  }
  return out;
}

std::array<double, 3> barycentric_coords(const Mesh& mesh, int t, const Vec2& x) {
  const auto& tri = mesh.triangles[t];
  const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
  const double area = signed_area(a, b, c);
  return {signed_area(x, b, c) / area, signed_area(a, x, c) / area, signed_area(a, b, x) / area};
}

int locate_triangle(const Mesh& mesh, const Vec2& x, int start) {
  int t = start;
  for (int step = 0; step < 200; ++step) {
    const auto L = barycentric_coords(mesh, t, x);
    int worst = 0;
    for (int i = 1; i < 3; ++i)
      if (L[i] < L[worst]) worst = i;
    if (L[worst] >= -1e-12) return t;
    // cross the edge opposite the most negative coordinate
    const int eid = mesh.tri_edges[t][worst];
    const EdgeInfo& e = mesh.edges[eid];
    const int next = (e.tris[0] == t) ? e.tris[1] : e.tris[0];
    if (next < 0) return -1;
    t = next;
  }
  return -1;
}

}  // namespace pfto

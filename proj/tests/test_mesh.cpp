#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pfto/mesh.hpp"

using namespace pfto;

TEST_CASE("rectangle mesh: smallest instance") {
  Mesh m = generate_rectangle_mesh(1, 1, 1, 1);
  CHECK(m.n_triangles() == 2);
  CHECK(m.n_vertices() == 4);
  CHECK(m.total_area() == doctest::Approx(1.0).epsilon(1e-14));
  m.check_conforming();
}

TEST_CASE("rectangle mesh: drag domain area") {
  Mesh m = generate_rectangle_mesh(1.7, 0.4, 17, 4);
  CHECK(m.n_triangles() == 2 * 17 * 4);
  CHECK(m.total_area() == doctest::Approx(0.68).epsilon(1e-12));
  m.check_conforming();
}

TEST_CASE("rectangle mesh: interior edge sharing") {
  Mesh m = generate_rectangle_mesh(1, 1, 2, 2);
  CHECK(m.n_triangles() == 8);
  for (const auto& e : m.edges) {
    if (e.boundary_tag < 0)
      CHECK(e.n_tris == 2);
    else
      CHECK(e.n_tris == 1);
  }
}

TEST_CASE("rectangle mesh: rejects bad input") {
  CHECK_THROWS(generate_rectangle_mesh(-1, 1, 1, 1));
  CHECK_THROWS(generate_rectangle_mesh(1, 0, 1, 1));
  CHECK_THROWS(generate_rectangle_mesh(1, 1, 0, 3));
}

TEST_CASE("boundary tags cover the four segments") {
  Mesh m = generate_rectangle_mesh(2, 1, 4, 2);
  std::set<int> tags;
  for (const auto& e : m.edges)
    if (e.boundary_tag >= 0) tags.insert(e.boundary_tag);
  CHECK(tags.size() == 4);
}

TEST_CASE("refinement: empty marked set is a no-op") {
  Mesh m = generate_rectangle_mesh(1, 1, 2, 2);
  RefinedMesh r = refine_marked(m, {});
  CHECK(r.mesh.n_triangles() == m.n_triangles());
  CHECK(r.mesh.n_vertices() == m.n_vertices());
  CHECK(r.prolongation.parents.empty());
}

TEST_CASE("refinement: uniform bisection of the smallest mesh") {
  Mesh m = generate_rectangle_mesh(1, 1, 1, 1);
  RefinedMesh r = refine_marked(m, {0, 1});
  CHECK(r.mesh.n_triangles() >= 4);
  r.mesh.check_conforming();
  CHECK(r.mesh.total_area() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("refinement: single mark yields a conforming mesh") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  RefinedMesh r = refine_marked(m, {5});
  r.mesh.check_conforming();
  CHECK(r.mesh.n_vertices() > m.n_vertices());
  CHECK(r.mesh.total_area() == doctest::Approx(m.total_area()).epsilon(1e-12));
}

TEST_CASE("refinement: repeated local refinement stays conforming") {
  Mesh m = generate_rectangle_mesh(1.7, 0.4, 17, 4);
  for (int round = 0; round < 4; ++round) {
    // mark the triangles nearest the point (0.5, 0.2)
    std::vector<int> marked;
    for (int t = 0; t < m.n_triangles(); ++t)
      if ((m.centroid(t) - Vec2(0.5, 0.2)).norm() < 0.15) marked.push_back(t);
    RefinedMesh r = refine_marked(m, marked);
    r.mesh.check_conforming();
    CHECK(r.mesh.n_vertices() > m.n_vertices());
    CHECK(r.mesh.total_area() == doctest::Approx(0.68).epsilon(1e-12));
    for (int t : marked) {
      // marked parents are gone: every alive triangle of generation 0..g
      // with the same vertices would violate the bisection; just check count
    }
    m = std::move(r.mesh);
  }
}

TEST_CASE("refinement: marked index out of range") {
  Mesh m = generate_rectangle_mesh(1, 1, 1, 1);
  CHECK_THROWS(refine_marked(m, {7}));
}

TEST_CASE("prolongation transfers linear fields exactly") {
  Mesh m = generate_rectangle_mesh(1, 1, 3, 3);
  auto lin = [](const Vec2& x) { return 0.3 + 1.7 * x.x() - 0.9 * x.y(); };
  Eigen::VectorXd f(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i) f[i] = lin(m.vertices[i]);

  std::vector<int> all(m.n_triangles());
  for (int t = 0; t < m.n_triangles(); ++t) all[t] = t;
  RefinedMesh r = refine_marked(m, all);
  Eigen::VectorXd g = r.prolongation.apply(f);
  REQUIRE(g.size() == r.mesh.n_vertices());
  for (int i = 0; i < r.mesh.n_vertices(); ++i)
    CHECK(g[i] == doctest::Approx(lin(r.mesh.vertices[i])).epsilon(1e-13));
}

TEST_CASE("jump indicator: affine fields give zero") {
  Mesh m = generate_rectangle_mesh(1, 1, 5, 3);
  Eigen::VectorXd phi(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i)
    phi[i] = 2.0 - 0.25 * m.vertices[i].x() + 0.75 * m.vertices[i].y();
  Eigen::VectorXd eta = phase_jump_indicator(m, phi);
  CHECK(eta.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("jump indicator: hat function marks exactly its star") {
  Mesh m = generate_rectangle_mesh(1, 1, 2, 2);
  // center vertex of the 2x2 grid
  int center = -1;
  for (int i = 0; i < m.n_vertices(); ++i)
    if ((m.vertices[i] - Vec2(0.5, 0.5)).norm() < 1e-12) center = i;
  REQUIRE(center >= 0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(m.n_vertices());
  phi[center] = 1.0;
  Eigen::VectorXd eta = phase_jump_indicator(m, phi);
  for (int t = 0; t < m.n_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    const bool in_star = tri[0] == center || tri[1] == center || tri[2] == center;
    if (in_star)
      CHECK(eta[t] > 1e-8);
    else
      CHECK(eta[t] < 1e-13);
  }
}

TEST_CASE("jump indicator is linear in phi") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  Eigen::VectorXd phi(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i)
    phi[i] = std::sin(5.0 * m.vertices[i].x()) * std::cos(3.0 * m.vertices[i].y());
  Eigen::VectorXd e1 = phase_jump_indicator(m, phi);
  Eigen::VectorXd e2 = phase_jump_indicator(m, Eigen::VectorXd(2.0 * phi));
  CHECK((e2 - 2.0 * e1).cwiseAbs().maxCoeff() < 1e-12 * e1.cwiseAbs().maxCoeff());
}

TEST_CASE("jump indicator: size mismatch rejected") {
  Mesh m = generate_rectangle_mesh(1, 1, 2, 2);
  CHECK_THROWS(phase_jump_indicator(m, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("level set: vertical line") {
  Mesh m = generate_rectangle_mesh(1, 1, 8, 8);
  Eigen::VectorXd phi(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i) phi[i] = m.vertices[i].x() - 0.5;
  LevelSetPolyline ls = extract_zero_level_set(m, phi);
  CHECK(ls.total_length() == doctest::Approx(1.0).epsilon(1e-10));
  for (const auto& n : ls.normals) CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-12));
  // normals point into {phi < 0}, which is x < 0.5
  for (const auto& n : ls.normals) CHECK(n.x() < 0);
}

TEST_CASE("level set: constant sign gives empty polyline") {
  Mesh m = generate_rectangle_mesh(1, 1, 3, 3);
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(m.n_vertices());
  CHECK(extract_zero_level_set(m, phi).empty());
}

TEST_CASE("level set: circle perimeter converges at second order") {
  const double r = 0.3;
  const Vec2 c(0.5, 0.5);
  double prev_err = 1e9;
  for (int n : {16, 32, 64}) {
    Mesh m = generate_rectangle_mesh(1, 1, n, n);
    Eigen::VectorXd phi(m.n_vertices());
    for (int i = 0; i < m.n_vertices(); ++i) phi[i] = (m.vertices[i] - c).norm() - r;
    const double len = extract_zero_level_set(m, phi).total_length();
    const double err = std::abs(len - 2 * M_PI * r);
    CHECK(err < prev_err);
    prev_err = err;
    const double h = m.max_edge_length();
    CHECK(err < 10.0 * h * h);
  }
}

TEST_CASE("level set: zero triangle is an error") {
  Mesh m = generate_rectangle_mesh(1, 1, 2, 2);
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(m.n_vertices());
  const auto& tri = m.triangles[0];
  phi[tri[0]] = phi[tri[1]] = phi[tri[2]] = 0.0;
  CHECK_THROWS(extract_zero_level_set(m, phi));
}

TEST_CASE("doerfler marking reaches the requested bulk") {
  Eigen::VectorXd eta(6);
  eta << 5, 1, 3, 0.5, 2, 0.1;
  auto marked = dorfler_mark(eta, 0.5);
  double acc = 0;
  for (int t : marked) acc += eta[t];
  CHECK(acc >= 0.5 * eta.sum());
  CHECK(marked.size() <= 3);  // 5+3 already suffices
}
